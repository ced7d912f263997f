"""Core mixing-model mathematics.

A mixture observation on tracer j is modelled as

    y_ij ~ N( sum_k p_k q_jk (mu_s_jk + mu_c_jk) / sum_k p_k q_jk,
              sum_k p_k^2 q_jk^2 (sd_s_jk^2 + sd_c_jk^2) / (sum_k p_k q_jk)^2
              + sigma_j^2 )

where p lives on the K-simplex, q_jk are concentration weights, (mu_c, sd_c)
are additive tracer corrections, and sigma_j is the residual scale per tracer.

The proportions are parameterised through unconstrained coordinates f with
p = exp(f) / sum(exp(f)) and a multivariate-normal prior on f.  The residual
precision tau_j = sigma_j^{-2} carries a gamma prior (vague by default); this
package always places the gamma prior on the precision, never on sigma
itself, and both shape and rate are configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaln

from .errors import (
    ConcentrationRangeError,
    DimensionMismatchError,
    EmptyGroupError,
    NegativeSpreadError,
    UnknownGroupError,
    ValidationError,
)

LOG_2PI = float(np.log(2.0 * np.pi))


def _as_matrix(x, name, shape):
    arr = np.asarray(x, dtype=float)
    if arr.shape != shape:
        raise DimensionMismatchError(
            f"{name} has shape {arr.shape}, expected {shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MixingData:
    """Validated dataset for a mixing-model fit.

    Parameters
    ----------
    mixtures : (n, J) array
        Observed mixture tracer values.
    tracer_names : list of J str
    source_names : list of K str
    source_means, source_sds : (K, J) arrays
        Per-source tracer means and standard deviations (sds >= 0).
    correction_means, correction_sds : (K, J) arrays, optional
        Additive tracer corrections; default to zero.
    concentration_means : (K, J) array, optional
        Concentration weights in (0, 1]; default to one.
    groups : list of n str, optional
        Group label per mixture row; defaults to a single group "1".
    """

    mixtures: np.ndarray
    tracer_names: tuple
    source_names: tuple
    source_means: np.ndarray
    source_sds: np.ndarray
    correction_means: np.ndarray = None
    correction_sds: np.ndarray = None
    concentration_means: np.ndarray = None
    groups: tuple = None

    def __post_init__(self):
        mix = np.asarray(self.mixtures, dtype=float)
        if mix.ndim == 1:
            mix = mix[:, None]
        if mix.ndim != 2 or mix.shape[0] < 1:
            raise DimensionMismatchError("mixtures must be a non-empty 2-D matrix")
        n, J = mix.shape
        if not np.all(np.isfinite(mix)):
            raise ValidationError("mixtures contain non-finite values")

        tracer_names = tuple(str(t) for t in self.tracer_names)
        source_names = tuple(str(s) for s in self.source_names)
        K = len(source_names)
        if len(tracer_names) != J:
            raise DimensionMismatchError(
                f"{len(tracer_names)} tracer names for {J} mixture columns"
            )
        if K < 2:
            raise ValidationError(
                f"at least 2 sources are required to mix, got {K}"
            )
        if len(set(source_names)) != K:
            raise ValidationError("source names must be unique")

        sm = _as_matrix(self.source_means, "source_means", (K, J))
        ss = _as_matrix(self.source_sds, "source_sds", (K, J))
        if np.any(ss < 0):
            k, j = np.argwhere(ss < 0)[0]
            raise NegativeSpreadError(
                f"source_sds[{source_names[k]}, {tracer_names[j]}] = {ss[k, j]} < 0"
            )

        cm = self.correction_means
        cm = np.zeros((K, J)) if cm is None else _as_matrix(cm, "correction_means", (K, J))
        cs = self.correction_sds
        cs = np.zeros((K, J)) if cs is None else _as_matrix(cs, "correction_sds", (K, J))
        if np.any(cs < 0):
            k, j = np.argwhere(cs < 0)[0]
            raise NegativeSpreadError(
                f"correction_sds[{source_names[k]}, {tracer_names[j]}] = {cs[k, j]} < 0"
            )

        q = self.concentration_means
        q = np.ones((K, J)) if q is None else _as_matrix(q, "concentration_means", (K, J))
        if np.any(q <= 0) or np.any(q > 1):
            k, j = np.argwhere((q <= 0) | (q > 1))[0]
            raise ConcentrationRangeError(
                f"concentration_means[{source_names[k]}, {tracer_names[j]}] = "
                f"{q[k, j]} outside (0, 1]"
            )

        groups = self.groups
        if groups is None:
            groups = ("1",) * n
        else:
            groups = tuple(str(g) for g in groups)
        if len(groups) != n:
            raise DimensionMismatchError(
                f"{len(groups)} group labels for {n} mixture rows"
            )
        if any(g == "" for g in groups):
            i = groups.index("")
            raise EmptyGroupError(f"mixture row {i} has an empty group label")

        object.__setattr__(self, "mixtures", _frozen(mix))
        object.__setattr__(self, "tracer_names", tracer_names)
        object.__setattr__(self, "source_names", source_names)
        object.__setattr__(self, "source_means", _frozen(sm))
        object.__setattr__(self, "source_sds", _frozen(ss))
        object.__setattr__(self, "correction_means", _frozen(cm))
        object.__setattr__(self, "correction_sds", _frozen(cs))
        object.__setattr__(self, "concentration_means", _frozen(q))
        object.__setattr__(self, "groups", groups)

    @property
    def n_sources(self) -> int:
        return len(self.source_names)

    @property
    def n_tracers(self) -> int:
        return len(self.tracer_names)

    @property
    def n_mixtures(self) -> int:
        return self.mixtures.shape[0]

    @property
    def group_names(self) -> tuple:
        seen = {}
        for g in self.groups:
            seen.setdefault(g, None)
        return tuple(seen)

    def group_rows(self, group) -> np.ndarray:
        """Boolean row mask for one group label."""
        group = str(group)
        if group not in self.group_names:
            raise UnknownGroupError(
                f"unknown group {group!r}; available: {list(self.group_names)}"
            )
        return np.array([g == group for g in self.groups])

    def group_mixtures(self, group) -> np.ndarray:
        return self.mixtures[self.group_rows(group)]


@dataclass(frozen=True)
class Priors:
    """Hyperparameters of the prior on (f, tau).

    clr_mean, clr_cov parameterise the multivariate normal on the
    unconstrained proportion coordinates; tau_shape/tau_rate the gamma prior
    on each residual precision.
    """

    clr_mean: np.ndarray
    clr_cov: np.ndarray
    tau_shape: float = 0.01
    tau_rate: float = 0.01

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.clr_mean, dtype=float))
        cov = np.asarray(self.clr_cov, dtype=float)
        K = mu.shape[0]
        if cov.shape != (K, K):
            raise DimensionMismatchError(
                f"clr_cov has shape {cov.shape}, expected ({K}, {K})"
            )
        if not np.allclose(cov, cov.T):
            raise ValidationError("clr_cov must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValidationError("clr_cov must be positive-definite") from None
        if not (self.tau_shape > 0 and self.tau_rate > 0):
            raise ValidationError("tau_shape and tau_rate must be positive")
        object.__setattr__(self, "clr_mean", _frozen(mu))
        object.__setattr__(self, "clr_cov", _frozen(cov))

    @classmethod
    def default(cls, n_sources: int) -> "Priors":
        """Vague default: f ~ N(0, I), tau ~ Gamma(0.01, 0.01)."""
        return cls(np.zeros(n_sources), np.eye(n_sources))

    @property
    def n_sources(self) -> int:
        return self.clr_mean.shape[0]


@dataclass
class LatentParams:
    """One point (f, tau) in the unconstrained model parameterisation."""

    clr: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        self.clr = np.atleast_1d(np.asarray(self.clr, dtype=float))
        self.precision = np.atleast_1d(np.asarray(self.precision, dtype=float))
        if np.any(self.precision <= 0):
            raise ValidationError("precision components must be strictly positive")

    @property
    def sigma(self) -> np.ndarray:
        return self.precision ** -0.5


def clr_inverse(f) -> np.ndarray:
    """Map unconstrained coordinates to the simplex, p_k = exp(f_k)/sum exp(f).

    Accepts a vector or a matrix of row vectors.  Uses max-subtraction so
    arbitrarily large coordinates cannot overflow.
    """
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValidationError("clr_inverse requires finite coordinates")
    shifted = f - f.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _combined_stats(data: MixingData):
    """Corrected source means, pooled variances and concentrations, all (K, J)."""
    mu = data.source_means + data.correction_means
    var = data.source_sds ** 2 + data.correction_sds ** 2
    return mu, var, data.concentration_means


def mixture_moments(p, data: MixingData):
    """Mixture mean and pre-residual variance per tracer for proportions p.

    Parameters
    ----------
    p : (K,) or (S, K) array on the simplex
    data : MixingData

    Returns
    -------
    mean, pre_var : arrays of shape (J,) or (S, J)
        ``pre_var`` excludes the residual sigma_j^2 term; the full
        observation variance is ``pre_var + sigma**2``.
    """
    p = np.asarray(p, dtype=float)
    mu, var, q = _combined_stats(data)
    total = p @ q                      # sum_k p_k q_jk
    mean = (p @ (q * mu)) / total
    pre_var = (p ** 2 @ (q ** 2 * var)) / total ** 2
    return mean, pre_var


def _group_suffstats(data: MixingData, group):
    y = data.group_mixtures(group)
    return y.shape[0], y.mean(axis=0), ((y - y.mean(axis=0)) ** 2).sum(axis=0)


def _normal_loglik(n, ybar, ss, mean, variance):
    """Gaussian log likelihood per tracer from sufficient statistics.

    ``sum_i logN(y_ij; m_j, V_j)`` equals
    ``-n/2 log(2 pi V_j) - (ss_j + n (m_j - ybar_j)^2) / (2 V_j)`` exactly.
    Zero total variance yields -inf unless every observation sits on the mean.
    """
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    dev = ss + n * (mean - ybar) ** 2
    out = np.full(np.broadcast(mean, variance).shape, -np.inf)
    ok = variance > 0
    out = np.where(
        ok,
        -0.5 * n * (LOG_2PI + np.log(np.where(ok, variance, 1.0)))
        - dev / np.where(ok, 2.0 * variance, 1.0),
        out,
    )
    # degenerate point mass exactly on its atom
    out = np.where(~ok & (dev == 0), np.inf, out)
    return out


def log_likelihood(data: MixingData, group, p, sigma) -> float:
    """Log likelihood of one group's observations at proportions p, scales sigma."""
    p = np.asarray(p, dtype=float)
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if np.any(sigma < 0):
        raise ValidationError("sigma must be non-negative")
    n, ybar, ss = _group_suffstats(data, group)
    mean, pre_var = mixture_moments(p, data)
    return float(np.sum(_normal_loglik(n, ybar, ss, mean, pre_var + sigma ** 2)))


def deviance(data: MixingData, group, p, sigma) -> float:
    """-2 times the log likelihood, normalising constants included."""
    return -2.0 * log_likelihood(data, group, p, sigma)


def _mvn_logpdf(x, mean, cov_chol):
    """Multivariate normal log density given a Cholesky factor of the covariance."""
    dev = x - mean
    z = cho_solve(cov_chol, dev)
    logdet = 2.0 * np.sum(np.log(np.diag(cov_chol[0])))
    return -0.5 * (len(mean) * LOG_2PI + logdet + dev @ z)


def _gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def log_prior(priors: Priors, params: LatentParams) -> float:
    """Log prior density of (f, tau) under the given hyperparameters."""
    chol = cho_factor(priors.clr_cov, lower=True)
    lp = _mvn_logpdf(params.clr, priors.clr_mean, chol)
    lp += float(np.sum(_gamma_logpdf(params.precision, priors.tau_shape, priors.tau_rate)))
    return float(lp)


def log_posterior(data: MixingData, group, priors: Priors, params: LatentParams) -> float:
    """Unnormalised log posterior density over (f, tau): likelihood plus priors."""
    p = clr_inverse(params.clr)
    return log_likelihood(data, group, p, params.sigma) + log_prior(priors, params)


def log_posterior_gradient(data: MixingData, group, priors: Priors, params: LatentParams):
    """Analytic gradient of :func:`log_posterior` in (f, log tau) coordinates.

    Returns
    -------
    d_clr : (K,) array
        Gradient with respect to the unconstrained proportion coordinates.
    d_log_precision : (J,) array
        Gradient with respect to log tau (chain rule applied; no Jacobian
        term, this is the derivative of the theta-space density).
    """
    f = params.clr
    tau = params.precision
    p = clr_inverse(f)
    mu, var, q = _combined_stats(data)

    n, ybar, ss = _group_suffstats(data, group)
    total = p @ q                       # (J,)
    mean = (p @ (q * mu)) / total
    pre_var = (p ** 2 @ (q ** 2 * var)) / total ** 2
    V = pre_var + 1.0 / tau

    dl_dmean = -n * (mean - ybar) / V
    dev = ss + n * (mean - ybar) ** 2
    dl_dV = -0.5 * n / V + dev / (2.0 * V ** 2)

    # d mean / d p_k, d pre_var / d p_k, both (K, J)
    dmean_dp = q * (mu - mean[None, :]) / total[None, :]
    dvar_dp = 2.0 * q / total[None, :] * (
        p[:, None] * q * var / total[None, :] - pre_var[None, :]
    )
    dl_dp = dmean_dp @ dl_dmean + dvar_dp @ dl_dV   # (K,)

    # softmax chain rule
    d_clr = p * (dl_dp - float(p @ dl_dp))

    # prior on f
    chol = cho_factor(priors.clr_cov, lower=True)
    d_clr = d_clr - cho_solve(chol, f - priors.clr_mean)

    # dV/d(log tau) = -1/tau; gamma prior in log-precision coordinates
    d_log_precision = dl_dV * (-1.0 / tau) + (priors.tau_shape - 1.0) - priors.tau_rate * tau
    return d_clr, d_log_precision
