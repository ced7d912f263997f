"""Adaptive random-walk Metropolis backend.

Each group is fitted by an independent set of chains over the unconstrained
vector (f, log tau).  Proposals are single-coordinate Gaussian steps whose
scales adapt toward a 0.44 acceptance rate during burn-in only; adaptation
freezes afterwards so the retained draws target the exact posterior.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .errors import (
    AcceptanceRateWarning,
    NonIdentifiableWarning,
    SamplerInitError,
    SoloGroupWarning,
    UnsupportedForBackendError,
    ValidationError,
)
from .model import (
    LOG_2PI,
    MixingData,
    Priors,
    _combined_stats,
    _group_suffstats,
    clr_inverse,
)
from .posterior import FitResult, GroupDraws

DEFAULT_SEED = 42

# solo-mode precision prior: tight shape, rate set so the prior median of the
# residual scale is 0.9% of the smallest source spread
SOLO_SHAPE = 1000.0
SOLO_SIGMA_FRACTION = 0.009


@dataclass(frozen=True)
class McmcControl:
    """Run-length and adaptation settings for the Metropolis backend."""

    n_chains: int = 4
    iterations: int = 10000
    burn_in: int = 1000
    thin: int = 10
    seed: int = DEFAULT_SEED
    target_acceptance: float = 0.44
    adaptation_window: int = 50

    def __post_init__(self):
        if self.n_chains < 2:
            raise ValidationError("n_chains must be >= 2 for convergence diagnostics")
        if not 0 <= self.burn_in < self.iterations:
            raise ValidationError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if not 0 < self.target_acceptance < 1:
            raise ValidationError("target_acceptance must lie in (0, 1)")
        if self.adaptation_window < 1:
            raise ValidationError("adaptation_window must be >= 1")

    @property
    def retained_per_chain(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


def solo_priors(priors: Priors, min_source_sd: float = 1.0) -> Priors:
    """Priors for a single-observation group: residual scale pinned near zero.

    Keeps the proportion prior, replaces the precision prior by one whose
    median residual scale is below 1% of the smallest source spread.
    """
    if min_source_sd <= 0:
        min_source_sd = 1.0
    target_median_tau = (SOLO_SIGMA_FRACTION * min_source_sd) ** -2
    rate = float(stats.gamma.median(SOLO_SHAPE)) / target_median_tau
    return Priors(priors.clr_mean, priors.clr_cov, SOLO_SHAPE, rate)


def _min_source_sd(data: MixingData) -> float:
    positive = data.source_sds[data.source_sds > 0]
    return float(positive.min()) if positive.size else 1.0


class _GroupTarget:
    """Log sampling density over x = (f, log tau) for one group.

    Includes the log-precision Jacobian so the chain targets the gamma prior
    stated on tau.  Also reports the plain log likelihood for deviance draws.
    """

    def __init__(self, data: MixingData, group, priors: Priors):
        mu, var, q = _combined_stats(data)
        self.K = data.n_sources
        self.J = data.n_tracers
        self.q = q
        self.q_mu = q * mu
        self.q2_var = q ** 2 * var
        self.n, self.ybar, self.ss = _group_suffstats(data, group)
        self.mu0 = priors.clr_mean
        self.cov_inv = np.linalg.inv(priors.clr_cov)
        _, logdet = np.linalg.slogdet(priors.clr_cov)
        self.mvn_const = -0.5 * (self.K * LOG_2PI + logdet)
        self.a = priors.tau_shape
        self.b = priors.tau_rate
        self.gamma_const = self.J * (self.a * np.log(self.b) - gammaln(self.a))
        self.ll_const = -0.5 * self.n * self.J * LOG_2PI

    def __call__(self, x):
        f = x[: self.K]
        u = x[self.K:]
        e = np.exp(f - f.max())
        p = e / e.sum()
        total = p @ self.q
        mean = (p @ self.q_mu) / total
        pre_var = (p * p) @ self.q2_var / (total * total)
        V = pre_var + np.exp(-u)
        dev = self.ss + self.n * (mean - self.ybar) ** 2
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            loglik = self.ll_const - 0.5 * self.n * np.log(V).sum() - (dev / (2.0 * V)).sum()
        if not np.isfinite(loglik):
            return -np.inf, -np.inf
        r = f - self.mu0
        logpost = loglik + self.mvn_const - 0.5 * (r @ (self.cov_inv @ r))
        # gamma prior in tau plus the d tau / d log tau Jacobian
        logpost += self.gamma_const + (self.a * u - self.b * np.exp(u)).sum()
        if not np.isfinite(logpost):
            return -np.inf, loglik
        return logpost, loglik


def _initial_point(target, tau_init, rng, max_retries=20):
    K = target.K
    log_tau = np.log(tau_init)
    for attempt in range(max_retries):
        x = np.concatenate([rng.normal(size=K), log_tau])
        logpost, loglik = target(x)
        if np.isfinite(logpost):
            return x, logpost, loglik
    raise SamplerInitError(
        f"no finite log posterior found at initialization after {max_retries} retries"
    )


def _run_chain(target, control: McmcControl, tau_init, rng):
    K, J = target.K, target.J
    d = K + J
    x, logpost, loglik = _initial_point(target, tau_init, rng)

    z = rng.normal(size=(control.iterations, d))
    log_u = np.log(rng.random(size=(control.iterations, d)))

    scales = np.ones(d)
    window_acc = np.zeros(d)
    post_acc = np.zeros(d)
    n_ret = control.retained_per_chain
    xs = np.empty((n_ret, d))
    lls = np.empty(n_ret)
    ret = 0

    burn_in, thin, window = control.burn_in, control.thin, control.adaptation_window
    target_rate = control.target_acceptance
    for t in range(1, control.iterations + 1):
        zt = z[t - 1]
        lu = log_u[t - 1]
        for i in range(d):
            old = x[i]
            x[i] = old + scales[i] * zt[i]
            lp_new, ll_new = target(x)
            if lu[i] < lp_new - logpost:
                logpost, loglik = lp_new, ll_new
                if t <= burn_in:
                    window_acc[i] += 1
                else:
                    post_acc[i] += 1
            else:
                x[i] = old
        if t <= burn_in and t % window == 0:
            rates = window_acc / window
            scales = np.clip(scales * np.exp(rates - target_rate), 1e-3, 1e3)
            window_acc[:] = 0
        if t > burn_in and (t - burn_in) % thin == 0 and ret < n_ret:
            xs[ret] = x
            lls[ret] = loglik
            ret += 1

    post_rates = post_acc / max(control.iterations - burn_in, 1)
    return xs, lls, post_rates


def _fit_group(data, group, priors, control, seed_seq):
    target = _GroupTarget(data, group, priors)
    y = data.group_mixtures(group)
    n = y.shape[0]
    if n >= 2:
        var = y.var(axis=0, ddof=1)
    else:
        var = np.zeros(data.n_tracers)
    tau_init = np.where(var > 0, 1.0 / np.where(var > 0, var, 1.0),
                        priors.tau_shape / priors.tau_rate)
    tau_init = np.clip(tau_init, 1e-300, 1e300)

    chain_seqs = seed_seq.spawn(control.n_chains)
    per_chain = []
    rate_sum = np.zeros(target.K + target.J)
    for c in range(control.n_chains):
        xs, lls, rates = _run_chain(target, control, tau_init,
                                    np.random.default_rng(chain_seqs[c]))
        per_chain.append((xs, lls))
        rate_sum += rates

    mean_rates = rate_sum / control.n_chains
    names = [f"clr[{s}]" for s in data.source_names] + [
        f"log_tau[{t}]" for t in data.tracer_names
    ]
    bad = [
        f"{names[i]} ({mean_rates[i]:.2f})"
        for i in range(len(names))
        if not 0.1 <= mean_rates[i] <= 0.6
    ]
    if bad:
        warnings.warn(
            f"group {group!r}: post-adaptation acceptance outside [0.1, 0.6] "
            f"for {', '.join(bad)}; consider a longer run",
            AcceptanceRateWarning,
            stacklevel=3,
        )

    K = data.n_sources
    xs = np.concatenate([c[0] for c in per_chain])
    lls = np.concatenate([c[1] for c in per_chain])
    chain_ids = np.repeat(np.arange(control.n_chains), control.retained_per_chain)
    return GroupDraws(
        p_model=clr_inverse(xs[:, :K]),
        sigma=np.exp(-0.5 * xs[:, K:]),
        deviance=-2.0 * lls,
        chain=chain_ids,
    )


def run_mcmc(data: MixingData, priors: Priors = None, control: McmcControl = None) -> FitResult:
    """Fit the mixing model by adaptive Metropolis, independently per group.

    Deterministic for a fixed (data, priors, control): each group and chain
    draws from its own spawned random stream.  Groups holding a single
    observation automatically switch to the near-zero residual prior.
    """
    priors = Priors.default(data.n_sources) if priors is None else priors
    control = McmcControl() if control is None else control
    if priors.n_sources != data.n_sources:
        raise ValidationError(
            f"priors are for {priors.n_sources} sources, data has {data.n_sources}"
        )

    positions = data.source_means + data.correction_means
    if np.all(positions == positions[0]):
        warnings.warn(
            "all corrected source positions coincide; proportions are not "
            "identifiable from these data",
            NonIdentifiableWarning,
            stacklevel=2,
        )

    root = np.random.SeedSequence(control.seed)
    group_seqs = root.spawn(len(data.group_names))
    draws = {}
    priors_by_group = {}
    for g, seq in zip(data.group_names, group_seqs):
        group_priors = priors
        if int(data.group_rows(g).sum()) == 1:
            group_priors = solo_priors(priors, _min_source_sd(data))
            warnings.warn(
                f"group {g!r} has a single observation; using near-zero "
                "residual-scale priors",
                SoloGroupWarning,
                stacklevel=2,
            )
        draws[g] = _fit_group(data, g, group_priors, control, seq)
        priors_by_group[g] = group_priors

    return FitResult(
        data=data,
        priors_by_group=priors_by_group,
        backend="mcmc",
        draws=draws,
        source_names=list(data.source_names),
        control=asdict(control),
        seed=control.seed,
    )


def gelman_rubin(result: FitResult, group=None) -> dict:
    """Potential scale reduction per monitored quantity for one group.

    Computed as sqrt((n-1)/n + B_m/W) where W is the mean within-chain
    variance and B_m the variance of the chain means, floored at 1 so that
    identical chains report exactly 1.0.
    """
    if result.backend != "mcmc":
        raise UnsupportedForBackendError(
            f"convergence diagnostics need chains; backend {result.backend!r} "
            "produces none (refit with the mcmc backend to diagnose)"
        )
    g = result._group(group)
    chain = result.chain_ids(g)
    labels = np.unique(chain)
    if labels.size < 2:
        raise ValidationError(
            "Gelman-Rubin needs at least 2 chains; rerun with n_chains >= 2"
        )
    counts = [(chain == c).sum() for c in labels]
    n = min(counts)
    if n < 10:
        raise ValidationError("Gelman-Rubin needs at least 10 draws per chain")

    draws = result.monitored_draws(g)
    names = result.monitored_names()
    out = {}
    for k, name in enumerate(names):
        per_chain = np.stack([draws[chain == c, k][:n] for c in labels])
        W = per_chain.var(axis=1, ddof=1).mean()
        B_m = per_chain.mean(axis=1).var(ddof=1)
        if W == 0:
            rhat = 1.0 if B_m == 0 else np.inf
        else:
            rhat = max(1.0, float(np.sqrt((n - 1) / n + B_m / W)))
        out[name] = rhat
    return out
