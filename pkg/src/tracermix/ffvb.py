"""Fixed-form variational backend.

The posterior over theta = (f, tau) is approximated by a factorised family

    q(f)   = MVN(f_mean, L L^T)          (L lower triangular)
    q(tau) = prod_j Gamma(shape_j, rate_j)

whose hyperparameters are driven up the evidence lower bound by a
score-function gradient estimator with per-coordinate control variates and
moment-scaled adaptive steps.  Optimization stops once the rolling-window
average of the lower bound has gone `max_patience` iterations without
setting a new maximum.

The free coordinate vector is (f_mean, tril(L), log shape, log rate); the
positives are updated in log space, and the diagonal of L is floored at a
tiny positive value after every step.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import digamma, gammaln

from .errors import FfvbDivergenceError, SoloGroupWarning, ValidationError
from .mcmc import DEFAULT_SEED, _min_source_sd, solo_priors
from .model import (
    LOG_2PI,
    MixingData,
    Priors,
    _combined_stats,
    _group_suffstats,
    clr_inverse,
)
from .posterior import FitResult, GroupDraws

_DIAG_FLOOR = 1e-8


@dataclass(frozen=True)
class FfvbControl:
    """Optimizer settings for the variational backend."""

    samples_per_iter: int = 100
    beta1: float = 0.9
    beta2: float = 0.9
    step_size: float = 0.1
    step_threshold: float = 500.0
    window: int = 150
    max_patience: int = 300
    max_iterations: int = 5000
    n_output_draws: int = 3600
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.samples_per_iter < 2:
            raise ValidationError("samples_per_iter must be >= 2")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in (0, 1)")
        if self.step_size <= 0:
            raise ValidationError("step_size must be positive")
        if self.window < 1 or self.max_patience < 1:
            raise ValidationError("window and max_patience must be >= 1")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")


@dataclass
class VariationalState:
    """Variational hyperparameters plus the optimizer's running state."""

    f_mean: np.ndarray
    f_chol: np.ndarray           # lower triangular, positive diagonal
    tau_shape: np.ndarray
    tau_rate: np.ndarray
    grad_avg: np.ndarray = None  # running first moment over free coordinates
    sq_avg: np.ndarray = None    # running second moment, >= 0
    step: int = 1
    patience: int = 0
    lb_history: list = field(default_factory=list)

    def __post_init__(self):
        self.f_mean = np.asarray(self.f_mean, dtype=float)
        self.f_chol = np.asarray(self.f_chol, dtype=float)
        self.tau_shape = np.atleast_1d(np.asarray(self.tau_shape, dtype=float))
        self.tau_rate = np.atleast_1d(np.asarray(self.tau_rate, dtype=float))
        if np.any(np.diag(self.f_chol) <= 0):
            raise ValidationError("f_chol diagonal must be strictly positive")
        if np.any(self.tau_shape <= 0) or np.any(self.tau_rate <= 0):
            raise ValidationError("tau_shape and tau_rate must be strictly positive")

    @property
    def n_sources(self) -> int:
        return self.f_mean.shape[0]

    @property
    def n_tracers(self) -> int:
        return self.tau_shape.shape[0]

    @property
    def n_free(self) -> int:
        K, J = self.n_sources, self.n_tracers
        return K + K * (K + 1) // 2 + 2 * J

    def free_vector(self) -> np.ndarray:
        K = self.n_sources
        tril = np.tril_indices(K)
        return np.concatenate([
            self.f_mean,
            self.f_chol[tril],
            np.log(self.tau_shape),
            np.log(self.tau_rate),
        ])

    def set_free_vector(self, vec):
        K, J = self.n_sources, self.n_tracers
        T = K * (K + 1) // 2
        self.f_mean = vec[:K].copy()
        L = np.zeros((K, K))
        L[np.tril_indices(K)] = vec[K:K + T]
        d = np.diag_indices(K)
        L[d] = np.maximum(L[d], _DIAG_FLOOR)
        self.f_chol = L
        self.tau_shape = np.exp(vec[K + T:K + T + J])
        self.tau_rate = np.exp(vec[K + T + J:])


def initial_state(priors: Priors, n_tracers: int) -> VariationalState:
    """Start at the prior: q(f) centred on the prior mean with unit scale,
    unit-shape/rate gamma factors for the precisions."""
    K = priors.n_sources
    return VariationalState(
        f_mean=priors.clr_mean.copy(),
        f_chol=np.eye(K),
        tau_shape=np.ones(n_tracers),
        tau_rate=np.ones(n_tracers),
    )


def sample_q(state: VariationalState, n: int, rng) -> tuple:
    """Draw n samples of (f, tau) from the current variational family."""
    z = rng.standard_normal((n, state.n_sources))
    f = state.f_mean + z @ state.f_chol.T
    tau = rng.gamma(state.tau_shape, 1.0 / state.tau_rate,
                    size=(n, state.n_tracers))
    # gamma sampling can underflow to exactly zero for tiny shapes
    return f, np.maximum(tau, np.finfo(float).tiny)


def log_q(state: VariationalState, f, tau) -> np.ndarray:
    """Log density of the variational family at rows of (f, tau)."""
    L = state.f_chol
    dev = np.atleast_2d(f) - state.f_mean
    eta = solve_triangular(L, dev.T, lower=True)            # (K, n)
    log_det = np.sum(np.log(np.diag(L)))
    out = -0.5 * state.n_sources * LOG_2PI - log_det - 0.5 * (eta ** 2).sum(axis=0)
    c, d = state.tau_shape, state.tau_rate
    tau = np.atleast_2d(tau)
    out = out + np.sum(
        c * np.log(d) - gammaln(c) + (c - 1.0) * np.log(tau) - d * tau, axis=1
    )
    return out


def score_matrix(state: VariationalState, f, tau) -> np.ndarray:
    """Gradient of log q with respect to the free coordinates, per sample.

    Returns an (n, n_free) matrix; the gamma blocks carry the chain-rule
    factors for the log-reparameterised shape and rate.
    """
    K = state.n_sources
    L = state.f_chol
    f = np.atleast_2d(f)
    tau = np.atleast_2d(tau)
    n = f.shape[0]

    dev = f - state.f_mean
    eta = solve_triangular(L, dev.T, lower=True)             # (K, n)
    alpha = solve_triangular(L.T, eta, lower=False)          # (K, n) = Sigma^-1 dev
    score_mean = alpha.T

    L_inv = solve_triangular(L, np.eye(K), lower=True)
    outer = np.einsum("kn,ln->nkl", alpha, eta)              # alpha_s eta_s^T
    grad_L = outer - L_inv.T[None, :, :]
    tril = np.tril_indices(K)
    score_chol = grad_L[:, tril[0], tril[1]]

    c, d = state.tau_shape, state.tau_rate
    score_log_shape = c * (np.log(d) - digamma(c) + np.log(tau))
    score_log_rate = c - d * tau
    return np.concatenate(
        [score_mean, score_chol.reshape(n, -1), score_log_shape, score_log_rate],
        axis=1,
    )


def control_variates(scores, h_values) -> np.ndarray:
    """Per-coordinate control variates Cov(score*h, score) / Var(score).

    Coordinates whose score variance is (numerically) zero get zero.
    """
    scores = np.asarray(scores, dtype=float)
    y = scores * np.asarray(h_values, dtype=float)[:, None]
    xc = scores - scores.mean(axis=0)
    yc = y - y.mean(axis=0)
    n = scores.shape[0]
    var = (xc ** 2).sum(axis=0) / (n - 1)
    cov = (xc * yc).sum(axis=0) / (n - 1)
    return np.where(var < 1e-12, 0.0, cov / np.where(var < 1e-12, 1.0, var))


def lower_bound_gradient(scores, h_values, controls=None) -> np.ndarray:
    """Score-function estimate of the lower-bound gradient.

    Averages score * (h - c) elementwise over samples; ``controls`` of None
    (or zeros) gives the plain estimator.
    """
    h = np.asarray(h_values, dtype=float)[:, None]
    if controls is None:
        return (scores * h).mean(axis=0)
    return (scores * (h - np.asarray(controls)[None, :])).mean(axis=0)


def lower_bound_estimate(h_lambda_values) -> float:
    """Monte Carlo lower-bound estimate: the mean of h - log q over samples."""
    return float(np.mean(h_lambda_values))


def adaptive_update(state: VariationalState, gradient, control: FfvbControl) -> VariationalState:
    """One moment-scaled ascent step on the free coordinates.

    Uses l_t = min(step_size, step_size * threshold / t) and the running
    first/second gradient moments; 0/sqrt(0) counts as a zero step.
    """
    g = np.asarray(gradient, dtype=float)
    v = g ** 2
    if state.grad_avg is None:
        state.grad_avg = g.copy()
        state.sq_avg = v.copy()
    else:
        state.grad_avg = control.beta1 * state.grad_avg + (1 - control.beta1) * g
        state.sq_avg = control.beta2 * state.sq_avg + (1 - control.beta2) * v
    lr = min(control.step_size, control.step_size * control.step_threshold / state.step)
    denom = np.sqrt(state.sq_avg)
    step = np.divide(state.grad_avg, denom,
                     out=np.zeros_like(denom), where=denom > 0)
    state.set_free_vector(state.free_vector() + lr * step)
    state.step += 1
    return state


class PatienceTracker:
    """Early-stopping bookkeeping over the lower-bound history.

    Once `window` estimates exist, each new estimate closes a rolling window;
    patience resets to zero when the window average ties or beats the best
    window average seen so far, and increments otherwise.
    """

    def __init__(self, window: int):
        self.window = window
        self.best = -np.inf
        self.patience = 0
        self._history = []

    def update(self, lb_estimate: float):
        """Record one estimate; returns the current window average (or None)."""
        self._history.append(lb_estimate)
        if len(self._history) < self.window:
            return None
        moving = float(np.mean(self._history[-self.window:]))
        if moving >= self.best:
            self.patience = 0
        else:
            self.patience += 1
        self.best = max(self.best, moving)
        return moving


class _BatchJoint:
    """Vectorised log joint density h(theta) = log p(y|theta) p(theta) for one group."""

    def __init__(self, data: MixingData, group, priors: Priors):
        mu, var, q = _combined_stats(data)
        self.q = q
        self.q_mu = q * mu
        self.q2_var = q ** 2 * var
        self.n, self.ybar, self.ss = _group_suffstats(data, group)
        self.K = data.n_sources
        self.J = data.n_tracers
        self.mu0 = priors.clr_mean
        self.cov_chol = np.linalg.cholesky(priors.clr_cov)
        self.a = priors.tau_shape
        self.b = priors.tau_rate
        self.ll_const = -0.5 * self.n * self.J * LOG_2PI
        self.mvn_const = (
            -0.5 * self.K * LOG_2PI - np.sum(np.log(np.diag(self.cov_chol)))
        )
        self.gamma_const = self.J * (self.a * np.log(self.b) - gammaln(self.a))

    def log_likelihood(self, f, tau) -> np.ndarray:
        p = clr_inverse(np.atleast_2d(f))
        tau = np.atleast_2d(tau)
        total = p @ self.q
        mean = (p @ self.q_mu) / total
        pre_var = (p ** 2) @ self.q2_var / total ** 2
        V = pre_var + 1.0 / tau
        dev = self.ss + self.n * (mean - self.ybar) ** 2
        return (
            self.ll_const
            - 0.5 * self.n * np.log(V).sum(axis=1)
            - (dev / (2.0 * V)).sum(axis=1)
        )

    def __call__(self, f, tau) -> np.ndarray:
        f = np.atleast_2d(f)
        tau = np.atleast_2d(tau)
        eta = solve_triangular(self.cov_chol, (f - self.mu0).T, lower=True)
        log_prior_f = self.mvn_const - 0.5 * (eta ** 2).sum(axis=0)
        log_prior_tau = self.gamma_const + np.sum(
            (self.a - 1.0) * np.log(tau) - self.b * tau, axis=1
        )
        return self.log_likelihood(f, tau) + log_prior_f + log_prior_tau


def log_density_ratio(state: VariationalState, f, tau, data: MixingData,
                      group, priors: Priors) -> np.ndarray:
    """h_lambda: log joint minus log variational density, per sample row."""
    return _BatchJoint(data, group, priors)(f, tau) - log_q(state, f, tau)


def _optimize_group(joint, state, control, rng, trace_writer=None):
    S = control.samples_per_iter

    def draw_and_score():
        # overflow on a diverging trajectory is expected and surfaces as the
        # divergence error below, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            f, tau = sample_q(state, S, rng)
            h_lam = joint(f, tau) - log_q(state, f, tau)
            return score_matrix(state, f, tau), h_lam

    # initialisation pass: plain gradient seeds the moments and control variates
    scores, h_lam = draw_and_score()
    g0 = lower_bound_gradient(scores, h_lam)
    state.grad_avg = g0.copy()
    state.sq_avg = g0 ** 2
    controls = control_variates(scores, h_lam)

    tracker = PatienceTracker(control.window)
    n_bad = 0
    for t in range(1, control.max_iterations + 1):
        scores, h_lam = draw_and_score()
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            gradient = lower_bound_gradient(scores, h_lam, controls)
            controls = control_variates(scores, h_lam)
            adaptive_update(state, gradient, control)

        lb = lower_bound_estimate(h_lam)
        state.lb_history.append(lb)
        n_bad = n_bad + 1 if not np.isfinite(lb) else 0
        if n_bad >= control.window:
            raise FfvbDivergenceError(
                f"lower bound non-finite for {n_bad} consecutive iterations; "
                "try a smaller step_size"
            )

        moving = tracker.update(lb)
        state.patience = tracker.patience
        if trace_writer is not None:
            trace_writer.writerow(
                [t, repr(lb), "" if moving is None else repr(moving), state.patience]
            )
        if state.patience >= control.max_patience:
            break
    return state


def run_ffvb(data: MixingData, priors: Priors = None, control: FfvbControl = None,
             trace_dir=None) -> FitResult:
    """Fit the mixing model by fixed-form variational Bayes, per group.

    The returned draws are fresh samples from each group's converged
    variational family, shaped exactly like MCMC output (chain ids all zero).
    If ``trace_dir`` is given, a per-iteration lower-bound trace CSV is
    written there for each group.
    """
    priors = Priors.default(data.n_sources) if priors is None else priors
    control = FfvbControl() if control is None else control
    if priors.n_sources != data.n_sources:
        raise ValidationError(
            f"priors are for {priors.n_sources} sources, data has {data.n_sources}"
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
        rng = np.random.default_rng(seq)
        joint = _BatchJoint(data, g, group_priors)
        state = initial_state(group_priors, data.n_tracers)

        writer = None
        handle = None
        if trace_dir is not None:
            import os
            os.makedirs(trace_dir, exist_ok=True)
            safe = "".join(ch if ch.isalnum() else "_" for ch in str(g))
            handle = open(os.path.join(trace_dir, f"lb_trace_{safe}.csv"),
                          "w", newline="")
            writer = csv.writer(handle)
            writer.writerow(["iteration", "lb", "lb_moving_avg", "patience"])
        try:
            _optimize_group(joint, state, control, rng, writer)
        finally:
            if handle is not None:
                handle.close()

        f, tau = sample_q(state, control.n_output_draws, rng)
        sigma = tau ** -0.5
        draws[g] = GroupDraws(
            p_model=clr_inverse(f),
            sigma=sigma,
            deviance=-2.0 * joint.log_likelihood(f, tau),
            chain=np.zeros(control.n_output_draws, dtype=int),
        )
        priors_by_group[g] = group_priors

    return FitResult(
        data=data,
        priors_by_group=priors_by_group,
        backend="ffvb",
        draws=draws,
        source_names=list(data.source_names),
        control=asdict(control),
        seed=control.seed,
    )
