"""Translate target proportion moments into prior hyperparameters.

Experts usually state prior knowledge as "source k should average m_k of the
mixture, give or take s_k".  This module finds a normal prior on the
unconstrained coordinates whose induced simplex distribution matches those
targets, by Nelder-Mead over (mean, log diagonal variance) with common
random numbers so the Monte Carlo objective is deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import ElicitationWarning, InfeasibleTargetError, ValidationError
from .mcmc import DEFAULT_SEED
from .model import clr_inverse


@dataclass
class ElicitedPrior:
    """Optimised prior hyperparameters and the moments they achieve."""

    clr_mean: np.ndarray
    clr_cov: np.ndarray              # diagonal
    achieved_means: np.ndarray
    achieved_sds: np.ndarray
    objective: float
    converged: bool


def _simplex_moments(mu, log_var, z):
    f = mu + np.exp(0.5 * log_var) * z
    p = clr_inverse(f)
    return p.mean(axis=0), p.std(axis=0, ddof=0)


def elicit(target_means, target_sds, n_sim: int = 10000,
           seed: int = DEFAULT_SEED, max_iterations: int = None) -> ElicitedPrior:
    """Find (clr_mean, diagonal clr_cov) whose simulated proportion means and
    sds best match the targets in squared error.

    The target sds must be feasible: for a [0, 1] variable with mean m no
    sd can reach sqrt(m (1 - m)).  The returned mean vector is centred to
    sum to zero (a pure translation, which leaves the proportions unchanged).
    """
    means = np.asarray(target_means, dtype=float)
    sds = np.asarray(target_sds, dtype=float)
    K = means.shape[0]
    if sds.shape != (K,):
        raise ValidationError("target_means and target_sds must have equal length")
    if K < 2:
        raise ValidationError("need at least two sources")
    if np.any(means <= 0) or abs(means.sum() - 1.0) > 1e-8:
        raise ValidationError("target_means must be positive and sum to 1")
    if np.any(sds <= 0):
        raise InfeasibleTargetError("target_sds must be strictly positive")
    bound = np.sqrt(means * (1.0 - means))
    if np.any(sds >= bound):
        k = int(np.argmax(sds - bound))
        raise InfeasibleTargetError(
            f"target sd {sds[k]} for mean {means[k]} is not achievable "
            f"(must be below {bound[k]:.4f})"
        )

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_sim, K))     # common random numbers

    def objective(x):
        sim_mean, sim_sd = _simplex_moments(x[:K], x[K:], z)
        return float(((sim_mean - means) ** 2).sum() + ((sim_sd - sds) ** 2).sum())

    budget = 4000 * K if max_iterations is None else max_iterations
    x0 = np.zeros(2 * K)                    # symmetric default: mean 0, unit variance
    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-10,
                            "maxiter": budget, "maxfev": budget})
    if not res.success:
        warnings.warn(
            f"elicitation stopped before convergence ({res.message}); "
            "returning the best point found",
            ElicitationWarning,
            stacklevel=2,
        )

    mu = res.x[:K] - res.x[:K].mean()       # anchor the translation direction
    var = np.exp(res.x[K:])
    achieved_mean, achieved_sd = _simplex_moments(mu, res.x[K:], z)
    return ElicitedPrior(
        clr_mean=mu,
        clr_cov=np.diag(var),
        achieved_means=achieved_mean,
        achieved_sds=achieved_sd,
        objective=float(res.fun),
        converged=bool(res.success),
    )
