"""Bayesian tracer mixing models.

Estimate the proportional contribution of K sources to observed mixture
tracer values, with interchangeable fitting backends (adaptive Metropolis
MCMC and fixed-form variational Bayes) plus geometry checks, summaries,
comparisons, prior elicitation and posterior-predictive checks.
"""

__version__ = "0.1.0"

from .analysis import (
    ComparisonResult,
    PredictiveCheck,
    PriorPosteriorDraws,
    SummaryTable,
    combine_sources,
    compare_groups,
    compare_sources,
    posterior_predictive,
    prior_viz_data,
    summarize,
)
from .elicitation import ElicitedPrior, elicit
from .errors import TracermixError, ValidationError
from .ffvb import FfvbControl, VariationalState, run_ffvb
from .geometry import (
    IsospaceData,
    RegionReport,
    corrected_sources,
    in_mixing_region,
    isospace_plot_data,
)
from .io import load, load_run, save_run
from .mcmc import DEFAULT_SEED, McmcControl, gelman_rubin, run_mcmc, solo_priors
from .model import (
    LatentParams,
    MixingData,
    Priors,
    clr_inverse,
    deviance,
    log_likelihood,
    log_posterior,
    log_posterior_gradient,
    mixture_moments,
)
from .posterior import FitResult, GroupDraws

__all__ = [
    "ComparisonResult",
    "DEFAULT_SEED",
    "ElicitedPrior",
    "FfvbControl",
    "FitResult",
    "GroupDraws",
    "IsospaceData",
    "LatentParams",
    "McmcControl",
    "MixingData",
    "PredictiveCheck",
    "PriorPosteriorDraws",
    "Priors",
    "RegionReport",
    "SummaryTable",
    "TracermixError",
    "ValidationError",
    "VariationalState",
    "clr_inverse",
    "combine_sources",
    "compare_groups",
    "compare_sources",
    "corrected_sources",
    "deviance",
    "elicit",
    "gelman_rubin",
    "in_mixing_region",
    "isospace_plot_data",
    "load",
    "load_run",
    "log_likelihood",
    "log_posterior",
    "log_posterior_gradient",
    "mixture_moments",
    "posterior_predictive",
    "prior_viz_data",
    "run_ffvb",
    "run_mcmc",
    "save_run",
    "solo_priors",
    "summarize",
]
