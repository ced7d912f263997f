"""Summaries, comparisons, source combination and posterior checks.

Everything here is a pure function of a fitted :class:`FitResult`; the same
draws always give the same tables regardless of which backend produced them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    UnknownGroupError,
    UnknownSourceError,
    ValidationError,
)
from .mcmc import DEFAULT_SEED, gelman_rubin
from .model import clr_inverse, mixture_moments
from .posterior import FitResult

QUANTILE_LEVELS = (2.5, 25.0, 50.0, 75.0, 97.5)

SUMMARY_KINDS = ("diagnostics", "statistics", "quantiles", "correlations")


@dataclass
class SummaryTable:
    """Labelled numeric table with CSV/JSON serialisation."""

    row_labels: list
    col_labels: list
    values: np.ndarray
    title: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValidationError("summary table shape does not match its labels")

    def __str__(self):
        width = max(len(str(r)) for r in self.row_labels) + 1
        cols = [f"{c:>9}" for c in self.col_labels]
        lines = []
        if self.title:
            lines.append(self.title)
        lines.append(" " * width + " ".join(cols))
        for label, row in zip(self.row_labels, self.values):
            cells = " ".join(f"{v:9.3f}" for v in row)
            lines.append(f"{str(label):<{width}}{cells}")
        return "\n".join(lines)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([""] + list(self.col_labels))
            for label, row in zip(self.row_labels, self.values):
                writer.writerow([label] + [repr(float(v)) for v in row])

    def to_json(self):
        return json.dumps(
            {
                "title": self.title,
                "rows": list(self.row_labels),
                "columns": [str(c) for c in self.col_labels],
                "values": self.values.tolist(),
            }
        )


def summarize(result: FitResult, kind: str = "statistics", group=None) -> SummaryTable:
    """Summary table for one group: statistics, quantiles, correlations or
    convergence diagnostics (diagnostics are only defined for MCMC fits)."""
    if kind not in SUMMARY_KINDS:
        raise ValidationError(f"unknown summary kind {kind!r}; pick from {SUMMARY_KINDS}")
    g = result._group(group)
    title = f"Summary for {g}"

    if kind == "diagnostics":
        rhat = gelman_rubin(result, g)
        return SummaryTable(list(rhat), ["rhat"],
                            np.array([[v] for v in rhat.values()]), title)

    names = result.monitored_names()
    draws = result.monitored_draws(g)
    if kind == "statistics":
        values = np.column_stack([draws.mean(axis=0), draws.std(axis=0, ddof=1)])
        return SummaryTable(names, ["mean", "sd"], values, title)
    if kind == "quantiles":
        values = np.percentile(draws, QUANTILE_LEVELS, axis=0).T
        return SummaryTable(names, [f"{q:g}%" for q in QUANTILE_LEVELS], values, title)
    p = result.p_draws(g)
    corr = np.corrcoef(p, rowvar=False)
    return SummaryTable(list(result.source_names), list(result.source_names),
                        np.atleast_2d(corr), title)


@dataclass
class ComparisonResult:
    """Exceedance probabilities plus the draw sets behind them."""

    probabilities: dict            # (first, second) -> P(first > second)
    draws: dict                    # label -> 1-D draw array
    labels: list

    def boxplot_stats(self) -> SummaryTable:
        values = np.stack(
            [np.percentile(self.draws[l], QUANTILE_LEVELS) for l in self.labels]
        )
        return SummaryTable(self.labels, [f"{q:g}%" for q in QUANTILE_LEVELS], values)


def _exceedance(first, second) -> float:
    """Fraction of paired draws with first strictly greater than second."""
    return float(np.mean(first > second))


def compare_groups(result: FitResult, source, groups) -> ComparisonResult:
    """P(proportion of `source` in group a > in group b) for each listed pair.

    Draws are paired by index after truncation to the shortest group; groups
    are fitted independently, so the pairing is an arbitrary but deterministic
    Monte Carlo convention.  Ties count as "not greater".
    """
    source = str(source)
    if source not in result.source_names:
        raise UnknownSourceError(
            f"unknown source {source!r}; available: {list(result.source_names)}"
        )
    if len(result.group_names) < 2:
        raise ValidationError(
            "fit holds a single group; use compare_sources for within-group contrasts"
        )
    groups = [str(g) for g in groups]
    if len(groups) < 2:
        raise ValidationError("need at least two groups to compare")
    for g in groups:
        if g not in result.group_names:
            raise UnknownGroupError(
                f"unknown group {g!r}; available: {list(result.group_names)}"
            )
    col = result.source_names.index(source)
    n_common = min(result.p_draws(g).shape[0] for g in groups)
    draws = {g: result.p_draws(g)[:n_common, col] for g in groups}
    probabilities = {}
    for i, ga in enumerate(groups):
        for gb in groups[i + 1:]:
            probabilities[(ga, gb)] = _exceedance(draws[ga], draws[gb])
    return ComparisonResult(probabilities, draws, groups)


def compare_sources(result: FitResult, sources, group=None) -> ComparisonResult:
    """Within-group pairwise P(source a > source b) over the joint draws."""
    sources = [str(s) for s in sources]
    if len(sources) < 2:
        raise ValidationError("need at least two sources to compare")
    for s in sources:
        if s not in result.source_names:
            raise UnknownSourceError(
                f"unknown source {s!r}; available: {list(result.source_names)}"
            )
    p = result.p_draws(group)
    draws = {s: p[:, result.source_names.index(s)] for s in sources}
    probabilities = {}
    for i, sa in enumerate(sources):
        for sb in sources[i + 1:]:
            probabilities[(sa, sb)] = _exceedance(draws[sa], draws[sb])
    return ComparisonResult(probabilities, draws, sources)


def combine_sources(result: FitResult, names, new_name) -> FitResult:
    """Sum the named source columns into one, per draw.

    Raw draws, residual scales, deviances and chain ids are untouched; only
    the view over source columns changes, so the result feeds every other
    operation.  Remaining sources keep their order; the combined column goes
    last.
    """
    names = [str(s) for s in names]
    new_name = str(new_name)
    if len(names) < 2:
        raise ValidationError("need at least two sources to combine")
    for s in names:
        if s not in result.source_names:
            raise UnknownSourceError(
                f"unknown source {s!r}; available: {list(result.source_names)}"
            )
    if len(set(names)) != len(names):
        raise ValidationError("sources to combine must be distinct")
    if len(names) == len(result.source_names):
        raise ValidationError("cannot combine every source; nothing would remain")
    keep = [s for s in result.source_names if s not in names]
    if new_name in keep:
        raise ValidationError(f"new name {new_name!r} collides with a remaining source")

    merged = sorted(
        idx
        for s in names
        for idx in result.combine_map[result.source_names.index(s)]
    )
    new_map = [result.combine_map[result.source_names.index(s)] for s in keep]
    new_map.append(merged)
    return FitResult(
        data=result.data,
        priors_by_group=result.priors_by_group,
        backend=result.backend,
        draws=result.draws,
        source_names=keep + [new_name],
        combine_map=new_map,
        control=result.control,
        seed=result.seed,
    )


@dataclass
class PriorPosteriorDraws:
    """Paired prior and posterior proportion draws for one group."""

    source_names: list
    prior: np.ndarray            # (n_prior, K)
    posterior: np.ndarray        # (n_post, K)

    def rows(self):
        for label, block in (("prior", self.prior), ("posterior", self.posterior)):
            for row in block:
                yield label, row

    def density_grids(self, n_grid: int = 200):
        """Per-source kernel density curves on [0, 1] for both draw sets.

        Returns (grid, {source: (prior_density, posterior_density)}).
        """
        from .kde import kde_1d

        grid = np.linspace(0.0, 1.0, n_grid)
        curves = {}
        for k, name in enumerate(self.source_names):
            curves[name] = (
                kde_1d(self.prior[:, k], grid),
                kde_1d(self.posterior[:, k], grid),
            )
        return grid, curves


def prior_viz_data(result: FitResult, group=None, n_prior_draws: int = 3600,
                   seed: int = DEFAULT_SEED) -> PriorPosteriorDraws:
    """Prior proportion draws next to the posterior ones for one group.

    Prior draws are the simplex transform of normal samples under the fit's
    prior hyperparameters, so two groups sharing priors get identical prior
    draws for the same seed.
    """
    g = result._group(group)
    priors = result.priors_for(g)
    rng = np.random.default_rng(seed)
    f = rng.multivariate_normal(priors.clr_mean, priors.clr_cov, size=n_prior_draws,
                                method="cholesky")
    p_prior_model = clr_inverse(f)
    prior = np.column_stack(
        [p_prior_model[:, idx].sum(axis=1) for idx in result.combine_map]
    )
    return PriorPosteriorDraws(list(result.source_names), prior, result.p_draws(g))


@dataclass
class PredictiveCheck:
    """Posterior-predictive intervals and their empirical coverage."""

    observed: np.ndarray         # (n, J)
    lower: np.ndarray            # (n, J)
    upper: np.ndarray            # (n, J)
    inside: np.ndarray           # (n, J) bool
    prob_interval: float
    tracer_names: list
    coverage: float = field(init=False)

    def __post_init__(self):
        self.coverage = float(np.mean(self.inside))


def posterior_predictive(result: FitResult, group=None, prob_interval: float = 0.5,
                         seed: int = DEFAULT_SEED) -> PredictiveCheck:
    """Simulate one replicate dataset per retained draw and report, per
    observation and tracer, the central ``prob_interval`` interval and
    whether the observed value falls inside it."""
    if not 0 < prob_interval < 1:
        raise ValidationError("prob_interval must lie strictly between 0 and 1")
    g = result._group(group)
    data = result.data
    y = data.group_mixtures(g)
    p_model = result.group_draws(g).p_model
    sigma = result.sigma_draws(g)

    mean, pre_var = mixture_moments(p_model, data)      # (n_draws, J)
    scale = np.sqrt(pre_var + sigma ** 2)
    rng = np.random.default_rng(seed)
    n_draws = p_model.shape[0]
    n = y.shape[0]
    # one replicate per draw per observation
    reps = mean[:, None, :] + scale[:, None, :] * rng.standard_normal(
        (n_draws, n, data.n_tracers)
    )
    lo_q = 100.0 * (1.0 - prob_interval) / 2.0
    hi_q = 100.0 - lo_q
    lower = np.percentile(reps, lo_q, axis=0)
    upper = np.percentile(reps, hi_q, axis=0)
    inside = (y >= lower) & (y <= upper)
    return PredictiveCheck(y, lower, upper, inside, prob_interval,
                           list(data.tracer_names))
