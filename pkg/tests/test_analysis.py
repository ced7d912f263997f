import numpy as np
import pytest

import tracermix as tm
from tracermix.errors import (
    UnknownSourceError,
    UnsupportedForBackendError,
    ValidationError,
)
from tracermix.posterior import FitResult, GroupDraws


def make_result(data, group_blocks, backend="mcmc", priors=None):
    priors = priors or tm.Priors.default(data.n_sources)
    draws = {
        g: GroupDraws(b["p"], b["sigma"], b["dev"], b.get("chain", np.zeros(len(b["dev"]), int)))
        for g, b in group_blocks.items()
    }
    return FitResult(
        data=data,
        priors_by_group={g: priors for g in group_blocks},
        backend=backend,
        draws=draws,
        source_names=list(data.source_names),
    )


@pytest.fixture()
def two_group_data():
    return tm.MixingData(
        mixtures=np.array([[4.0], [5.0], [4.5], [5.5]]),
        tracer_names=["iso1"],
        source_names=["A", "B", "C"],
        source_means=np.array([[-10.0], [0.0], [10.0]]),
        source_sds=np.ones((3, 1)),
        groups=["g1", "g1", "g2", "g2"],
    )


def block(p, sigma=None, dev=None):
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    return {
        "p": p,
        "sigma": np.ones((n, 1)) if sigma is None else np.asarray(sigma, float),
        "dev": np.zeros(n) if dev is None else np.asarray(dev, float),
    }


# -------------------------------------------------------------- summarize

def test_statistics_table_layout(mcmc_simple):
    result, _ = mcmc_simple
    table = tm.summarize(result, "statistics")
    assert table.row_labels == ["deviance", "A", "B", "C", "sd[iso1]"]
    assert table.col_labels == ["mean", "sd"]
    draws = result.monitored_draws()
    np.testing.assert_allclose(table.values[:, 0], draws.mean(axis=0))
    np.testing.assert_allclose(table.values[:, 1], draws.std(axis=0, ddof=1))
    text = str(table)
    assert "deviance" in text and "sd[iso1]" in text


def test_quantiles_non_decreasing(mcmc_simple):
    result, _ = mcmc_simple
    table = tm.summarize(result, "quantiles")
    assert table.col_labels == ["2.5%", "25%", "50%", "75%", "97.5%"]
    assert np.all(np.diff(table.values, axis=1) >= 0)


def test_correlation_of_identical_columns(simple_data):
    rng = np.random.default_rng(0)
    shared = rng.uniform(0.1, 0.4, size=200)
    p = np.column_stack([shared, shared, 1.0 - 2 * shared])
    result = make_result(simple_data, {"1": block(p)})
    table = tm.summarize(result, "correlations")
    assert table.values[0, 1] == pytest.approx(1.0)
    np.testing.assert_allclose(np.diag(table.values), 1.0)
    assert np.all(np.abs(table.values) <= 1.0 + 1e-12)


def test_constant_column_quantiles(simple_data):
    p = np.tile([0.2, 0.3, 0.5], (50, 1))
    result = make_result(simple_data, {"1": block(p)})
    table = tm.summarize(result, "quantiles")
    np.testing.assert_allclose(table.values[1], 0.2)


def test_diagnostics_on_ffvb_errors(simple_data):
    result = make_result(simple_data, {"1": block(np.tile([0.2, 0.3, 0.5], (50, 1)))},
                         backend="ffvb")
    with pytest.raises(UnsupportedForBackendError):
        tm.summarize(result, "diagnostics")


def test_summaries_backend_independent(simple_data):
    p = tm.clr_inverse(np.random.default_rng(1).normal(size=(300, 3)))
    blocks = {"1": block(p, dev=np.linspace(30, 50, 300))}
    a = tm.summarize(make_result(simple_data, blocks, backend="mcmc"), "statistics")
    b = tm.summarize(make_result(simple_data, blocks, backend="ffvb"), "statistics")
    np.testing.assert_array_equal(a.values, b.values)


def test_unknown_summary_kind(simple_data):
    result = make_result(simple_data, {"1": block(np.tile([0.2, 0.3, 0.5], (10, 1)))})
    with pytest.raises(ValidationError):
        tm.summarize(result, "everything")


# --------------------------------------------------------- compare_groups

def test_compare_groups_tied_draws_probability_zero(two_group_data):
    p = np.tile([0.2, 0.3, 0.5], (40, 1))
    result = make_result(two_group_data, {"g1": block(p), "g2": block(p)})
    comp = tm.compare_groups(result, "A", ["g1", "g2"])
    assert comp.probabilities[("g1", "g2")] == 0.0


def test_compare_groups_separated_draws(two_group_data):
    hi = np.tile([0.7, 0.2, 0.1], (40, 1))
    lo = np.tile([0.2, 0.3, 0.5], (40, 1))
    result = make_result(two_group_data, {"g1": block(hi), "g2": block(lo)})
    comp = tm.compare_groups(result, "A", ["g1", "g2"])
    assert comp.probabilities[("g1", "g2")] == 1.0


def test_compare_groups_symmetric_overlap(two_group_data):
    rng = np.random.default_rng(2)

    def noisy(n):
        a = np.clip(rng.normal(0.5, 0.01, size=n), 0.01, 0.99)
        rest = (1 - a) / 2
        return np.column_stack([a, rest, rest])

    result = make_result(
        two_group_data, {"g1": block(noisy(4000)), "g2": block(noisy(4000))}
    )
    comp = tm.compare_groups(result, "A", ["g1", "g2"])
    assert comp.probabilities[("g1", "g2")] == pytest.approx(0.5, abs=0.05)


def test_compare_groups_truncates_to_common_draws(two_group_data):
    result = make_result(
        two_group_data,
        {"g1": block(np.tile([0.7, 0.2, 0.1], (60, 1))),
         "g2": block(np.tile([0.2, 0.3, 0.5], (25, 1)))},
    )
    comp = tm.compare_groups(result, "A", ["g1", "g2"])
    assert len(comp.draws["g1"]) == 25


def test_compare_groups_single_group_redirects(simple_data):
    result = make_result(simple_data, {"1": block(np.tile([0.2, 0.3, 0.5], (30, 1)))})
    with pytest.raises(ValidationError, match="compare_sources"):
        tm.compare_groups(result, "A", ["1", "1"])


def test_compare_groups_unknown_source(two_group_data):
    p = np.tile([0.2, 0.3, 0.5], (10, 1))
    result = make_result(two_group_data, {"g1": block(p), "g2": block(p)})
    with pytest.raises(UnknownSourceError, match="A"):
        tm.compare_groups(result, "Q", ["g1", "g2"])


# -------------------------------------------------------- compare_sources

def test_compare_sources_on_fit(mcmc_simple):
    result, _ = mcmc_simple
    comp = tm.compare_sources(result, ["C", "A"])
    assert comp.probabilities[("C", "A")] > 0.99


def test_compare_sources_self_is_zero(mcmc_simple):
    result, _ = mcmc_simple
    comp = tm.compare_sources(result, ["A", "A"])
    assert comp.probabilities[("A", "A")] == 0.0


def test_compare_sources_complement(mcmc_simple):
    result, _ = mcmc_simple
    ab = tm.compare_sources(result, ["A", "B"]).probabilities[("A", "B")]
    ba = tm.compare_sources(result, ["B", "A"]).probabilities[("B", "A")]
    assert ab + ba == pytest.approx(1.0)       # tie-free continuous draws


def test_compare_sources_unknown_name(mcmc_simple):
    result, _ = mcmc_simple
    with pytest.raises(UnknownSourceError, match="available"):
        tm.compare_sources(result, ["A", "nope"])


# -------------------------------------------------------- combine_sources

@pytest.fixture()
def four_source_result():
    rng = np.random.default_rng(3)
    data = tm.MixingData(
        mixtures=np.array([[1.0, 2.0], [1.5, 2.5]]),
        tracer_names=["t1", "t2"],
        source_names=["A", "B", "C", "D"],
        source_means=rng.normal(size=(4, 2)),
        source_sds=np.ones((4, 2)),
    )
    p = tm.clr_inverse(rng.normal(size=(100, 4)))
    return make_result(data, {"1": {
        "p": p, "sigma": np.ones((100, 2)), "dev": rng.normal(40, 2, 100),
    }})


def test_combine_preserves_row_sums(four_source_result):
    combined = tm.combine_sources(four_source_result, ["A", "B"], "AB")
    np.testing.assert_allclose(
        combined.p_draws().sum(axis=1), 1.0, rtol=0, atol=1e-12
    )
    assert combined.source_names == ["C", "D", "AB"]
    np.testing.assert_array_equal(
        combined.p_draws()[:, 2],
        four_source_result.p_draws()[:, 0] + four_source_result.p_draws()[:, 1],
    )


def test_combine_is_associative_per_draw(four_source_result):
    step1 = tm.combine_sources(four_source_result, ["A", "B"], "AB")
    nested = tm.combine_sources(step1, ["AB", "C"], "ABC")
    direct = tm.combine_sources(four_source_result, ["A", "B", "C"], "ABC")
    np.testing.assert_array_equal(
        nested.p_draws()[:, nested.source_names.index("ABC")],
        direct.p_draws()[:, direct.source_names.index("ABC")],
    )


def test_combine_all_sources_rejected(four_source_result):
    with pytest.raises(ValidationError, match="every source"):
        tm.combine_sources(four_source_result, ["A", "B", "C", "D"], "all")


def test_combine_name_collision_rejected(four_source_result):
    with pytest.raises(ValidationError, match="collides"):
        tm.combine_sources(four_source_result, ["A", "B"], "C")


def test_combined_result_feeds_other_operations(four_source_result):
    combined = tm.combine_sources(four_source_result, ["A", "B"], "AB")
    table = tm.summarize(combined, "statistics")
    assert table.row_labels == ["deviance", "C", "D", "AB", "sd[t1]", "sd[t2]"]
    comp = tm.compare_sources(combined, ["AB", "C"])
    assert ("AB", "C") in comp.probabilities
    check = tm.posterior_predictive(combined, prob_interval=0.5, seed=1)
    assert check.observed.shape == (2, 2)


def test_combine_shrinks_negatively_correlated_pair(mcmc_simple):
    # single-tracer sources induce negative correlations between shares, so
    # the combined spread sits below the sum of the individual spreads
    result, _ = mcmc_simple
    p = result.p_draws()
    corr = np.corrcoef(p[:, 0], p[:, 1])[0, 1]
    assert corr < 0
    combined = tm.combine_sources(result, ["A", "B"], "AB")
    sd_ab = combined.p_draws()[:, combined.source_names.index("AB")].std(ddof=1)
    assert sd_ab <= p[:, 0].std(ddof=1) + p[:, 1].std(ddof=1)


# -------------------------------------------------------------- prior viz

def test_prior_viz_symmetric_default(mcmc_simple):
    result, _ = mcmc_simple
    pair = tm.prior_viz_data(result, n_prior_draws=20000, seed=0)
    se = pair.prior.std(axis=0, ddof=1) / np.sqrt(len(pair.prior))
    np.testing.assert_array_less(np.abs(pair.prior.mean(axis=0) - 1 / 3), 3 * se)
    assert np.all(pair.prior > 0)
    np.testing.assert_allclose(pair.prior.sum(axis=1), 1.0, atol=1e-10)


def test_prior_viz_identical_across_groups_with_shared_priors(mcmc_grouped):
    a = tm.prior_viz_data(mcmc_grouped, "Period 1", n_prior_draws=500, seed=4)
    b = tm.prior_viz_data(mcmc_grouped, "Period 2", n_prior_draws=500, seed=4)
    np.testing.assert_array_equal(a.prior, b.prior)
    assert not np.array_equal(a.posterior, b.posterior)


def test_prior_viz_reflects_elicited_targets(simple_data):
    targets_mean = np.array([0.5, 0.3, 0.2])
    targets_sd = np.array([0.08, 0.06, 0.05])
    elicited = tm.elicit(targets_mean, targets_sd, seed=0)
    priors = tm.Priors(elicited.clr_mean, elicited.clr_cov)
    result = make_result(
        simple_data, {"1": block(np.tile([0.2, 0.3, 0.5], (10, 1)))}, priors=priors
    )
    pair = tm.prior_viz_data(result, n_prior_draws=100_000, seed=1)
    np.testing.assert_allclose(pair.prior.mean(axis=0), targets_mean, atol=0.03)
    np.testing.assert_allclose(pair.prior.std(axis=0), targets_sd, atol=0.03)


# ---------------------------------------------------- posterior predictive

def test_predictive_interval_near_one_covers_everything(mcmc_simple):
    result, _ = mcmc_simple
    check = tm.posterior_predictive(result, prob_interval=0.9999)
    assert check.coverage == 1.0


def test_predictive_flags_distant_observation(simple_data, quick_control):
    result = tm.run_mcmc(simple_data, control=quick_control)
    # replace one observation with a point ten predictive scales away
    p_mean = result.group_draws().p_model.mean(axis=0)
    mean, pre_var = tm.mixture_moments(p_mean, simple_data)
    scale = np.sqrt(pre_var[0] + result.sigma_draws().mean() ** 2)
    y = simple_data.mixtures.copy()
    y[0, 0] = mean[0] + 10 * scale
    moved = tm.MixingData(
        mixtures=y,
        tracer_names=simple_data.tracer_names,
        source_names=simple_data.source_names,
        source_means=simple_data.source_means,
        source_sds=simple_data.source_sds,
    )
    shifted = FitResult(
        data=moved,
        priors_by_group=result.priors_by_group,
        backend="mcmc",
        draws=result.draws,
        source_names=list(result.source_names),
    )
    check = tm.posterior_predictive(shifted, prob_interval=0.5, seed=2)
    assert not check.inside[0, 0]
    assert check.coverage < 1.0


def test_predictive_interval_validation(mcmc_simple):
    result, _ = mcmc_simple
    for bad in (0.0, 1.0, -0.3, 2.0):
        with pytest.raises(ValidationError):
            tm.posterior_predictive(result, prob_interval=bad)


def test_predictive_coverage_reasonable_on_fit(mcmc_simple):
    result, _ = mcmc_simple
    check = tm.posterior_predictive(result, prob_interval=0.5, seed=3)
    assert check.observed.shape == (10, 1)
    assert 0.0 <= check.coverage <= 1.0
    assert np.all(check.lower <= check.upper)


def test_prior_viz_density_grids(mcmc_simple):
    result, _ = mcmc_simple
    pair = tm.prior_viz_data(result, n_prior_draws=2000, seed=5)
    grid, curves = pair.density_grids(n_grid=101)
    assert grid.shape == (101,)
    assert set(curves) == {"A", "B", "C"}
    for prior_d, post_d in curves.values():
        assert np.all(prior_d >= 0) and np.all(post_d >= 0)
        # densities integrate to roughly one over the unit interval
        assert np.trapezoid(post_d, grid) == pytest.approx(1.0, abs=0.15)
