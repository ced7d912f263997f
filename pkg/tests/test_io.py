import json

import numpy as np
import pytest

import tracermix as tm
import tracermix.io as tio
from tracermix.datasets import grouped_demo, simple_demo, write_csv_files
from tracermix.errors import (
    ArtifactParseError,
    DimensionMismatchError,
    NegativeSpreadError,
    SoloGroupWarning,
    UnknownSourceError,
    UnknownTracerError,
    UnsupportedForBackendError,
    ValidationError,
    VersionMismatchError,
)


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture()
def simple_files(tmp_path):
    mixtures, sources, _, _ = write_csv_files(simple_demo(), tmp_path / "simple")
    return mixtures, sources


@pytest.fixture()
def grouped_files(tmp_path):
    return write_csv_files(grouped_demo(), tmp_path / "grouped")


# ------------------------------------------------------------------ load

def test_load_simple_files(simple_files):
    mixtures, sources = simple_files
    data = tm.load(mixtures, sources)
    assert data.n_mixtures == 10
    assert data.n_sources == 3
    assert data.n_tracers == 1
    assert data.tracer_names == ("iso1",)
    assert data.source_names == ("A", "B", "C")
    np.testing.assert_array_equal(data.source_means[:, 0], [-10.0, 0.0, 10.0])
    np.testing.assert_array_equal(data.correction_means, np.zeros((3, 1)))
    np.testing.assert_array_equal(data.concentration_means, np.ones((3, 1)))
    assert data.group_names == ("1",)


def test_load_grouped_fixture_constants(grouped_files):
    data = tm.load(*grouped_files)
    assert data.n_sources == 4
    assert data.n_tracers == 2
    assert len(data.group_names) == 8
    assert data.source_names == ("Zostera", "Grass", "U.lactuca", "Enteromorpha")
    np.testing.assert_array_equal(
        data.source_means[:, 0], [-11.17, -30.88, -11.17, -14.06]
    )
    assert data.source_means[0, 1] == 6.49
    np.testing.assert_array_equal(data.source_sds[:, 0], [1.21, 0.64, 1.96, 1.17])
    np.testing.assert_array_equal(data.source_sds[:, 1], [1.46, 2.27, 1.11, 0.83])
    np.testing.assert_array_equal(data.correction_means[:, 0], [1.63] * 4)
    np.testing.assert_array_equal(data.correction_means[:, 1], [3.54] * 4)
    np.testing.assert_array_equal(data.correction_sds[:, 0], [0.63] * 4)
    np.testing.assert_array_equal(data.correction_sds[:, 1], [0.74] * 4)
    np.testing.assert_array_equal(
        data.concentration_means[:, 0], [0.36, 0.40, 0.21, 0.18]
    )
    np.testing.assert_array_equal(
        data.concentration_means[:, 1], [0.03, 0.04, 0.02, 0.01]
    )


def test_load_round_trips_exactly(tmp_path):
    data = grouped_demo()
    files = write_csv_files(data, tmp_path / "rt")
    again = tm.load(*files)
    np.testing.assert_array_equal(again.mixtures, data.mixtures)
    np.testing.assert_array_equal(again.source_means, data.source_means)
    assert again.groups == data.groups


def test_single_source_file_rejected(tmp_path, simple_files):
    mixtures, _ = simple_files
    sources = write(
        tmp_path / "one.csv", "source,iso1_mean,iso1_sd\nonly,0.0,1.0\n"
    )
    with pytest.raises(ValidationError, match="2 sources"):
        tm.load(mixtures, sources)


def test_solo_group_flagged(tmp_path):
    mixtures = write(
        tmp_path / "m.csv", "iso1,group\n4.0,a\n5.0,a\n6.0,b\n"
    )
    sources = write(
        tmp_path / "s.csv",
        "source,iso1_mean,iso1_sd\nA,-10,1\nB,0,1\nC,10,1\n",
    )
    with pytest.warns(SoloGroupWarning, match="b"):
        data = tm.load(mixtures, sources)
    assert data.group_names == ("a", "b")


MALFORMED_SOURCES = {
    "missing_source_column": "name,iso1_mean,iso1_sd\nA,0,1\nB,1,1\n",
    "missing_sd_column": "source,iso1_mean\nA,0\nB,1\n",
    "unknown_tracer_column": "source,iso1_mean,iso1_sd,iso9_mean,iso9_sd\nA,0,1,0,1\nB,1,1,0,1\n",
    "bad_number": "source,iso1_mean,iso1_sd\nA,zero,1\nB,1,1\n",
    "locale_comma_number": 'source,iso1_mean,iso1_sd\nA,"3,5",1\nB,1,1\n',
    "negative_sd": "source,iso1_mean,iso1_sd\nA,0,-1\nB,1,1\n",
    "duplicate_source": "source,iso1_mean,iso1_sd\nA,0,1\nA,1,1\n",
    "ragged_row": "source,iso1_mean,iso1_sd\nA,0\nB,1,1\n",
    "duplicate_header": "source,iso1_mean,iso1_mean\nA,0,1\nB,1,1\n",
    "empty_body": "source,iso1_mean,iso1_sd\n",
}


@pytest.mark.parametrize("label", sorted(MALFORMED_SOURCES))
def test_malformed_source_files_raise_named_errors(tmp_path, simple_files, label):
    mixtures, _ = simple_files
    sources = write(tmp_path / f"{label}.csv", MALFORMED_SOURCES[label])
    with pytest.raises(ValidationError):
        tm.load(mixtures, sources)


def test_error_messages_carry_context(tmp_path, simple_files):
    mixtures, _ = simple_files
    sources = write(
        tmp_path / "ctx.csv", "source,iso1_mean,iso1_sd\nA,zero,1\nB,1,1\n"
    )
    with pytest.raises(ValidationError, match="row 2.*iso1_mean"):
        tm.load(mixtures, sources)


def test_negative_sd_is_specific(tmp_path, simple_files):
    mixtures, _ = simple_files
    sources = write(
        tmp_path / "neg.csv", "source,iso1_mean,iso1_sd\nA,0,-1\nB,1,1\nC,2,1\n"
    )
    with pytest.raises(NegativeSpreadError):
        tm.load(mixtures, sources)


def test_corrections_must_cover_all_sources(tmp_path, simple_files):
    mixtures, sources = simple_files
    corrections = write(
        tmp_path / "c.csv", "source,iso1_mean,iso1_sd\nA,1,0\nB,1,0\n"
    )
    with pytest.raises(UnknownSourceError, match="C"):
        tm.load(mixtures, sources, corrections)


def test_corrections_for_unknown_source_rejected(tmp_path, simple_files):
    mixtures, sources = simple_files
    corrections = write(
        tmp_path / "c.csv",
        "source,iso1_mean,iso1_sd\nA,1,0\nB,1,0\nC,1,0\nD,1,0\n",
    )
    with pytest.raises(UnknownSourceError, match="D"):
        tm.load(mixtures, sources, corrections)


def test_concentrations_unknown_tracer(tmp_path, simple_files):
    mixtures, sources = simple_files
    conc = write(tmp_path / "q.csv", "source,iso9\nA,0.5\nB,0.5\nC,0.5\n")
    with pytest.raises(UnknownTracerError):
        tm.load(mixtures, sources, concentrations_file=conc)


def test_mixtures_without_tracers_rejected(tmp_path, simple_files):
    _, sources = simple_files
    mixtures = write(tmp_path / "m.csv", "group\na\nb\n")
    with pytest.raises(ValidationError, match="no tracer columns"):
        tm.load(mixtures, sources)


def test_missing_file_is_validation_error(simple_files):
    _, sources = simple_files
    with pytest.raises(ValidationError, match="not found"):
        tm.load("nowhere.csv", sources)


# --------------------------------------------------------------- artifacts

def test_save_load_round_trip(tmp_path, simple_data, quick_control):
    result = tm.run_mcmc(simple_data, control=quick_control)
    path = tmp_path / "run.json"
    tm.save_run(result, str(path))
    again = tm.load_run(str(path))

    np.testing.assert_array_equal(again.group_draws().p_model,
                                  result.group_draws().p_model)
    np.testing.assert_array_equal(again.group_draws().sigma,
                                  result.group_draws().sigma)
    np.testing.assert_array_equal(again.group_draws().deviance,
                                  result.group_draws().deviance)
    np.testing.assert_array_equal(again.group_draws().chain,
                                  result.group_draws().chain)
    assert again.backend == "mcmc"
    assert again.seed == quick_control.seed

    before = tm.summarize(result, "statistics")
    after = tm.summarize(again, "statistics")
    np.testing.assert_array_equal(before.values, after.values)


def test_large_runs_move_draws_to_sibling_csv(tmp_path, simple_data,
                                              quick_control, monkeypatch):
    result = tm.run_mcmc(simple_data, control=quick_control)
    monkeypatch.setattr(tio, "EMBED_LIMIT", 10)
    path = tmp_path / "big.json"
    tm.save_run(result, str(path))
    doc = json.loads(path.read_text())
    assert doc["draws_format"] == "csv"
    assert (tmp_path / "big_draws.csv").exists()
    again = tm.load_run(str(path))
    np.testing.assert_array_equal(again.group_draws().p_model,
                                  result.group_draws().p_model)
    np.testing.assert_array_equal(again.group_draws().deviance,
                                  result.group_draws().deviance)
    np.testing.assert_array_equal(again.group_draws().chain,
                                  result.group_draws().chain)


def test_embed_threshold_counts_all_values(simple_data, quick_control):
    result = tm.run_mcmc(simple_data, control=quick_control)
    gd = result.group_draws()
    expected = gd.p_model.size + gd.sigma.size + gd.deviance.size + gd.chain.size
    assert tio._draw_count(result) == expected


def test_version_mismatch_rejected(tmp_path, simple_data, quick_control):
    result = tm.run_mcmc(simple_data, control=quick_control)
    path = tmp_path / "run.json"
    tm.save_run(result, str(path))
    doc = json.loads(path.read_text())
    doc["schema_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(VersionMismatchError, match="v99"):
        tm.load_run(str(path))


def test_truncated_artifact_reports_byte_offset(tmp_path, simple_data,
                                                quick_control):
    result = tm.run_mcmc(simple_data, control=quick_control)
    path = tmp_path / "run.json"
    tm.save_run(result, str(path))
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ArtifactParseError, match="byte offset") as err:
        tm.load_run(str(path))
    assert err.value.byte_offset is not None


def test_ffvb_artifact_keeps_backend_and_refuses_diagnostics(tmp_path, simple_data):
    control = tm.FfvbControl(max_iterations=50, seed=1, n_output_draws=200)
    result = tm.run_ffvb(simple_data, control=control)
    path = tmp_path / "vb.json"
    tm.save_run(result, str(path))
    again = tm.load_run(str(path))
    assert again.backend == "ffvb"
    with pytest.raises(UnsupportedForBackendError):
        tm.summarize(again, "diagnostics")


def test_combined_artifact_round_trip(tmp_path, simple_data, quick_control):
    result = tm.run_mcmc(simple_data, control=quick_control)
    combined = tm.combine_sources(result, ["A", "B"], "AB")
    path = tmp_path / "combined.json"
    tm.save_run(combined, str(path))
    again = tm.load_run(str(path))
    assert again.source_names == ["C", "AB"]
    np.testing.assert_array_equal(again.p_draws(), combined.p_draws())


def test_missing_artifact_is_validation_error():
    with pytest.raises(ValidationError, match="not found"):
        tm.load_run("no-such-run.json")


def test_priors_json_round_trip(tmp_path):
    priors = tm.Priors(np.array([0.5, -0.5]), np.diag([1.2, 0.7]),
                       tau_shape=0.5, tau_rate=0.25)
    path = tmp_path / "priors.json"
    tio.save_priors(priors, str(path))
    again = tio.load_priors(str(path), n_sources=2)
    np.testing.assert_array_equal(again.clr_mean, priors.clr_mean)
    np.testing.assert_array_equal(again.clr_cov, priors.clr_cov)
    assert again.tau_shape == priors.tau_shape
    with pytest.raises(DimensionMismatchError):
        tio.load_priors(str(path), n_sources=5)


def test_mixture_bad_number_has_context(tmp_path, simple_files):
    _, sources = simple_files
    mixtures = write(tmp_path / "m.csv", "iso1\n4.0\nfour\n")
    with pytest.raises(ValidationError, match="row 3"):
        tm.load(mixtures, sources)


def test_empty_group_cell_rejected(tmp_path, simple_files):
    _, sources = simple_files
    mixtures = write(tmp_path / "m.csv", "iso1,group\n4.0,a\n5.0,\n")
    with pytest.raises(ValidationError):
        tm.load(mixtures, sources)
