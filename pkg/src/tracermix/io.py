"""Data ingestion and run persistence.

File schema
-----------
mixtures.csv        one column per tracer, plus an optional group column
sources.csv         `source` column plus `<tracer>_mean` and `<tracer>_sd`
corrections.csv     same schema as sources.csv
concentrations.csv  `source` column plus one `<tracer>` column per tracer

Values use a decimal point regardless of locale.  Run artifacts are single
JSON documents; draw matrices above a size threshold move to a sibling CSV
so the JSON stays readable.  Either way a reload reproduces every draw
bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import warnings

import numpy as np

from .errors import (
    ArtifactError,
    ArtifactParseError,
    DimensionMismatchError,
    SoloGroupWarning,
    UnknownSourceError,
    UnknownTracerError,
    ValidationError,
    VersionMismatchError,
)
from .model import MixingData, Priors
from .posterior import FitResult, GroupDraws

SCHEMA_VERSION = 1
EMBED_LIMIT = 1_000_000          # draw values above this move to a sibling CSV
OUTPUT_DIR_ENV = "TRACERMIX_OUTDIR"


def output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, ".")


def _read_csv(path):
    if not os.path.exists(path):
        raise ValidationError(f"file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise ValidationError(f"{path}: needs a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ValidationError(f"{path}: duplicate column names in header")
    body = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DimensionMismatchError(
                f"{path}: row {i} has {len(row)} cells, header has {len(header)}"
            )
        body.append([cell.strip() for cell in row])
    return header, body


def _parse_float(cell, path, row, col):
    try:
        return float(cell)
    except ValueError:
        raise ValidationError(
            f"{path}: row {row}, column {col!r}: {cell!r} is not a number"
        ) from None


def _source_table(path, tracer_names, kind):
    """Read a per-source table keyed by the `source` column."""
    header, body = _read_csv(path)
    if "source" not in header:
        raise ValidationError(f"{path}: missing required 'source' column")
    idx = {h: i for i, h in enumerate(header)}
    if kind == "stats":
        wanted = [f"{t}_mean" for t in tracer_names] + [f"{t}_sd" for t in tracer_names]
    else:
        wanted = list(tracer_names)
    missing = [c for c in wanted if c not in idx]
    if missing:
        raise UnknownTracerError(
            f"{path}: missing columns {missing} for tracers {list(tracer_names)}"
        )
    extra = [
        h for h in header
        if h != "source" and h not in wanted
    ]
    if extra:
        raise UnknownTracerError(
            f"{path}: columns {extra} do not match any mixture tracer"
        )
    table = {}
    for i, row in enumerate(body, start=2):
        name = row[idx["source"]]
        if name in table:
            raise ValidationError(f"{path}: duplicate source {name!r} at row {i}")
        table[name] = {
            c: _parse_float(row[idx[c]], path, i, c) for c in wanted
        }
    return table


def load(mixtures_file, sources_file, corrections_file=None,
         concentrations_file=None, group_column: str = "group") -> MixingData:
    """Read and validate a dataset from CSV files.

    Tracer columns are matched by header name across all files; missing
    correction/concentration files fall back to zero corrections and unit
    concentrations.  Groups of size one are flagged (they trigger the
    near-zero residual prior at fit time).
    """
    header, body = _read_csv(mixtures_file)
    tracer_names = [h for h in header if h != group_column]
    if not tracer_names:
        raise ValidationError(f"{mixtures_file}: no tracer columns found")
    col_index = {h: i for i, h in enumerate(header)}

    mixtures = np.array([
        [_parse_float(row[col_index[t]], mixtures_file, i, t) for t in tracer_names]
        for i, row in enumerate(body, start=2)
    ])
    groups = None
    if group_column in header:
        groups = [row[col_index[group_column]] for row in body]

    source_stats = _source_table(sources_file, tracer_names, "stats")
    source_names = list(source_stats)
    source_means = np.array(
        [[source_stats[s][f"{t}_mean"] for t in tracer_names] for s in source_names]
    )
    source_sds = np.array(
        [[source_stats[s][f"{t}_sd"] for t in tracer_names] for s in source_names]
    )

    def aligned(path, kind):
        table = _source_table(path, tracer_names, kind)
        missing = [s for s in source_names if s not in table]
        if missing:
            raise UnknownSourceError(
                f"{path}: missing rows for sources {missing}"
            )
        extra = [s for s in table if s not in source_names]
        if extra:
            raise UnknownSourceError(
                f"{path}: rows for unknown sources {extra}"
            )
        return table

    correction_means = correction_sds = None
    if corrections_file is not None:
        table = aligned(corrections_file, "stats")
        correction_means = np.array(
            [[table[s][f"{t}_mean"] for t in tracer_names] for s in source_names]
        )
        correction_sds = np.array(
            [[table[s][f"{t}_sd"] for t in tracer_names] for s in source_names]
        )

    concentration_means = None
    if concentrations_file is not None:
        table = aligned(concentrations_file, "plain")
        concentration_means = np.array(
            [[table[s][t] for t in tracer_names] for s in source_names]
        )

    data = MixingData(
        mixtures=mixtures,
        tracer_names=tracer_names,
        source_names=source_names,
        source_means=source_means,
        source_sds=source_sds,
        correction_means=correction_means,
        correction_sds=correction_sds,
        concentration_means=concentration_means,
        groups=groups,
    )
    solo = [g for g in data.group_names if int(data.group_rows(g).sum()) == 1]
    if solo:
        warnings.warn(
            f"groups {solo} hold a single observation each; fits will use "
            "near-zero residual-scale priors for them",
            SoloGroupWarning,
            stacklevel=2,
        )
    return data


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _data_to_dict(data: MixingData):
    return {
        "mixtures": data.mixtures.tolist(),
        "tracer_names": list(data.tracer_names),
        "source_names": list(data.source_names),
        "source_means": data.source_means.tolist(),
        "source_sds": data.source_sds.tolist(),
        "correction_means": data.correction_means.tolist(),
        "correction_sds": data.correction_sds.tolist(),
        "concentration_means": data.concentration_means.tolist(),
        "groups": list(data.groups),
    }


def _data_from_dict(d) -> MixingData:
    return MixingData(
        mixtures=np.array(d["mixtures"]),
        tracer_names=d["tracer_names"],
        source_names=d["source_names"],
        source_means=np.array(d["source_means"]),
        source_sds=np.array(d["source_sds"]),
        correction_means=np.array(d["correction_means"]),
        correction_sds=np.array(d["correction_sds"]),
        concentration_means=np.array(d["concentration_means"]),
        groups=d["groups"],
    )


def _priors_to_dict(p: Priors):
    return {
        "clr_mean": p.clr_mean.tolist(),
        "clr_cov": p.clr_cov.tolist(),
        "tau_shape": p.tau_shape,
        "tau_rate": p.tau_rate,
    }


def _priors_from_dict(d) -> Priors:
    return Priors(
        np.array(d["clr_mean"]), np.array(d["clr_cov"]),
        d["tau_shape"], d["tau_rate"],
    )


def _draw_count(result: FitResult) -> int:
    total = 0
    for gd in result.draws.values():
        total += gd.p_model.size + gd.sigma.size + gd.deviance.size + gd.chain.size
    return total


def save_run(result: FitResult, path) -> None:
    """Persist a fit as a versioned JSON artifact (atomic write).

    Large draw blocks are stored in `<path stem>_draws.csv` next to the
    artifact and referenced from it.
    """
    doc = {
        "schema_version": SCHEMA_VERSION,
        "backend": result.backend,
        "seed": result.seed,
        "control": result.control,
        "source_names": list(result.source_names),
        "combine_map": [list(map(int, idx)) for idx in result.combine_map],
        "input": _data_to_dict(result.data),
        "priors_by_group": {
            g: _priors_to_dict(p) for g, p in result.priors_by_group.items()
        },
    }
    if _draw_count(result) <= EMBED_LIMIT:
        doc["draws_format"] = "embedded"
        doc["draws"] = {
            g: {
                "p_model": gd.p_model.tolist(),
                "sigma": gd.sigma.tolist(),
                "deviance": gd.deviance.tolist(),
                "chain": gd.chain.tolist(),
            }
            for g, gd in result.draws.items()
        }
    else:
        stem, _ = os.path.splitext(path)
        draws_path = f"{stem}_draws.csv"
        K = result.data.n_sources
        J = result.data.n_tracers
        header = (
            ["group", "chain"]
            + [f"p_{k}" for k in range(K)]
            + [f"sigma_{j}" for j in range(J)]
            + ["deviance"]
        )
        with open(draws_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for g, gd in result.draws.items():
                for i in range(gd.n_draws):
                    writer.writerow(
                        [g, int(gd.chain[i])]
                        + [repr(float(v)) for v in gd.p_model[i]]
                        + [repr(float(v)) for v in gd.sigma[i]]
                        + [repr(float(gd.deviance[i]))]
                    )
        doc["draws_format"] = "csv"
        doc["draws_file"] = os.path.basename(draws_path)

    _atomic_write(path, json.dumps(doc))


def load_run(path) -> FitResult:
    """Reload a saved run; draw values come back bit-identical."""
    if not os.path.exists(path):
        raise ValidationError(f"run artifact not found: {path}")
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ArtifactParseError(
            f"{path}: not parseable as a run artifact at byte offset {e.pos}",
            byte_offset=e.pos,
        ) from None
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ArtifactError(f"{path}: missing schema_version; not a run artifact")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise VersionMismatchError(
            f"{path}: artifact schema v{doc['schema_version']} is not supported "
            f"by this build (expects v{SCHEMA_VERSION}); no migration available"
        )

    data = _data_from_dict(doc["input"])
    draws = {}
    if doc["draws_format"] == "embedded":
        for g, block in doc["draws"].items():
            draws[g] = GroupDraws(
                p_model=np.array(block["p_model"], dtype=float),
                sigma=np.array(block["sigma"], dtype=float),
                deviance=np.array(block["deviance"], dtype=float),
                chain=np.array(block["chain"], dtype=int),
            )
    elif doc["draws_format"] == "csv":
        draws_path = os.path.join(os.path.dirname(os.path.abspath(path)),
                                  doc["draws_file"])
        if not os.path.exists(draws_path):
            raise ArtifactError(f"referenced draws file missing: {draws_path}")
        K = data.n_sources
        J = data.n_tracers
        by_group = {}
        with open(draws_path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                by_group.setdefault(row[0], []).append(row[1:])
        for g, rows in by_group.items():
            arr = np.array(rows, dtype=float)
            draws[g] = GroupDraws(
                p_model=arr[:, 1:1 + K],
                sigma=arr[:, 1 + K:1 + K + J],
                deviance=arr[:, 1 + K + J],
                chain=arr[:, 0].astype(int),
            )
    else:
        raise ArtifactError(f"unknown draws_format {doc['draws_format']!r}")

    return FitResult(
        data=data,
        priors_by_group={
            g: _priors_from_dict(p) for g, p in doc["priors_by_group"].items()
        },
        backend=doc["backend"],
        draws=draws,
        source_names=doc["source_names"],
        combine_map=doc["combine_map"],
        control=doc.get("control", {}),
        seed=doc.get("seed"),
    )


def load_priors(path, n_sources=None) -> Priors:
    """Read prior hyperparameters from a JSON file (as emitted by `elicit`)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ArtifactParseError(
                f"{path}: not parseable JSON at byte offset {e.pos}", byte_offset=e.pos
            ) from None
    try:
        priors = _priors_from_dict(doc)
    except KeyError as e:
        raise ValidationError(f"{path}: missing prior field {e}") from None
    if n_sources is not None and priors.n_sources != n_sources:
        raise DimensionMismatchError(
            f"{path}: priors are for {priors.n_sources} sources, data has {n_sources}"
        )
    return priors


def save_priors(priors: Priors, path) -> None:
    _atomic_write(path, json.dumps(_priors_to_dict(priors)))
