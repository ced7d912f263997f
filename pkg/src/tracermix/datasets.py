"""Bundled demonstration datasets.

`simple_demo` is a tiny single-tracer problem with three well-separated
sources, small enough to print and reason about by hand.  `grouped_demo`
is a synthetic two-tracer herbivore-diet study: four forage sources with
tissue corrections and elemental concentrations, and mixtures simulated
from the model for eight seasonal groups.
"""

from __future__ import annotations

import numpy as np

from .model import MixingData, clr_inverse, mixture_moments

SIMPLE_MIXTURES = (4.0, 4.5, 5.0, 7.0, 6.0, 2.0, 3.0, 3.5, 5.5, 6.5)
SIMPLE_TRACER = "iso1"
SIMPLE_SOURCES = ("A", "B", "C")
SIMPLE_SOURCE_MEANS = (-10.0, 0.0, 10.0)
SIMPLE_SOURCE_SDS = (1.0, 1.0, 1.0)

GROUPED_TRACERS = ("d13C", "d15N")
GROUPED_SOURCES = ("Zostera", "Grass", "U.lactuca", "Enteromorpha")
GROUPED_SOURCE_MEANS = (
    (-11.17, 6.49),
    (-30.88, 4.20),
    (-11.17, 11.00),
    (-14.06, 9.50),
)
GROUPED_SOURCE_SDS = (
    (1.21, 1.46),
    (0.64, 2.27),
    (1.96, 1.11),
    (1.17, 0.83),
)
GROUPED_CORRECTION_MEANS = (
    (1.63, 3.54),
    (1.63, 3.54),
    (1.63, 3.54),
    (1.63, 3.54),
)
GROUPED_CORRECTION_SDS = (
    (0.63, 0.74),
    (0.63, 0.74),
    (0.63, 0.74),
    (0.63, 0.74),
)
GROUPED_CONCENTRATIONS = (
    (0.36, 0.03),
    (0.40, 0.04),
    (0.21, 0.02),
    (0.18, 0.01),
)
GROUPED_N_GROUPS = 8


def simple_demo() -> MixingData:
    """Ten mixtures on one tracer, three sources at -10 / 0 / 10 with unit sds."""
    return MixingData(
        mixtures=np.array(SIMPLE_MIXTURES)[:, None],
        tracer_names=[SIMPLE_TRACER],
        source_names=list(SIMPLE_SOURCES),
        source_means=np.array(SIMPLE_SOURCE_MEANS)[:, None],
        source_sds=np.array(SIMPLE_SOURCE_SDS)[:, None],
    )


def grouped_demo(n_per_group: int = 10, seed: int = 7) -> MixingData:
    """Synthetic grouped two-tracer dataset with corrections and concentrations.

    Mixtures are simulated from the observation model itself: each group gets
    its own diet composition, drifting from seagrass-heavy to green-algae
    heavy across the eight groups, with residual scales of 0.5 per tracer.
    """
    rng = np.random.default_rng(seed)
    holder = MixingData(
        mixtures=np.zeros((1, 2)),
        tracer_names=list(GROUPED_TRACERS),
        source_names=list(GROUPED_SOURCES),
        source_means=np.array(GROUPED_SOURCE_MEANS),
        source_sds=np.array(GROUPED_SOURCE_SDS),
        correction_means=np.array(GROUPED_CORRECTION_MEANS),
        correction_sds=np.array(GROUPED_CORRECTION_SDS),
        concentration_means=np.array(GROUPED_CONCENTRATIONS),
        groups=["Period 1"],
    )

    rows = []
    labels = []
    sigma = np.array([0.5, 0.5])
    for g in range(GROUPED_N_GROUPS):
        t = g / (GROUPED_N_GROUPS - 1)
        f = 0.8 * np.array([1.5 - 2.5 * t, -0.5, 0.2, -0.8 + 2.0 * t])
        p = clr_inverse(f)
        mean, pre_var = mixture_moments(p, holder)
        # scatter kept below the model's predictive spread so the demo sits
        # comfortably inside the mixing polygon
        scale = 0.35 * np.sqrt(pre_var + sigma ** 2)
        rows.append(mean + scale * rng.standard_normal((n_per_group, 2)))
        labels.extend([f"Period {g + 1}"] * n_per_group)

    return MixingData(
        mixtures=np.vstack(rows),
        tracer_names=list(GROUPED_TRACERS),
        source_names=list(GROUPED_SOURCES),
        source_means=np.array(GROUPED_SOURCE_MEANS),
        source_sds=np.array(GROUPED_SOURCE_SDS),
        correction_means=np.array(GROUPED_CORRECTION_MEANS),
        correction_sds=np.array(GROUPED_CORRECTION_SDS),
        concentration_means=np.array(GROUPED_CONCENTRATIONS),
        groups=labels,
    )


def write_csv_files(data: MixingData, directory, group_column: str = "group"):
    """Write a dataset out in the CSV schema understood by :func:`tracermix.io.load`.

    Returns the four file paths (mixtures, sources, corrections,
    concentrations).
    """
    import csv
    import os

    os.makedirs(directory, exist_ok=True)
    paths = {name: os.path.join(directory, f"{name}.csv")
             for name in ("mixtures", "sources", "corrections", "concentrations")}

    with open(paths["mixtures"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.tracer_names) + [group_column])
        for row, g in zip(data.mixtures, data.groups):
            writer.writerow([repr(float(v)) for v in row] + [g])

    def stats_file(path, means, sds):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["source"]
                + [f"{t}_mean" for t in data.tracer_names]
                + [f"{t}_sd" for t in data.tracer_names]
            )
            for k, s in enumerate(data.source_names):
                writer.writerow(
                    [s]
                    + [repr(float(v)) for v in means[k]]
                    + [repr(float(v)) for v in sds[k]]
                )

    stats_file(paths["sources"], data.source_means, data.source_sds)
    stats_file(paths["corrections"], data.correction_means, data.correction_sds)

    with open(paths["concentrations"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source"] + list(data.tracer_names))
        for k, s in enumerate(data.source_names):
            writer.writerow([s] + [repr(float(v)) for v in data.concentration_means[k]])

    return (paths["mixtures"], paths["sources"], paths["corrections"],
            paths["concentrations"])
