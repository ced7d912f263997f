"""Static SVG figures with their underlying numbers emitted as CSV.

Every renderer writes two files: the figure at the requested path and a
sibling `<stem>_data.csv` holding the plotted values, so the figures can be
rebuilt with any other tool.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import QUANTILE_LEVELS, prior_viz_data
from .geometry import isospace_plot_data
from .kde import kde_1d, kde_2d
from .model import MixingData
from .posterior import FitResult

PLOT_KINDS = ("isospace", "boxplot", "matrix", "density", "prior")


def _data_path(path):
    stem, _ = os.path.splitext(path)
    return f"{stem}_data.csv"


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def plot_isospace(data: MixingData, path, groups=None, x_tracer=0, y_tracer=1,
                  x_label=None, y_label=None):
    iso = isospace_plot_data(data, groups, x_tracer, y_tracer, x_label, y_label)
    fig, ax = plt.subplots(figsize=(7, 5))
    labels = np.array(iso.mixture_groups)
    for g in dict.fromkeys(iso.mixture_groups):
        pts = iso.mixture_xy[labels == g]
        ax.scatter(pts[:, 0], pts[:, 1], s=22, alpha=0.8, label=str(g))
    for k, name in enumerate(iso.source_names):
        x, y = iso.source_xy[k]
        sx, sy = iso.source_spread[k]
        ax.errorbar(x, y, xerr=sx, yerr=sy if not iso.synthetic_y else None,
                    fmt="s", color="black", capsize=3)
        ax.annotate(name, (x, y), textcoords="offset points", xytext=(6, 6))
    ax.set_xlabel(iso.x_label)
    ax.set_ylabel(iso.y_label)
    if len(dict.fromkeys(iso.mixture_groups)) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

    rows = [
        ["mixture", g, repr(float(x)), repr(float(y)), "", ""]
        for g, (x, y) in zip(iso.mixture_groups, iso.mixture_xy)
    ] + [
        ["source", name, repr(float(x)), repr(float(y)), repr(float(sx)), repr(float(sy))]
        for name, (x, y), (sx, sy) in zip(
            iso.source_names, iso.source_xy, iso.source_spread
        )
    ]
    _write_rows(_data_path(path), ["record", "label", "x", "y", "x_spread", "y_spread"], rows)
    return path


def plot_boxplot(result: FitResult, path, group=None):
    g = result._group(group)
    p = result.p_draws(g)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.boxplot([p[:, k] for k in range(p.shape[1])],
               tick_labels=list(result.source_names), whis=(2.5, 97.5),
               showfliers=False)
    ax.set_ylabel("proportion")
    ax.set_ylim(0, 1)
    ax.set_title(f"group {g}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

    rows = []
    for k, name in enumerate(result.source_names):
        qs = np.percentile(p[:, k], QUANTILE_LEVELS)
        rows.append([name] + [repr(float(v)) for v in qs])
    _write_rows(_data_path(path), ["source"] + [f"q{q:g}" for q in QUANTILE_LEVELS], rows)
    return path


def plot_matrix(result: FitResult, path, group=None, n_grid: int = 60):
    """Histograms on the diagonal, density contours above, correlations below."""
    g = result._group(group)
    p = result.p_draws(g)
    names = list(result.source_names)
    K = len(names)
    corr = np.corrcoef(p, rowvar=False)

    fig, axes = plt.subplots(K, K, figsize=(2.2 * K, 2.2 * K))
    data_rows = []
    for i in range(K):
        for j in range(K):
            ax = axes[i, j] if K > 1 else axes
            if i == j:
                counts, edges, _ = ax.hist(p[:, i], bins=30, color="#777799")
                for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                    data_rows.append(
                        ["hist", names[i], "", repr(float(lo)), repr(float(hi)), repr(float(c))]
                    )
            elif j > i:
                gx = np.linspace(p[:, j].min(), p[:, j].max(), n_grid)
                gy = np.linspace(p[:, i].min(), p[:, i].max(), n_grid)
                dens = kde_2d(p[:, j], p[:, i], gx, gy)
                ax.contour(gx, gy, dens, levels=6, linewidths=0.8)
                step = max(1, n_grid // 15)
                for yi in range(0, n_grid, step):
                    for xi in range(0, n_grid, step):
                        data_rows.append([
                            "contour_grid", names[j], names[i],
                            repr(float(gx[xi])), repr(float(gy[yi])),
                            repr(float(dens[yi, xi])),
                        ])
            else:
                ax.text(0.5, 0.5, f"{corr[i, j]:.2f}", ha="center", va="center",
                        fontsize=13)
                ax.set_xticks([])
                ax.set_yticks([])
                data_rows.append(
                    ["correlation", names[i], names[j], "", "", repr(float(corr[i, j]))]
                )
            if i == K - 1:
                ax.set_xlabel(names[j], fontsize=8)
            if j == 0:
                ax.set_ylabel(names[i], fontsize=8)
    fig.suptitle(f"group {g}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

    _write_rows(_data_path(path),
                ["record", "name1", "name2", "x_or_lo", "y_or_hi", "value"],
                data_rows)
    return path


def plot_density(result: FitResult, path, group=None, n_grid: int = 200):
    g = result._group(group)
    p = result.p_draws(g)
    grid = np.linspace(0.0, 1.0, n_grid)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    rows = []
    for k, name in enumerate(result.source_names):
        dens = kde_1d(p[:, k], grid)
        ax.fill_between(grid, dens, alpha=0.4, label=name)
        rows.extend(
            ["posterior", name, repr(float(x)), repr(float(d))]
            for x, d in zip(grid, dens)
        )
    ax.set_xlabel("proportion")
    ax.set_ylabel("density")
    ax.set_title(f"group {g}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

    _write_rows(_data_path(path), ["record", "source", "x", "density"], rows)
    return path


def plot_prior(result: FitResult, path, group=None, n_grid: int = 200):
    g = result._group(group)
    pair = prior_viz_data(result, g)
    grid = np.linspace(0.0, 1.0, n_grid)
    K = len(pair.source_names)
    ncols = min(K, 2)
    nrows = (K + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.5 * ncols, 3 * nrows),
                             squeeze=False)
    rows = []
    for k, name in enumerate(pair.source_names):
        ax = axes[k // ncols][k % ncols]
        for label, block in (("prior", pair.prior), ("posterior", pair.posterior)):
            dens = kde_1d(block[:, k], grid)
            ax.plot(grid, dens, label=label)
            rows.extend(
                [label, name, repr(float(x)), repr(float(d))]
                for x, d in zip(grid, dens)
            )
        ax.set_title(name, fontsize=9)
        ax.legend(fontsize=7)
    for k in range(K, nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    fig.suptitle(f"group {g}: prior vs posterior")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

    _write_rows(_data_path(path), ["record", "source", "x", "density"], rows)
    return path
