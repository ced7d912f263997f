"""Pre-fit geometry checks: corrected source positions and the mixing region.

A mixture can only be explained by the model if it sits inside the region
spanned by the corrected sources: an interval for one tracer, the convex
hull (mixing polygon) for two.  For three or more tracers only pairwise
projections are tested, which is necessary but not sufficient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePolygonWarning, EmptyGroupError, ValidationError
from .model import MixingData

HULL_TOL = 1e-9


def corrected_sources(data: MixingData):
    """Corrected source positions and spreads, both (K, J).

    position = source mean + correction mean;
    spread   = sqrt(source sd^2 + correction sd^2).
    """
    positions = data.source_means + data.correction_means
    spreads = np.sqrt(data.source_sds ** 2 + data.correction_sds ** 2)
    return positions, spreads


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Convex hull of 2-D points by the monotone chain, counter-clockwise.

    Collinear boundary points are dropped; degenerate inputs (all points on
    one line) come back as the extreme segment.
    """
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts)
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0:
        return float(np.hypot(*(p - a)))
    t = np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
    return float(np.hypot(*(p - (a + t * ab))))


def point_in_hull(point, hull, tol: float = HULL_TOL) -> bool:
    """Boundary-inclusive containment test against a CCW hull."""
    point = np.asarray(point, dtype=float)
    hull = np.asarray(hull, dtype=float)
    if len(hull) == 1:
        return bool(np.hypot(*(point - hull[0])) <= tol)
    if len(hull) == 2:
        return _point_segment_distance(point, hull[0], hull[1]) <= tol
    scale = max(1.0, float(np.abs(hull).max()))
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        if _cross(a, b, point) < -tol * scale:
            return False
    return True


@dataclass
class RegionReport:
    """Per-mixture verdicts of the mixing-region containment test."""

    inside: np.ndarray                 # (n,) bool
    method: str                       # "interval" | "polygon" | "segment" | "projections"
    groups: list
    tracer_names: list
    pair_details: dict = field(default_factory=dict)   # (j1, j2) -> (n,) bool
    caveat: str = (
        "containment is necessary, not sufficient: mixtures inside the "
        "region do not prove that every contributing source was sampled"
    )

    @property
    def all_inside(self) -> bool:
        return bool(np.all(self.inside))

    def to_dict(self):
        return {
            "method": self.method,
            "all_inside": self.all_inside,
            "inside": [bool(v) for v in self.inside],
            "groups": list(self.groups),
            "pair_details": {
                f"{a}|{b}": [bool(v) for v in flags]
                for (a, b), flags in self.pair_details.items()
            },
            "caveat": self.caveat,
        }

    def __str__(self):
        n = len(self.inside)
        n_in = int(np.sum(self.inside))
        lines = [
            f"mixing-region check ({self.method}): {n_in}/{n} mixtures inside",
        ]
        for i, ok in enumerate(self.inside):
            if not ok:
                lines.append(f"  mixture row {i} (group {self.groups[i]}) is outside")
        lines.append(self.caveat)
        return "\n".join(lines)


def _pair_containment(data, positions, j1, j2):
    """Containment flags for one tracer pair; also reports hull degeneracy."""
    pts = positions[:, [j1, j2]]
    hull = convex_hull(pts)
    degenerate = len(hull) < 3
    tol = HULL_TOL
    if degenerate:
        warnings.warn(
            "corrected sources are collinear; polygon containment degrades "
            "to a distance-to-segment test",
            DegeneratePolygonWarning,
            stacklevel=3,
        )
        tol = HULL_TOL * max(1.0, float(np.abs(pts).max()))
    flags = np.array([
        point_in_hull(row, hull, tol=tol) for row in data.mixtures[:, [j1, j2]]
    ])
    return flags, degenerate


def in_mixing_region(data: MixingData) -> RegionReport:
    """Test every mixture against the region spanned by corrected sources.

    One tracer: min/max interval test.  Two tracers: convex-hull containment
    with boundary counted as inside.  More: all pairwise projections, with a
    warning that the combined verdict is only a necessary condition.
    """
    positions, _ = corrected_sources(data)
    J = data.n_tracers
    groups = list(data.groups)
    names = list(data.tracer_names)

    if J == 1:
        lo, hi = positions[:, 0].min(), positions[:, 0].max()
        inside = (data.mixtures[:, 0] >= lo - HULL_TOL) & (
            data.mixtures[:, 0] <= hi + HULL_TOL
        )
        return RegionReport(inside, "interval", groups, names)

    if J == 2:
        flags, degenerate = _pair_containment(data, positions, 0, 1)
        return RegionReport(flags, "segment" if degenerate else "polygon",
                            groups, names)

    warnings.warn(
        f"{J} tracers: testing pairwise projections only; projection "
        "containment is necessary, not sufficient",
        UserWarning,
        stacklevel=2,
    )
    details = {}
    combined = np.ones(data.n_mixtures, dtype=bool)
    for j1 in range(J):
        for j2 in range(j1 + 1, J):
            flags, _ = _pair_containment(data, positions, j1, j2)
            details[(names[j1], names[j2])] = flags
            combined &= flags
    return RegionReport(combined, "projections", groups, names, details)


@dataclass
class IsospaceData:
    """Scatter data for a tracer-space plot of mixtures and sources."""

    mixture_xy: np.ndarray          # (n, 2)
    mixture_groups: list
    source_names: list
    source_xy: np.ndarray           # (K, 2)
    source_spread: np.ndarray       # (K, 2)
    x_label: str
    y_label: str
    synthetic_y: bool               # True when J == 1 and y is a display ordinate


def isospace_plot_data(data: MixingData, groups=None, x_tracer: int = 0,
                       y_tracer: int = 1, x_label=None, y_label=None) -> IsospaceData:
    """Plot dataset: mixture points by group plus corrected sources with
    +/- 1 spread bars.

    With a single tracer the vertical coordinate is an evenly spaced display
    ordinate, used only to separate overlapping points.
    """
    if groups is not None:
        wanted = [str(g) for g in groups]
        unknown = [g for g in wanted if g not in data.group_names]
        if unknown:
            raise ValidationError(
                f"unknown groups {unknown}; available: {list(data.group_names)}"
            )
        mask = np.array([g in wanted for g in data.groups])
        if not mask.any():
            raise EmptyGroupError("group filter selects no mixtures")
    else:
        mask = np.ones(data.n_mixtures, dtype=bool)

    positions, spreads = corrected_sources(data)
    labels = [g for g, m in zip(data.groups, mask) if m]

    if data.n_tracers == 1:
        x = data.mixtures[mask, 0]
        y = np.linspace(0.0, 1.0, x.shape[0]) if x.shape[0] > 1 else np.array([0.5])
        mixture_xy = np.column_stack([x, y])
        source_xy = np.column_stack([positions[:, 0], np.full(data.n_sources, -0.15)])
        source_spread = np.column_stack([spreads[:, 0], np.zeros(data.n_sources)])
        return IsospaceData(
            mixture_xy, labels, list(data.source_names), source_xy, source_spread,
            x_label or data.tracer_names[0], y_label or "display index", True,
        )

    J = data.n_tracers
    if not (0 <= x_tracer < J and 0 <= y_tracer < J) or x_tracer == y_tracer:
        raise ValidationError("x_tracer and y_tracer must be distinct tracer indices")
    cols = [x_tracer, y_tracer]
    return IsospaceData(
        data.mixtures[mask][:, cols], labels, list(data.source_names),
        positions[:, cols], spreads[:, cols],
        x_label or data.tracer_names[x_tracer],
        y_label or data.tracer_names[y_tracer], False,
    )
