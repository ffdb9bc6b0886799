"""Rule-based subject isolation and normalization.

A scan always contains the floor, walls and stray reconstruction noise
around the person. Three fixed-order rules carve the subject out:

    1. opacity    - drop near-transparent splats
    2. vertical   - keep [ground + floor_epsilon, densest-band top + head_margin]
    3. horizontal - keep a cylinder around the opacity-weighted centroid
                    of what survived the first two rules

Each removed splat is attributed to the first rule that rejects it, so
reports are deterministic. Normalization then moves the subject to the
origin and rescales it (positions and splat radii) to a target height.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EstimationError, IsolationError, NormalizationError
from .splat_io import SplatCloud

HIST_BIN = 0.05          # 5 cm vertical histogram bins
BAND_MIN_FRACTION = 0.01  # a band bin must hold >= 1% of opaque splats


@dataclass
class FilterParams:
    """Tunable thresholds. cylinder_radius=None derives 0.6x the estimated
    subject height, so the rule adapts to scan scale before normalization."""

    cylinder_radius: float | None = None
    floor_epsilon: float = 0.02
    opacity_min: float = 0.05
    head_margin: float = 0.15

    def __post_init__(self):
        if self.cylinder_radius is not None and self.cylinder_radius <= 0:
            raise ValueError("cylinder_radius must be > 0")
        if self.floor_epsilon <= 0 or self.head_margin <= 0:
            raise ValueError("floor_epsilon and head_margin must be > 0")
        if not (0 <= self.opacity_min < 1):
            raise ValueError("opacity_min must be in [0, 1)")

    def to_dict(self):
        return {
            "cylinder_radius": self.cylinder_radius,
            "floor_epsilon": self.floor_epsilon,
            "opacity_min": self.opacity_min,
            "head_margin": self.head_margin,
        }

    def to_file(self, path):
        """Flat `key = value` config file; `auto` means derive from the scan."""
        lines = []
        for key, value in self.to_dict().items():
            rendered = "auto" if value is None else repr(value)
            lines.append(f"{key} = {rendered}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path) -> "FilterParams":
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = (part.strip() for part in line.partition("="))
            if key not in ("cylinder_radius", "floor_epsilon", "opacity_min", "head_margin"):
                raise ValueError(f"{path}:{lineno}: unknown filter parameter '{key}'")
            values[key] = None if value == "auto" else float(value)
        return cls(**values)


@dataclass
class FilterReport:
    input_count: int
    kept_count: int
    removed_by_rule: dict
    ground_height: float
    subject_axis: np.ndarray  # (2,) horizontal (x, z) cylinder center
    band_top: float = 0.0
    cylinder_radius: float = 0.0

    def to_dict(self):
        return {
            "input_count": self.input_count,
            "kept_count": self.kept_count,
            "removed_by_rule": dict(self.removed_by_rule),
            "ground_height": self.ground_height,
            "subject_axis": [float(v) for v in self.subject_axis],
            "band_top": self.band_top,
            "cylinder_radius": self.cylinder_radius,
        }


@dataclass
class NormalizationTransform:
    """p' = uniform_scale * (p + translation); splat radii scale too."""

    translation: np.ndarray
    uniform_scale: float

    def apply_points(self, points):
        return (np.asarray(points, dtype=np.float64) + self.translation) * self.uniform_scale

    def invert_points(self, points):
        return np.asarray(points, dtype=np.float64) / self.uniform_scale - self.translation

    def to_dict(self):
        return {
            "translation": [float(v) for v in self.translation],
            "uniform_scale": float(self.uniform_scale),
        }


def _nearest_rank(sorted_values, p):
    """Nearest-rank percentile with single-outlier shedding at both ends.

    rank = ceil(p*N) clamped to [2, N-1] (1-indexed), so one stray splat
    above or below the subject cannot move the estimate.
    """
    n = sorted_values.shape[0]
    rank = int(np.ceil(p * n))
    if p <= 0.5:
        rank = max(rank, 2)
    else:
        rank = min(rank, n - 1)
    rank = min(max(rank, 1), n)
    return float(sorted_values[rank - 1])


def estimate_ground_height(cloud: SplatCloud, opacity_min: float = 0.05) -> float:
    """1st percentile of y over sufficiently opaque splats (nearest rank)."""
    if cloud.count < 10:
        raise EstimationError(f"need at least 10 splats, got {cloud.count}")
    ys = cloud.positions[cloud.opacities.astype(np.float64) >= opacity_min, 1]
    if ys.shape[0] < 2:
        raise EstimationError(
            f"only {ys.shape[0]} splats with opacity >= {opacity_min}; cannot estimate ground"
        )
    return _nearest_rank(np.sort(ys.astype(np.float64)), 0.01)


FLOOR_SPIKE_FACTOR = 5.0  # bottom bin >= 5x the median populated bin => floor slab


def _densest_band(ys_opaque: np.ndarray):
    """(bottom, top) edges of the tallest contiguous run of populated 5 cm
    bins, plus whether the lowest populated bin looks like a floor slab.

    A bin counts as populated when it holds >= 1% of the opaque splats;
    the tallest run (first one on ties) is taken as the subject's span.
    A reconstructed floor concentrates a large share of the scene in the
    bottom bin, standing out as a density spike against body bins.
    """
    y0 = float(ys_opaque.min())
    bins = np.floor((ys_opaque - y0) / HIST_BIN).astype(np.int64)
    counts = np.bincount(bins)
    threshold = max(1, int(np.ceil(BAND_MIN_FRACTION * ys_opaque.shape[0])))
    populated = counts >= threshold

    best_len, best_start, best_end = 0, -1, -1
    run_start = None
    for i, ok in enumerate(np.append(populated, False)):
        if ok and run_start is None:
            run_start = i
        elif not ok and run_start is not None:
            length = i - run_start
            if length > best_len:
                best_len, best_start, best_end = length, run_start, i - 1
            run_start = None
    if best_end < 0:
        raise EstimationError("no populated vertical band found")

    pop_counts = counts[populated]
    bottom_bin = int(np.nonzero(populated)[0][0])
    floor_spike = counts[bottom_bin] >= FLOOR_SPIKE_FACTOR * float(np.median(pop_counts))
    return y0 + best_start * HIST_BIN, y0 + (best_end + 1) * HIST_BIN, floor_spike


def filter_subject(cloud: SplatCloud, params: FilterParams | None = None):
    """Apply the three rules in order; returns (kept cloud, FilterReport).

    Kept splats appear in original order, byte-for-byte unchanged.
    """
    params = params or FilterParams()
    if cloud.count < 10:
        raise EstimationError(f"need at least 10 splats, got {cloud.count}")

    pos = cloud.positions.astype(np.float64)
    opa = cloud.opacities.astype(np.float64)
    n = cloud.count

    pass_opacity = opa >= params.opacity_min
    if pass_opacity.sum() < 2:
        report = FilterReport(
            input_count=n, kept_count=0,
            removed_by_rule={"opacity": int(n), "vertical": 0, "horizontal": 0},
            ground_height=float("nan"), subject_axis=np.zeros(2),
        )
        raise IsolationError("no splats pass the opacity rule", report)

    ys_opaque = pos[pass_opacity, 1]
    ground = _nearest_rank(np.sort(ys_opaque), 0.01)
    band_bottom, band_top, floor_spike = _densest_band(ys_opaque)

    # With a floor slab present, shave everything within floor_epsilon of
    # the ground. Without one (e.g. refiltering an already-clean subject)
    # the cut must not eat into the subject band, or filtering would keep
    # trimming its own output.
    y_lo = ground + params.floor_epsilon
    if not floor_spike:
        y_lo = min(y_lo, band_bottom)
    y_hi = band_top + params.head_margin
    pass_vertical = (pos[:, 1] >= y_lo) & (pos[:, 1] <= y_hi)

    ab = pass_opacity & pass_vertical
    if not ab.any():
        report = FilterReport(
            input_count=n, kept_count=0,
            removed_by_rule={
                "opacity": int((~pass_opacity).sum()),
                "vertical": int((pass_opacity & ~pass_vertical).sum()),
                "horizontal": 0,
            },
            ground_height=ground, subject_axis=np.zeros(2), band_top=band_top,
        )
        raise IsolationError("no splats pass the vertical rule", report)

    w = opa[ab]
    axis = (pos[ab][:, [0, 2]] * w[:, None]).sum(axis=0) / w.sum()

    radius = params.cylinder_radius
    if radius is None:
        radius = 0.6 * (band_top - ground)

    horiz = np.hypot(pos[:, 0] - axis[0], pos[:, 2] - axis[1])
    pass_horizontal = horiz <= radius

    keep = ab & pass_horizontal
    removed = {
        "opacity": int((~pass_opacity).sum()),
        "vertical": int((pass_opacity & ~pass_vertical).sum()),
        "horizontal": int((ab & ~pass_horizontal).sum()),
    }
    report = FilterReport(
        input_count=n,
        kept_count=int(keep.sum()),
        removed_by_rule=removed,
        ground_height=ground,
        subject_axis=axis,
        band_top=band_top,
        cylinder_radius=float(radius),
    )
    if report.kept_count == 0:
        raise IsolationError("all splats filtered out", report)
    return cloud.select(keep), report


def normalize_cloud(cloud: SplatCloud, target_height: float = 1.0):
    """Center the subject (x=z=0, ground at y=0) and rescale to target height.

    Height is measured ground to 99th-percentile y; splat radii are
    multiplied by the same factor so splats stay proportionate. Returns
    (normalized cloud, NormalizationTransform); the transform is invertible.
    """
    if target_height <= 0:
        raise ValueError("target_height must be > 0")
    pos = cloud.positions.astype(np.float64)
    opa = cloud.opacities.astype(np.float64)

    ground = estimate_ground_height(cloud)
    ys = np.sort(pos[opa >= 0.05, 1])
    top = _nearest_rank(ys, 0.99)
    height = top - ground
    if height <= 0.01:
        raise NormalizationError(f"degenerate subject height {height:.4f} m")

    centroid = (pos * opa[:, None]).sum(axis=0) / opa.sum()
    translation = np.array([-centroid[0], -ground, -centroid[2]])
    scale = float(target_height / height)

    transform = NormalizationTransform(translation=translation, uniform_scale=scale)
    new_positions = transform.apply_points(pos)
    new_scales = cloud.scales.astype(np.float64) * scale
    return cloud.replaced(positions=new_positions, scales=new_scales), transform
