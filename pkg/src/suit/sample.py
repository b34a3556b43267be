"""Significance-guided sampling: dense heatmap -> sparse sample set.

Three stages: coarse thresholding at a small significance threshold alpha,
greedy NMS refinement on center distance, and neighborhood relaxation that
keeps a small feature patch around each surviving location. The resulting
SignificantSet is the only state carried across frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .grid import FeatureMap, GridCoord, GridSpec, Heatmap, Pose2, WindowShape
from .sim import SimFrame


@dataclass(frozen=True)
class SquareWindow:
    shape: WindowShape


@dataclass(frozen=True)
class CircularWindow:
    radius: int

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("circular relaxation radius must be >= 1")


@dataclass(frozen=True)
class RectangleWindow:
    """Box taken from the assigned truth object's extent (3x3 fallback)."""


Relaxation = Union[SquareWindow, CircularWindow, RectangleWindow]

DEFAULT_ALPHA = 0.1       # best ablation threshold
DEFAULT_TOP_K = 200       # best ablation sample budget
DEFAULT_NMS_RADIUS = 2
DEFAULT_SQUARE = WindowShape(3, 3)


@dataclass(frozen=True)
class SamplingConfig:
    alpha: float = DEFAULT_ALPHA
    top_k: int = DEFAULT_TOP_K
    nms_radius: int = DEFAULT_NMS_RADIUS
    relaxation: Relaxation = SquareWindow(DEFAULT_SQUARE)

    def __post_init__(self):
        # alpha == 0 is permitted so the dense oracle path ("keep everything")
        # can be exercised; production configs use 0 < alpha < 1.
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.nms_radius < 0:
            raise ValueError("nms_radius must be >= 0")


def relaxation_offsets(relaxation: Relaxation,
                       extent_hint: tuple[int, int] = (3, 3)) -> list[tuple[int, int]]:
    """Row-major (dx, dy) offsets of the relaxation footprint."""
    if isinstance(relaxation, SquareWindow):
        hh, hw = relaxation.shape.half
        return [(dx, dy) for dy in range(-hh, hh + 1) for dx in range(-hw, hw + 1)]
    if isinstance(relaxation, CircularWindow):
        r = relaxation.radius
        return [(dx, dy)
                for dy in range(-r, r + 1)
                for dx in range(-r, r + 1)
                if dx * dx + dy * dy <= r * r]
    if isinstance(relaxation, RectangleWindow):
        ew, eh = max(int(extent_hint[0]), 1), max(int(extent_hint[1]), 1)
        xs = range(-(ew // 2), ew - ew // 2)
        ys = range(-(eh // 2), eh - eh // 2)
        return [(dx, dy) for dy in ys for dx in xs]
    raise TypeError(f"unknown relaxation {relaxation!r}")


@dataclass(frozen=True)
class Patch:
    """Relaxed feature block: row-major cell offsets and their features.

    Out-of-grid cells hold zero feature vectors.
    """

    offsets: tuple[tuple[int, int], ...]
    values: np.ndarray                   # (n_cells, C)


@dataclass(frozen=True)
class Sample:
    location: GridCoord
    score: float
    patch: Patch
    extent_hint: tuple[int, int] = (3, 3)


@dataclass(frozen=True)
class SignificantSet:
    samples: tuple[Sample, ...]
    source_frame: int
    source_pose: Pose2
    spec: GridSpec


def coarse_sample(heatmap: Heatmap, alpha: float,
                  top_k: int) -> list[tuple[GridCoord, float]]:
    """All cells scoring >= alpha, sorted by descending score then row-major
    coordinate, truncated to top_k."""
    data = heatmap.data
    flat = data.ravel()
    idx = np.flatnonzero(flat >= alpha)
    if idx.size == 0:
        return []
    # lexsort: last key is primary. Row-major flat index breaks score ties.
    order = np.lexsort((idx, -flat[idx]))[:top_k]
    picked = idx[order]
    w = heatmap.spec.width
    return [(GridCoord(int(i % w), int(i // w)), float(flat[i])) for i in picked]


def refine_sample(candidates: list[tuple[GridCoord, float]],
                  nms_radius: int) -> list[tuple[GridCoord, float]]:
    """Greedy NMS on Chebyshev center distance; input order (descending
    score) is preserved."""
    if nms_radius == 0:
        return list(candidates)
    kept: list[tuple[GridCoord, float]] = []
    for coord, score in candidates:
        ok = True
        for kc, _ in kept:
            if max(abs(coord.x - kc.x), abs(coord.y - kc.y)) <= nms_radius:
                ok = False
                break
        if ok:
            kept.append((coord, score))
    return kept


def relax(location: GridCoord, relaxation: Relaxation, features: FeatureMap,
          extent_hint: tuple[int, int] = (3, 3)) -> Patch:
    """Copy the relaxation footprint's feature vectors (zeros off-grid)."""
    offsets = relaxation_offsets(relaxation, extent_hint)
    spec = features.spec
    values = np.zeros((len(offsets), spec.channels), dtype=np.float64)
    for i, (dx, dy) in enumerate(offsets):
        x, y = location.x + dx, location.y + dy
        if spec.contains(x, y):
            values[i] = features.data[y, x]
    return Patch(offsets=tuple(offsets), values=values)


def _nearest_extent(location: GridCoord, truth, cell_size: float,
                    max_cells: float = 2.0) -> tuple[int, int]:
    """Extent of the nearest truth object within max_cells, else 3x3."""
    best = None
    best_d = max_cells
    for obj in truth:
        ox = obj.position[0] / cell_size - 0.5
        oy = obj.position[1] / cell_size - 0.5
        d = math.hypot(ox - location.x, oy - location.y)
        if d <= best_d:
            best_d = d
            best = obj.extent
    return best if best is not None else (3, 3)


def build_significant_set_from_maps(
        heatmap: Heatmap, features: FeatureMap, cfg: SamplingConfig,
        frame_index: int, pose: Pose2, truth=()) -> SignificantSet:
    candidates = coarse_sample(heatmap, cfg.alpha, cfg.top_k)
    kept = refine_sample(candidates, cfg.nms_radius)
    samples = []
    for coord, score in kept:
        hint = _nearest_extent(coord, truth, heatmap.spec.cell_size) if truth \
            else (3, 3)
        patch = relax(coord, cfg.relaxation, features, hint)
        samples.append(Sample(location=coord, score=score, patch=patch,
                              extent_hint=hint))
    return SignificantSet(samples=tuple(samples), source_frame=frame_index,
                          source_pose=pose, spec=heatmap.spec)


def build_significant_set(frame: SimFrame, cfg: SamplingConfig) -> SignificantSet:
    """coarse_sample -> refine_sample -> relax, recording source pose/index."""
    return build_significant_set_from_maps(
        frame.heatmap, frame.features, cfg, frame.index, frame.ego_pose,
        truth=frame.truth)


def patch_cell_count(cfg: SamplingConfig) -> int:
    """Fixed patch size for square/circular relaxations (GeoNet input width)."""
    if isinstance(cfg.relaxation, RectangleWindow):
        raise ValueError("rectangle relaxation has no fixed patch size")
    return len(relaxation_offsets(cfg.relaxation))
