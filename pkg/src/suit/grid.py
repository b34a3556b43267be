"""Core grid and geometry value types shared by every stage of the pipeline.

Conventions (fixed so fixtures are bit-exact):
  - Grid origin is the top-left cell; x grows rightward (columns), y grows
    downward (rows).
  - Cell (x, y) has its metric center at ((x + 0.5) * cell_size,
    (y + 0.5) * cell_size).
  - Rigid transforms rotate about the metric center of the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def _normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = theta - TWO_PI * round(theta / TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class GridSpec:
    """Dense BEV grid geometry: H x W cells of cell_size meters, C channels."""

    height: int
    width: int
    cell_size: float
    channels: int = 1

    def __post_init__(self):
        if self.height < 1:
            raise ValueError(f"height must be >= 1, got {self.height}")
        if self.width < 1:
            raise ValueError(f"width must be >= 1, got {self.width}")
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be > 0, got {self.cell_size}")
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")

    @property
    def metric_center(self) -> tuple[float, float]:
        return (self.width * self.cell_size / 2.0,
                self.height * self.cell_size / 2.0)

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def cell_center(self, coord: "GridCoord") -> tuple[float, float]:
        return ((coord.x + 0.5) * self.cell_size,
                (coord.y + 0.5) * self.cell_size)


@dataclass(frozen=True)
class GridCoord:
    """Integer cell index (x = column, y = row)."""

    x: int
    y: int


@dataclass(frozen=True)
class FeatureMap:
    """Dense H x W x C feature grid."""

    spec: GridSpec
    data: np.ndarray

    def __post_init__(self):
        expected = (self.spec.height, self.spec.width, self.spec.channels)
        if self.data.shape != expected:
            raise ValueError(
                f"feature data shape {self.data.shape} != spec shape {expected}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature map contains non-finite entries")


@dataclass(frozen=True)
class Heatmap:
    """Dense H x W center-probability grid; every entry in [0, 1]."""

    spec: GridSpec
    data: np.ndarray

    def __post_init__(self):
        expected = (self.spec.height, self.spec.width)
        if self.data.shape != expected:
            raise ValueError(
                f"heatmap shape {self.data.shape} != spec shape {expected}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("heatmap contains non-finite entries")
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise ValueError("heatmap entries must lie in [0, 1]")


@dataclass(frozen=True)
class Pose2:
    """Rigid 2D transform: rotation about a pivot followed by translation.

    The pivot is supplied at application time (the grid's metric center),
    so a Pose2 value itself is just (translation, rotation).
    """

    translation: tuple[float, float]
    rotation: float

    def __post_init__(self):
        object.__setattr__(self, "rotation", _normalize_angle(self.rotation))
        object.__setattr__(self, "translation",
                           (float(self.translation[0]), float(self.translation[1])))

    @staticmethod
    def identity() -> "Pose2":
        return Pose2((0.0, 0.0), 0.0)

    def compose(self, other: "Pose2") -> "Pose2":
        """Return the pose equal to applying `other` first, then `self`."""
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        ox, oy = other.translation
        tx = c * ox - s * oy + self.translation[0]
        ty = s * ox + c * oy + self.translation[1]
        return Pose2((tx, ty), self.rotation + other.rotation)

    def inverse(self) -> "Pose2":
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        tx, ty = self.translation
        return Pose2((-(c * tx - s * ty), -(s * tx + c * ty)), -self.rotation)

    def apply(self, point: tuple[float, float],
              pivot: tuple[float, float] = (0.0, 0.0)) -> tuple[float, float]:
        """Rotate `point` about `pivot`, then translate."""
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        px, py = point[0] - pivot[0], point[1] - pivot[1]
        return (c * px - s * py + pivot[0] + self.translation[0],
                s * px + c * py + pivot[1] + self.translation[1])


@dataclass(frozen=True)
class WindowShape:
    """Odd-sized window so there is a unique center cell."""

    height: int
    width: int

    def __post_init__(self):
        for name, v in (("height", self.height), ("width", self.width)):
            if v < 1 or v % 2 == 0:
                raise ValueError(f"window {name} must be odd and >= 1, got {v}")

    @property
    def cells(self) -> int:
        return self.height * self.width

    @property
    def half(self) -> tuple[int, int]:
        return (self.height // 2, self.width // 2)


def transform_coord(pose_delta: Pose2, r: GridCoord,
                    spec: GridSpec) -> GridCoord | None:
    """Map a cell through a rigid transform of its center point.

    Returns the cell containing the transformed center, or None when the
    image leaves the grid (callers drop such samples).
    """
    qx, qy = pose_delta.apply(spec.cell_center(r), pivot=spec.metric_center)
    x = math.floor(qx / spec.cell_size)
    y = math.floor(qy / spec.cell_size)
    if spec.contains(x, y):
        return GridCoord(x, y)
    return None


def window_cells(center: GridCoord, shape: WindowShape,
                 spec: GridSpec) -> list[tuple[GridCoord, bool]]:
    """All cells of the window centered at `center`, row-major, with an
    in-bounds flag per cell. Always exactly shape.height * shape.width entries."""
    hh, hw = shape.half
    out = []
    for dy in range(-hh, hh + 1):
        for dx in range(-hw, hw + 1):
            x, y = center.x + dx, center.y + dy
            out.append((GridCoord(x, y), spec.contains(x, y)))
    return out
