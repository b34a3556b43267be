"""Deterministic synthetic BEV world.

Stands in for the single-frame detector pipeline: each frame carries a
center heatmap, a feature map, the ego pose, and ground-truth object states
with velocities. All randomness flows from SimConfig.seed through a single
generator, so identical configs produce bit-identical frame lists.

Frame-local conventions:
  - Object truth positions are in the ego frame (meters); velocities are
    expressed in world axes, which coincide with ego axes because the ego
    never rotates during simulation. This makes v * tau the residual
    object displacement after ego alignment.
  - The heatmap is the per-cell max of Gaussian splats exp(-d^2 / 2 sigma^2)
    over observed objects (d in cells), so peaks stay at <= 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import FeatureMap, GridSpec, Heatmap, Pose2


@dataclass(frozen=True)
class ObjectState:
    id: int
    position: tuple[float, float]      # meters
    velocity: tuple[float, float]      # meters / second
    extent: tuple[int, int]            # cells (width, height)
    signature: np.ndarray              # unit-norm C-vector
    observed: bool = True

    def __post_init__(self):
        if abs(float(np.linalg.norm(self.signature)) - 1.0) > 1e-9:
            raise ValueError("object signature must be unit-norm")
        if self.extent[0] < 1 or self.extent[1] < 1:
            raise ValueError("extent components must be >= 1")


@dataclass(frozen=True)
class SimConfig:
    spec: GridSpec
    object_count: int
    frame_count: int
    frame_gap: float                   # tau, seconds
    max_speed: float = 0.0             # meters / second
    dropout_prob: float = 0.0
    heatmap_sigma: float = 1.0         # cells
    position_noise: float = 0.0        # cells
    ego_speed: float = 0.0             # meters / second, along +x
    seed: int = 0

    def __post_init__(self):
        if self.frame_gap <= 0:
            raise ValueError("frame_gap must be > 0")
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if self.object_count < 0:
            raise ValueError("object_count must be >= 0")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.heatmap_sigma <= 0:
            raise ValueError("heatmap_sigma must be > 0")
        limit = min(self.spec.height, self.spec.width) * self.spec.cell_size / 4.0
        if self.max_speed * self.frame_gap >= limit:
            raise ValueError(
                f"max_speed * frame_gap = {self.max_speed * self.frame_gap:.3f} m "
                f"per frame would cross the grid in a few frames (limit {limit:.3f} m)")


@dataclass(frozen=True)
class SimFrame:
    index: int
    heatmap: Heatmap
    features: FeatureMap
    ego_pose: Pose2                    # world -> ego
    truth: tuple[ObjectState, ...] = field(default_factory=tuple)


def _splat_max(spec: GridSpec, centers_cells: np.ndarray, sigma: float) -> np.ndarray:
    """Per-cell max of unit-peak Gaussians centered at continuous cell coords."""
    heat = np.zeros((spec.height, spec.width), dtype=np.float64)
    if centers_cells.size == 0:
        return heat
    ys = np.arange(spec.height, dtype=np.float64)[:, None]
    xs = np.arange(spec.width, dtype=np.float64)[None, :]
    inv = 1.0 / (2.0 * sigma * sigma)
    for cx, cy in centers_cells:
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        np.maximum(heat, np.exp(-d2 * inv), out=heat)
    return heat


def _to_cell_coords(pos_m: np.ndarray, cell_size: float) -> np.ndarray:
    """Metric ego position -> continuous cell coordinate (cell center = integer)."""
    return pos_m / cell_size - 0.5


def _paint_features(spec: GridSpec, objs: list[ObjectState]) -> np.ndarray:
    """Write each observed object's signature over its extent footprint.

    Later writes overwrite earlier ones; draw order is by object id.
    """
    feat = np.zeros((spec.height, spec.width, spec.channels), dtype=np.float64)
    for obj in sorted(objs, key=lambda o: o.id):
        cx, cy = _to_cell_coords(np.asarray(obj.position), spec.cell_size)
        ix, iy = int(round(cx)), int(round(cy))
        ew, eh = obj.extent
        x0, x1 = ix - (ew // 2), ix - (ew // 2) + ew
        y0, y1 = iy - (eh // 2), iy - (eh // 2) + eh
        x0, x1 = max(x0, 0), min(x1, spec.width)
        y0, y1 = max(y0, 0), min(y1, spec.height)
        if x0 < x1 and y0 < y1:
            feat[y0:y1, x0:x1, :] = obj.signature
    return feat


def simulate(config: SimConfig,
             objects: list[ObjectState] | None = None) -> list[SimFrame]:
    """Generate a deterministic constant-velocity frame sequence.

    `objects` pins the initial world-frame object states explicitly
    (fixture scenes); by default they are drawn from the seeded generator.
    """
    spec = config.spec
    rng = np.random.default_rng(config.seed)
    tau = config.frame_gap

    if objects is None:
        # Spawn in the central region so objects stay on-grid for a while.
        extent_m = (spec.width * spec.cell_size, spec.height * spec.cell_size)
        pos0 = rng.uniform([0.2 * extent_m[0], 0.2 * extent_m[1]],
                           [0.8 * extent_m[0], 0.8 * extent_m[1]],
                           size=(config.object_count, 2))
        speeds = rng.uniform(0.0, config.max_speed, size=config.object_count)
        angles = rng.uniform(0.0, 2.0 * np.pi, size=config.object_count)
        vel = np.stack([speeds * np.cos(angles), speeds * np.sin(angles)], axis=1)
        extents = rng.integers(1, 4, size=(config.object_count, 2))
        sigs = rng.normal(size=(config.object_count, spec.channels))
        norms = np.linalg.norm(sigs, axis=1, keepdims=True)
        sigs = sigs / np.where(norms > 0, norms, 1.0)
        n_obj = config.object_count
    else:
        pos0 = np.array([o.position for o in objects], dtype=np.float64) \
            .reshape(-1, 2)
        vel = np.array([o.velocity for o in objects], dtype=np.float64) \
            .reshape(-1, 2)
        extents = np.array([o.extent for o in objects], dtype=np.int64) \
            .reshape(-1, 2)
        sigs = np.array([o.signature for o in objects], dtype=np.float64) \
            .reshape(-1, spec.channels)
        n_obj = len(objects)

    frames = []
    for t in range(config.frame_count):
        # Draw all per-frame randomness unconditionally, in a fixed order,
        # so the stream does not depend on dropout outcomes.
        drop = rng.random(n_obj) < config.dropout_prob
        noise = rng.normal(0.0, config.position_noise, size=(n_obj, 2)) \
            * spec.cell_size

        ego_x = config.ego_speed * tau * t
        ego_pose = Pose2((-ego_x, 0.0), 0.0)

        world_pos = pos0 + vel * (tau * t)
        ego_pos = world_pos - np.array([ego_x, 0.0])

        truth = []
        observed_centers = []
        observed_objs = []
        for i in range(n_obj):
            obj = ObjectState(
                id=i,
                position=(float(ego_pos[i, 0]), float(ego_pos[i, 1])),
                velocity=(float(vel[i, 0]), float(vel[i, 1])),
                extent=(int(extents[i, 0]), int(extents[i, 1])),
                signature=sigs[i],
                observed=not bool(drop[i]),
            )
            truth.append(obj)
            if obj.observed:
                noisy = ego_pos[i] + noise[i]
                observed_centers.append(_to_cell_coords(noisy, spec.cell_size))
                observed_objs.append(obj)

        heat = _splat_max(spec, np.asarray(observed_centers, dtype=np.float64)
                          .reshape(-1, 2), config.heatmap_sigma)
        feat = _paint_features(spec, observed_objs)
        frames.append(SimFrame(
            index=t,
            heatmap=Heatmap(spec, heat),
            features=FeatureMap(spec, feat),
            ego_pose=ego_pose,
            truth=tuple(truth),
        ))
    return frames


def truth_heatmap(frame: SimFrame, sigma: float = 1.0) -> Heatmap:
    """Noise-free heatmap from ALL truth objects (ignores dropout and noise).

    Used as the oracle target when checking what fusion should recover.
    `sigma` should match the SimConfig that produced the frame.
    """
    spec = frame.heatmap.spec
    centers = np.asarray(
        [_to_cell_coords(np.asarray(o.position), spec.cell_size) for o in frame.truth],
        dtype=np.float64).reshape(-1, 2)
    return Heatmap(spec, _splat_max(spec, centers, sigma=sigma))
