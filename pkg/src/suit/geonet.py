"""Object-centric geometric transformation learning.

A small three-layer network maps a relaxed feature patch to a probability
distribution over an odd H_w x W_w offset window centered on zero motion.
With the default 3x3 patch the first layer is a full-patch valid conv, i.e.
a dense layer over the flattened patch; the following 1x1 layers are plain
dense layers too, so everything is implemented as flatten + three matmuls.

Labels are one-hot offset cells derived from assigned ground-truth
velocities: offset = round(v * tau / cell_size), clamped to the window edge
(and flagged) when the motion exceeds the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import WindowShape
from .sample import Sample
from .sim import ObjectState

DEFAULT_WINDOW = WindowShape(7, 7)
DEFAULT_HIDDEN = 64
DEFAULT_ASSIGN_RADIUS = 3.0


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass
class GeoNetParams:
    w1: np.ndarray   # (in_dim, hidden)
    b1: np.ndarray   # (hidden,)
    w2: np.ndarray   # (hidden, hidden)
    b2: np.ndarray   # (hidden,)
    w3: np.ndarray   # (hidden, out_dim)
    b3: np.ndarray   # (out_dim,)
    window: WindowShape

    def __post_init__(self):
        if self.w3.shape[1] != self.window.cells:
            raise ValueError("output width must equal window.height * window.width")
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @staticmethod
    def init(in_dim: int, window: WindowShape = DEFAULT_WINDOW,
             hidden: int = DEFAULT_HIDDEN, seed: int = 0) -> "GeoNetParams":
        """Scaled-uniform weight init (+-sqrt(6/(fan_in+fan_out))), zero biases."""
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=(fan_in, fan_out))

        out = window.cells
        return GeoNetParams(
            w1=glorot(in_dim, hidden), b1=np.zeros(hidden),
            w2=glorot(hidden, hidden), b2=np.zeros(hidden),
            w3=glorot(hidden, out), b3=np.zeros(out),
            window=window)

    @staticmethod
    def zeros(in_dim: int, window: WindowShape = DEFAULT_WINDOW,
              hidden: int = DEFAULT_HIDDEN) -> "GeoNetParams":
        """All-zero net: forward is exactly uniform over the window."""
        out = window.cells
        return GeoNetParams(
            w1=np.zeros((in_dim, hidden)), b1=np.zeros(hidden),
            w2=np.zeros((hidden, hidden)), b2=np.zeros(hidden),
            w3=np.zeros((hidden, out)), b3=np.zeros(out),
            window=window)


@dataclass(frozen=True)
class TransformDistribution:
    """Row-major probabilities over the offset window; sums to 1."""

    probs: np.ndarray
    window: WindowShape

    def __post_init__(self):
        if self.probs.shape != (self.window.cells,):
            raise ValueError("probs length must equal window cell count")
        if np.any(self.probs < 0) or abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError("probs must be nonnegative and sum to 1")


@dataclass(frozen=True)
class TransformLabel:
    cell_index: int
    clamped: bool = False


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    steps: int = 3000
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.0    # 0 = plain SGD

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def offset_to_index(dx: int, dy: int, window: WindowShape) -> int:
    hh, hw = window.half
    return (dy + hh) * window.width + (dx + hw)


def index_to_offset(index: int, window: WindowShape) -> tuple[int, int]:
    hh, hw = window.half
    return (index % window.width - hw, index // window.width - hh)


def make_label(sample: Sample, truth, tau: float, window: WindowShape,
               cell_size: float,
               assign_radius: float = DEFAULT_ASSIGN_RADIUS) -> TransformLabel:
    """One-hot offset label from the nearest assigned truth velocity.

    Unassigned samples get zero velocity (the window center). Offsets that
    fall outside the window clamp componentwise to the edge and are flagged.
    """
    best_v = (0.0, 0.0)
    best_d = assign_radius
    for obj in truth:
        ox = obj.position[0] / cell_size - 0.5
        oy = obj.position[1] / cell_size - 0.5
        d = math.hypot(ox - sample.location.x, oy - sample.location.y)
        if d <= best_d:
            best_d = d
            best_v = obj.velocity
    # half-up rounding: ties at .5 cells quantize toward +inf
    dx = math.floor(best_v[0] * tau / cell_size + 0.5)
    dy = math.floor(best_v[1] * tau / cell_size + 0.5)
    hh, hw = window.half
    cdx = min(max(dx, -hw), hw)
    cdy = min(max(dy, -hh), hh)
    return TransformLabel(cell_index=offset_to_index(cdx, cdy, window),
                          clamped=(cdx != dx or cdy != dy))


def _forward_batch(params: GeoNetParams, x: np.ndarray):
    """Returns (probs, caches) for a (N, in_dim) batch."""
    z1 = x @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.w2 + params.b2
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ params.w3 + params.b3
    z3s = z3 - z3.max(axis=1, keepdims=True)   # max-subtraction for stability
    e = np.exp(z3s)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, (x, z1, a1, z2, a2)


def forward(params: GeoNetParams, patch_values: np.ndarray) -> TransformDistribution:
    """Single-patch forward pass; accepts (n_cells, C) or flat input."""
    x = np.asarray(patch_values, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != params.in_dim:
        raise ValueError(
            f"patch size {x.shape[1]} does not match network input {params.in_dim}")
    probs, _ = _forward_batch(params, x)
    return TransformDistribution(probs=probs[0], window=params.window)


def forward_batch(params: GeoNetParams, patches: np.ndarray) -> np.ndarray:
    """(N, in_dim) -> (N, window.cells) probabilities."""
    x = np.asarray(patches, dtype=np.float64).reshape(len(patches), -1)
    if x.shape[1] != params.in_dim:
        raise ValueError(
            f"patch size {x.shape[1]} does not match network input {params.in_dim}")
    probs, _ = _forward_batch(params, x)
    return probs


def loss_and_grad(params: GeoNetParams, patches: np.ndarray,
                  labels: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy and analytic gradients for a (patches, labels) batch."""
    x = np.asarray(patches, dtype=np.float64).reshape(len(patches), -1)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    n = x.shape[0]
    probs, (x, z1, a1, z2, a2) = _forward_batch(params, x)
    eps = 1e-300   # guards log(0) without perturbing the gradient formula
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

    dz3 = probs.copy()
    dz3[np.arange(n), y] -= 1.0
    dz3 /= n
    gw3 = a2.T @ dz3
    gb3 = dz3.sum(axis=0)
    da2 = dz3 @ params.w3.T
    dz2 = da2 * (z2 > 0)
    gw2 = a1.T @ dz2
    gb2 = dz2.sum(axis=0)
    da1 = dz2 @ params.w2.T
    dz1 = da1 * (z1 > 0)
    gw1 = x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2,
                  "w3": gw3, "b3": gb3}


@dataclass
class TrainTrace:
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)


def train(params: GeoNetParams, patches: np.ndarray, labels: np.ndarray,
          cfg: TrainConfig) -> tuple[GeoNetParams, TrainTrace]:
    """Seeded mini-batch SGD (optional momentum); deterministic per seed."""
    x = np.asarray(patches, dtype=np.float64).reshape(len(patches), -1)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("training dataset must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    p = GeoNetParams(w1=params.w1.copy(), b1=params.b1.copy(),
                     w2=params.w2.copy(), b2=params.b2.copy(),
                     w3=params.w3.copy(), b3=params.b3.copy(),
                     window=params.window)
    vel = {k: np.zeros_like(getattr(p, k))
           for k in ("w1", "b1", "w2", "b2", "w3", "b3")}
    trace = TrainTrace()
    order = rng.permutation(len(x))
    pos = 0
    for step in range(cfg.steps):
        if pos + cfg.batch_size > len(x):
            order = rng.permutation(len(x))
            pos = 0
        batch = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size
        bx, by = x[batch], y[batch]
        loss, grads = loss_and_grad(p, bx, by)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}: {loss}")
        probs = forward_batch(p, bx)
        acc = float(np.mean(probs.argmax(axis=1) == by))
        for k, g in grads.items():
            vel[k] = cfg.momentum * vel[k] - cfg.learning_rate * g
            setattr(p, k, getattr(p, k) + vel[k])
        trace.steps.append(step)
        trace.losses.append(loss)
        trace.accuracies.append(acc)
    return p, trace


def globalize(dist: TransformDistribution, center, spec) -> np.ndarray:
    """Embed a windowed distribution into the full grid: zero outside the
    window, q inside (mass on off-grid cells is dropped)."""
    out = np.zeros((spec.height, spec.width), dtype=np.float64)
    hh, hw = dist.window.half
    k = 0
    for dy in range(-hh, hh + 1):
        for dx in range(-hw, hw + 1):
            x, y = center.x + dx, center.y + dy
            if spec.contains(x, y):
                out[y, x] = dist.probs[k]
            k += 1
    return out
