"""Run configuration: one JSON document, defaults materialized into every
output's config echo so runs are reproducible from (config, seed) alone."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluate import EvalConfig
from .fuse import Blend, Concat, MergeMode
from .geonet import TrainConfig
from .grid import GridSpec, WindowShape
from .sample import (CircularWindow, RectangleWindow, SamplingConfig,
                     SquareWindow)
from .sim import SimConfig

FORMAT_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class BenchConfig:
    grids: tuple[int, ...] = (128, 256, 512)
    lengths: tuple[int, ...] = (2, 5, 10)
    repeats: int = 5
    svg: bool = False


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig
    sampling: SamplingConfig
    window: WindowShape
    hidden: int
    assign_radius: float
    train: TrainConfig
    mode: MergeMode
    eval: EvalConfig
    bench: BenchConfig

    def clamp_window_warning(self) -> str | None:
        """Cross-field check: per-frame object motion must fit the window."""
        half = (self.window.width - 1) / 2
        max_cells = self.sim.max_speed * self.sim.frame_gap / self.sim.spec.cell_size
        if max_cells <= half:
            return None
        return (f"max_speed*frame_gap/cell_size = {max_cells:.2f} cells exceeds "
                f"the window half-width {half:.0f}; predicted label clamp "
                f"fraction ~{predicted_clamp_fraction(self):.2%}")


def predicted_clamp_fraction(cfg: RunConfig, draws: int = 10000) -> float:
    """Monte-Carlo estimate of how often a velocity label would clamp,
    under the simulator's speed/direction distribution."""
    rng = np.random.default_rng(0)
    speed = rng.uniform(0.0, cfg.sim.max_speed, draws)
    ang = rng.uniform(0.0, 2.0 * math.pi, draws)
    scale = cfg.sim.frame_gap / cfg.sim.spec.cell_size
    dx = np.floor(speed * np.cos(ang) * scale + 0.5)
    dy = np.floor(speed * np.sin(ang) * scale + 0.5)
    hh, hw = cfg.window.half
    return float(np.mean((np.abs(dx) > hw) | (np.abs(dy) > hh)))


def _get(doc: dict, field: str, default):
    cur = doc
    for part in field.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


def _relaxation_from(doc: dict):
    kind = _get(doc, "sampling.relaxation.kind", "square")
    if kind == "square":
        size = int(_get(doc, "sampling.relaxation.size", 3))
        try:
            return SquareWindow(WindowShape(size, size))
        except ValueError as e:
            raise ConfigError("sampling.relaxation.size", str(e))
    if kind == "circular":
        return CircularWindow(int(_get(doc, "sampling.relaxation.radius", 2)))
    if kind == "rectangle":
        return RectangleWindow()
    raise ConfigError("sampling.relaxation.kind",
                      f"must be square|circular|rectangle, got {kind!r}")


def load_run_config(path: Path | str, seed_override: int | None = None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError("<file>", str(e))
    return run_config_from_dict(doc, seed_override)


def run_config_from_dict(doc: dict, seed_override: int | None = None) -> RunConfig:
    def build(field, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigError(field, str(e))

    seed = seed_override if seed_override is not None \
        else int(_get(doc, "sim.seed", 0))

    spec = build("sim.grid", lambda: GridSpec(
        height=int(_get(doc, "sim.height", 128)),
        width=int(_get(doc, "sim.width", 128)),
        cell_size=float(_get(doc, "sim.cell_size", 0.5)),
        channels=int(_get(doc, "sim.channels", 16))))
    sim = build("sim", lambda: SimConfig(
        spec=spec,
        object_count=int(_get(doc, "sim.object_count", 8)),
        frame_count=int(_get(doc, "sim.frame_count", 10)),
        frame_gap=float(_get(doc, "sim.frame_gap", 0.5)),
        max_speed=float(_get(doc, "sim.max_speed", 2.0)),
        dropout_prob=float(_get(doc, "sim.dropout_prob", 0.0)),
        heatmap_sigma=float(_get(doc, "sim.heatmap_sigma", 1.0)),
        position_noise=float(_get(doc, "sim.position_noise", 0.0)),
        ego_speed=float(_get(doc, "sim.ego_speed", 0.0)),
        seed=seed))
    alpha = float(_get(doc, "sampling.alpha", 0.1))
    if not 0.0 <= alpha < 1.0:
        raise ConfigError("sampling.alpha", f"must lie in [0, 1), got {alpha}")
    top_k = int(_get(doc, "sampling.top_k", 200))
    if top_k < 1:
        raise ConfigError("sampling.top_k", f"must be >= 1, got {top_k}")
    sampling = build("sampling", lambda: SamplingConfig(
        alpha=alpha, top_k=top_k,
        nms_radius=int(_get(doc, "sampling.nms_radius", 2)),
        relaxation=_relaxation_from(doc)))
    window = build("geonet.window", lambda: WindowShape(
        int(_get(doc, "geonet.window", 7)), int(_get(doc, "geonet.window", 7))))
    train = build("geonet.train", lambda: TrainConfig(
        learning_rate=float(_get(doc, "geonet.train.learning_rate", 0.05)),
        steps=int(_get(doc, "geonet.train.steps", 3000)),
        batch_size=int(_get(doc, "geonet.train.batch_size", 32)),
        seed=int(_get(doc, "geonet.train.seed", seed)),
        momentum=float(_get(doc, "geonet.train.momentum", 0.9))))
    mode_name = _get(doc, "fusion.mode", "blend")
    if mode_name == "blend":
        mode = build("fusion.beta",
                     lambda: Blend(float(_get(doc, "fusion.beta", 0.5))))
    elif mode_name == "concat":
        mode = Concat()
    else:
        raise ConfigError("fusion.mode", f"must be blend|concat, got {mode_name!r}")
    eval_cfg = build("eval", lambda: EvalConfig(
        peak_threshold=float(_get(doc, "eval.peak_threshold", 0.3)),
        peak_radius=int(_get(doc, "eval.peak_radius", 1)),
        max_dist=float(_get(doc, "eval.max_dist", 2.0))))
    bench = build("bench", lambda: BenchConfig(
        grids=tuple(int(g) for g in _get(doc, "bench.grids", [128, 256, 512])),
        lengths=tuple(int(t) for t in _get(doc, "bench.lengths", [2, 5, 10])),
        repeats=int(_get(doc, "bench.repeats", 5)),
        svg=bool(_get(doc, "bench.svg", False))))
    if bench.repeats < 1:
        raise ConfigError("bench.repeats", "must be >= 1")
    return RunConfig(sim=sim, sampling=sampling, window=window,
                     hidden=int(_get(doc, "geonet.hidden", 64)),
                     assign_radius=float(_get(doc, "geonet.assign_radius", 3.0)),
                     train=train, mode=mode, eval=eval_cfg, bench=bench)


def config_echo(cfg: RunConfig) -> dict:
    """Fully materialized config for embedding in every output."""
    relax = cfg.sampling.relaxation
    if isinstance(relax, SquareWindow):
        relax_doc = {"kind": "square", "size": relax.shape.height}
    elif isinstance(relax, CircularWindow):
        relax_doc = {"kind": "circular", "radius": relax.radius}
    else:
        relax_doc = {"kind": "rectangle"}
    mode = cfg.mode
    return {
        "format_version": FORMAT_VERSION,
        "sim": {
            "height": cfg.sim.spec.height, "width": cfg.sim.spec.width,
            "cell_size": cfg.sim.spec.cell_size,
            "channels": cfg.sim.spec.channels,
            "object_count": cfg.sim.object_count,
            "frame_count": cfg.sim.frame_count,
            "frame_gap": cfg.sim.frame_gap, "max_speed": cfg.sim.max_speed,
            "dropout_prob": cfg.sim.dropout_prob,
            "heatmap_sigma": cfg.sim.heatmap_sigma,
            "position_noise": cfg.sim.position_noise,
            "ego_speed": cfg.sim.ego_speed, "seed": cfg.sim.seed,
        },
        "sampling": {
            "alpha": cfg.sampling.alpha, "top_k": cfg.sampling.top_k,
            "nms_radius": cfg.sampling.nms_radius, "relaxation": relax_doc,
        },
        "geonet": {
            "window": cfg.window.height, "hidden": cfg.hidden,
            "assign_radius": cfg.assign_radius,
            "train": {
                "learning_rate": cfg.train.learning_rate,
                "steps": cfg.train.steps, "batch_size": cfg.train.batch_size,
                "seed": cfg.train.seed, "momentum": cfg.train.momentum,
            },
        },
        "fusion": ({"mode": "blend", "beta": mode.beta}
                   if isinstance(mode, Blend) else {"mode": "concat"}),
        "eval": {
            "peak_threshold": cfg.eval.peak_threshold,
            "peak_radius": cfg.eval.peak_radius,
            "max_dist": cfg.eval.max_dist,
        },
        "bench": {
            "grids": list(cfg.bench.grids), "lengths": list(cfg.bench.lengths),
            "repeats": cfg.bench.repeats, "svg": cfg.bench.svg,
        },
    }
