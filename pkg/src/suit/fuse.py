"""Temporal fusion: ego-align the sparse bank, probability-cascade warping,
two-frame merge, and induction over longer sequences.

Warping scatters, per sample r with score s and predicted offset
distribution q: q(delta) * s onto the heatmap at r + delta, and
q(delta) * s * patch onto the feature grid over the patch footprint around
r + delta (with matching accumulation weights). Features are then divided
by max(weight, eps) cellwise and the heatmap is clamped to [0, 1].

The dense oracle evaluates the same cascade by brute force over the full
grid; it is the independent reference for the sparse approximation and is
deliberately a separate, loop-level implementation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import container
from ._kernels import warp_scatter
from .geonet import GeoNetParams, forward_batch
from .grid import FeatureMap, GridCoord, Heatmap, Pose2, transform_coord
from .sample import (Sample, SamplingConfig, SignificantSet,
                     build_significant_set_from_maps)
from .sim import SimFrame

WEIGHT_EPS = 1e-8
ORACLE_MAX_SIDE = 32


@dataclass(frozen=True)
class SparseBank:
    """The only cross-frame state: a significant set plus its GeoNet."""

    set: SignificantSet
    geonet: GeoNetParams
    dropped_out_of_bounds: int = 0

    @property
    def byte_size(self) -> int:
        return container.serialized_set_size(self.set)


@dataclass(frozen=True)
class WarpedState:
    warped_features: FeatureMap
    warped_heatmap: Heatmap
    weight_map: np.ndarray
    clamp_fraction: float = 0.0    # heatmap cells clipped at 1


@dataclass(frozen=True)
class Blend:
    beta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class Concat:
    """Channel concatenation; terminal use only (doubles channel count)."""


MergeMode = Union[Blend, Concat]


@dataclass(frozen=True)
class FusedFrame:
    features: FeatureMap
    heatmap: Heatmap
    provenance: tuple[int, ...]


def ego_align(bank: SparseBank, pose_from: Pose2, pose_to: Pose2) -> SparseBank:
    """Map sample locations from the previous ego frame into the current one.

    Out-of-bounds samples are dropped (silently, but counted); features are
    left untouched.
    """
    rel = pose_to.compose(pose_from.inverse())
    spec = bank.set.spec
    kept = []
    dropped = 0
    for s in bank.set.samples:
        moved = transform_coord(rel, s.location, spec)
        if moved is None:
            dropped += 1
            continue
        kept.append(Sample(location=moved, score=s.score, patch=s.patch,
                           extent_hint=s.extent_hint))
    new_set = SignificantSet(samples=tuple(kept),
                             source_frame=bank.set.source_frame,
                             source_pose=pose_to, spec=spec)
    return SparseBank(set=new_set, geonet=bank.geonet,
                      dropped_out_of_bounds=bank.dropped_out_of_bounds + dropped)


def _window_offsets(window) -> np.ndarray:
    hh, hw = window.half
    return np.array([(dx, dy)
                     for dy in range(-hh, hh + 1)
                     for dx in range(-hw, hw + 1)], dtype=np.int64)


def warp(bank: SparseBank, backend: str | None = None) -> WarpedState:
    """Scatter every sample through its predicted offset distribution."""
    spec = bank.set.spec
    samples = bank.set.samples
    if not samples:
        zero_f = FeatureMap(spec, np.zeros((spec.height, spec.width,
                                            spec.channels)))
        zero_h = Heatmap(spec, np.zeros((spec.height, spec.width)))
        return WarpedState(zero_f, zero_h,
                           np.zeros((spec.height, spec.width)), 0.0)

    locs = np.array([(s.location.x, s.location.y) for s in samples],
                    dtype=np.int64)
    scores = np.array([s.score for s in samples], dtype=np.float64)
    patch_off = np.array(samples[0].patch.offsets, dtype=np.int64)
    patch_feats = np.stack([s.patch.values for s in samples])
    flat = patch_feats.reshape(len(samples), -1)
    q = forward_batch(bank.geonet, flat)
    win_off = _window_offsets(bank.geonet.window)

    heat, weight, feat = warp_scatter(
        locs, scores, win_off, patch_off, patch_feats, q,
        spec.height, spec.width, spec.channels, backend=backend)

    clamp_fraction = float(np.mean(heat > 1.0))
    heat = np.clip(heat, 0.0, 1.0)
    feat = feat / np.maximum(weight, WEIGHT_EPS)[:, :, None]
    return WarpedState(
        warped_features=FeatureMap(spec, feat),
        warped_heatmap=Heatmap(spec, heat),
        weight_map=weight,
        clamp_fraction=clamp_fraction)


def dense_cascade_oracle(heatmap_prev: Heatmap, features_prev: FeatureMap,
                         per_cell_q: np.ndarray, window) -> WarpedState:
    """Brute-force cascade over the FULL grid (test oracle, small grids only).

    per_cell_q has shape (H, W, window.cells): a transform distribution for
    every cell. Every cell acts as a 1x1-patch sample scored by the heatmap.
    """
    spec = heatmap_prev.spec
    if max(spec.height, spec.width) > ORACLE_MAX_SIDE:
        raise ValueError(
            f"oracle grids are capped at {ORACLE_MAX_SIDE}x{ORACLE_MAX_SIDE}")
    if per_cell_q.shape != (spec.height, spec.width, window.cells):
        raise ValueError("per_cell_q shape must be (H, W, window cells)")

    hh, hw = window.half
    heat = np.zeros((spec.height, spec.width), dtype=np.float64)
    weight = np.zeros_like(heat)
    feat = np.zeros((spec.height, spec.width, spec.channels), dtype=np.float64)
    for y in range(spec.height):
        for x in range(spec.width):
            s = heatmap_prev.data[y, x]
            k = 0
            for dy in range(-hh, hh + 1):
                for dx in range(-hw, hw + 1):
                    ty, tx = y + dy, x + dx
                    if 0 <= tx < spec.width and 0 <= ty < spec.height:
                        w = per_cell_q[y, x, k] * s
                        heat[ty, tx] += w
                        weight[ty, tx] += w
                        feat[ty, tx] += w * features_prev.data[y, x]
                    k += 1

    clamp_fraction = float(np.mean(heat > 1.0))
    heat = np.clip(heat, 0.0, 1.0)
    feat = feat / np.maximum(weight, WEIGHT_EPS)[:, :, None]
    return WarpedState(FeatureMap(spec, feat), Heatmap(spec, heat), weight,
                       clamp_fraction)


def merge(current: SimFrame | FusedFrame, warped: WarpedState,
          mode: MergeMode) -> FusedFrame:
    """Fuse the current frame with the warped previous state.

    Blend(beta) keeps C channels (valid induction input); Concat doubles
    them (terminal use only). The heatmap is fused by cellwise max in both
    modes.
    """
    cur_feat = current.features
    cur_heat = current.heatmap
    spec = cur_feat.spec
    if warped.warped_features.spec != spec:
        raise ValueError("current frame and warped state specs differ")
    heat = np.maximum(cur_heat.data, warped.warped_heatmap.data)
    prov = (current.index,) if isinstance(current, SimFrame) else current.provenance

    if isinstance(mode, Blend):
        feat = (1.0 - mode.beta) * cur_feat.data \
            + mode.beta * warped.warped_features.data
        return FusedFrame(FeatureMap(spec, feat), Heatmap(spec, heat), prov)
    if isinstance(mode, Concat):
        from .grid import GridSpec
        wide = GridSpec(spec.height, spec.width, spec.cell_size,
                        spec.channels * 2)
        feat = np.concatenate([cur_feat.data, warped.warped_features.data],
                              axis=2)
        return FusedFrame(FeatureMap(wide, feat), Heatmap(spec, heat), prov)
    raise TypeError(f"unknown merge mode {mode!r}")


@dataclass
class FusionStepReport:
    frame: int
    bank_bytes: int
    dense_bytes: int
    samples_retained: int
    samples_dropped: int
    clamp_fraction: float
    sample_ms: float
    warp_ms: float
    merge_ms: float

    CSV_HEADER = ("frame,bank_bytes,dense_bytes,samples_retained,"
                  "samples_dropped,clamp_fraction,sample_ms,warp_ms,merge_ms")

    def csv_row(self) -> str:
        return (f"{self.frame},{self.bank_bytes},{self.dense_bytes},"
                f"{self.samples_retained},{self.samples_dropped},"
                f"{self.clamp_fraction:.6f},{self.sample_ms:.3f},"
                f"{self.warp_ms:.3f},{self.merge_ms:.3f}")


def run_sequence(frames: list[SimFrame], sampling_cfg: SamplingConfig,
                 geonet: GeoNetParams, mode: MergeMode = Blend(0.5),
                 ) -> tuple[list[FusedFrame], list[FusionStepReport]]:
    """Induct over the sequence: fuse frame t with the warp of the previous
    fused state. Frame 0 passes through unfused."""
    if not frames:
        raise ValueError("run_sequence needs at least one frame")
    if isinstance(mode, Concat) and len(frames) > 2:
        raise ValueError("Concat doubles channels and cannot be inducted; "
                         "use Blend for sequences longer than 2 frames")

    spec = frames[0].heatmap.spec
    dense_bytes = spec.height * spec.width * spec.channels * 8
    first = FusedFrame(frames[0].features, frames[0].heatmap,
                       provenance=(frames[0].index,))
    fused = [first]
    reports = []
    for t in range(1, len(frames)):
        prev_fused = fused[-1]
        prev_frame = frames[t - 1]

        t0 = time.perf_counter()
        sset = build_significant_set_from_maps(
            prev_fused.heatmap, prev_fused.features, sampling_cfg,
            frame_index=prev_frame.index, pose=prev_frame.ego_pose,
            truth=prev_frame.truth)
        bank = SparseBank(set=sset, geonet=geonet)
        t1 = time.perf_counter()
        bank = ego_align(bank, prev_frame.ego_pose, frames[t].ego_pose)
        warped = warp(bank)
        t2 = time.perf_counter()
        merged = merge(frames[t], warped, mode)
        t3 = time.perf_counter()

        merged = FusedFrame(merged.features, merged.heatmap,
                            provenance=prev_fused.provenance + (frames[t].index,))
        fused.append(merged)
        reports.append(FusionStepReport(
            frame=frames[t].index,
            bank_bytes=bank.byte_size,
            dense_bytes=dense_bytes,
            samples_retained=len(bank.set.samples),
            samples_dropped=bank.dropped_out_of_bounds,
            clamp_fraction=warped.clamp_fraction,
            sample_ms=(t1 - t0) * 1e3,
            warp_ms=(t2 - t1) * 1e3,
            merge_ms=(t3 - t2) * 1e3))
    return fused, reports
