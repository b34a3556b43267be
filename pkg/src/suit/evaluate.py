"""Detection surrogate and metrics.

Peaks of the (fused) heatmap are matched to ground-truth centers by greedy
center-distance matching; precision/recall at a cell-distance threshold
stand in for full detection metrics at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fuse import Blend, MergeMode, run_sequence
from .geonet import GeoNetParams
from .grid import GridCoord, Heatmap
from .sample import SamplingConfig
from .sim import SimFrame


@dataclass(frozen=True)
class Detection:
    location: GridCoord
    score: float


@dataclass(frozen=True)
class MatchResult:
    true_positives: int
    false_positives: int
    false_negatives: int
    matched_distances: tuple[float, ...] = ()


@dataclass
class EvalReport:
    precisions: list[float]
    recalls: list[float]
    matched_distances: list[float]
    config: dict

    @property
    def mean_precision(self) -> float:
        return float(np.mean(self.precisions)) if self.precisions else 0.0

    @property
    def mean_recall(self) -> float:
        return float(np.mean(self.recalls)) if self.recalls else 0.0

    def distance_histogram(self, bins=(0.5, 1.0, 2.0, 4.0)) -> dict[str, int]:
        hist = {f"<= {b}": 0 for b in bins}
        for d in self.matched_distances:
            for b in bins:
                if d <= b:
                    hist[f"<= {b}"] += 1
                    break
        return hist

    def csv_rows(self) -> list[str]:
        rows = ["frame,precision,recall"]
        for i, (p, r) in enumerate(zip(self.precisions, self.recalls)):
            rows.append(f"{i},{p:.6f},{r:.6f}")
        return rows

    def summary_text(self, title: str = "eval") -> str:
        lines = [f"[{title}] frames={len(self.precisions)}",
                 f"  mean precision: {self.mean_precision:.4f}",
                 f"  mean recall:    {self.mean_recall:.4f}",
                 "  matched-distance histogram (cells):"]
        for k, v in self.distance_histogram().items():
            lines.append(f"    {k}: {v}")
        return "\n".join(lines)


def detect_peaks(heatmap: Heatmap, threshold: float,
                 peak_radius: int = 1) -> list[Detection]:
    """Cells that are strict maxima of their (2r+1)^2 neighborhood and score
    at least `threshold`; sorted by descending score, ties row-major."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    data = heatmap.data
    h, w = data.shape
    found = []
    ys, xs = np.nonzero(data >= threshold)
    for y, x in zip(ys.tolist(), xs.tolist()):
        v = data[y, x]
        y0, y1 = max(y - peak_radius, 0), min(y + peak_radius + 1, h)
        x0, x1 = max(x - peak_radius, 0), min(x + peak_radius + 1, w)
        block = data[y0:y1, x0:x1]
        # strict max: the only cell in the window attaining the max value
        if v == block.max() and np.count_nonzero(block == v) == 1:
            found.append(Detection(GridCoord(x, y), float(v)))
    found.sort(key=lambda d: (-d.score, d.location.y, d.location.x))
    return found


def match(detections: list[Detection], truth, max_dist: float,
          cell_size: float = 1.0) -> MatchResult:
    """Greedy matching in detection-score order; each truth object is used
    at most once. Distances are Euclidean in cells; equidistant ties go to
    the earlier truth-list entry."""
    if max_dist <= 0:
        raise ValueError("max_dist must be > 0")
    used = [False] * len(truth)
    tp = 0
    dists = []
    for det in detections:
        best_i, best_d = -1, max_dist
        for i, obj in enumerate(truth):
            if used[i]:
                continue
            ox = obj.position[0] / cell_size - 0.5
            oy = obj.position[1] / cell_size - 0.5
            d = math.hypot(ox - det.location.x, oy - det.location.y)
            if d < best_d or (best_i == -1 and d == best_d):
                best_i, best_d = i, d
        if best_i >= 0:
            used[best_i] = True
            tp += 1
            dists.append(best_d)
    fp = len(detections) - tp
    fn = len(truth) - tp
    return MatchResult(tp, fp, fn, tuple(dists))


@dataclass(frozen=True)
class EvalConfig:
    peak_threshold: float = 0.3
    peak_radius: int = 1
    max_dist: float = 2.0


def _evaluate_heatmaps(heatmaps: list[Heatmap], frames: list[SimFrame],
                       cfg: EvalConfig, config_echo: dict) -> EvalReport:
    report = EvalReport([], [], [], config_echo)
    for hm, frame in zip(heatmaps, frames):
        dets = detect_peaks(hm, cfg.peak_threshold, cfg.peak_radius)
        res = match(dets, frame.truth, cfg.max_dist, hm.spec.cell_size)
        n_det = res.true_positives + res.false_positives
        n_truth = res.true_positives + res.false_negatives
        report.precisions.append(res.true_positives / n_det if n_det else 1.0)
        report.recalls.append(res.true_positives / n_truth if n_truth else 1.0)
        report.matched_distances.extend(res.matched_distances)
    return report


def compare_single_vs_fused(frames: list[SimFrame],
                            sampling_cfg: SamplingConfig,
                            geonet: GeoNetParams,
                            mode: MergeMode = Blend(0.5),
                            eval_cfg: EvalConfig = EvalConfig(),
                            ) -> tuple[EvalReport, EvalReport]:
    """Evaluate raw per-frame heatmaps vs fused heatmaps on one sequence.

    Recall is computed against ALL truth objects, including unobserved
    (dropped) ones, so temporal recovery shows up as a recall gain.
    """
    echo = {"peak_threshold": eval_cfg.peak_threshold,
            "peak_radius": eval_cfg.peak_radius,
            "max_dist": eval_cfg.max_dist}
    single = _evaluate_heatmaps([f.heatmap for f in frames], frames,
                                eval_cfg, dict(echo, pipeline="single"))
    fused_frames, _ = run_sequence(frames, sampling_cfg, geonet, mode)
    fused = _evaluate_heatmaps([f.heatmap for f in fused_frames], frames,
                               eval_cfg, dict(echo, pipeline="fused"))
    return single, fused
