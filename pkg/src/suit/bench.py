"""Memory/latency benchmark harness.

Sweeps sequence length x grid size, recording per-frame sparse bank bytes,
hypothetical dense-history bytes, and stage latencies (medians of repeated
runs on a monotonic clock). Also compares the numba warp kernel against the
pure-numpy fallback on a representative instance.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .config import RunConfig
from .fuse import SparseBank, ego_align, warp
from .geonet import GeoNetParams
from .grid import GridSpec
from .sample import build_significant_set, patch_cell_count
from .sim import SimConfig, simulate

BENCH_CSV_HEADER = "grid,frames,sparse_bytes,dense_bytes,ratio,warp_ms,sample_ms"
BACKEND_CSV_HEADER = "grid,backend,warp_ms"


@dataclass
class BenchRow:
    grid: int
    frames: int
    sparse_bytes: int
    dense_bytes: int
    ratio: float
    warp_ms: float
    sample_ms: float

    def csv_row(self) -> str:
        return (f"{self.grid},{self.frames},{self.sparse_bytes},"
                f"{self.dense_bytes},{self.ratio:.6f},"
                f"{self.warp_ms:.3f},{self.sample_ms:.3f}")


def _median_ms(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def _bench_instance(cfg: RunConfig, grid: int):
    """Two simulated frames plus a GeoNet sized for the sampling config."""
    spec = GridSpec(grid, grid, cfg.sim.spec.cell_size, cfg.sim.spec.channels)
    sim_cfg = replace(cfg.sim, spec=spec, frame_count=2)
    frames = simulate(sim_cfg)
    in_dim = patch_cell_count(cfg.sampling) * spec.channels
    geonet = GeoNetParams.init(in_dim, cfg.window, cfg.hidden, seed=cfg.sim.seed)
    return frames, geonet


def run_bench(cfg: RunConfig) -> tuple[list[BenchRow], list[str]]:
    """Returns bench rows and backend-comparison CSV lines."""
    cells = patch_cell_count(cfg.sampling)
    rows = []
    backend_lines = [BACKEND_CSV_HEADER]
    for grid in cfg.bench.grids:
        frames, geonet = _bench_instance(cfg, grid)
        prev, cur = frames[0], frames[1]

        sset = build_significant_set(prev, cfg.sampling)
        bank = SparseBank(set=sset, geonet=geonet)
        aligned = ego_align(bank, prev.ego_pose, cur.ego_pose)

        sample_ms = _median_ms(
            lambda: build_significant_set(prev, cfg.sampling), cfg.bench.repeats)
        warp_ms = _median_ms(lambda: warp(aligned), cfg.bench.repeats)

        # capacity bytes: the serialized feature payload never exceeds this,
        # and it is what the flat-memory claim is stated against
        sparse_bytes = cfg.sampling.top_k * cells * cfg.sim.spec.channels * 8
        dense_frame_bytes = grid * grid * cfg.sim.spec.channels * 8
        ratio = sparse_bytes / dense_frame_bytes
        for length in cfg.bench.lengths:
            rows.append(BenchRow(
                grid=grid, frames=length,
                sparse_bytes=sparse_bytes,
                dense_bytes=length * dense_frame_bytes,
                ratio=ratio, warp_ms=warp_ms, sample_ms=sample_ms))

        for backend in ("numpy", "numba"):
            if backend == "numba" and _kernels.active_backend() != "numba":
                continue
            ms = _median_ms(lambda: warp(aligned, backend=backend),
                            cfg.bench.repeats)
            backend_lines.append(f"{grid},{backend},{ms:.3f}")
    return rows, backend_lines


def bench_csv(rows: list[BenchRow]) -> str:
    return "\n".join([BENCH_CSV_HEADER] + [r.csv_row() for r in rows]) + "\n"


def bench_svg(rows: list[BenchRow], width: int = 640, height: int = 400) -> str:
    """Dependency-free line chart: memory vs sequence length, per grid size."""
    grids = sorted({r.grid for r in rows})
    lengths = sorted({r.frames for r in rows})
    max_y = max(r.dense_bytes for r in rows)
    pad = 50

    def xpos(length):
        i = lengths.index(length)
        return pad + i * (width - 2 * pad) / max(len(lengths) - 1, 1)

    def ypos(v):
        return height - pad - (v / max_y) * (height - 2 * pad)

    colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}">',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
             f'y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
             f'stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 12}" font-size="12" '
             f'text-anchor="middle">sequence length (frames)</text>',
             f'<text x="14" y="{height / 2}" font-size="12" '
             f'transform="rotate(-90 14 {height / 2})" '
             f'text-anchor="middle">bytes</text>']
    for gi, grid in enumerate(grids):
        color = colors[gi % len(colors)]
        for kind, dash in (("dense_bytes", ""), ("sparse_bytes", "4,3")):
            pts = " ".join(
                f"{xpos(r.frames):.1f},{ypos(getattr(r, kind)):.1f}"
                for r in sorted(rows, key=lambda r: r.frames)
                if r.grid == grid)
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="{color}"{dash_attr}/>')
        parts.append(f'<text x="{width - pad + 4}" '
                     f'y="{pad + 14 * gi + 10}" font-size="11" '
                     f'fill="{color}">{grid}^2</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
