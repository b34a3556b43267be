"""Command-line entry point.

    suit simulate --config cfg.json [--out dir] [--seed n]
    suit train    --config cfg.json [--out dir] [--seed n]
    suit eval     --config cfg.json [--out dir] [--seed n]
    suit bench    --config cfg.json [--out dir] [--seed n]

Exit codes: 0 ok, 2 config error, 3 input mismatch. SUIT_THREADS caps the
numba worker count when the numba backend is active.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import _kernels, container
from .bench import bench_csv, bench_svg, run_bench
from .config import ConfigError, RunConfig, config_echo, load_run_config
from .evaluate import compare_single_vs_fused
from .fuse import FusionStepReport, run_sequence
from .geonet import GeoNetParams, TrainingDiverged, make_label, train
from .sample import build_significant_set, patch_cell_count
from .sim import simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISMATCH = 3


def _apply_thread_cap():
    cap = os.environ.get("SUIT_THREADS")
    if cap and _kernels.active_backend() == "numba":
        import numba
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


def _write_echo(out_dir: Path, cfg: RunConfig):
    echo = config_echo(cfg)
    (out_dir / "config_echo.json").write_text(
        json.dumps(echo, indent=2, sort_keys=True) + "\n")


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> int:
    frames = simulate(cfg.sim)
    path = out_dir / "frames.bin"
    size = container.save_frames(path, frames)
    _write_echo(out_dir, cfg)
    spec = cfg.sim.spec
    print(f"wrote {path} ({size} bytes): {len(frames)} frames, "
          f"{spec.height}x{spec.width}x{spec.channels} cells "
          f"@ {spec.cell_size} m, {cfg.sim.object_count} objects")
    return EXIT_OK


def build_training_set(frames, cfg: RunConfig):
    """(patches, labels) over every significant sample of every frame."""
    patches, labels = [], []
    for frame in frames:
        sset = build_significant_set(frame, cfg.sampling)
        for s in sset.samples:
            lbl = make_label(s, frame.truth, cfg.sim.frame_gap, cfg.window,
                             cfg.sim.spec.cell_size, cfg.assign_radius)
            patches.append(s.patch.values.ravel())
            labels.append(lbl.cell_index)
    return np.array(patches), np.array(labels, dtype=np.int64)


def cmd_train(cfg: RunConfig, out_dir: Path, frames_path: Path | None) -> int:
    frames = container.load_frames(frames_path) if frames_path \
        else simulate(cfg.sim)
    patches, labels = build_training_set(frames, cfg)
    if len(patches) == 0:
        print("error: no training samples (empty heatmaps?)", file=sys.stderr)
        return EXIT_MISMATCH
    in_dim = patch_cell_count(cfg.sampling) * cfg.sim.spec.channels
    if patches.shape[1] != in_dim:
        print(f"error: patch width {patches.shape[1]} does not match "
              f"sampling config ({in_dim})", file=sys.stderr)
        return EXIT_MISMATCH
    params = GeoNetParams.init(in_dim, cfg.window, cfg.hidden,
                               seed=cfg.train.seed)
    try:
        trained, trace = train(params, patches, labels, cfg.train)
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    container.save_geonet(out_dir / "geonet.bin", trained)
    lines = ["step,loss,argmax_accuracy"]
    lines += [f"{s},{l:.6f},{a:.6f}"
              for s, l, a in zip(trace.steps, trace.losses, trace.accuracies)]
    (out_dir / "train_trace.csv").write_text("\n".join(lines) + "\n")
    _write_echo(out_dir, cfg)
    print(f"trained on {len(patches)} samples; final loss "
          f"{trace.losses[-1]:.4f}, final batch accuracy "
          f"{trace.accuracies[-1]:.3f}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out_dir: Path, frames_path: Path | None,
             params_path: Path | None) -> int:
    frames = container.load_frames(frames_path) if frames_path \
        else simulate(cfg.sim)
    in_dim = patch_cell_count(cfg.sampling) * frames[0].heatmap.spec.channels
    if params_path:
        geonet = container.load_geonet(params_path)
        if geonet.in_dim != in_dim or geonet.window != cfg.window:
            print(f"error: geonet params (in={geonet.in_dim}, "
                  f"window={geonet.window.height}) do not match config "
                  f"(in={in_dim}, window={cfg.window.height})", file=sys.stderr)
            return EXIT_MISMATCH
    else:
        geonet = GeoNetParams.init(in_dim, cfg.window, cfg.hidden,
                                   seed=cfg.train.seed)

    _, reports = run_sequence(frames, cfg.sampling, geonet, cfg.mode)
    fusion_lines = [FusionStepReport.CSV_HEADER]
    fusion_lines += [r.csv_row() for r in reports]
    (out_dir / "fusion_report.csv").write_text("\n".join(fusion_lines) + "\n")

    single, fused = compare_single_vs_fused(frames, cfg.sampling, geonet,
                                            cfg.mode, cfg.eval)
    (out_dir / "eval_single.csv").write_text("\n".join(single.csv_rows()) + "\n")
    (out_dir / "eval_fused.csv").write_text("\n".join(fused.csv_rows()) + "\n")
    summary = "\n".join([single.summary_text("single-frame"),
                         fused.summary_text("fused"),
                         f"recall delta: "
                         f"{fused.mean_recall - single.mean_recall:+.4f}"])
    (out_dir / "summary.txt").write_text(summary + "\n")
    _write_echo(out_dir, cfg)
    print(summary)
    return EXIT_OK


def cmd_bench(cfg: RunConfig, out_dir: Path) -> int:
    rows, backend_lines = run_bench(cfg)
    (out_dir / "bench.csv").write_text(bench_csv(rows))
    (out_dir / "backend_compare.csv").write_text("\n".join(backend_lines) + "\n")
    if cfg.bench.svg:
        (out_dir / "bench.svg").write_text(bench_svg(rows))
    _write_echo(out_dir, cfg)
    print(f"wrote {out_dir / 'bench.csv'} ({len(rows)} rows, "
          f"backend={_kernels.active_backend()})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="suit",
        description="significance-guided sparse temporal fusion pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "train", "eval", "bench"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override sim.seed")
        if name in ("train", "eval"):
            p.add_argument("--frames", default=None,
                           help="frames.bin from `suit simulate` "
                                "(default: simulate in-process)")
        if name == "eval":
            p.add_argument("--params", default=None,
                           help="geonet.bin from `suit train` "
                                "(default: untrained net)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, seed_override=args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    warning = cfg.clamp_window_warning()
    if warning:
        print(f"warning: {warning}", file=sys.stderr)
    _apply_thread_cap()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.command == "simulate":
        return cmd_simulate(cfg, out_dir)
    if args.command == "train":
        return cmd_train(cfg, out_dir,
                         Path(args.frames) if args.frames else None)
    if args.command == "eval":
        return cmd_eval(cfg, out_dir,
                        Path(args.frames) if args.frames else None,
                        Path(args.params) if args.params else None)
    if args.command == "bench":
        return cmd_bench(cfg, out_dir)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
