"""Command-line front end: solve, bench, replay, calibrate."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bench import DEFAULT_MODES, run_benchmark
from .core import load_image, render_placement, save_png, slice_image
from .session import (ReplayMismatch, SessionConfig, replay_session,
                      run_session)
from .texture import calibrate_threshold, entropy_table

DEFAULT_LISTEN = "127.0.0.1:8765"
LISTEN_ENV = "JIGSAWLAB_LISTEN"


def _add_solve_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pieces-px", type=int, default=28, metavar="N",
                   help="piece side length in pixels (default 28)")
    p.add_argument("--seed", type=int, default=0,
                   help="scramble seed (default 0)")
    p.add_argument("--threshold", type=float, default=None, metavar="BITS",
                   help="entropy gate threshold; overrides calibration")
    p.add_argument("--calibrate-frac", type=float, default=0.1, metavar="F",
                   help="gate threshold quantile when not set explicitly")
    p.add_argument("--timeout-ms", type=int, default=None, metavar="MS",
                   help="supervisor answer deadline (default 30000 live, 0 otherwise)")
    p.add_argument("--workers", type=int, default=1,
                   help="threads for the score table build")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jigsawlab",
        description="Square-piece jigsaw solver with supervised assembly.")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one scrambled image")
    solve.add_argument("image", help="path to the source image")
    solve.add_argument("--mode", default="autonomous",
                       choices=("autonomous", "oracle", "gate-only", "live"),
                       help="supervision mode (default autonomous)")
    _add_solve_options(solve)
    solve.add_argument("--out", metavar="DIR",
                       help="write solved.png, placement.json, session.jsonl here")
    solve.add_argument("--log", metavar="PATH",
                       help="write the session log to this file")
    solve.add_argument("--listen", metavar="HOST:PORT",
                       help=f"live mode bind address (default ${LISTEN_ENV} "
                            f"or {DEFAULT_LISTEN})")
    solve.add_argument("--progress-every", type=int, default=None,
                       metavar="K", help="progress update cadence in commits")

    bench = sub.add_parser("bench", help="run a manifest of images")
    bench.add_argument("manifest", help="JSON manifest of images")
    bench.add_argument("--modes", default=",".join(DEFAULT_MODES),
                       help="comma-separated modes (default %(default)s)")
    bench.add_argument("--seeds", default="0,1,2",
                       help="comma-separated seeds (default %(default)s)")
    bench.add_argument("--threshold", type=float, default=None)
    bench.add_argument("--calibrate-frac", type=float, default=0.1)
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--out", metavar="PATH", help="write the report JSON here")
    bench.add_argument("--log-dir", metavar="DIR",
                       help="write one session log per run here")

    replay = sub.add_parser("replay", help="re-run a recorded session log")
    replay.add_argument("log", help="JSON-lines session log")
    replay.add_argument("--image", help="override the recorded image path")
    replay.add_argument("--workers", type=int, default=None)

    calibrate = sub.add_parser(
        "calibrate", help="report entropy gate thresholds for a corpus")
    calibrate.add_argument("images", nargs="+", help="image paths")
    calibrate.add_argument("--pieces-px", type=int, default=28)
    calibrate.add_argument("--frac", type=float, default=0.1,
                           help="quantile to report (default 0.1)")
    return parser


def _cmd_solve(args) -> int:
    timeout_ms = args.timeout_ms
    if timeout_ms is None:
        timeout_ms = 30_000 if args.mode == "live" else 0
    progress_every = args.progress_every
    if progress_every is None:
        progress_every = 5 if args.mode == "live" else 0
    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else None
    if log_path is None and out_dir is not None:
        log_path = out_dir / "session.jsonl"
    config = SessionConfig(
        image=args.image, piece_px=args.pieces_px, seed=args.seed,
        mode=args.mode, threshold=args.threshold,
        calibrate_fraction=args.calibrate_frac,
        timeout_s=timeout_ms / 1000.0, workers=args.workers,
        progress_every=progress_every)
    if args.mode == "live":
        from .service import serve  # optional server deps stay lazy

        listen = args.listen or os.environ.get(LISTEN_ENV, DEFAULT_LISTEN)
        print(f"serving live session on ws://{listen}/ws "
              "(starts when a supervisor connects)")
        result = serve(config, listen, log_path=log_path)
        if result is None:
            print("no session was run")
            return 1
    else:
        result = run_session(config, log_path=log_path)
    print(f"direct={result.direct:.4f} neighbor={result.neighbor:.4f} "
          f"commits={result.commits} threshold={result.threshold:.4f} "
          f"seconds={result.seconds:.2f}")
    if out_dir is not None:
        (out_dir / "placement.json").write_text(result.placement.dumps(),
                                                encoding="utf-8")
        save_png(out_dir / "solved.png",
                 render_placement(result.placement, result.pieces))
        print(f"artifacts written to {out_dir}")
    return 0


def _cmd_bench(args) -> int:
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    report = run_benchmark(
        args.manifest, modes=modes, seeds=seeds, threshold=args.threshold,
        calibrate_fraction=args.calibrate_frac, workers=args.workers,
        log_dir=args.log_dir,
        on_run=lambda row: print(
            f"{row['image']:<28} {row['mode']:<11} seed={row['seed']} "
            f"direct={row['direct']:.4f} neighbor={row['neighbor']:.4f} "
            f"({row['seconds']:.1f}s)"))
    print()
    for mode, agg in report["summary"].items():
        print(f"{mode:<11} direct_mean={agg['direct_mean']:.4f} "
              f"neighbor_mean={agg['neighbor_mean']:.4f} "
              f"seconds_mean={agg['seconds_mean']:.1f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True),
                                  encoding="utf-8")
        print(f"report written to {args.out}")
    return 0


def _cmd_replay(args) -> int:
    try:
        report = replay_session(args.log, image=args.image,
                                workers=args.workers)
    except (ReplayMismatch, ValueError) as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return 2
    recorded = report.recorded_footer
    print(f"recorded: direct={recorded['direct']:.4f} "
          f"neighbor={recorded['neighbor']:.4f}")
    print(f"replayed: direct={report.result.direct:.4f} "
          f"neighbor={report.result.neighbor:.4f}")
    if not report.matches:
        print("replay DIVERGED from the recorded footer", file=sys.stderr)
        return 2
    print("replay matches the recorded footer")
    return 0


def _cmd_calibrate(args) -> int:
    all_entropies = []
    for image in args.images:
        _, pieces = slice_image(load_image(image), args.pieces_px)
        entropies = entropy_table(pieces)[:, 0]
        all_entropies.extend(entropies.tolist())
        print(f"{image}: q{args.frac:g}="
              f"{calibrate_threshold(entropies, args.frac):.4f} "
              f"(n={len(entropies)})")
    combined = calibrate_threshold(all_entropies, args.frac)
    print(f"combined threshold: {combined:.4f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"solve": _cmd_solve, "bench": _cmd_bench,
                "replay": _cmd_replay, "calibrate": _cmd_calibrate}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
