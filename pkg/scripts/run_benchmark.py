#!/usr/bin/env python3
"""Run the full benchmark: every corpus image x mode x seed, then report.

Builds the corpus first if ``data/bench`` is missing, runs the sweep via
:func:`jigsawlab.bench.run_benchmark`, writes the JSON report, and prints
a per-mode summary table.
"""
import argparse
import json
import subprocess
import sys
from pathlib import Path

from jigsawlab.bench import DEFAULT_MODES, run_benchmark


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", default="data/bench", metavar="DIR")
    parser.add_argument("--out", default="data/bench_report.json", metavar="FILE")
    parser.add_argument("--modes", default=",".join(DEFAULT_MODES))
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--log-dir", default=None, metavar="DIR")
    args = parser.parse_args()

    manifest = Path(args.data) / "manifest.json"
    if not manifest.exists():
        print(f"{manifest} missing; building the corpus first", file=sys.stderr)
        build = Path(__file__).with_name("make_dataset.py")
        subprocess.run([sys.executable, str(build), "--out", args.data], check=True)

    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    seeds = tuple(int(s) for s in args.seeds.split(","))

    def on_run(row: dict) -> None:
        print(f"{Path(row['image']).stem:22s} {row['mode']:10s} seed={row['seed']} "
              f"direct={row['direct']:.4f} neighbor={row['neighbor']:.4f} "
              f"{row['seconds']:6.1f}s")

    report = run_benchmark(manifest, modes=modes, seeds=seeds,
                           workers=args.workers, log_dir=args.log_dir,
                           on_run=on_run)
    Path(args.out).write_text(json.dumps(report, indent=2), encoding="utf-8")

    print()
    for mode, agg in report["summary"].items():
        print(f"{mode:10s} direct={agg['direct_mean']:.4f} "
              f"neighbor={agg['neighbor_mean']:.4f} "
              f"mean {agg['seconds_mean']:.1f}s/run")
    print(f"report written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
