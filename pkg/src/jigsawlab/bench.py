"""Batch runs over an image manifest, with per-mode summaries.

The manifest is a JSON file::

    {"piece_px": 28, "images": ["photos/a.png", {"file": "photos/b.png"}]}

Relative image paths resolve against the manifest's directory.  Every
(image, mode, seed) combination is solved with ``run_session`` and the
results are collected into a report dict that is JSON-ready.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Optional, Sequence

from .session import SessionConfig, run_session

DEFAULT_MODES = ("autonomous", "gate-only", "oracle")


def load_manifest(path) -> tuple[int, list[str]]:
    """Returns (piece_px, image paths) from a manifest file."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    piece_px = int(data.get("piece_px", 28))
    images = []
    for entry in data["images"]:
        name = entry["file"] if isinstance(entry, dict) else entry
        p = Path(name)
        if not p.is_absolute():
            p = path.parent / p
        images.append(str(p))
    if not images:
        raise ValueError(f"manifest {path} lists no images")
    return piece_px, images


def run_benchmark(manifest, modes: Sequence[str] = DEFAULT_MODES,
                  seeds: Sequence[int] = (0, 1, 2),
                  threshold: Optional[float] = None,
                  calibrate_fraction: float = 0.1,
                  timeout_s: float = 0.0,
                  workers: int = 1,
                  log_dir=None,
                  on_run: Callable[[dict], None] | None = None) -> dict:
    """Solve every image under every mode and seed; returns the report."""
    piece_px, images = load_manifest(manifest)
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
    runs = []
    for image in images:
        for mode in modes:
            for seed in seeds:
                config = SessionConfig(
                    image=image, piece_px=piece_px, seed=seed, mode=mode,
                    threshold=threshold,
                    calibrate_fraction=calibrate_fraction,
                    timeout_s=timeout_s, workers=workers)
                log_path = None
                if log_dir is not None:
                    log_path = log_dir / f"{Path(image).stem}-{mode}-s{seed}.jsonl"
                result = run_session(config, log_path=log_path)
                row = {
                    "image": Path(image).name, "mode": mode, "seed": seed,
                    "direct": result.direct, "neighbor": result.neighbor,
                    "threshold": result.threshold,
                    "commits": result.commits,
                    "forced_merges": result.forced_merges,
                    "seconds": round(result.seconds, 3),
                }
                runs.append(row)
                if on_run is not None:
                    on_run(row)
    summary = {}
    for mode in modes:
        rows = [r for r in runs if r["mode"] == mode]
        per_image = {}
        for r in rows:
            per_image.setdefault(r["image"], []).append(r)
        summary[mode] = {
            "direct_mean": sum(r["direct"] for r in rows) / len(rows),
            "neighbor_mean": sum(r["neighbor"] for r in rows) / len(rows),
            "seconds_mean": sum(r["seconds"] for r in rows) / len(rows),
            "images": {
                name: {
                    "direct_mean": sum(r["direct"] for r in g) / len(g),
                    "neighbor_mean": sum(r["neighbor"] for r in g) / len(g),
                } for name, g in sorted(per_image.items())
            },
        }
    return {"piece_px": piece_px, "modes": list(modes),
            "seeds": list(seeds), "runs": runs, "summary": summary}
