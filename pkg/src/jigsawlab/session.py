"""End-to-end solve sessions with an auditable event log.

A session loads an image, slices and scrambles it, builds the seam score
table, runs the supervised assembly loop, and scores the result against
the scramble's ground truth.  Every consequential step is appended to a
JSON-lines log: a header with the full configuration and input digests,
one record per committed/declined merge, gate decision, deletion, crop
choice, and gap fill, then a footer with the final placement and its
metrics.  For a fixed configuration the header, every event record, and
the footer are byte-identical from run to run; wall-clock timing is
appended after the footer so it can never perturb them.

A logged session can be replayed: the recorded gate outcomes, deletions,
and crop override are fed back into a fresh run, which must reproduce
the recorded footer exactly.
"""
from __future__ import annotations

import hashlib
import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .compatibility import build_table
from .core import (Piece, Placement, load_image, pieces_digest, scramble,
                   slice_image)
from .metrics import direct_fraction, neighbor_fraction
from .reconstruction import Assembly
from .supervision import (Coordinator, GatePolicy, NullSupervisor,
                          OracleSupervisor, Supervisor)
from .texture import calibrate_threshold, entropy_table
from .wire import DeletePieces, MergeResponse, TrimResponse

LOG_FORMAT = 1

MODES = ("autonomous", "oracle", "gate-only", "live", "replay")

#: engine events too fine-grained for the persistent log
_UNLOGGED = {"edge-popped", "edge-discarded", "merge-tentative"}


class ReplayMismatch(RuntimeError):
    """A replayed run diverged from its recording."""


@dataclass
class SessionConfig:
    image: str
    piece_px: int = 28
    seed: int = 0
    mode: str = "autonomous"
    threshold: Optional[float] = None   # None: calibrate from this puzzle
    calibrate_fraction: float = 0.1
    timeout_s: float = 0.0
    workers: int = 1
    progress_every: int = 0

    def session_id(self) -> str:
        return f"{Path(self.image).stem}-s{self.seed}-{self.mode}"


@dataclass
class SessionResult:
    config: SessionConfig
    session_id: str
    placement: Placement
    truth: Placement
    pieces: list[Piece]
    direct: float
    neighbor: float
    threshold: float
    commits: int
    forced_merges: int
    steps: int
    seconds: float
    log_lines: list[str] = field(repr=False, default_factory=list)
    log_path: Optional[str] = None

    @property
    def footer_line(self) -> str:
        for line in reversed(self.log_lines):
            if json.loads(line)["type"] == "footer":
                return line
        raise ValueError("log has no footer")


class SessionLog:
    """Appends sorted-key JSON lines, in memory and optionally to a file."""

    def __init__(self, path=None):
        self.lines: list[str] = []
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        self.lines.append(line)
        if self._fh is not None:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _resolve_supervisor(config: SessionConfig,
                        truth: Placement) -> Supervisor:
    if config.mode == "autonomous":
        return NullSupervisor()
    if config.mode == "oracle":
        return OracleSupervisor(truth)
    if config.mode == "gate-only":
        return OracleSupervisor(truth, gate_only=True)
    raise ValueError(f"mode {config.mode!r} needs an explicit supervisor")


def run_session(config: SessionConfig, supervisor: Supervisor | None = None,
                log_path=None) -> SessionResult:
    """Solve one puzzle under the configured supervision mode."""
    if config.mode not in MODES:
        raise ValueError(f"unknown mode {config.mode!r}")
    image_bytes = Path(config.image).read_bytes()
    img = load_image(config.image)
    spec, base_pieces = slice_image(img, config.piece_px)
    pieces, truth = scramble(spec, base_pieces, config.seed)
    entropies = entropy_table(pieces)
    threshold = config.threshold
    if threshold is None:
        threshold = calibrate_threshold(entropies[:, 0],
                                        config.calibrate_fraction)
    if supervisor is None:
        supervisor = _resolve_supervisor(config, truth)

    log = SessionLog(log_path)
    log.write({
        "type": "header", "format": LOG_FORMAT,
        "session_id": config.session_id(),
        "image": str(config.image), "image_sha256":
            hashlib.sha256(image_bytes).hexdigest(),
        "pieces_digest": pieces_digest(pieces),
        "rows": spec.rows, "cols": spec.cols,
        "piece_px": config.piece_px, "seed": config.seed,
        "mode": config.mode, "threshold": threshold,
        "calibrate_fraction": config.calibrate_fraction,
        "timeout_s": config.timeout_s, "workers": config.workers,
    })

    def sink(event: dict) -> None:
        if event["type"] not in _UNLOGGED:
            log.write(event)

    t0 = time.perf_counter()
    table = build_table(pieces, workers=config.workers)
    assembly = Assembly(table, on_event=sink)
    coordinator = Coordinator(
        assembly, spec, entropies,
        GatePolicy(threshold=threshold, timeout_s=config.timeout_s),
        supervisor, pieces=pieces, emit=sink,
        progress_every=config.progress_every)
    placement = coordinator.run()
    seconds = time.perf_counter() - t0

    direct = direct_fraction(placement, truth)
    neighbor = neighbor_fraction(placement, truth)
    log.write({
        "type": "footer",
        "placement": placement.to_json_dict(),
        "direct": direct, "neighbor": neighbor,
        "commits": assembly.commits, "forced_merges": assembly.forced_merges,
        "steps": assembly.steps,
    })
    log.write({"type": "wallclock", "seconds": round(seconds, 3)})
    log.close()
    return SessionResult(
        config=config, session_id=config.session_id(), placement=placement,
        truth=truth, pieces=pieces, direct=direct, neighbor=neighbor,
        threshold=threshold, commits=assembly.commits,
        forced_merges=assembly.forced_merges, steps=assembly.steps,
        seconds=seconds, log_lines=log.lines,
        log_path=str(log_path) if log_path else None)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

class ReplaySupervisor(Supervisor):
    """Feeds a recorded session's decisions back into a fresh run.

    Gate outcomes are consumed in order and checked against the live
    request; deletions are re-issued at their recorded step; the final
    crop frame is re-imposed when the recording overrode it.
    """

    def __init__(self, events: list[dict]):
        self._gates = deque(e for e in events if e["type"] == "gate-merge")
        self._removals = deque(e for e in events
                               if e["type"] == "pieces-removed")
        self._trim = next((e for e in events if e["type"] == "trim-final"),
                          None)

    def decide_merge(self, request) -> Optional[MergeResponse]:
        if not self._gates:
            raise ReplayMismatch(
                f"gated merge for pieces ({request.piece_i}, {request.piece_j})"
                " has no recorded decision")
        rec = self._gates.popleft()
        live = [request.piece_i, request.piece_j, request.rot_i,
                request.rot_j]
        if rec["config"] != live:
            raise ReplayMismatch(
                f"gate order diverged: recorded {rec['config']}, live {live}")
        if rec["outcome"] == "timeout":
            return None
        return MergeResponse(request_id=request.request_id,
                             approve=rec["outcome"] == "approve")

    def poll_deletions(self, step: int) -> list[DeletePieces]:
        if self._removals and self._removals[0]["step"] < step:
            raise ReplayMismatch(
                f"deletion recorded at step {self._removals[0]['step']} "
                f"was never applied (now at step {step})")
        out = []
        while self._removals and self._removals[0]["step"] == step:
            out.append(DeletePieces(
                ids=tuple(self._removals.popleft()["ids"])))
        return out

    def decide_trim(self, proposal, forest) -> Optional[TrimResponse]:
        rec = self._trim
        if rec is None or rec["source"] != "supervisor":
            return None
        return TrimResponse(request_id=proposal.request_id, approve=False,
                            frame=rec["frame"])

    def verify_consumed(self) -> None:
        if self._gates or self._removals:
            raise ReplayMismatch(
                f"{len(self._gates)} gate decisions and "
                f"{len(self._removals)} deletions were never replayed")


@dataclass
class ReplayReport:
    result: SessionResult
    recorded_footer: dict
    matches: bool


def load_log(source) -> list[dict]:
    """Parse a JSON-lines session log from a path or a list of lines."""
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = list(source)
    return [json.loads(line) for line in lines if line.strip()]


def replay_session(source, image: str | None = None,
                   workers: int | None = None,
                   log_path=None) -> ReplayReport:
    """Re-run a recorded session and compare against its footer."""
    events = load_log(source)
    if not events or events[0].get("type") != "header":
        raise ValueError("log does not start with a header record")
    header = events[0]
    footer = next((e for e in events if e.get("type") == "footer"), None)
    if footer is None:
        raise ValueError("log has no footer record")
    config = SessionConfig(
        image=image or header["image"], piece_px=header["piece_px"],
        seed=header["seed"], mode="replay", threshold=header["threshold"],
        calibrate_fraction=header["calibrate_fraction"], timeout_s=0.0,
        workers=workers if workers is not None else header["workers"])
    supervisor = ReplaySupervisor(events)
    result = run_session(config, supervisor=supervisor, log_path=log_path)
    supervisor.verify_consumed()
    matches = (result.placement.to_json_dict() == footer["placement"]
               and result.direct == footer["direct"]
               and result.neighbor == footer["neighbor"])
    return ReplayReport(result=result, recorded_footer=footer,
                        matches=matches)
