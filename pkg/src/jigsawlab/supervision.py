"""Supervised assembly: route low-legibility merges to a reviewer.

The coordinator drives the greedy merge loop and, for each tentative
merge, checks an attention gate: if the less legible of the two joined
pieces falls below an entropy threshold (or the candidate was previously
committed and then broken by a piece deletion), the merge is sent to the
session's supervisor for approval.  Supervisors can also delete placed
pieces between steps and adjust the final crop frame.

Three supervisors live here: ``NullSupervisor`` never answers (every
request times out and proceeds), ``OracleSupervisor`` answers from the
ground-truth placement, and sessions served over a socket plug in their
own implementation of the same interface.
"""
from __future__ import annotations

import base64
import time
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional

from .core import (EAST, Piece, Placement, PuzzleSpec, encode_png,
                   render_cells, rotate_direction)
from .metrics import frame_rotations, rotate_cell
from .reconstruction import (Assembly, Forest, MergeCandidate, TentativeMerge,
                             TrimFrame, rotate_local)
from .wire import (DeletePieces, MergeRequest, MergeResponse, Progress,
                   TrimProposal, TrimResponse)


@dataclass(frozen=True)
class GatePolicy:
    """When to stop and ask, and how long to wait for an answer."""

    threshold: float
    timeout_s: float = 0.0
    #: re-ask for candidates whose earlier commit was undone by a deletion
    review_revived: bool = True


class Supervisor:
    """Decision source for gated merges, deletions, and the crop frame.

    The default implementation never intervenes: decisions time out (the
    coordinator then proceeds on its own) and no deletions are issued.
    """

    #: whether requests should carry rendered board previews
    needs_previews = False

    def decide_merge(self, request: MergeRequest) -> Optional[MergeResponse]:
        return None

    def decide_trim(self, proposal: TrimProposal,
                    forest: Forest) -> Optional[TrimResponse]:
        return None

    def poll_deletions(self, step: int) -> list[DeletePieces]:
        return []

    def inspect_commit(self, forest: Forest, root: int) -> None:
        """Called after every committed merge with the merged cluster."""

    def notify(self, event: Progress) -> None:
        """Fire-and-forget progress reporting."""


class NullSupervisor(Supervisor):
    """Fully autonomous: every gated request proceeds by timeout."""


def config_matches_truth(truth: dict[int, tuple[int, int, int]],
                         i: int, j: int, rot_i: int, rot_j: int) -> bool:
    """Whether 'j east of i' at these display rotations holds in the truth.

    Spinning the local configuration so that piece i lands at its true
    rotation must put piece j at its true rotation and true cell.
    """
    tr_i, tc_i, trot_i = truth[i]
    tr_j, tc_j, trot_j = truth[j]
    g = (trot_i - rot_i) % 4
    if trot_j != (rot_j + g) % 4:
        return False
    dr, dc = rotate_direction(EAST, g)
    return (tr_j, tc_j) == (tr_i + dr, tc_i + dc)


def cluster_alignment_votes(forest: Forest, root: int,
                            truth: dict[int, tuple[int, int, int]],
                            ) -> dict[tuple, list[int]]:
    """Group a cluster's pieces by the rigid motion that would fix them.

    Each piece votes for the unique (turns, shift) that carries its
    current cluster-local pose onto its true pose.  A coherent cluster
    votes unanimously; pieces off the consensus are misplaced.
    """
    votes: dict[tuple, list[int]] = {}
    for pid in forest.members(root):
        tr, tc, trot = truth[pid]
        t = (trot - forest.rot[pid]) % 4
        rr, cc = rotate_local(forest.pos[pid], t)
        key = (t, tr - rr, tc - cc)
        votes.setdefault(key, []).append(pid)
    return votes


def best_truth_frame(forest: Forest, truth: dict[int, tuple[int, int, int]],
                     rows: int, cols: int) -> tuple[TrimFrame, int]:
    """Crop frame maximizing pieces that end up exactly right.

    Considers both frame orientations and every placement-preserving
    global rotation of the resulting board; returns the best frame and
    the number of pieces it gets right.  Each piece determines, per
    orientation and compatible global rotation, the single frame origin
    under which it would score; the most-voted origin wins.
    """
    if forest.root_count != 1:
        raise ValueError("crop search needs a single assembled cluster")
    root = forest.roots()[0]
    spins = frame_rotations(rows, cols)
    votes: Counter[tuple] = Counter()
    for pid in forest.members(root):
        r, c = forest.pos[pid]
        rho = forest.rot[pid]
        tr, tc, trot = truth[pid]
        for swap in ((0,) if rows == cols else (0, 1)):
            g = (trot - rho - swap) % 4
            if g not in spins:
                continue
            ir, ic = rotate_cell(tr, tc, rows, cols, (4 - g) % 4)
            if swap:
                # board cell (ir, ic) came from (rows-1-(c-left), r-top)
                top, left = r - ic, ir - (rows - 1) + c
            else:
                top, left = r - ir, c - ic
            votes[(swap, g, top, left)] += 1
    if not votes:
        # nothing can be placed correctly; fall back to a degenerate frame
        return (TrimFrame(0, 0, rows, cols,
                          "landscape" if cols >= rows else "portrait"), 0)
    count, key = max((n, tuple(-x for x in k)) for k, n in votes.items())
    swap, g, top, left = (-x for x in key)
    h, w = (cols, rows) if swap else (rows, cols)
    frame = TrimFrame(top=top, left=left, height=h, width=w,
                      orientation="landscape" if w >= h else "portrait")
    return frame, count


def truth_frame_score(forest: Forest, truth: dict[int, tuple[int, int, int]],
                      rows: int, cols: int, frame: TrimFrame) -> int:
    """How many pieces the given crop frame would place exactly right."""
    if forest.root_count != 1:
        raise ValueError("crop scoring needs a single assembled cluster")
    root = forest.roots()[0]
    swap = (frame.height, frame.width) != (rows, cols)
    best = 0
    for g in frame_rotations(rows, cols):
        hits = 0
        for pid in forest.members(root):
            r, c = forest.pos[pid]
            if not frame.contains((r, c)):
                continue
            rho = forest.rot[pid]
            br, bc = r - frame.top, c - frame.left
            if swap:
                br, bc, rho = frame.width - 1 - bc, br, (rho + 1) % 4
            gr, gc = rotate_cell(br, bc, rows, cols, g)
            if truth[pid] == (gr, gc, (rho + g) % 4):
                hits += 1
        best = max(best, hits)
    return best


class OracleSupervisor(Supervisor):
    """Answers every request from the ground-truth placement.

    Approves exactly the merges whose configuration holds in the truth.
    In full mode it also inspects each committed cluster and deletes any
    pieces that disagree with the cluster's majority alignment, and it
    corrects crop proposals to the truth-optimal frame.  In gate-only
    mode it answers merge and crop requests but never deletes.
    """

    def __init__(self, truth: Placement, gate_only: bool = False):
        self.truth = dict(truth.entries)
        self.rows = truth.rows
        self.cols = truth.cols
        self.gate_only = gate_only
        self._pending: list[DeletePieces] = []

    def decide_merge(self, request: MergeRequest) -> Optional[MergeResponse]:
        ok = config_matches_truth(self.truth, request.piece_i, request.piece_j,
                                  request.rot_i, request.rot_j)
        return MergeResponse(request_id=request.request_id, approve=ok)

    def inspect_commit(self, forest: Forest, root: int) -> None:
        if self.gate_only:
            return
        votes = cluster_alignment_votes(forest, root, self.truth)
        if len(votes) <= 1:
            return
        winner = min(votes, key=lambda k: (-len(votes[k]), k))
        losers = sorted(pid for key, pids in votes.items()
                        if key != winner for pid in pids)
        self._pending.append(DeletePieces(ids=tuple(losers)))

    def poll_deletions(self, step: int) -> list[DeletePieces]:
        out, self._pending = self._pending, []
        return out

    def decide_trim(self, proposal: TrimProposal,
                    forest: Forest) -> Optional[TrimResponse]:
        best, best_count = best_truth_frame(
            forest, self.truth, self.rows, self.cols)
        proposed = TrimFrame.from_json_dict(proposal.frame)
        have = truth_frame_score(forest, self.truth, self.rows, self.cols,
                                 proposed)
        if have >= best_count:
            return TrimResponse(request_id=proposal.request_id, approve=True)
        return TrimResponse(request_id=proposal.request_id, approve=False,
                            frame=best.to_json_dict())


class Coordinator:
    """Runs one assembly to completion under a supervisor and a gate."""

    def __init__(self, assembly: Assembly, spec: PuzzleSpec,
                 entropies, policy: GatePolicy, supervisor: Supervisor,
                 pieces: Optional[list[Piece]] = None,
                 emit: Callable[[dict], None] | None = None,
                 clock: Callable[[], float] = time.monotonic,
                 progress_every: int = 0):
        self.assembly = assembly
        self.spec = spec
        self.entropies = entropies  # (n, 4) bits per piece and rotation
        self.policy = policy
        self.supervisor = supervisor
        self.pieces_by_id = {p.id: p for p in pieces} if pieces else None
        self.emit = emit or (lambda event: None)
        self.clock = clock
        self.progress_every = progress_every
        self.flagged: set[int] = set()
        self._request_counter = 0
        self._commits_at_recycle = -1

    # -- plumbing ------------------------------------------------------------

    def _next_request_id(self, kind: str) -> str:
        self._request_counter += 1
        return f"{kind}{self._request_counter}"

    def _preview(self, cells: dict[tuple[int, int], tuple[int, int]],
                 ) -> tuple[Optional[str], tuple[int, int]]:
        if self.pieces_by_id is None:
            return None, (0, 0)
        img, origin = render_cells(cells, self.pieces_by_id,
                                   self.spec.piece_px)
        return base64.b64encode(encode_png(img)).decode("ascii"), origin

    def _merged_cells(self, tm: TentativeMerge
                      ) -> dict[tuple[int, int], tuple[int, int]]:
        f = self.assembly.forest
        cells = {cell: (pid, f.rot[pid])
                 for cell, pid in f.occ[tm.fixed_root].items()}
        for pid, r, c, rot in tm.moves:
            cells[(r, c)] = (pid, rot)
        return cells

    def _display_rots(self, cand: MergeCandidate, tm: TentativeMerge
                      ) -> tuple[int, int]:
        """Rotations of pieces i and j as they would sit after the merge."""
        rots = {}
        for pid, _, _, rot in tm.moves:
            if pid == cand.i or pid == cand.j:
                rots[pid] = rot
        f = self.assembly.forest
        return (rots.get(cand.i, f.rot[cand.i]),
                rots.get(cand.j, f.rot[cand.j]))

    # -- the drive loop ------------------------------------------------------

    def run(self) -> Placement:
        a = self.assembly
        while True:
            self._apply_interventions()
            if a.forest.root_count <= 1:
                break
            cand = a.next_edge()
            if cand is None:
                if not self._unstall():
                    a.force_single_cluster()
                continue
            tm = a.try_merge(cand)
            if tm is None:
                continue
            self._decide(cand, tm)
        return self._finish()

    def _apply_interventions(self) -> None:
        a = self.assembly
        for dp in self.supervisor.poll_deletions(a.steps):
            ids = sorted({int(p) for p in dp.ids if 0 <= int(p) < a.n})
            if not ids or len(ids) == a.n:
                continue
            result = a.remove_pieces(ids)
            if self.policy.review_revived:
                self.flagged.update(result.restored_committed)

    def _unstall(self) -> bool:
        a = self.assembly
        if a.commits > self._commits_at_recycle:
            self._commits_at_recycle = a.commits
            if a.recycle_unused():
                return True
        return False

    def _decide(self, cand: MergeCandidate, tm: TentativeMerge) -> None:
        a = self.assembly
        rot_i, rot_j = self._display_rots(cand, tm)
        e_i = float(self.entropies[cand.i, rot_i])
        e_j = float(self.entropies[cand.j, rot_j])
        was_flagged = cand.cid in self.flagged
        fired = min(e_i, e_j) < self.policy.threshold or was_flagged
        self.flagged.discard(cand.cid)
        if not fired:
            a.commit_merge(tm)
            self._after_commit(cand, tm)
            return
        request_id = self._next_request_id("m")
        preview = highlight_i = highlight_j = None
        origin = (0, 0)
        if self.supervisor.needs_previews:
            cells = self._merged_cells(tm)
            preview, origin = self._preview(cells)
            f = a.forest
            pos_i = f.pos[cand.i]
            pos_j = next(((r, c) for pid, r, c, _ in tm.moves
                          if pid == cand.j), f.pos[cand.j])
            if cand.i in {pid for pid, *_ in tm.moves}:
                pos_i = next((r, c) for pid, r, c, _ in tm.moves
                             if pid == cand.i)
            highlight_i = (pos_i[0] - origin[0], pos_i[1] - origin[1])
            highlight_j = (pos_j[0] - origin[0], pos_j[1] - origin[1])
        request = MergeRequest(
            request_id=request_id, piece_i=cand.i, piece_j=cand.j,
            rot_i=cand.rot_i, rot_j=cand.rot_j, entropy_i=e_i, entropy_j=e_j,
            threshold=self.policy.threshold,
            deadline_ms=int(self.policy.timeout_s * 1000),
            cluster_sizes=(a.forest.size(tm.fixed_root),
                           a.forest.size(tm.moving_root)),
            preview_png_b64=preview, cell_i=highlight_i, cell_j=highlight_j)
        t0 = self.clock()
        response = self.supervisor.decide_merge(request)
        latency_ms = (self.clock() - t0) * 1000.0
        if response is None:
            outcome = "timeout"
        elif response.approve:
            outcome = "approve"
        else:
            outcome = "decline"
        self.emit({"type": "gate-merge", "step": a.steps,
                   "request_id": request_id,
                   "config": [cand.i, cand.j, cand.rot_i, cand.rot_j],
                   "entropy_i": e_i, "entropy_j": e_j,
                   "threshold": self.policy.threshold,
                   "revived": was_flagged, "outcome": outcome,
                   "latency_ms": round(latency_ms, 3)})
        if outcome == "decline":
            a.decline(cand)
            return
        a.commit_merge(tm)
        self._after_commit(cand, tm)

    def _after_commit(self, cand: MergeCandidate, tm: TentativeMerge) -> None:
        a = self.assembly
        root = a.forest.root_of(cand.i)
        self.supervisor.inspect_commit(a.forest, root)
        total = max(a.n - 1, 1)
        last = a.forest.root_count == 1
        if self.progress_every and (a.commits % self.progress_every == 0
                                    or last):
            preview = board = None
            origin = (0, 0)
            cells = {cell: (pid, a.forest.rot[pid])
                     for cell, pid in a.forest.occ[root].items()}
            if self.supervisor.needs_previews:
                preview, origin = self._preview(cells)
            board = sorted([r, c, pid, rot]
                           for (r, c), (pid, rot) in cells.items())
            self.supervisor.notify(Progress(
                fraction=a.commits / total,
                line=f"{a.commits}/{total} merges committed",
                preview_png_b64=preview, board=board, origin=origin))

    # -- trim and fill -------------------------------------------------------

    def _finish(self) -> Placement:
        a = self.assembly
        rows, cols = self.spec.rows, self.spec.cols
        frame = a.find_trim_frame(rows, cols)
        self.emit({"type": "trim-proposed", "step": a.steps,
                   "frame": frame.to_json_dict()})
        request_id = self._next_request_id("t")
        preview = None
        origin = (0, 0)
        if self.supervisor.needs_previews:
            root = a.forest.roots()[0]
            cells = {cell: (pid, a.forest.rot[pid])
                     for cell, pid in a.forest.occ[root].items()}
            preview, origin = self._preview(cells)
        proposal = TrimProposal(
            request_id=request_id, frame=frame.to_json_dict(),
            rows=rows, cols=cols,
            deadline_ms=int(self.policy.timeout_s * 1000),
            preview_png_b64=preview, origin=origin)
        t0 = self.clock()
        response = self.supervisor.decide_trim(proposal, a.forest)
        latency_ms = (self.clock() - t0) * 1000.0
        final, source = frame, "auto"
        if response is not None:
            if response.approve or response.frame is None:
                source = "approved"
            else:
                candidate = TrimFrame.from_json_dict(response.frame)
                dims = (candidate.height, candidate.width)
                if dims in {(rows, cols), (cols, rows)}:
                    final = TrimFrame(
                        top=candidate.top, left=candidate.left,
                        height=candidate.height, width=candidate.width,
                        orientation="landscape"
                        if candidate.width >= candidate.height else "portrait")
                    source = "supervisor"
                else:
                    source = "invalid-ignored"
        self.emit({"type": "trim-final", "step": a.steps,
                   "request_id": request_id, "frame": final.to_json_dict(),
                   "source": source, "latency_ms": round(latency_ms, 3)})
        board, spare = a.trim(final, rows, cols)
        filled = a.fill_gaps(
            board, spare, rows, cols,
            on_place=lambda cell, pid, rot: self.emit(
                {"type": "fill-placed", "step": a.steps,
                 "cell": list(cell), "piece": pid, "rot": rot}))
        entries = {pid: (r, c, rot)
                   for (r, c), (pid, rot) in filled.items()}
        return Placement(rows=rows, cols=cols, piece_px=self.spec.piece_px,
                         entries=entries)
