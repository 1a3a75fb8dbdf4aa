"""Greedy tree-based assembly of scored pieces.

Every piece starts as its own single-piece cluster.  Candidate merges —
(piece i, piece j, rotation pair) configurations — are consumed in
ascending score order.  A candidate joining two distinct clusters is
planned as a rigid transform of the smaller cluster into the larger
cluster's local frame; if the transform would overlap occupied cells the
candidate is set aside (it may be retried after pieces move), otherwise
the caller decides whether to commit it.  Deleting pieces from a cluster
turns them back into singletons and revives every set-aside or previously
consumed candidate that involves them, so they can re-attach.

The module also hosts the post-assembly steps: finding the best
rows x cols crop of the assembled cluster, trimming the stragglers, and
greedily filling the holes with the trimmed pieces.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .compatibility import CompatibilityTable
from .core import EAST, WEST, rotate_direction


class StaleMergeError(RuntimeError):
    """A tentative merge was committed after the forest changed under it."""


# queue slot states
PENDING, UNUSED, COMMITTED, DECLINED = 0, 1, 2, 3

_DIR_TO_TURNS = {(0, 1): 0, (1, 0): 1, (0, -1): 2, (-1, 0): 3}


def rotate_local(cell: tuple[int, int], quarter_turns: int) -> tuple[int, int]:
    """Rotate cluster-local coordinates CCW about the origin."""
    r, c = cell
    for _ in range(quarter_turns % 4):
        r, c = -c, r
    return (r, c)


def adjacency_score(table: CompatibilityTable, a: int, rot_a: int,
                    b: int, rot_b: int, direction: tuple[int, int]) -> float:
    """Normalized score for piece b sitting at a's neighbor cell.

    Any of the four directions reduces to the canonical "b east of a" by
    spinning the whole pair until the direction points east.
    """
    g = _DIR_TO_TURNS[direction]
    return float(table.normalized[a, (rot_a + g) % 4, b, (rot_b + g) % 4])


@dataclass(frozen=True)
class MergeCandidate:
    cid: int
    i: int
    j: int
    rot_i: int
    rot_j: int
    raw: float
    normalized: float


@dataclass(frozen=True)
class TentativeMerge:
    candidate: MergeCandidate
    fixed_root: int
    moving_root: int
    turns: int
    shift: tuple[int, int]
    moves: tuple[tuple[int, int, int, int], ...]  # (pid, row, col, rot)
    version: int


@dataclass
class RemovalResult:
    removed: tuple[int, ...]
    restored: tuple[int, ...]          # candidate ids put back in the queue
    restored_committed: tuple[int, ...]  # subset that had been committed


@dataclass(frozen=True)
class TrimFrame:
    top: int
    left: int
    height: int
    width: int
    orientation: str  # "landscape" (width >= height) or "portrait"

    def contains(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return self.top <= r < self.top + self.height and \
            self.left <= c < self.left + self.width

    def to_json_dict(self) -> dict:
        return {"top": self.top, "left": self.left, "height": self.height,
                "width": self.width, "orientation": self.orientation}

    @classmethod
    def from_json_dict(cls, d) -> "TrimFrame":
        return cls(top=int(d["top"]), left=int(d["left"]), height=int(d["height"]),
                   width=int(d["width"]), orientation=str(d["orientation"]))


class Forest:
    """Disjoint clusters with per-piece local coordinates and rotations.

    Union-find nodes are allocated per piece and re-allocated when a piece
    is deleted, which detaches it without touching its old cluster's links.
    """

    def __init__(self, n_pieces: int):
        self.n_pieces = n_pieces
        self.parent = list(range(n_pieces))
        self.rank = [0] * n_pieces
        self.node_of = list(range(n_pieces))
        self.pos: list[tuple[int, int]] = [(0, 0)] * n_pieces
        self.rot = [0] * n_pieces
        self.occ: dict[int, dict[tuple[int, int], int]] = {
            k: {(0, 0): k} for k in range(n_pieces)}
        self.version = 0

    def find(self, node: int) -> int:
        p = self.parent
        while p[node] != node:
            node, p[node] = p[node], p[p[node]]
        return node

    def root_of(self, pid: int) -> int:
        return self.find(self.node_of[pid])

    @property
    def root_count(self) -> int:
        return len(self.occ)

    def roots(self) -> list[int]:
        return list(self.occ)

    def members(self, root: int) -> list[int]:
        return list(self.occ[root].values())

    def size(self, root: int) -> int:
        return len(self.occ[root])

    def merge_clusters(self, fixed_root: int, moving_root: int,
                       moves: Iterable[tuple[int, int, int, int]]) -> int:
        """Union two clusters; returns the surviving union-find root."""
        cells = self.occ[fixed_root]
        for pid, r, c, rot in moves:
            if (r, c) in cells:
                raise StaleMergeError(f"cell ({r}, {c}) already occupied")
            cells[(r, c)] = pid
            self.pos[pid] = (r, c)
            self.rot[pid] = rot
        del self.occ[moving_root]
        # union by rank; the merged occupancy follows whichever root wins
        a, b = fixed_root, moving_root
        if self.rank[a] < self.rank[b]:
            a, b = b, a
        self.parent[b] = a
        if self.rank[a] == self.rank[b]:
            self.rank[a] += 1
        if a != fixed_root:
            self.occ[a] = cells
            del self.occ[fixed_root]
        self.version += 1
        return a

    def detach(self, pids: Iterable[int]) -> None:
        """Turn each piece back into a singleton cluster at the origin."""
        for pid in pids:
            root = self.root_of(pid)
            cluster = self.occ[root]
            del cluster[self.pos[pid]]
            if not cluster:
                del self.occ[root]
            node = len(self.parent)
            self.parent.append(node)
            self.rank.append(0)
            self.node_of[pid] = node
            self.pos[pid] = (0, 0)
            self.rot[pid] = 0
            self.occ[node] = {(0, 0): pid}
        self.version += 1

    def check_invariants(self) -> None:
        total = 0
        for root, cells in self.occ.items():
            total += len(cells)
            for cell, pid in cells.items():
                assert self.pos[pid] == cell, f"piece {pid} position desync"
                assert self.root_of(pid) == self.find(root), \
                    f"piece {pid} not under root {root}"
        assert total == self.n_pieces, "pieces lost or duplicated"


class EdgeQueue:
    """Merge candidates in ascending (normalized, raw, i, j, rot_i, rot_j).

    Holds one entry per unordered pair and rotation config (the mirrored
    duplicates of the full table are excluded).  Consumed candidates keep a
    state — set aside, committed, or declined — and the first two kinds can
    be re-inserted with their original keys when a deletion frees their
    pieces.
    """

    def __init__(self, table: CompatibilityTable):
        n = table.n
        self.n = n
        self._norm = np.ascontiguousarray(
            table.normalized.transpose(0, 2, 1, 3)).reshape(-1)
        self._raw = np.ascontiguousarray(
            table.raw.transpose(0, 2, 1, 3)).reshape(-1)
        iu, ju = np.triu_indices(n, k=1)
        cids = ((iu[:, None] * n + ju[:, None]) * 16
                + np.arange(16)[None, :]).ravel()
        norm_k = self._norm[cids]
        raw_k = self._raw[cids]
        ii = np.repeat(iu, 16)
        jj = np.repeat(ju, 16)
        ri = (cids % 16) // 4
        rj = cids % 4
        order = np.lexsort((rj, ri, jj, ii, raw_k, norm_k))
        self._base = cids[order]
        self._ptr = 0
        self.state = np.zeros(n * n * 16, dtype=np.uint8)
        self._heap: list[tuple] = []
        self._unused: list[int] = []
        self._incident: dict[int, np.ndarray] = {}
        both = np.concatenate([ii, jj])
        allc = np.concatenate([cids, cids])
        srt = np.argsort(both, kind="stable")
        bounds = np.searchsorted(both[srt], np.arange(n + 1))
        for p in range(n):
            self._incident[p] = allc[srt[bounds[p]:bounds[p + 1]]]

    def decode(self, cid: int) -> tuple[int, int, int, int]:
        rj = cid % 4
        ri = (cid // 4) % 4
        pair = cid // 16
        return (pair // self.n, pair % self.n, ri, rj)

    def key_of(self, cid: int) -> tuple:
        i, j, ri, rj = self.decode(cid)
        return (float(self._norm[cid]), float(self._raw[cid]), i, j, ri, rj)

    def pop(self) -> Optional[int]:
        while True:
            base_cid = None
            while self._ptr < len(self._base):
                c = int(self._base[self._ptr])
                if self.state[c] == PENDING:
                    base_cid = c
                    break
                self._ptr += 1
            heap_cid = None
            while self._heap:
                c = self._heap[0][-1]
                if self.state[c] == PENDING:
                    heap_cid = c
                    break
                heapq.heappop(self._heap)
            if base_cid is None and heap_cid is None:
                return None
            if heap_cid is None or (base_cid is not None
                                    and self.key_of(base_cid) <= self.key_of(heap_cid)):
                self._ptr += 1
                return base_cid
            heapq.heappop(self._heap)
            return heap_cid

    def mark_unused(self, cid: int) -> None:
        self.state[cid] = UNUSED
        self._unused.append(cid)

    def mark_committed(self, cid: int) -> None:
        self.state[cid] = COMMITTED

    def mark_declined(self, cid: int) -> None:
        self.state[cid] = DECLINED

    def _push(self, cid: int) -> None:
        self.state[cid] = PENDING
        heapq.heappush(self._heap, self.key_of(cid) + (cid,))

    def reinsert_incident(self, pids: Iterable[int]) -> tuple[list[int], list[int]]:
        """Re-queue set-aside and committed candidates touching the pieces."""
        restored: list[int] = []
        restored_committed: list[int] = []
        for pid in pids:
            for cid in self._incident[pid]:
                cid = int(cid)
                st = self.state[cid]
                if st == UNUSED or st == COMMITTED:
                    if st == COMMITTED:
                        restored_committed.append(cid)
                    restored.append(cid)
                    self._push(cid)
        return restored, restored_committed

    def recycle_unused(self) -> int:
        """Re-queue every set-aside candidate (retry after geometry changed)."""
        stale, self._unused = self._unused, []
        count = 0
        for cid in stale:
            if self.state[cid] == UNUSED:
                self._push(cid)
                count += 1
        return count

    @property
    def unused_count(self) -> int:
        return sum(1 for cid in self._unused if self.state[cid] == UNUSED)


class Assembly:
    """Drives the greedy merge loop over a forest and a candidate queue."""

    def __init__(self, table: CompatibilityTable,
                 on_event: Callable[[dict], None] | None = None):
        self.table = table
        self.n = table.n
        self.forest = Forest(table.n)
        self.queue = EdgeQueue(table)
        self.steps = 0          # candidates popped so far
        self.commits = 0
        self.forced_merges = 0
        self._emit = on_event or (lambda event: None)
        self._pending_plan: Optional[TentativeMerge] = None

    # -- events ------------------------------------------------------------

    def _event(self, etype: str, **fields) -> None:
        self._emit({"type": etype, "step": self.steps, **fields})

    # -- merge planning ----------------------------------------------------

    def _plan(self, cand: MergeCandidate) -> Optional[TentativeMerge]:
        f = self.forest
        root_i = f.root_of(cand.i)
        root_j = f.root_of(cand.j)
        if f.size(root_i) >= f.size(root_j):
            fixed, moving = root_i, root_j
            g = (f.rot[cand.i] - cand.rot_i) % 4
            target_rot = (cand.rot_j + g) % 4
            dr, dc = rotate_direction(EAST, g)
            pr, pc = f.pos[cand.i]
            target_cell = (pr + dr, pc + dc)
            anchor = cand.j
        else:
            fixed, moving = root_j, root_i
            g = (f.rot[cand.j] - cand.rot_j) % 4
            target_rot = (cand.rot_i + g) % 4
            dr, dc = rotate_direction(WEST, g)
            pr, pc = f.pos[cand.j]
            target_cell = (pr + dr, pc + dc)
            anchor = cand.i
        turns = (target_rot - f.rot[anchor]) % 4
        ar, ac = rotate_local(f.pos[anchor], turns)
        shift = (target_cell[0] - ar, target_cell[1] - ac)
        fixed_cells = f.occ[fixed]
        moves = []
        for cell, pid in f.occ[moving].items():
            rr, cc = rotate_local(cell, turns)
            new_cell = (rr + shift[0], cc + shift[1])
            if new_cell in fixed_cells:
                return None
            moves.append((pid, new_cell[0], new_cell[1], (f.rot[pid] + turns) % 4))
        moves.sort()
        return TentativeMerge(candidate=cand, fixed_root=fixed, moving_root=moving,
                              turns=turns, shift=shift, moves=tuple(moves),
                              version=f.version)

    # -- step operations ------------------------------------------------------

    def next_edge(self) -> Optional[MergeCandidate]:
        """Pop candidates until one joins two clusters without overlap.

        Returns None when the queue is exhausted.  Same-cluster and
        overlapping candidates are set aside as they are encountered.
        """
        while True:
            cid = self.queue.pop()
            if cid is None:
                return None
            self.steps += 1
            i, j, ri, rj = self.queue.decode(cid)
            cand = MergeCandidate(
                cid=cid, i=i, j=j, rot_i=ri, rot_j=rj,
                raw=float(self.queue._raw[cid]),
                normalized=float(self.queue._norm[cid]))
            self._event("edge-popped", config=[i, j, ri, rj],
                        normalized=cand.normalized)
            if self.forest.root_of(i) == self.forest.root_of(j):
                self.queue.mark_unused(cid)
                self._event("edge-discarded", config=[i, j, ri, rj],
                            reason="same-cluster")
                continue
            plan = self._plan(cand)
            if plan is None:
                self.queue.mark_unused(cid)
                self._event("edge-discarded", config=[i, j, ri, rj],
                            reason="collision")
                continue
            self._pending_plan = plan
            return cand

    def try_merge(self, cand: MergeCandidate) -> Optional[TentativeMerge]:
        """Validate (or re-validate) the candidate against the live forest."""
        plan = getattr(self, "_pending_plan", None)
        if plan is None or plan.candidate.cid != cand.cid \
                or plan.version != self.forest.version:
            plan = self._plan(cand)
        if plan is None:
            self.queue.mark_unused(cand.cid)
            self._event("edge-discarded",
                        config=[cand.i, cand.j, cand.rot_i, cand.rot_j],
                        reason="collision")
            return None
        self._pending_plan = None
        self._event("merge-tentative",
                    config=[cand.i, cand.j, cand.rot_i, cand.rot_j],
                    sizes=[self.forest.size(plan.fixed_root),
                           self.forest.size(plan.moving_root)])
        return plan

    def commit_merge(self, tm: TentativeMerge) -> None:
        if tm.version != self.forest.version:
            raise StaleMergeError("forest changed since the merge was planned")
        self.forest.merge_clusters(tm.fixed_root, tm.moving_root, tm.moves)
        self.queue.mark_committed(tm.candidate.cid)
        self.commits += 1
        cand = tm.candidate
        self._event("merge-committed",
                    config=[cand.i, cand.j, cand.rot_i, cand.rot_j],
                    moved=len(tm.moves), clusters=self.forest.root_count)

    def decline(self, cand: MergeCandidate) -> None:
        """Drop the candidate for good (a supervisor rejected it)."""
        self.queue.mark_declined(cand.cid)
        self._event("merge-declined",
                    config=[cand.i, cand.j, cand.rot_i, cand.rot_j])

    def remove_pieces(self, pids: Iterable[int]) -> RemovalResult:
        """Detach pieces into singletons and revive their candidates.

        Set-aside and committed candidates touching a removed piece go back
        into the queue with their original keys; declined ones stay dead.
        Holes left inside a cluster are kept as-is.
        """
        pids = sorted(set(int(p) for p in pids))
        for pid in pids:
            if not (0 <= pid < self.n):
                raise ValueError(f"unknown piece id {pid}")
        if not pids:
            return RemovalResult(removed=(), restored=(), restored_committed=())
        self.forest.detach(pids)
        restored, restored_committed = self.queue.reinsert_incident(pids)
        self._event("pieces-removed", ids=list(pids), restored=len(restored))
        return RemovalResult(removed=tuple(pids), restored=tuple(restored),
                             restored_committed=tuple(restored_committed))

    # -- stalled-queue fallbacks --------------------------------------------

    def recycle_unused(self) -> int:
        count = self.queue.recycle_unused()
        if count:
            self._event("queue-recycled", count=count)
        return count

    def force_single_cluster(self) -> None:
        """Last-resort completion: butt remaining clusters side by side.

        Only reachable when every remaining cross-cluster candidate
        overlaps; the trim-and-fill stage cleans up whatever this produces.
        """
        f = self.forest
        while f.root_count > 1:
            ranked = sorted(
                f.roots(), key=lambda r: (-f.size(r), min(f.members(r))))
            base, other = ranked[0], ranked[1]
            base_cells = f.occ[base]
            min_r = min(r for r, _ in base_cells)
            max_c = max(c for _, c in base_cells)
            o_cells = f.occ[other]
            o_min_r = min(r for r, _ in o_cells)
            o_min_c = min(c for _, c in o_cells)
            moves = sorted(
                (pid, cell[0] - o_min_r + min_r, cell[1] - o_min_c + max_c + 1,
                 f.rot[pid])
                for cell, pid in o_cells.items())
            f.merge_clusters(base, other, moves)
            self.forced_merges += 1
            self._event("forced-merge", pieces=len(moves),
                        clusters=f.root_count)

    # -- trim and fill -------------------------------------------------------

    def find_trim_frame(self, rows: int, cols: int) -> TrimFrame:
        """Best rows x cols window over the single assembled cluster.

        Maximizes contained pieces; ties prefer the landscape orientation,
        then the smallest (top, left).
        """
        if self.forest.root_count != 1:
            raise ValueError("trim needs a single assembled cluster")
        cells = self.forest.occ[next(iter(self.forest.occ))]
        rs = [r for r, _ in cells]
        cs = [c for _, c in cells]
        min_r, max_r = min(rs), max(rs)
        min_c, max_c = min(cs), max(cs)
        H, W = max_r - min_r + 1, max_c - min_c + 1
        grid = np.zeros((H, W), dtype=np.int64)
        for (r, c) in cells:
            grid[r - min_r, c - min_c] = 1
        integral = np.zeros((H + 1, W + 1), dtype=np.int64)
        integral[1:, 1:] = grid.cumsum(0).cumsum(1)

        dims = [(rows, cols)] if rows == cols else [(rows, cols), (cols, rows)]
        best = None
        for h, w in dims:
            orientation = "landscape" if w >= h else "portrait"
            r0s = np.arange(-(h - 1), H)
            c0s = np.arange(-(w - 1), W)
            r1 = np.clip(r0s, 0, H)
            r2 = np.clip(r0s + h, 0, H)
            c1 = np.clip(c0s, 0, W)
            c2 = np.clip(c0s + w, 0, W)
            counts = (integral[r2][:, c2] - integral[r1][:, c2]
                      - integral[r2][:, c1] + integral[r1][:, c1])
            top = int(counts.max())
            locs = np.argwhere(counts == top)
            rr, cc = locs[np.lexsort((locs[:, 1], locs[:, 0]))][0]
            frame = TrimFrame(top=int(r0s[rr]) + min_r, left=int(c0s[cc]) + min_c,
                              height=h, width=w, orientation=orientation)
            key = (-top, 0 if orientation == "landscape" else 1,
                   frame.top, frame.left)
            if best is None or key < best[0]:
                best = (key, frame)
        return best[1]

    def trim(self, frame: TrimFrame, rows: int, cols: int
             ) -> tuple[dict[tuple[int, int], tuple[int, int]], list[int]]:
        """Crop to the frame; returns (board on rows x cols, trimmed ids).

        The board maps (row, col) -> (piece id, rotation).  When the frame
        is the swapped orientation, its content is spun a quarter turn CCW
        so the result always lands on the rows x cols grid.
        """
        if self.forest.root_count != 1:
            raise ValueError("trim needs a single assembled cluster")
        cells = self.forest.occ[next(iter(self.forest.occ))]
        board: dict[tuple[int, int], tuple[int, int]] = {}
        trimmed: list[int] = []
        swap = (frame.height, frame.width) != (rows, cols)
        for cell, pid in cells.items():
            if not frame.contains(cell):
                trimmed.append(pid)
                continue
            r, c = cell[0] - frame.top, cell[1] - frame.left
            rot = self.forest.rot[pid]
            if swap:
                r, c, rot = frame.width - 1 - c, r, (rot + 1) % 4
            board[(r, c)] = (pid, rot)
        return board, sorted(trimmed)

    def fill_gaps(self, board: dict[tuple[int, int], tuple[int, int]],
                  spare: list[int], rows: int, cols: int,
                  on_place: Callable[[tuple[int, int], int, int], None] | None = None,
                  ) -> dict[tuple[int, int], tuple[int, int]]:
        """Place spare pieces into empty cells, most-anchored gaps first.

        Each gap gets the (piece, rotation) with the smallest summed
        normalized score against its occupied neighbors; ties fall to the
        smallest piece id, then rotation.
        """
        board = dict(board)
        spare = sorted(spare)
        gaps = [(r, c) for r in range(rows) for c in range(cols)
                if (r, c) not in board]
        if len(gaps) != len(spare):
            raise ValueError(f"{len(gaps)} gaps vs {len(spare)} spare pieces")
        while gaps:
            def anchored(cell):
                return sum(1 for d in _DIR_TO_TURNS
                           if (cell[0] + d[0], cell[1] + d[1]) in board)
            gaps.sort(key=lambda cell: (-anchored(cell), cell))
            gap = gaps.pop(0)
            neighbors = [(d, board[(gap[0] + d[0], gap[1] + d[1])])
                         for d in _DIR_TO_TURNS
                         if (gap[0] + d[0], gap[1] + d[1]) in board]
            best = None
            for pid in spare:
                for rot in range(4):
                    total = 0.0
                    for d, (nb_pid, nb_rot) in neighbors:
                        total += adjacency_score(
                            self.table, pid, rot, nb_pid, nb_rot, d)
                    key = (total, pid, rot)
                    if best is None or key < best:
                        best = key
            _, pid, rot = best
            spare.remove(pid)
            board[gap] = (pid, rot)
            if on_place is not None:
                on_place(gap, pid, rot)
        return board
