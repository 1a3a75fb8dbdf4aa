"""Tests for the greedy assembly engine, trim, and fill."""
import numpy as np
import pytest

from jigsawlab.compatibility import build_table, table_from_raw
from jigsawlab.core import slice_image
from jigsawlab.reconstruction import (
    COMMITTED,
    DECLINED,
    PENDING,
    UNUSED,
    Assembly,
    Forest,
    StaleMergeError,
    TrimFrame,
    adjacency_score,
    rotate_local,
)

FLIP = [2, 3, 0, 1]


def make_raw4(n: int, pinned: dict[tuple[int, int, int, int], float],
              base: float = 1000.0) -> np.ndarray:
    """Consistent raw score array: pinned configs win, the rest are distinct."""
    raw4 = np.full((n, 4, n, 4), np.inf)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            for ri in range(4):
                for rj in range(4):
                    v = pinned.get((i, j, ri, rj), base + k)
                    k += 1
                    raw4[i, ri, j, rj] = v
                    raw4[j, FLIP[rj], i, FLIP[ri]] = v
    return raw4


def assemble(asm: Assembly, max_steps: int = 100_000) -> None:
    """Run the loop with auto-approval until one cluster remains."""
    while asm.forest.root_count > 1:
        cand = asm.next_edge()
        if cand is None:
            if asm.recycle_unused() == 0:
                asm.force_single_cluster()
            continue
        tm = asm.try_merge(cand)
        if tm is not None:
            asm.commit_merge(tm)
        if asm.steps > max_steps:
            raise AssertionError("assembly did not converge")


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------

def test_rotate_local_single_turn():
    assert rotate_local((0, 1), 1) == (-1, 0)
    assert rotate_local((2, 3), 0) == (2, 3)
    assert rotate_local((1, 0), 2) == (-1, 0)
    for cell in [(0, 0), (2, -1), (-3, 5)]:
        assert rotate_local(cell, 4) == cell


def test_adjacency_score_direction_reduction():
    table = table_from_raw(make_raw4(3, {}))
    # east is the canonical direction: direct lookup
    assert adjacency_score(table, 0, 1, 1, 2, (0, 1)) == \
        table.normalized[0, 1, 1, 2]
    # b below a: spin the pair one quarter turn CCW
    assert adjacency_score(table, 0, 0, 1, 0, (1, 0)) == \
        table.normalized[0, 1, 1, 1]
    # b west of a: the mirrored east config
    assert adjacency_score(table, 0, 0, 1, 0, (0, -1)) == \
        table.normalized[0, 2, 1, 2]


# ---------------------------------------------------------------------------
# merge planning: hand-computed cases
# ---------------------------------------------------------------------------

def test_two_singleton_merge_places_east():
    asm = Assembly(table_from_raw(make_raw4(3, {(0, 1, 0, 0): 1.0})))
    cand = asm.next_edge()
    assert (cand.i, cand.j, cand.rot_i, cand.rot_j) == (0, 1, 0, 0)
    tm = asm.try_merge(cand)
    assert tm.moves == ((1, 0, 1, 0),)
    asm.commit_merge(tm)
    f = asm.forest
    assert f.root_of(0) == f.root_of(1)
    assert f.pos[0] == (0, 0) and f.pos[1] == (0, 1)
    assert f.root_count == 2  # {0,1} and {2}


def test_rotated_attach_hand_case():
    # second merge: config (0, 2, rot_i=1, rot_j=3) means "2 east of 0 once
    # 0 is spun one turn".  With 0 already placed unrotated, the pair view
    # must be spun back (g = 3 turns), so 2 lands south of 0 at rotation 2.
    pinned = {(0, 1, 0, 0): 1.0, (0, 2, 1, 3): 2.0}
    asm = Assembly(table_from_raw(make_raw4(3, pinned)))
    assemble(asm)
    f = asm.forest
    assert asm.commits == 2 and f.root_count == 1
    root = f.root_of(0)
    cells = {cell: pid for cell, pid in f.occ[root].items()}
    assert cells == {(0, 0): 0, (0, 1): 1, (1, 0): 2}
    assert f.rot[0] == 0 and f.rot[1] == 0 and f.rot[2] == 2


def test_bigger_cluster_stays_fixed():
    # grow {0,1} first; then candidate (2, 0, ...) arrives as canonical
    # (0, 2, ...): the pair cluster must not move, 2 does
    pinned = {(0, 1, 0, 0): 1.0, (0, 2, 2, 2): 2.0}
    asm = Assembly(table_from_raw(make_raw4(3, pinned)))
    assemble(asm)
    f = asm.forest
    # config (0,2,2,2): g = (0-2)%4 = 2, so 2 sits west... east spun by 2 = west
    assert f.pos[0] == (0, 0) and f.pos[1] == (0, 1)
    assert f.pos[2] == (0, -1) and f.rot[2] == (2 + 2) % 4


def test_collision_sets_candidate_aside():
    # pins share normalization groups: (0,2,0,0) divides by 2 in one group
    # and by 50 in the other, so the pop order is (0,1), (0,2), (1,2)
    pinned = {(0, 1, 0, 0): 1.0, (0, 2, 0, 0): 2.0, (1, 2, 0, 0): 50.0}
    events = []
    asm = Assembly(table_from_raw(make_raw4(3, pinned)), on_event=events.append)
    assemble(asm)
    f = asm.forest
    cells = f.occ[f.root_of(0)]
    assert cells == {(0, 0): 0, (0, 1): 1, (0, 2): 2}
    discards = [e for e in events if e["type"] == "edge-discarded"
                and e["reason"] == "collision"]
    assert [d["config"] for d in discards] == [[0, 2, 0, 0]]
    cid_collided = [e for e in events if e["type"] == "edge-popped"
                    and e["config"] == [0, 2, 0, 0]]
    assert len(cid_collided) == 1
    assert asm.queue.unused_count >= 1


def test_exhausted_queue_returns_none():
    asm = Assembly(table_from_raw(make_raw4(2, {(0, 1, 0, 0): 1.0})))
    assemble(asm)
    assert asm.next_edge() is None
    # every remaining candidate was set aside as same-cluster
    assert asm.queue.unused_count == 15


def test_commit_on_stale_plan_raises():
    pinned = {(0, 1, 0, 0): 1.0, (1, 2, 0, 0): 2.0}
    asm = Assembly(table_from_raw(make_raw4(3, pinned)))
    cand = asm.next_edge()
    tm = asm.try_merge(cand)
    asm.remove_pieces([2])  # bumps the forest version
    with pytest.raises(StaleMergeError):
        asm.commit_merge(tm)


def test_declined_candidate_never_returns():
    pinned = {(0, 1, 0, 0): 1.0, (0, 1, 1, 1): 2.0}
    asm = Assembly(table_from_raw(make_raw4(2, pinned)))
    cand = asm.next_edge()
    asm.decline(cand)
    assert asm.queue.state[cand.cid] == DECLINED
    nxt = asm.next_edge()
    assert (nxt.i, nxt.j, nxt.rot_i, nxt.rot_j) == (0, 1, 1, 1)
    tm = asm.try_merge(nxt)
    asm.commit_merge(tm)
    # deleting a piece revives set-aside/committed candidates, not declined
    asm.remove_pieces([1])
    revived = asm.next_edge()
    assert revived.cid != cand.cid


# ---------------------------------------------------------------------------
# removal
# ---------------------------------------------------------------------------

def test_remove_middle_piece_leaves_hole_and_restores_edges():
    pinned = {(0, 1, 0, 0): 1.0, (1, 2, 0, 0): 2.0}
    asm = Assembly(table_from_raw(make_raw4(3, pinned)))
    assemble(asm)
    f = asm.forest
    res = asm.remove_pieces([1])
    assert res.removed == (1,)
    assert f.root_count == 2
    cluster = f.occ[f.root_of(0)]
    assert cluster == {(0, 0): 0, (0, 2): 2}  # hole at (0,1) is kept
    assert f.pos[1] == (0, 0) and f.rot[1] == 0
    restored = {asm.queue.decode(c) for c in res.restored}
    assert restored == {(0, 1, 0, 0), (1, 2, 0, 0)}
    assert set(res.restored_committed) == set(res.restored)
    # the loop can now re-attach 1 into the hole
    assemble(asm)
    assert f.occ[f.root_of(0)] == {(0, 0): 0, (0, 1): 1, (0, 2): 2}
    f.check_invariants()


def test_remove_restores_set_aside_candidates_too():
    pinned = {(0, 1, 0, 0): 1.0, (0, 2, 0, 0): 2.0, (1, 2, 0, 0): 50.0}
    asm = Assembly(table_from_raw(make_raw4(3, pinned)))
    assemble(asm)  # (0,2,0,0) was set aside by collision
    res = asm.remove_pieces([2])
    restored = {asm.queue.decode(c) for c in res.restored}
    assert (0, 2, 0, 0) in restored and (1, 2, 0, 0) in restored
    committed_restored = {asm.queue.decode(c) for c in res.restored_committed}
    assert committed_restored == {(1, 2, 0, 0)}
    # (0,1,0,0) does not involve piece 2 and stays committed
    state = asm.queue.state
    leftover = [asm.queue.decode(int(c)) for c in np.nonzero(state == COMMITTED)[0]]
    assert leftover == [(0, 1, 0, 0)]


def test_remove_whole_cluster_yields_singletons():
    pinned = {(0, 1, 0, 0): 1.0}
    asm = Assembly(table_from_raw(make_raw4(2, pinned)))
    assemble(asm)
    asm.remove_pieces([0, 1])
    f = asm.forest
    assert f.root_count == 2
    assert f.pos[0] == (0, 0) and f.pos[1] == (0, 0)
    assert f.root_of(0) != f.root_of(1)
    f.check_invariants()


def test_remove_unknown_piece_rejected():
    asm = Assembly(table_from_raw(make_raw4(2, {})))
    with pytest.raises(ValueError):
        asm.remove_pieces([5])


# ---------------------------------------------------------------------------
# trim frame search
# ---------------------------------------------------------------------------

def build_forest_cluster(n: int, cells: dict[tuple[int, int], int],
                         rots: dict[int, int] | None = None) -> Forest:
    f = Forest(n)
    rots = rots or {}
    items = sorted(cells.items(), key=lambda kv: kv[1])
    (r0, c0), first = items[0]
    base = f.root_of(first)
    f.occ[base] = {(r0, c0): first}
    f.pos[first] = (r0, c0)
    f.rot[first] = rots.get(first, 0)
    for (r, c), pid in items[1:]:
        base = f.merge_clusters(base, f.root_of(pid),
                                [(pid, r, c, rots.get(pid, 0))])
    return f


def test_trim_frame_exact_cover():
    f = build_forest_cluster(6, {(r, c): r * 3 + c for r in range(2) for c in range(3)})
    asm = Assembly(table_from_raw(make_raw4(6, {})))
    asm.forest = f
    frame = asm.find_trim_frame(2, 3)
    assert frame == TrimFrame(top=0, left=0, height=2, width=3,
                              orientation="landscape")
    board, trimmed = asm.trim(frame, 2, 3)
    assert trimmed == []
    assert board == {(r, c): (r * 3 + c, 0) for r in range(2) for c in range(3)}


def test_trim_frame_tie_prefers_landscape_then_origin():
    # L-shape: landscape and portrait windows both catch 4 pieces
    cells = {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 0): 3, (2, 0): 4}
    f = build_forest_cluster(5, cells)
    asm = Assembly(table_from_raw(make_raw4(5, {})))
    asm.forest = f
    frame = asm.find_trim_frame(2, 3)
    assert frame.orientation == "landscape"
    assert (frame.top, frame.left, frame.height, frame.width) == (0, 0, 2, 3)


def test_trim_frame_offset_cluster():
    # same shape shifted into negative coordinates
    cells = {(-3, 7): 0, (-3, 8): 1, (-3, 9): 2, (-2, 7): 3, (-2, 8): 4, (-2, 9): 5}
    f = build_forest_cluster(6, cells)
    asm = Assembly(table_from_raw(make_raw4(6, {})))
    asm.forest = f
    frame = asm.find_trim_frame(2, 3)
    assert (frame.top, frame.left) == (-3, 7)
    board, trimmed = asm.trim(frame, 2, 3)
    assert trimmed == [] and board[(0, 0)] == (0, 0) and board[(1, 2)] == (5, 0)


def test_portrait_frame_content_is_respun_to_grid():
    # a 3x2 arrangement for a rows=2, cols=3 puzzle: portrait window wins
    # and trim spins content a quarter turn CCW onto the 2x3 grid
    cells = {(0, 0): 0, (0, 1): 1, (1, 0): 2, (1, 1): 3, (2, 0): 4, (2, 1): 5}
    f = build_forest_cluster(6, cells, rots={pid: 3 for pid in range(6)})
    asm = Assembly(table_from_raw(make_raw4(6, {})))
    asm.forest = f
    frame = asm.find_trim_frame(2, 3)
    assert frame.orientation == "portrait"
    assert (frame.height, frame.width) == (3, 2)
    board, trimmed = asm.trim(frame, 2, 3)
    assert trimmed == []
    # (r, c) -> (width-1-c, r): (0,0)->(1,0), (2,1)->(0,2); rotations bump by 1
    assert board[(1, 0)] == (0, 0)
    assert board[(0, 2)] == (5, 0)
    assert board[(0, 0)] == (1, 0)
    assert all(rot == 0 for _, rot in board.values())


def test_trim_requires_single_cluster():
    asm = Assembly(table_from_raw(make_raw4(3, {})))
    with pytest.raises(ValueError):
        asm.find_trim_frame(1, 3)


def test_trim_partitions_pieces():
    # full 2x3 plus one piece dangling east: it must be trimmed
    cells = {(r, c): r * 3 + c for r in range(2) for c in range(3)}
    cells[(0, 3)] = 6
    f = build_forest_cluster(7, cells)
    asm = Assembly(table_from_raw(make_raw4(7, {})))
    asm.forest = f
    frame = asm.find_trim_frame(2, 3)
    board, trimmed = asm.trim(frame, 2, 3)
    assert trimmed == [6]
    assert len(board) == 6


# ---------------------------------------------------------------------------
# gap filling
# ---------------------------------------------------------------------------

def smooth_image(h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.stack([
        100 + 9 * xx + 3 * yy,
        150 - 6 * xx + 2 * yy,
        60 + 4 * xx - 3 * yy,
    ], axis=-1).clip(0, 255).astype(np.uint8)


def test_fill_restores_removed_middle_piece():
    img = smooth_image(5, 15)
    _, pieces = slice_image(img, 5)
    table = build_table(pieces)
    asm = Assembly(table)
    board = {(0, 0): (0, 0), (0, 2): (2, 0)}
    full = asm.fill_gaps(board, [1], rows=1, cols=3)
    assert full[(0, 1)] == (1, 0)


def test_fill_orders_gaps_by_anchoring():
    img = smooth_image(10, 15)
    _, pieces = slice_image(img, 5)
    table = build_table(pieces)
    asm = Assembly(table)
    # gap (0,1) touches three placed pieces; gap (1,2) touches two
    board = {(0, 0): (0, 0), (0, 2): (2, 0), (1, 0): (3, 0), (1, 1): (4, 0)}
    placed = []
    asm.fill_gaps(board, [1, 5], rows=2, cols=3,
                  on_place=lambda cell, pid, rot: placed.append((cell, pid, rot)))
    assert [p[0] for p in placed] == [(0, 1), (1, 2)]
    assert placed[0][1:] == (1, 0)
    assert placed[1][1:] == (5, 0)


def test_fill_counts_must_match():
    asm = Assembly(table_from_raw(make_raw4(4, {})))
    with pytest.raises(ValueError):
        asm.fill_gaps({(0, 0): (0, 0)}, [1, 2], rows=2, cols=2)


# ---------------------------------------------------------------------------
# randomized mini-fuzz (the full fuzz lives in the acceptance suite)
# ---------------------------------------------------------------------------

def test_random_tables_assemble_cleanly():
    rng = np.random.default_rng(0)
    for trial in range(60):
        n = int(rng.integers(2, 9))
        raw4 = make_raw4(n, {})
        # scramble scores randomly but keep the mirror identity
        for i in range(n):
            for j in range(i + 1, n):
                for ri in range(4):
                    for rj in range(4):
                        v = float(rng.uniform(0.1, 100.0))
                        raw4[i, ri, j, rj] = v
                        raw4[j, FLIP[rj], i, FLIP[ri]] = v
        asm = Assembly(table_from_raw(raw4))
        assemble(asm)
        f = asm.forest
        assert f.root_count == 1
        assert asm.forced_merges == 0, "mini-fuzz should never need forcing"
        assert asm.commits == n - 1
        f.check_invariants()
        cells = f.occ[next(iter(f.occ))]
        assert len(cells) == n and len(set(cells.values())) == n
