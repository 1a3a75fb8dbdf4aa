"""Placement quality metrics.

Both metrics compare a solved placement against ground truth on the same
grid.  A solution that is internally perfect but globally rotated scores
as well as an unrotated one: each metric is evaluated under every global
grid rotation that preserves the grid dimensions (180 degrees for
rectangular grids, all four quarter turns for square ones) and the best
value is reported.
"""
from __future__ import annotations

from .core import Placement


def frame_rotations(rows: int, cols: int) -> tuple[int, ...]:
    """Global rotations (quarter turns CCW) that map the grid onto itself."""
    return (0, 1, 2, 3) if rows == cols else (0, 2)


def rotate_cell(r: int, c: int, rows: int, cols: int, quarter_turns: int) -> tuple[int, int]:
    """Rotate a cell CCW on a rows x cols grid (dims must be preserved)."""
    for _ in range(quarter_turns % 4):
        r, c = cols - 1 - c, r
        rows, cols = cols, rows
    return (r, c)


def _transformed_entries(placement: Placement, g: int) -> dict[int, tuple[int, int, int]]:
    out = {}
    for pid, (r, c, rot) in placement.entries.items():
        rr, cc = rotate_cell(r, c, placement.rows, placement.cols, g)
        out[pid] = (rr, cc, (rot + g) % 4)
    return out


def _check_comparable(solution: Placement, truth: Placement) -> None:
    if (solution.rows, solution.cols) != (truth.rows, truth.cols):
        raise ValueError("placements cover different grids")
    if set(solution.entries) != set(truth.entries):
        raise ValueError("placements cover different piece id sets")


def direct_fraction(solution: Placement, truth: Placement) -> float:
    """Fraction of pieces at exactly their true (row, col, rotation)."""
    _check_comparable(solution, truth)
    n = len(truth.entries)
    if n == 0:
        raise ValueError("empty placements")
    best = 0
    for g in frame_rotations(truth.rows, truth.cols):
        ent = _transformed_entries(solution, g)
        best = max(best, sum(1 for pid, v in truth.entries.items() if ent[pid] == v))
    return best / n


def neighbor_fraction(solution: Placement, truth: Placement) -> float:
    """Fraction of true adjacencies preserved by the solution.

    Counts ordered pairs of pieces adjacent in the truth (4-neighborhood,
    direction matters).  A pair counts when the solution keeps the two
    pieces adjacent in the same relative direction and both pieces sit at
    their true rotations, all judged under one shared global rotation.
    """
    _check_comparable(solution, truth)
    rows, cols = truth.rows, truth.cols
    total = 2 * (rows * (cols - 1) + (rows - 1) * cols)
    if total == 0:
        raise ValueError("grid has no adjacent pairs")
    truth_at = truth.cells()
    pairs = []
    for (r, c), (pid, rot) in truth_at.items():
        for d in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            other = truth_at.get((r + d[0], c + d[1]))
            if other is not None:
                pairs.append((pid, rot, other[0], other[1], d))
    best = 0
    for g in frame_rotations(rows, cols):
        ent = _transformed_entries(solution, g)
        hits = 0
        for pid_a, rot_a, pid_b, rot_b, d in pairs:
            ra, ca, sa = ent[pid_a]
            rb, cb, sb = ent[pid_b]
            if (rb - ra, cb - ca) == d and sa == rot_a and sb == rot_b:
                hits += 1
        best = max(best, hits)
    return best / total
