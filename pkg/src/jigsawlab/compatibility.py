"""Pairwise edge-compatibility scoring for square pieces.

For every ordered pair of pieces and every pair of rotations (16 relative
configurations) we score how plausible it is that the second piece sits
immediately to the right of the first.  The score models the distribution
of signed color steps across a piece's own outermost right-edge columns
(mean + sample covariance per RGB channel) and measures, in Mahalanobis
distance, how unusual the steps across the join boundary would be.  The
two one-sided distances (left piece's edge statistics and right piece's)
are summed into one symmetric score; lower is better.

Raw scores are then normalized per oriented edge: all candidate scores
competing for the same piece edge are divided by the group's
second-smallest raw score, so an outstanding match lands well below 1.0
while ambiguous edges hover around it.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Piece, pieces_digest

#: ridge added to a near-singular gradient covariance (scale of squared
#: 8-bit intensities) before inversion
REG_EPS = 1e-6 * 255.0 ** 2


@dataclass(frozen=True)
class EdgeStats:
    """Distribution of a piece's outward gradient rows on one oriented edge."""

    mean: np.ndarray        # (3,)
    cov: np.ndarray         # (3, 3), after any regularization
    inv_cov: np.ndarray     # (3, 3)
    regularized: bool


@dataclass(frozen=True)
class PairConfigScore:
    i: int
    j: int
    rot_i: int
    rot_j: int
    raw: float
    normalized: float


def right_edge_gradients(pixels: np.ndarray, rotation: int) -> np.ndarray:
    """Signed per-row color steps across the two rightmost columns.

    The piece is first rotated CCW by ``rotation`` quarter turns, so any
    physical side can be scored by choosing the rotation that brings it to
    face east.  Returns a (P, 3) float array of last-column minus
    second-to-last-column values.
    """
    rp = np.rot90(pixels, rotation % 4)
    return rp[:, -1, :].astype(np.float64) - rp[:, -2, :].astype(np.float64)


def _right_column(pixels: np.ndarray, rotation: int) -> np.ndarray:
    return np.rot90(pixels, rotation % 4)[:, -1, :].astype(np.float64)


def _left_column(pixels: np.ndarray, rotation: int) -> np.ndarray:
    return np.rot90(pixels, rotation % 4)[:, 0, :].astype(np.float64)


def gradient_stats(grads: np.ndarray) -> EdgeStats:
    """Mean and sample covariance (ddof=1) of gradient rows, regularized.

    When the covariance is singular or nearly so (smallest eigenvalue
    below the ridge), a ridge of ``REG_EPS`` is added to the diagonal so
    the inverse stays bounded; flat edges then score via plain scaled
    Euclidean distance.
    """
    g = np.asarray(grads, dtype=np.float64)
    if g.ndim != 2 or g.shape[1] != 3 or g.shape[0] < 2:
        raise ValueError(f"expected (P>=2, 3) gradient rows, got {g.shape}")
    mean = g.mean(axis=0)
    d = g - mean
    cov = d.T @ d / (g.shape[0] - 1)
    regularized = bool(np.linalg.eigvalsh(cov)[0] < REG_EPS)
    if regularized:
        cov = cov + REG_EPS * np.eye(3)
    return EdgeStats(mean=mean, cov=cov, inv_cov=np.linalg.inv(cov),
                     regularized=regularized)


def directed_score(px_src: np.ndarray, rot_src: int,
                   px_dst: np.ndarray, rot_dst: int) -> float:
    """One-sided score: dst's left column joined to src's right edge.

    Sums the squared Mahalanobis distance of every boundary-crossing
    gradient row under the source edge's own gradient distribution.
    """
    stats = gradient_stats(right_edge_gradients(px_src, rot_src))
    cross = _left_column(px_dst, rot_dst) - _right_column(px_src, rot_src)
    d = cross - stats.mean
    return float(np.einsum("pc,cd,pd->", d, stats.inv_cov, d))


def pair_config_score(px_i: np.ndarray, px_j: np.ndarray,
                      rot_i: int, rot_j: int) -> float:
    """Symmetric score for "piece j sits east of piece i" at given rotations.

    Adds the mirrored one-sided score (both pieces turned 180 degrees, so
    j's abutting edge supplies the statistics) to the forward one.
    """
    fwd = directed_score(px_i, rot_i, px_j, rot_j)
    rev = directed_score(px_j, (rot_j + 2) % 4, px_i, (rot_i + 2) % 4)
    return fwd + rev


def _chunks(count: int, parts: int) -> list[range]:
    parts = max(1, min(parts, count))
    step = -(-count // parts)
    return [range(s, min(s + step, count)) for s in range(0, count, step)]


class CompatibilityTable:
    """All-pairs config scores with per-edge-group normalization.

    Arrays are indexed ``[i, rot_i, j, rot_j]``; entries with ``i == j``
    hold +inf.  ``normalized`` stores, for each config, the smaller of its
    two group-normalized values (the group of i's east-facing edge and the
    group of j's west-facing edge) — the value used to order candidate
    merges.
    """

    def __init__(self, n: int, piece_px: int, raw: np.ndarray,
                 normalized: np.ndarray, digest: str,
                 regularized_edges: int = 0):
        self.n = n
        self.piece_px = piece_px
        self.raw = raw
        self.normalized = normalized
        self.digest = digest
        self.regularized_edges = regularized_edges

    def score(self, i: int, j: int, rot_i: int, rot_j: int) -> PairConfigScore:
        return PairConfigScore(
            i=i, j=j, rot_i=rot_i, rot_j=rot_j,
            raw=float(self.raw[i, rot_i, j, rot_j]),
            normalized=float(self.normalized[i, rot_i, j, rot_j]),
        )

    def sort_key(self, i: int, j: int, rot_i: int, rot_j: int):
        """Deterministic candidate ordering: normalized, then raw, then ids."""
        return (float(self.normalized[i, rot_i, j, rot_j]),
                float(self.raw[i, rot_i, j, rot_j]), i, j, rot_i, rot_j)

    def save(self, path) -> None:
        np.savez_compressed(
            path, n=self.n, piece_px=self.piece_px, raw=self.raw,
            normalized=self.normalized, digest=np.bytes_(self.digest.encode()),
            regularized_edges=self.regularized_edges)

    @classmethod
    def load(cls, path, expected_digest: str | None = None) -> "CompatibilityTable":
        with np.load(path) as z:
            digest = bytes(z["digest"]).decode()
            if expected_digest is not None and digest != expected_digest:
                raise ValueError("cached table was built from a different piece set")
            return cls(n=int(z["n"]), piece_px=int(z["piece_px"]),
                       raw=z["raw"], normalized=z["normalized"], digest=digest,
                       regularized_edges=int(z["regularized_edges"]))


def _edge_group_divisors(raw4: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Second-smallest raw score per oriented edge group.

    Left groups fix (i, rot_i) and range over all opposing (j, rot_j);
    right groups fix (j, rot_j).  Groups with a single finite candidate
    divide by their own minimum; nonpositive divisors fall back to 1 so
    degenerate all-zero groups stay ordered.
    """
    n = raw4.shape[0]
    left = raw4.reshape(n, 4, n * 4)
    right = raw4.transpose(2, 3, 0, 1).reshape(n, 4, n * 4)
    out = []
    for vals in (left, right):
        finite = np.isfinite(vals)
        counts = finite.sum(axis=2)
        if np.any(counts < 1):
            raise ValueError("edge group with no candidates")
        part = np.partition(vals, 1, axis=2)
        ss = np.where(counts >= 2, part[:, :, 1], part[:, :, 0])
        out.append(np.where(ss > 0, ss, 1.0))
    return out[0], out[1]


def build_table(pieces: list[Piece], workers: int = 1) -> CompatibilityTable:
    """Score every ordered pair at all 16 relative rotation configs.

    Work is split by piece across ``workers`` threads; each output row is
    computed by the same sequence of array operations regardless of the
    split, so results are bit-identical for any worker count.
    """
    n = len(pieces)
    if n < 2:
        raise ValueError("need at least two pieces")
    P = pieces[0].pixels.shape[0]
    for p in pieces:
        if p.pixels.shape != (P, P, 3):
            raise ValueError("pieces differ in size")

    m = 4 * n  # oriented instances: a = 4*i + rot
    right_cols = np.empty((m, P, 3))
    left_cols = np.empty((m, P, 3))
    mean = np.empty((m, 3))
    inv_cov = np.empty((m, 3, 3))
    reg_flags = np.zeros(m, dtype=bool)

    def prep(idx: range) -> None:
        for i in idx:
            px = pieces[i].pixels
            for rot in range(4):
                a = 4 * i + rot
                rp = np.rot90(px, rot)
                right_cols[a] = rp[:, -1, :].astype(np.float64)
                left_cols[a] = rp[:, 0, :].astype(np.float64)
                stats = gradient_stats(
                    rp[:, -1, :].astype(np.float64) - rp[:, -2, :].astype(np.float64))
                mean[a] = stats.mean
                inv_cov[a] = stats.inv_cov
                reg_flags[a] = stats.regularized

    def fill_rows(rows: range, out: np.ndarray) -> None:
        # out[a, b] = sum_p (left_cols[b,p] - anchor[a,p]) S_a (…)^T
        for a in rows:
            d = left_cols - (right_cols[a] + mean[a])[None, :, :]
            t = d @ inv_cov[a]
            out[a] = np.einsum("bpc,bpc->b", t, d)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(prep, _chunks(n, workers)))
            directed = np.empty((m, m))
            list(pool.map(lambda r: fill_rows(r, directed), _chunks(m, workers * 4)))
    else:
        prep(range(n))
        directed = np.empty((m, m))
        fill_rows(range(m), directed)

    d4 = directed.reshape(n, 4, n, 4)
    flip = np.array([2, 3, 0, 1])
    # C[i,ri,j,rj] = D[(i,ri) -> (j,rj)] + D[(j,rj+2) -> (i,ri+2)]
    raw4 = d4 + d4[:, flip][:, :, :, flip].transpose(2, 3, 0, 1)
    ii = np.arange(n)
    raw4[ii, :, ii, :] = np.inf

    div_left, div_right = _edge_group_divisors(raw4)
    denom = np.maximum(div_left[:, :, None, None], div_right[None, None, :, :])
    normalized = raw4 / denom

    return CompatibilityTable(
        n=n, piece_px=P, raw=raw4, normalized=normalized,
        digest=pieces_digest(pieces), regularized_edges=int(reg_flags.sum()))


def table_from_raw(raw4: np.ndarray, piece_px: int = 2,
                   digest: str = "synthetic") -> CompatibilityTable:
    """Build a table from externally supplied raw scores (tests, fuzzing).

    ``raw4`` must be (n, 4, n, 4) with +inf on the i == j blocks and obey
    the mirror identity raw[i,ri,j,rj] == raw[j,rj+2,i,ri+2].
    """
    raw4 = np.asarray(raw4, dtype=np.float64)
    n = raw4.shape[0]
    if raw4.shape != (n, 4, n, 4) or n < 2:
        raise ValueError(f"bad raw score array shape {raw4.shape}")
    flip = np.array([2, 3, 0, 1])
    mirror = raw4[:, flip][:, :, :, flip].transpose(2, 3, 0, 1)
    finite = np.isfinite(raw4)
    if not np.array_equal(finite, np.isfinite(mirror)) or \
            not np.allclose(raw4[finite], mirror[finite]):
        raise ValueError("raw scores break the mirror symmetry")
    div_left, div_right = _edge_group_divisors(raw4)
    denom = np.maximum(div_left[:, :, None, None], div_right[None, None, :, :])
    return CompatibilityTable(n=n, piece_px=piece_px, raw=raw4,
                              normalized=raw4 / denom, digest=digest)
