"""Texture legibility scores for puzzle pieces.

A human reviewing a proposed merge can only make a meaningful call when
the pieces carry enough visual structure to judge.  We measure that with
the entropy of a gray-level co-occurrence matrix over horizontally
adjacent pixels: flat or near-flat pieces score close to zero, busy
photographic texture scores several bits.  Merge requests whose least
legible side falls below a calibrated threshold are the ones worth
routing to a reviewer.
"""
from __future__ import annotations

import numpy as np
from skimage.feature import graycomatrix

from .core import rotate_piece

#: number of gray levels the co-occurrence matrix is quantized to
GLCM_LEVELS = 32

# Rec. 601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def quantize_gray(pixels: np.ndarray) -> np.ndarray:
    """Collapse an RGB piece to GLCM_LEVELS gray levels.

    Uses Rec. 601 luma, then an even split of the 0..255 range.
    """
    luma = np.asarray(pixels, dtype=np.float64) @ _LUMA
    levels = np.floor(luma * GLCM_LEVELS / 256.0).astype(np.intp)
    return np.clip(levels, 0, GLCM_LEVELS - 1).astype(np.uint8)


def glcm_entropy(pixels: np.ndarray, rotation: int = 0) -> float:
    """Co-occurrence entropy (bits) of a piece shown at ``rotation``.

    The piece is spun the way it would appear on the board, then scanned
    for horizontally adjacent level pairs at distance 1 (symmetric,
    normalized).  Entropy is -sum(p * log2 p) over nonzero bins, so a
    uniform piece scores exactly 0.0 and the ceiling is
    2 * log2(GLCM_LEVELS) = 10 bits.
    """
    gray = quantize_gray(rotate_piece(pixels, rotation))
    glcm = graycomatrix(gray, distances=[1], angles=[0],
                        levels=GLCM_LEVELS, symmetric=True, normed=True)
    p = glcm[:, :, 0, 0]
    p = p[p > 0.0]
    return float(-np.sum(p * np.log2(p)))


def entropy_table(pieces) -> np.ndarray:
    """Entropy of every piece at every rotation, shape (n, 4)."""
    out = np.empty((len(pieces), 4), dtype=np.float64)
    for idx, piece in enumerate(pieces):
        for rot in range(4):
            out[idx, rot] = glcm_entropy(piece.pixels, rot)
    return out


def calibrate_threshold(entropies: np.ndarray, fraction: float = 0.1) -> float:
    """Threshold such that ``fraction`` of the given entropies fall below.

    Pass the rotation-0 column of an entropy table (or any 1-D sample of
    the corpus being solved).  ``fraction`` = 0.1 routes roughly the
    flattest tenth of pieces to review.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    sample = np.asarray(entropies, dtype=np.float64).ravel()
    if sample.size == 0:
        raise ValueError("cannot calibrate on an empty sample")
    return float(np.quantile(sample, fraction))
