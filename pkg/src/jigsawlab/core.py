"""Square-piece puzzle primitives.

A puzzle is an RGB image cut into a rows x cols grid of square pieces,
`piece_px` pixels on a side.  Pieces carry dense integer ids; a placement
assigns every piece a grid cell and a rotation.  Rotations are quarter
turns, counted counter-clockwise, so ``rot=1`` means the stored pixels
must be turned 90 degrees CCW to reproduce the source image.
"""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from PIL import Image

#: the four quarter-turn rotations, CCW
ROTATIONS = (0, 1, 2, 3)

#: grid directions as (drow, dcol), row axis pointing down
EAST = (0, 1)
NORTH = (-1, 0)
WEST = (0, -1)
SOUTH = (1, 0)

#: background color used when rendering partially assembled clusters
BACKGROUND_RGB = (128, 128, 128)


def rotate_direction(d: tuple[int, int], quarter_turns: int) -> tuple[int, int]:
    """Rotate a grid direction CCW by the given number of quarter turns."""
    dr, dc = d
    for _ in range(quarter_turns % 4):
        dr, dc = -dc, dr
    return (dr, dc)


def rotate_piece(pixels: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Rotate piece pixels CCW by quarter turns; returns a contiguous copy."""
    return np.ascontiguousarray(np.rot90(pixels, quarter_turns % 4))


@dataclass(frozen=True, eq=False)
class Piece:
    """One square piece: a dense id plus its (P, P, 3) uint8 pixels."""

    id: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim != 3 or px.shape[0] != px.shape[1] or px.shape[2] != 3:
            raise ValueError(f"piece pixels must be (P, P, 3), got {px.shape}")


@dataclass(frozen=True)
class PuzzleSpec:
    """Grid geometry of a puzzle."""

    rows: int
    cols: int
    piece_px: int

    @property
    def n_pieces(self) -> int:
        return self.rows * self.cols

    @property
    def image_size(self) -> tuple[int, int]:
        """(height, width) in pixels of the assembled image."""
        return (self.rows * self.piece_px, self.cols * self.piece_px)


@dataclass
class Placement:
    """Assignment of piece ids to (row, col, rotation) cells on the grid."""

    rows: int
    cols: int
    piece_px: int
    entries: dict[int, tuple[int, int, int]] = field(default_factory=dict)

    def spec(self) -> PuzzleSpec:
        return PuzzleSpec(self.rows, self.cols, self.piece_px)

    def cells(self) -> dict[tuple[int, int], tuple[int, int]]:
        """Invert to {(row, col): (piece id, rot)}; raises on duplicate cells."""
        out: dict[tuple[int, int], tuple[int, int]] = {}
        for pid, (r, c, rot) in self.entries.items():
            if (r, c) in out:
                raise ValueError(f"two pieces placed at cell ({r}, {c})")
            out[(r, c)] = (pid, rot)
        return out

    def to_json_dict(self) -> dict:
        pieces = [
            {"id": pid, "row": r, "col": c, "rot": rot}
            for pid, (r, c, rot) in sorted(self.entries.items())
        ]
        return {"pieces": pieces, "rows": self.rows, "cols": self.cols, "P": self.piece_px}

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "Placement":
        entries = {
            int(p["id"]): (int(p["row"]), int(p["col"]), int(p["rot"]) % 4)
            for p in d["pieces"]
        }
        return cls(rows=int(d["rows"]), cols=int(d["cols"]), piece_px=int(d["P"]),
                   entries=entries)

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Placement":
        return cls.from_json_dict(json.loads(text))


def load_image(path) -> np.ndarray:
    """Load an image file as an RGB uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(path, img: np.ndarray) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def slice_image(img: np.ndarray, piece_px: int) -> tuple[PuzzleSpec, list[Piece]]:
    """Cut an RGB image into unrotated pieces in row-major source order.

    Raises ValueError if either image dimension is not a multiple of
    ``piece_px``.
    """
    if piece_px < 2:
        raise ValueError(f"piece_px must be >= 2, got {piece_px}")
    h, w = img.shape[:2]
    if h % piece_px or w % piece_px:
        raise ValueError(
            f"image size {w}x{h} is not a multiple of piece size {piece_px}"
        )
    rows, cols = h // piece_px, w // piece_px
    spec = PuzzleSpec(rows=rows, cols=cols, piece_px=piece_px)
    pieces = []
    for r in range(rows):
        for c in range(cols):
            block = img[r * piece_px:(r + 1) * piece_px, c * piece_px:(c + 1) * piece_px]
            pieces.append(Piece(id=r * cols + c, pixels=np.ascontiguousarray(block)))
    return spec, pieces


def scramble(spec: PuzzleSpec, pieces: list[Piece], seed: int) -> tuple[list[Piece], Placement]:
    """Permute and randomly rotate pieces; return scrambled pieces + ground truth.

    The scrambled pieces get fresh dense ids 0..n-1.  The returned truth
    placement maps each new id to the source cell and the rotation that
    restores the original image.
    """
    n = spec.n_pieces
    if len(pieces) != n:
        raise ValueError(f"expected {n} pieces, got {len(pieces)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    turns = rng.integers(0, 4, size=n)
    scrambled: list[Piece] = []
    truth = Placement(rows=spec.rows, cols=spec.cols, piece_px=spec.piece_px)
    for new_id in range(n):
        src = pieces[perm[new_id]]
        q = int(turns[new_id])
        scrambled.append(Piece(id=new_id, pixels=rotate_piece(src.pixels, q)))
        src_r, src_c = divmod(src.id, spec.cols)
        truth.entries[new_id] = (src_r, src_c, (4 - q) % 4)
    return scrambled, truth


def pieces_digest(pieces: Iterable[Piece]) -> str:
    """Content hash of a piece set (id order and pixels)."""
    h = hashlib.sha256()
    for p in pieces:
        h.update(p.id.to_bytes(4, "little"))
        h.update(np.ascontiguousarray(p.pixels).tobytes())
    return h.hexdigest()


def render_placement(placement: Placement, pieces: list[Piece]) -> np.ndarray:
    """Render a full placement to an RGB image; unfilled cells get background."""
    P = placement.piece_px
    img = np.empty((placement.rows * P, placement.cols * P, 3), dtype=np.uint8)
    img[:] = BACKGROUND_RGB
    by_id = {p.id: p for p in pieces}
    for pid, (r, c, rot) in placement.entries.items():
        if not (0 <= r < placement.rows and 0 <= c < placement.cols):
            raise ValueError(f"piece {pid} placed out of bounds at ({r}, {c})")
        img[r * P:(r + 1) * P, c * P:(c + 1) * P] = rotate_piece(by_id[pid].pixels, rot)
    return img


def render_cells(
    cells: Mapping[tuple[int, int], tuple[int, int]],
    pieces_by_id: Mapping[int, Piece],
    piece_px: int,
) -> tuple[np.ndarray, tuple[int, int]]:
    """Render a sparse {cell: (piece, rot)} map; returns (image, bbox origin).

    Cells may live anywhere in the plane (cluster-local coordinates); the
    image covers their bounding box and empty cells get the background color.
    """
    if not cells:
        raise ValueError("nothing to render")
    rs = [rc[0] for rc in cells]
    cs = [rc[1] for rc in cells]
    r0, c0 = min(rs), min(cs)
    h, w = max(rs) - r0 + 1, max(cs) - c0 + 1
    img = np.empty((h * piece_px, w * piece_px, 3), dtype=np.uint8)
    img[:] = BACKGROUND_RGB
    for (r, c), (pid, rot) in cells.items():
        rr, cc = (r - r0) * piece_px, (c - c0) * piece_px
        img[rr:rr + piece_px, cc:cc + piece_px] = rotate_piece(
            pieces_by_id[pid].pixels, rot)
    return img, (r0, c0)
