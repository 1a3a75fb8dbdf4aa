"""Supervisor-channel message types and their JSON wire form.

Messages cross the boundary between the assembly session and whatever is
supervising it (an oracle in tests, a human UI over a socket).  On the
wire each message is an envelope ``{type, session_id, request_id?,
payload}`` where ``type`` names one of the classes below.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class MergeRequest:
    """Ask whether a tentative merge should go ahead."""

    request_id: str
    piece_i: int
    piece_j: int
    rot_i: int
    rot_j: int
    entropy_i: float
    entropy_j: float
    threshold: float
    deadline_ms: int
    cluster_sizes: tuple[int, int] = (1, 1)
    preview_png_b64: Optional[str] = None
    # preview-relative cells of the two pieces, for highlighting
    cell_i: Optional[tuple[int, int]] = None
    cell_j: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class MergeResponse:
    request_id: str
    approve: bool


@dataclass(frozen=True)
class DeletePieces:
    ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))


@dataclass(frozen=True)
class TrimProposal:
    request_id: str
    frame: dict  # TrimFrame.to_json_dict()
    rows: int
    cols: int
    deadline_ms: int
    preview_png_b64: Optional[str] = None
    # preview-relative offset of the cluster bounding box origin, in cells
    origin: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class TrimResponse:
    request_id: str
    approve: bool
    frame: Optional[dict] = None


@dataclass(frozen=True)
class Progress:
    fraction: float
    line: str
    preview_png_b64: Optional[str] = None
    # sparse board for hit-testing: [[row, col, piece, rot], ...]
    board: Optional[list] = None
    origin: Optional[tuple[int, int]] = None


SupervisorEvent = Union[MergeRequest, MergeResponse, DeletePieces,
                        TrimProposal, TrimResponse, Progress]

_TYPES = {cls.__name__: cls for cls in
          (MergeRequest, MergeResponse, DeletePieces, TrimProposal,
           TrimResponse, Progress)}


def to_wire(event: SupervisorEvent, session_id: str) -> dict:
    """Wrap an event in its wire envelope."""
    payload = asdict(event)
    envelope = {"type": type(event).__name__, "session_id": session_id,
                "payload": payload}
    request_id = payload.get("request_id")
    if request_id is not None:
        envelope["request_id"] = request_id
    return envelope


def from_wire(envelope: dict) -> SupervisorEvent:
    """Parse an envelope back into a typed event; raises on unknown type."""
    cls = _TYPES.get(envelope.get("type"))
    if cls is None:
        raise ValueError(f"unknown message type {envelope.get('type')!r}")
    payload = dict(envelope.get("payload") or {})
    # tuples survive JSON as lists; rebuild the frozen dataclass cleanly
    fixed = {}
    for key, value in payload.items():
        fixed[key] = tuple(value) if isinstance(value, list) and key in (
            "ids", "cluster_sizes", "cell_i", "cell_j", "origin") else value
    return cls(**fixed)


def dumps_wire(event: SupervisorEvent, session_id: str) -> str:
    return json.dumps(to_wire(event, session_id), sort_keys=True)


def loads_wire(text: str) -> SupervisorEvent:
    return from_wire(json.loads(text))
