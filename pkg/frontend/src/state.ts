/**
 * Pure view-model for the supervisor client.
 *
 * All state transitions live here as plain functions so they can be unit
 * tested without a DOM: server events fold into a `ViewState`, user
 * gestures produce `(next state, outgoing envelope?)` pairs, and the
 * canvas hit-testing / trim-frame geometry is ordinary arithmetic.  The
 * DOM layer renders whatever this module says and nothing else — puzzle
 * state is never mutated locally, only echoed from the server.
 */

import type {
  DeletePieces,
  Envelope,
  MergeRequest,
  MergeResponse,
  Progress,
  TrimFrame,
  TrimProposal,
  TrimResponse,
} from "./protocol.js";
import { makeEnvelope } from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

/** Sparse occupancy row as sent in Progress events. */
export type BoardCell = [row: number, col: number, piece: number, rot: number];

export interface PendingMerge {
  kind: "merge";
  request: MergeRequest;
  receivedAt: number;
}

export interface PendingTrim {
  kind: "trim";
  request: TrimProposal;
  /** Editable copy of the proposed frame; compared against the original on send. */
  frame: TrimFrame;
  receivedAt: number;
}

export type Pending = PendingMerge | PendingTrim | null;

export interface ViewState {
  connection: Connection;
  sessionId: string | null;
  fraction: number;
  previewPngB64: string | null;
  board: BoardCell[];
  origin: [number, number] | null;
  pending: Pending;
  /** Piece ids marked for deletion, in click order. */
  selection: number[];
  logLines: string[];
  notice: string | null;
}

export const LOG_CAP = 200;

export function initialState(): ViewState {
  return {
    connection: "connecting",
    sessionId: null,
    fraction: 0,
    previewPngB64: null,
    board: [],
    origin: null,
    pending: null,
    selection: [],
    logLines: [],
    notice: null,
  };
}

function pushLog(lines: string[], line: string): string[] {
  const next = [...lines, line];
  return next.length > LOG_CAP ? next.slice(next.length - LOG_CAP) : next;
}

export function setConnection(state: ViewState, connection: Connection): ViewState {
  const line =
    connection === "open" ? "connected" :
    connection === "closed" ? "disconnected" : "connecting...";
  return { ...state, connection, logLines: pushLog(state.logLines, line) };
}

/**
 * Fold one server envelope into the view.
 *
 * Progress events never displace a pending request; a fresh request
 * replaces any stale one (the server only ever has one outstanding).
 */
export function applyServerEvent(
  state: ViewState,
  envelope: Envelope,
  now: number,
): ViewState {
  const sessionId = state.sessionId ?? envelope.session_id;
  switch (envelope.type) {
    case "Progress": {
      const p = envelope.payload as Progress;
      return {
        ...state,
        sessionId,
        fraction: p.fraction,
        previewPngB64: p.preview_png_b64 ?? state.previewPngB64,
        board: p.board ?? state.board,
        origin: p.origin ?? state.origin,
        logLines: pushLog(state.logLines, p.line),
      };
    }
    case "MergeRequest": {
      const request = envelope.payload as MergeRequest;
      return {
        ...state,
        sessionId,
        pending: { kind: "merge", request, receivedAt: now },
        previewPngB64: request.preview_png_b64 ?? state.previewPngB64,
        notice: null,
        logLines: pushLog(
          state.logLines,
          `merge ${request.request_id}: pieces ${request.piece_i}+${request.piece_j}` +
            ` entropy ${request.entropy_i.toFixed(2)}/${request.entropy_j.toFixed(2)}` +
            ` (threshold ${request.threshold.toFixed(2)})`,
        ),
      };
    }
    case "TrimProposal": {
      const request = envelope.payload as TrimProposal;
      return {
        ...state,
        sessionId,
        pending: { kind: "trim", request, frame: { ...request.frame }, receivedAt: now },
        previewPngB64: request.preview_png_b64 ?? state.previewPngB64,
        origin: request.origin ?? state.origin,
        notice: null,
        logLines: pushLog(
          state.logLines,
          `crop proposal ${request.request_id}: ${request.frame.height}x` +
            `${request.frame.width} at (${request.frame.top}, ${request.frame.left})`,
        ),
      };
    }
    default:
      // response types are client -> server; seeing one here is harmless
      return {
        ...state,
        sessionId,
        logLines: pushLog(state.logLines, `ignored ${envelope.type}`),
      };
  }
}

/** Remaining milliseconds on the pending request, mirroring the server deadline. */
export function countdownMs(state: ViewState, now: number): number | null {
  if (!state.pending) return null;
  const deadline = state.pending.receivedAt + state.pending.request.deadline_ms;
  return Math.max(0, deadline - now);
}

/** Clear a request whose deadline lapsed; the server proceeds on its own. */
export function tick(state: ViewState, now: number): ViewState {
  if (!state.pending) return state;
  const remaining = countdownMs(state, now);
  if (remaining !== null && remaining > 0) return state;
  const what = state.pending.kind === "merge" ? "merge request" : "crop proposal";
  return {
    ...state,
    pending: null,
    notice: `${what} lapsed; solver proceeding on its own`,
    logLines: pushLog(state.logLines, `${what} timed out`),
  };
}

export interface Transition {
  state: ViewState;
  send: Envelope | null;
}

function noop(state: ViewState): Transition {
  return { state, send: null };
}

/** Approve or decline the pending merge; duplicate clicks send nothing. */
export function answerMerge(state: ViewState, approve: boolean): Transition {
  if (state.connection !== "open" || state.pending?.kind !== "merge") {
    return noop(state);
  }
  const request = state.pending.request;
  const payload: MergeResponse = { request_id: request.request_id, approve };
  return {
    state: {
      ...state,
      pending: null,
      logLines: pushLog(
        state.logLines,
        `${approve ? "approved" : "declined"} merge ${request.request_id}`,
      ),
    },
    send: makeEnvelope("MergeResponse", state.sessionId ?? "", payload),
  };
}

/** Toggle a piece in the deletion selection. */
export function toggleSelect(state: ViewState, pieceId: number): ViewState {
  const selection = state.selection.includes(pieceId)
    ? state.selection.filter((x) => x !== pieceId)
    : [...state.selection, pieceId];
  return { ...state, selection };
}

export function clearSelection(state: ViewState): ViewState {
  return { ...state, selection: [] };
}

/** Ask the server to delete the selected pieces; empty selection sends nothing. */
export function deleteSelection(state: ViewState): Transition {
  if (state.connection !== "open" || state.selection.length === 0) {
    return noop(state);
  }
  const payload: DeletePieces = { ids: [...state.selection].sort((a, b) => a - b) };
  return {
    state: {
      ...state,
      selection: [],
      logLines: pushLog(state.logLines, `requested deletion of ${payload.ids.join(", ")}`),
    },
    send: makeEnvelope("DeletePieces", state.sessionId ?? "", payload),
  };
}

/**
 * Approve the pending crop, sending the edited frame only when it
 * actually differs from the proposal.
 */
export function answerTrim(state: ViewState, approve: boolean): Transition {
  if (state.connection !== "open" || state.pending?.kind !== "trim") {
    return noop(state);
  }
  const { request, frame } = state.pending;
  const edited =
    frame.top !== request.frame.top ||
    frame.left !== request.frame.left ||
    frame.height !== request.frame.height ||
    frame.width !== request.frame.width ||
    frame.orientation !== request.frame.orientation;
  const payload: TrimResponse = {
    request_id: request.request_id,
    approve,
    frame: approve && edited ? { ...frame } : null,
  };
  return {
    state: {
      ...state,
      pending: null,
      logLines: pushLog(
        state.logLines,
        approve
          ? `approved crop${edited ? " (edited)" : ""}`
          : "declined crop proposal",
      ),
    },
    send: makeEnvelope("TrimResponse", state.sessionId ?? "", payload),
  };
}

// ---------------------------------------------------------------------------
// geometry: cell hit-testing and trim-frame editing

/** Occupied bounding box of the board, in cluster cell coordinates. */
export function boardBounds(
  board: BoardCell[],
): { top: number; left: number; rows: number; cols: number } | null {
  if (board.length === 0) return null;
  let top = board[0][0];
  let bottom = board[0][0];
  let left = board[0][1];
  let right = board[0][1];
  for (const [r, c] of board) {
    top = Math.min(top, r);
    bottom = Math.max(bottom, r);
    left = Math.min(left, c);
    right = Math.max(right, c);
  }
  return { top, left, rows: bottom - top + 1, cols: right - left + 1 };
}

/** Cell edge length in preview pixels, inferred from the bitmap size. */
export function cellSize(
  board: BoardCell[],
  imageWidth: number,
  imageHeight: number,
): number | null {
  const bounds = boardBounds(board);
  if (!bounds) return null;
  const byWidth = imageWidth / bounds.cols;
  const byHeight = imageHeight / bounds.rows;
  // the preview is an exact cell grid; both estimates agree up to rounding
  return Math.round((byWidth + byHeight) / 2) || null;
}

/** Map a preview-pixel position to the cluster cell under it. */
export function cellAt(
  origin: [number, number],
  cellPx: number,
  x: number,
  y: number,
): [number, number] {
  return [origin[0] + Math.floor(y / cellPx), origin[1] + Math.floor(x / cellPx)];
}

/** Piece id occupying a cell, or null for background. */
export function pieceAt(board: BoardCell[], cell: [number, number]): number | null {
  for (const [r, c, piece] of board) {
    if (r === cell[0] && c === cell[1]) return piece;
  }
  return null;
}

/**
 * Slide the editable crop frame, clamped so it always overlaps the
 * occupied board by at least one cell row and column.
 */
export function moveFrame(
  frame: TrimFrame,
  dRow: number,
  dCol: number,
  board: BoardCell[],
): TrimFrame {
  const bounds = boardBounds(board);
  let top = frame.top + dRow;
  let left = frame.left + dCol;
  if (bounds) {
    top = Math.max(bounds.top - frame.height + 1, Math.min(top, bounds.top + bounds.rows - 1));
    left = Math.max(bounds.left - frame.width + 1, Math.min(left, bounds.left + bounds.cols - 1));
  }
  return { ...frame, top, left };
}

/** Swap the crop frame between portrait and landscape about its origin. */
export function toggleOrientation(frame: TrimFrame, board: BoardCell[]): TrimFrame {
  const turned: TrimFrame = {
    ...frame,
    height: frame.width,
    width: frame.height,
    orientation: frame.orientation === "portrait" ? "landscape" : "portrait",
  };
  return moveFrame(turned, 0, 0, board);
}

/** Nudge the editable frame on the pending crop proposal. */
export function editTrimFrame(
  state: ViewState,
  edit: (frame: TrimFrame, board: BoardCell[]) => TrimFrame,
): ViewState {
  if (state.pending?.kind !== "trim") return state;
  return {
    ...state,
    pending: { ...state.pending, frame: edit(state.pending.frame, state.board) },
  };
}
