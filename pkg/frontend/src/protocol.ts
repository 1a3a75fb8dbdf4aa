/**
 * Wire protocol between the solve session and this supervisor client.
 *
 * Every message is a JSON envelope `{type, session_id, request_id?,
 * payload}`; the six payload shapes below mirror the server's dataclasses
 * field for field.  The client only ever *receives* MergeRequest,
 * TrimProposal and Progress, and only ever *sends* MergeResponse,
 * TrimResponse and DeletePieces, but all six parse for symmetry.
 */

export interface MergeRequest {
  request_id: string;
  piece_i: number;
  piece_j: number;
  rot_i: number;
  rot_j: number;
  entropy_i: number;
  entropy_j: number;
  threshold: number;
  deadline_ms: number;
  cluster_sizes: [number, number];
  preview_png_b64: string | null;
  cell_i: [number, number] | null;
  cell_j: [number, number] | null;
}

export interface MergeResponse {
  request_id: string;
  approve: boolean;
}

export interface DeletePieces {
  ids: number[];
}

export interface TrimFrame {
  top: number;
  left: number;
  height: number;
  width: number;
  orientation: string;
}

export interface TrimProposal {
  request_id: string;
  frame: TrimFrame;
  rows: number;
  cols: number;
  deadline_ms: number;
  preview_png_b64: string | null;
  origin: [number, number] | null;
}

export interface TrimResponse {
  request_id: string;
  approve: boolean;
  frame: TrimFrame | null;
}

export interface Progress {
  fraction: number;
  line: string;
  preview_png_b64: string | null;
  board: [number, number, number, number][] | null;
  origin: [number, number] | null;
}

export type EventPayload =
  | MergeRequest
  | MergeResponse
  | DeletePieces
  | TrimProposal
  | TrimResponse
  | Progress;

export type EventType =
  | "MergeRequest"
  | "MergeResponse"
  | "DeletePieces"
  | "TrimProposal"
  | "TrimResponse"
  | "Progress";

export interface Envelope {
  type: EventType;
  session_id: string;
  request_id?: string;
  payload: EventPayload;
}

const EVENT_TYPES: ReadonlySet<string> = new Set([
  "MergeRequest",
  "MergeResponse",
  "DeletePieces",
  "TrimProposal",
  "TrimResponse",
  "Progress",
]);

/** Wrap a payload in its envelope, hoisting request_id like the server does. */
export function makeEnvelope(
  type: EventType,
  sessionId: string,
  payload: EventPayload,
): Envelope {
  const envelope: Envelope = { type, session_id: sessionId, payload };
  const rid = (payload as { request_id?: string }).request_id;
  if (rid !== undefined) {
    envelope.request_id = rid;
  }
  return envelope;
}

export function encodeEnvelope(
  type: EventType,
  sessionId: string,
  payload: EventPayload,
): string {
  return JSON.stringify(makeEnvelope(type, sessionId, payload));
}

/** Parse one wire message; throws on anything that is not a known envelope. */
export function parseEnvelope(text: string): Envelope {
  const raw: unknown = JSON.parse(text);
  if (typeof raw !== "object" || raw === null) {
    throw new Error("envelope is not an object");
  }
  const obj = raw as Record<string, unknown>;
  if (typeof obj.type !== "string" || !EVENT_TYPES.has(obj.type)) {
    throw new Error(`unknown message type ${JSON.stringify(obj.type)}`);
  }
  if (typeof obj.session_id !== "string") {
    throw new Error("envelope missing session_id");
  }
  if (typeof obj.payload !== "object" || obj.payload === null) {
    throw new Error("envelope missing payload");
  }
  return obj as unknown as Envelope;
}
