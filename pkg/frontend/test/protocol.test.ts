import { describe, expect, it } from "vitest";

import {
  type DeletePieces,
  type Envelope,
  type EventPayload,
  type EventType,
  type MergeRequest,
  type MergeResponse,
  type Progress,
  type TrimProposal,
  type TrimResponse,
  encodeEnvelope,
  makeEnvelope,
  parseEnvelope,
} from "../src/protocol.js";

const SAMPLES: [EventType, EventPayload][] = [
  [
    "MergeRequest",
    {
      request_id: "m3",
      piece_i: 7,
      piece_j: 12,
      rot_i: 1,
      rot_j: 3,
      entropy_i: 4.25,
      entropy_j: 1.5,
      threshold: 2.0,
      deadline_ms: 30000,
      cluster_sizes: [5, 1],
      preview_png_b64: "aGk=",
      cell_i: [2, 3],
      cell_j: [2, 4],
    } satisfies MergeRequest,
  ],
  ["MergeResponse", { request_id: "m3", approve: true } satisfies MergeResponse],
  ["DeletePieces", { ids: [4, 9, 11] } satisfies DeletePieces],
  [
    "TrimProposal",
    {
      request_id: "t1",
      frame: { top: -1, left: 0, height: 18, width: 24, orientation: "landscape" },
      rows: 18,
      cols: 24,
      deadline_ms: 30000,
      preview_png_b64: null,
      origin: [-2, 0],
    } satisfies TrimProposal,
  ],
  [
    "TrimResponse",
    {
      request_id: "t1",
      approve: true,
      frame: { top: 0, left: 0, height: 18, width: 24, orientation: "landscape" },
    } satisfies TrimResponse,
  ],
  [
    "Progress",
    {
      fraction: 0.5,
      line: "committed 215/431",
      preview_png_b64: null,
      board: [
        [0, 0, 3, 1],
        [0, 1, 8, 0],
      ],
      origin: [0, 0],
    } satisfies Progress,
  ],
];

describe("envelope round trips", () => {
  for (const [type, payload] of SAMPLES) {
    it(type, () => {
      const parsed = parseEnvelope(encodeEnvelope(type, "img-s0-live", payload));
      expect(parsed.type).toBe(type);
      expect(parsed.session_id).toBe("img-s0-live");
      expect(parsed.payload).toEqual(payload);
    });
  }
});

describe("request_id hoisting", () => {
  it("copies payload request ids to the envelope", () => {
    const env = makeEnvelope("MergeResponse", "s", {
      request_id: "m9",
      approve: false,
    } satisfies MergeResponse);
    expect(env.request_id).toBe("m9");
  });

  it("leaves it off for id-less payloads", () => {
    const env = makeEnvelope("DeletePieces", "s", { ids: [1] });
    expect("request_id" in env).toBe(false);
  });
});

describe("parse rejections", () => {
  it.each([
    ["not json", "{nope"],
    ["non-object", "42"],
    ["unknown type", JSON.stringify({ type: "Hug", session_id: "s", payload: {} })],
    ["missing session", JSON.stringify({ type: "Progress", payload: {} })],
    ["missing payload", JSON.stringify({ type: "Progress", session_id: "s" })],
  ])("%s", (_name, text) => {
    expect(() => parseEnvelope(text)).toThrow();
  });
});

describe("server frame compatibility", () => {
  it("parses an envelope exactly as the session service emits it", () => {
    // captured from a live session log: note sorted keys and null preview
    const frame =
      '{"payload": {"cell_i": [0, 1], "cell_j": [0, 2], "cluster_sizes": [2, 1], ' +
      '"deadline_ms": 1000, "entropy_i": 3.5, "entropy_j": 2.25, "piece_i": 4, ' +
      '"piece_j": 5, "preview_png_b64": null, "request_id": "m1", "rot_i": 0, ' +
      '"rot_j": 2, "threshold": 4.0}, "request_id": "m1", ' +
      '"session_id": "tiny-s0-live", "type": "MergeRequest"}';
    const env: Envelope = parseEnvelope(frame);
    expect(env.type).toBe("MergeRequest");
    const req = env.payload as MergeRequest;
    expect(req.piece_j).toBe(5);
    expect(req.cell_j).toEqual([0, 2]);
    expect(req.deadline_ms).toBe(1000);
  });
});
