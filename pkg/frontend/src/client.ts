/**
 * Thin WebSocket wrapper: parses inbound envelopes, serializes outbound
 * ones, and surfaces connection state.  Malformed frames are reported but
 * never break the stream.
 */

import type { Envelope } from "./protocol.js";
import { parseEnvelope } from "./protocol.js";

export interface ClientHooks {
  onEvent: (envelope: Envelope) => void;
  onStatus: (status: "connecting" | "open" | "closed") => void;
  onGarbage?: (text: string, error: unknown) => void;
}

export class SessionClient {
  private ws: WebSocket | null = null;

  constructor(
    private readonly url: string,
    private readonly hooks: ClientHooks,
  ) {}

  connect(): void {
    this.hooks.onStatus("connecting");
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => this.hooks.onStatus("open");
    ws.onclose = () => this.hooks.onStatus("closed");
    ws.onerror = () => this.hooks.onStatus("closed");
    ws.onmessage = (msg: MessageEvent<string>) => {
      try {
        this.hooks.onEvent(parseEnvelope(msg.data));
      } catch (error) {
        this.hooks.onGarbage?.(msg.data, error);
      }
    };
  }

  send(envelope: Envelope | null): void {
    if (envelope && this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(envelope));
    }
  }

  close(): void {
    this.ws?.close();
  }
}

/** Default ws:// URL for the page's own host, honoring ?ws= overrides. */
export function defaultSocketUrl(location: Location): string {
  const override = new URLSearchParams(location.search).get("ws");
  if (override) return override;
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}
