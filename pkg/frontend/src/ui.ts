/**
 * DOM layer: renders a ViewState snapshot and forwards user gestures.
 *
 * Rendering is a full redraw of a handful of elements plus one canvas;
 * at supervisor pace (a few events per second) that is simpler and more
 * robust than incremental updates.  The canvas shows the latest cluster
 * preview with the merge pair highlighted, selected pieces marked, and
 * the crop frame overlaid while one is pending; clicks are mapped back
 * through zoom and view rotation to cluster cells.
 */

import type { TrimFrame } from "./protocol.js";
import type { BoardCell, ViewState } from "./state.js";
import { boardBounds, cellAt, cellSize, countdownMs, pieceAt } from "./state.js";

export interface Actions {
  approveMerge(): void;
  declineMerge(): void;
  approveTrim(): void;
  moveTrim(dRow: number, dCol: number): void;
  rotateTrim(): void;
  togglePiece(pieceId: number): void;
  clearSelection(): void;
  deleteSelection(): void;
}

interface Refs {
  status: HTMLElement;
  progressFill: HTMLElement;
  progressLabel: HTMLElement;
  canvas: HTMLCanvasElement;
  dialog: HTMLElement;
  selectionBar: HTMLElement;
  notice: HTMLElement;
  log: HTMLElement;
  zoomIn: HTMLButtonElement;
  zoomOut: HTMLButtonElement;
  rotateView: HTMLButtonElement;
}

export class Ui {
  private refs: Refs;
  private zoom = 1;
  private viewTurns = 0; // quarter turns, counter-clockwise
  private bitmap: HTMLImageElement | null = null;
  private bitmapKey: string | null = null;
  private last: ViewState | null = null;

  constructor(
    root: Document,
    private readonly actions: Actions,
  ) {
    const get = (id: string) => {
      const el = root.getElementById(id);
      if (!el) throw new Error(`missing #${id}`);
      return el;
    };
    this.refs = {
      status: get("status"),
      progressFill: get("progress-fill"),
      progressLabel: get("progress-label"),
      canvas: get("board") as HTMLCanvasElement,
      dialog: get("dialog"),
      selectionBar: get("selection-bar"),
      notice: get("notice"),
      log: get("log"),
      zoomIn: get("zoom-in") as HTMLButtonElement,
      zoomOut: get("zoom-out") as HTMLButtonElement,
      rotateView: get("rotate-view") as HTMLButtonElement,
    };
    this.refs.zoomIn.onclick = () => this.setZoom(this.zoom * 1.25);
    this.refs.zoomOut.onclick = () => this.setZoom(this.zoom / 1.25);
    this.refs.rotateView.onclick = () => {
      this.viewTurns = (this.viewTurns + 1) % 4;
      this.redraw();
    };
    this.refs.canvas.onclick = (ev) => this.onCanvasClick(ev);
  }

  private setZoom(z: number): void {
    this.zoom = Math.min(4, Math.max(0.25, z));
    this.redraw();
  }

  render(state: ViewState, now: number): void {
    this.last = state;
    this.renderStatus(state);
    this.renderProgress(state);
    this.renderDialog(state, now);
    this.renderSelection(state);
    this.renderLog(state);
    this.ensureBitmap(state);
    this.redraw();
  }

  /** Refresh only the countdown text between full renders. */
  renderCountdown(state: ViewState, now: number): void {
    const el = this.refs.dialog.querySelector(".countdown");
    const remaining = countdownMs(state, now);
    if (el && remaining !== null) {
      el.textContent = `${(remaining / 1000).toFixed(1)}s`;
    }
  }

  private renderStatus(state: ViewState): void {
    this.refs.status.textContent =
      state.connection === "open"
        ? `connected — ${state.sessionId ?? "session"}`
        : state.connection;
    this.refs.status.className = `status ${state.connection}`;
    const disabled = state.connection !== "open";
    this.refs.dialog
      .querySelectorAll("button")
      .forEach((b) => (b.disabled = disabled));
  }

  private renderProgress(state: ViewState): void {
    const pct = Math.round(state.fraction * 100);
    this.refs.progressFill.style.width = `${pct}%`;
    this.refs.progressLabel.textContent = `${pct}%`;
  }

  private renderDialog(state: ViewState, now: number): void {
    const dialog = this.refs.dialog;
    dialog.innerHTML = "";
    this.refs.notice.textContent = state.notice ?? "";
    if (!state.pending) {
      dialog.classList.remove("active");
      return;
    }
    dialog.classList.add("active");
    const remaining = countdownMs(state, now) ?? 0;
    if (state.pending.kind === "merge") {
      const r = state.pending.request;
      dialog.append(
        h("h3", "Merge request"),
        h(
          "p",
          `pieces ${r.piece_i} + ${r.piece_j} (clusters of ${r.cluster_sizes[0]} and ` +
            `${r.cluster_sizes[1]}); texture entropy ${r.entropy_i.toFixed(2)} / ` +
            `${r.entropy_j.toFixed(2)}, threshold ${r.threshold.toFixed(2)}`,
        ),
        h("p", "", el("span", "countdown", `${(remaining / 1000).toFixed(1)}s`)),
        button("Approve", () => this.actions.approveMerge()),
        button("Decline", () => this.actions.declineMerge()),
      );
    } else {
      const f = state.pending.frame;
      dialog.append(
        h("h3", "Crop frame"),
        h(
          "p",
          `${f.height} rows x ${f.width} cols at (${f.top}, ${f.left}), ` +
            `${f.orientation}`,
        ),
        h("p", "", el("span", "countdown", `${(remaining / 1000).toFixed(1)}s`)),
        button("↑", () => this.actions.moveTrim(-1, 0)),
        button("↓", () => this.actions.moveTrim(1, 0)),
        button("←", () => this.actions.moveTrim(0, -1)),
        button("→", () => this.actions.moveTrim(0, 1)),
        button("Turn", () => this.actions.rotateTrim()),
        button("Approve", () => this.actions.approveTrim()),
      );
    }
    const disabled = state.connection !== "open";
    dialog.querySelectorAll("button").forEach((b) => (b.disabled = disabled));
  }

  private renderSelection(state: ViewState): void {
    const bar = this.refs.selectionBar;
    bar.innerHTML = "";
    if (state.selection.length === 0) {
      bar.append(h("span", "click pieces to mark them for deletion"));
      return;
    }
    bar.append(
      h("span", `${state.selection.length} selected: ${state.selection.join(", ")} `),
      button("Delete", () => this.actions.deleteSelection()),
      button("Cancel", () => this.actions.clearSelection()),
    );
    bar.querySelectorAll("button").forEach(
      (b) => (b.disabled = state.connection !== "open"),
    );
  }

  private renderLog(state: ViewState): void {
    this.refs.log.textContent = state.logLines.slice(-60).join("\n");
    this.refs.log.scrollTop = this.refs.log.scrollHeight;
  }

  private ensureBitmap(state: ViewState): void {
    const b64 = state.previewPngB64;
    if (!b64 || b64 === this.bitmapKey) return;
    const img = new Image();
    img.onload = () => {
      this.bitmap = img;
      this.bitmapKey = b64;
      this.redraw();
    };
    img.src = `data:image/png;base64,${b64}`;
  }

  // -- canvas ---------------------------------------------------------------

  private redraw(): void {
    const state = this.last;
    const canvas = this.refs.canvas;
    const ctx = canvas.getContext("2d");
    if (!state || !ctx) return;
    const img = this.bitmap;
    if (!img) {
      ctx.clearRect(0, 0, canvas.width, canvas.height);
      return;
    }
    const w = img.naturalWidth * this.zoom;
    const h2 = img.naturalHeight * this.zoom;
    const sideways = this.viewTurns % 2 === 1;
    canvas.width = Math.ceil(sideways ? h2 : w);
    canvas.height = Math.ceil(sideways ? w : h2);
    ctx.save();
    ctx.translate(canvas.width / 2, canvas.height / 2);
    ctx.rotate((-this.viewTurns * Math.PI) / 2);
    ctx.scale(this.zoom, this.zoom);
    ctx.imageSmoothingEnabled = this.zoom < 1;
    ctx.drawImage(img, -img.naturalWidth / 2, -img.naturalHeight / 2);
    this.drawOverlays(ctx, state, img.naturalWidth, img.naturalHeight);
    ctx.restore();
  }

  private drawOverlays(
    ctx: CanvasRenderingContext2D,
    state: ViewState,
    imgW: number,
    imgH: number,
  ): void {
    const px = cellSize(state.board, imgW, imgH);
    const origin = state.origin;
    if (!px || !origin) return;
    const rect = (cell: [number, number]) =>
      [
        (cell[1] - origin[1]) * px - imgW / 2,
        (cell[0] - origin[0]) * px - imgH / 2,
      ] as const;

    ctx.lineWidth = Math.max(1.5, px / 12);
    if (state.pending?.kind === "merge") {
      const { cell_i, cell_j } = state.pending.request;
      for (const [cell, color] of [
        [cell_i, "#ffd54d"],
        [cell_j, "#4dd0ff"],
      ] as const) {
        if (!cell) continue;
        const [x, y] = rect(cell);
        ctx.strokeStyle = color;
        ctx.strokeRect(x + 1, y + 1, px - 2, px - 2);
      }
    }

    if (state.selection.length > 0) {
      const marked = new Set(state.selection);
      ctx.strokeStyle = "#ff5252";
      for (const [r, c, piece] of state.board) {
        if (marked.has(piece)) {
          const [x, y] = rect([r, c]);
          ctx.strokeRect(x + 1, y + 1, px - 2, px - 2);
          ctx.beginPath();
          ctx.moveTo(x + 2, y + 2);
          ctx.lineTo(x + px - 2, y + px - 2);
          ctx.stroke();
        }
      }
    }

    if (state.pending?.kind === "trim") {
      const f: TrimFrame = state.pending.frame;
      const [x, y] = rect([f.top, f.left]);
      ctx.strokeStyle = "#69f0ae";
      ctx.setLineDash([px / 3, px / 5]);
      ctx.strokeRect(x, y, f.width * px, f.height * px);
      ctx.setLineDash([]);
    }
  }

  private onCanvasClick(ev: MouseEvent): void {
    const state = this.last;
    const img = this.bitmap;
    if (!state || !img || state.board.length === 0 || !state.origin) return;
    // invert view rotation and zoom to get preview-bitmap pixels
    const canvas = this.refs.canvas;
    const cx = ev.offsetX - canvas.width / 2;
    const cy = ev.offsetY - canvas.height / 2;
    const a = (this.viewTurns * Math.PI) / 2; // inverse of the draw rotation
    const rx = cx * Math.cos(a) - cy * Math.sin(a);
    const ry = cx * Math.sin(a) + cy * Math.cos(a);
    const x = rx / this.zoom + img.naturalWidth / 2;
    const y = ry / this.zoom + img.naturalHeight / 2;
    const px = cellSize(state.board, img.naturalWidth, img.naturalHeight);
    if (!px || x < 0 || y < 0 || x >= img.naturalWidth || y >= img.naturalHeight) {
      return;
    }
    const piece = pieceAt(state.board, cellAt(state.origin, px, x, y));
    if (piece !== null) {
      this.actions.togglePiece(piece);
    }
  }
}

/** Debug helper: readable summary of the board extent. */
export function describeBoard(board: BoardCell[]): string {
  const bounds = boardBounds(board);
  if (!bounds) return "empty board";
  return `${board.length} pieces in ${bounds.rows}x${bounds.cols} cells`;
}

function h(tag: string, text: string, ...children: HTMLElement[]): HTMLElement {
  const node = document.createElement(tag);
  if (text) node.textContent = text;
  node.append(...children);
  return node;
}

function el(tag: string, className: string, text: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  node.textContent = text;
  return node;
}

function button(label: string, onClick: () => void): HTMLButtonElement {
  const b = document.createElement("button");
  b.textContent = label;
  b.onclick = onClick;
  return b;
}
