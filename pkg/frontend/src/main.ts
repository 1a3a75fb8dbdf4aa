/**
 * Entry point: wire the socket, the pure view-model, and the DOM together.
 */

import { SessionClient, defaultSocketUrl } from "./client.js";
import {
  answerMerge,
  answerTrim,
  applyServerEvent,
  clearSelection,
  deleteSelection,
  editTrimFrame,
  initialState,
  moveFrame,
  setConnection,
  tick,
  toggleOrientation,
  toggleSelect,
  type Transition,
  type ViewState,
} from "./state.js";
import { Ui } from "./ui.js";

let state: ViewState = initialState();

const client = new SessionClient(defaultSocketUrl(window.location), {
  onEvent: (envelope) => {
    state = applyServerEvent(state, envelope, Date.now());
    ui.render(state, Date.now());
  },
  onStatus: (status) => {
    state = setConnection(state, status);
    ui.render(state, Date.now());
  },
  onGarbage: (_text, error) => {
    console.warn("unparseable server frame", error);
  },
});

function run(transition: Transition): void {
  state = transition.state;
  client.send(transition.send);
  ui.render(state, Date.now());
}

function update(next: ViewState): void {
  state = next;
  ui.render(state, Date.now());
}

const ui = new Ui(document, {
  approveMerge: () => run(answerMerge(state, true)),
  declineMerge: () => run(answerMerge(state, false)),
  approveTrim: () => run(answerTrim(state, true)),
  moveTrim: (dRow, dCol) =>
    update(editTrimFrame(state, (f, board) => moveFrame(f, dRow, dCol, board))),
  rotateTrim: () => update(editTrimFrame(state, toggleOrientation)),
  togglePiece: (pieceId) => update(toggleSelect(state, pieceId)),
  clearSelection: () => update(clearSelection(state)),
  deleteSelection: () => run(deleteSelection(state)),
});

// countdown refresh + lapse detection
window.setInterval(() => {
  const next = tick(state, Date.now());
  if (next !== state) {
    update(next);
  } else if (state.pending) {
    ui.renderCountdown(state, Date.now());
  }
}, 200);

ui.render(state, Date.now());
client.connect();
