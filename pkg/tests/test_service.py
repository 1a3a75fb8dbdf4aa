"""Scripted client exercise of the live supervision socket."""
import json
import time

import pytest
from fastapi.testclient import TestClient

from jigsawlab.core import save_png
from jigsawlab.service import Hub, LiveSupervisor, create_app
from jigsawlab.session import SessionConfig, load_log
from jigsawlab.wire import (
    DeletePieces,
    MergeRequest,
    MergeResponse,
    TrimResponse,
    dumps_wire,
)
from test_session import synth_image


def dummy_request(request_id="m1") -> MergeRequest:
    return MergeRequest(request_id=request_id, piece_i=0, piece_j=1,
                        rot_i=0, rot_j=0, entropy_i=0.0, entropy_j=0.0,
                        threshold=1.0, deadline_ms=50)


def test_unanswered_requests_time_out():
    sup = LiveSupervisor(Hub(), "s", timeout_s=0.05)
    t0 = time.monotonic()
    assert sup.decide_merge(dummy_request()) is None
    assert time.monotonic() - t0 >= 0.05


def test_deletions_are_stashed_while_waiting():
    hub = Hub()
    sup = LiveSupervisor(hub, "s", timeout_s=0.2)
    hub.inbound.put(DeletePieces(ids=(4,)))
    hub.inbound.put(MergeResponse(request_id="m1", approve=False))
    response = sup.decide_merge(dummy_request())
    assert response == MergeResponse(request_id="m1", approve=False)
    assert sup.poll_deletions(step=0) == [DeletePieces(ids=(4,))]
    assert sup.poll_deletions(step=0) == []


def test_broadcast_without_clients_is_a_no_op():
    Hub().broadcast("hello")  # must not raise


def test_scripted_live_session(tmp_path):
    image = tmp_path / "puzzle.png"
    save_png(image, synth_image(3))
    log_file = tmp_path / "live.jsonl"
    config = SessionConfig(image=str(image), piece_px=2, seed=0, mode="live",
                           threshold=1e9,  # every merge needs an answer
                           timeout_s=0.4, progress_every=4)
    app = create_app(config, log_path=log_file)
    client = TestClient(app)
    assert client.get("/status").json()["state"] == "waiting"

    approvals = 0
    skipped = deleted = adjusted = False
    with client.websocket_connect("/ws") as ws:
        ws.send_text("not even json")  # must be ignored
        for _ in range(500):
            envelope = json.loads(ws.receive_text())
            kind, payload = envelope["type"], envelope["payload"]
            if kind == "MergeRequest":
                if approvals == 1 and not skipped:
                    skipped = True  # let this one hit its deadline
                    continue
                ws.send_text(dumps_wire(MergeResponse(
                    request_id=payload["request_id"], approve=True), "c"))
                approvals += 1
                if approvals == 3 and not deleted:
                    deleted = True
                    ws.send_text(dumps_wire(
                        DeletePieces(ids=(payload["piece_i"],)), "c"))
            elif kind == "TrimProposal":
                frame = dict(payload["frame"])
                frame["left"] += 1  # nudge the crop one column right
                ws.send_text(dumps_wire(TrimResponse(
                    request_id=payload["request_id"], approve=False,
                    frame=frame), "c"))
                adjusted = True
            elif kind == "Progress" and payload["fraction"] == 1.0 \
                    and "started" not in payload["line"]:
                assert "session complete" in payload["line"]
                break
        else:
            pytest.fail("session never completed")

    assert app.state.done.wait(timeout=5)
    assert skipped and deleted and adjusted

    result = app.state.result
    assert result is not None
    assert len(result.placement.entries) == 12
    status = client.get("/status").json()
    assert status["state"] == "done"
    assert status["direct"] == result.direct

    events = load_log(log_file)
    outcomes = [e["outcome"] for e in events if e["type"] == "gate-merge"]
    assert "timeout" in outcomes
    assert outcomes.count("approve") >= 3
    removals = [e for e in events if e["type"] == "pieces-removed"]
    assert len(removals) == 1
    (trim_final,) = [e for e in events if e["type"] == "trim-final"]
    assert trim_final["source"] == "supervisor"
    proposed = [e for e in events if e["type"] == "trim-proposed"]
    assert trim_final["frame"]["left"] == proposed[0]["frame"]["left"] + 1
