"""Serve a solve session to supervisor clients over a WebSocket.

The assembly engine runs in a worker thread; gated merge requests, crop
proposals, and progress updates are broadcast to every connected client
as JSON wire envelopes, and client responses are funneled back through a
thread-safe queue.  A request left unanswered for its deadline proceeds
on its own, so a session with no (or an idle) client degrades to the
autonomous behavior.

The session starts when the first client connects; late clients join as
additional viewers.
"""
from __future__ import annotations

import asyncio
import queue
import threading
import time
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .session import SessionConfig, run_session
from .supervision import Supervisor
from .wire import (DeletePieces, MergeResponse, Progress, TrimResponse,
                   dumps_wire, loads_wire)


class Hub:
    """Fan-out to websocket clients plus a queue of their responses."""

    def __init__(self):
        self.inbound: "queue.Queue" = queue.Queue()
        self.clients: set[WebSocket] = set()
        self.loop: Optional[asyncio.AbstractEventLoop] = None

    async def attach(self, ws: WebSocket) -> None:
        await ws.accept()
        self.loop = asyncio.get_running_loop()
        self.clients.add(ws)

    def detach(self, ws: WebSocket) -> None:
        self.clients.discard(ws)

    async def _send_all(self, text: str) -> None:
        for ws in list(self.clients):
            try:
                await ws.send_text(text)
            except Exception:
                self.detach(ws)

    def broadcast(self, text: str) -> None:
        """Thread-safe, fire-and-forget send to every client."""
        loop = self.loop
        if loop is None or loop.is_closed():
            return
        try:
            asyncio.run_coroutine_threadsafe(self._send_all(text), loop)
        except RuntimeError:
            pass  # loop torn down mid-send


class LiveSupervisor(Supervisor):
    """Forwards gate decisions to whoever is connected to the hub."""

    needs_previews = True

    def __init__(self, hub: Hub, session_id: str, timeout_s: float):
        self.hub = hub
        self.session_id = session_id
        self.timeout_s = timeout_s
        self._stash: list[DeletePieces] = []

    def _await_response(self, want_type, request_id: str):
        deadline = time.monotonic() + self.timeout_s
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            try:
                event = self.hub.inbound.get(timeout=remaining)
            except queue.Empty:
                return None
            if isinstance(event, DeletePieces):
                self._stash.append(event)
            elif isinstance(event, want_type) \
                    and event.request_id == request_id:
                return event
            # anything else is a stale response; drop it

    def decide_merge(self, request):
        self.hub.broadcast(dumps_wire(request, self.session_id))
        return self._await_response(MergeResponse, request.request_id)

    def decide_trim(self, proposal, forest):
        self.hub.broadcast(dumps_wire(proposal, self.session_id))
        return self._await_response(TrimResponse, proposal.request_id)

    def poll_deletions(self, step: int) -> list[DeletePieces]:
        out, self._stash = self._stash, []
        while True:
            try:
                event = self.hub.inbound.get_nowait()
            except queue.Empty:
                break
            if isinstance(event, DeletePieces):
                out.append(event)
        return out

    def notify(self, event: Progress) -> None:
        self.hub.broadcast(dumps_wire(event, self.session_id))


def create_app(config: SessionConfig, log_path=None) -> FastAPI:
    """App serving one live session; it starts on the first connection."""
    app = FastAPI()
    hub = Hub()
    app.state.hub = hub
    app.state.config = config
    app.state.result = None
    app.state.done = threading.Event()
    lock = threading.Lock()
    session_id = config.session_id()

    def _run() -> None:
        supervisor = LiveSupervisor(hub, session_id, config.timeout_s)
        hub.broadcast(dumps_wire(
            Progress(fraction=0.0, line="session started"), session_id))
        try:
            app.state.result = run_session(config, supervisor=supervisor,
                                           log_path=log_path)
            result = app.state.result
            hub.broadcast(dumps_wire(Progress(
                fraction=1.0,
                line=(f"session complete: direct={result.direct:.4f} "
                      f"neighbor={result.neighbor:.4f}")), session_id))
        except Exception as exc:  # surface the failure to clients
            app.state.error = repr(exc)
            hub.broadcast(dumps_wire(Progress(
                fraction=1.0, line=f"session failed: {exc}"), session_id))
            raise
        finally:
            app.state.done.set()

    def _ensure_started() -> None:
        with lock:
            if getattr(app.state, "thread", None) is None:
                app.state.thread = threading.Thread(
                    target=_run, name="solve-session", daemon=True)
                app.state.thread.start()

    @app.get("/status")
    def status() -> dict:
        result = app.state.result
        out = {"session_id": session_id, "mode": config.mode,
               "image": str(config.image),
               "state": ("done" if app.state.done.is_set() else
                         "running" if getattr(app.state, "thread", None)
                         else "waiting")}
        if result is not None:
            out.update(direct=result.direct, neighbor=result.neighbor,
                       commits=result.commits, seconds=result.seconds)
        return out

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await hub.attach(ws)
        _ensure_started()
        try:
            while True:
                text = await ws.receive_text()
                try:
                    event = loads_wire(text)
                except (ValueError, TypeError):
                    continue
                if isinstance(event, (MergeResponse, TrimResponse,
                                      DeletePieces)):
                    hub.inbound.put(event)
        except WebSocketDisconnect:
            pass
        finally:
            hub.detach(ws)

    return app


def serve(config: SessionConfig, listen: str, log_path=None):
    """Run the app until its session finishes; returns the result."""
    import uvicorn

    host, _, port = listen.rpartition(":")
    app = create_app(config, log_path=log_path)
    server = uvicorn.Server(uvicorn.Config(
        app, host=host or "127.0.0.1", port=int(port), log_level="warning"))

    def _watch() -> None:
        app.state.done.wait()
        time.sleep(0.25)  # let the completion notice flush to clients
        server.should_exit = True

    threading.Thread(target=_watch, daemon=True).start()
    server.run()
    return app.state.result
