"""Embedded web server: static client, recordings, and live websocket feed.

Frames are batched and pushed to every connected client on a fixed
400 ms cadence; empty batches are suppressed. Capture settings are
global, so a change requested by one client (or the control pipe) is
confirmed to all clients. Messages are JSON with a "type" field:

  server -> client: hello, sensors, batch, intervalChanged, label
  client -> server: setInterval, setEvents, setDiscrete, record,
                    pause, resume, label

A client that cannot keep up (32 queued batches) is disconnected.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import logging
import queue
import threading
from pathlib import Path
from typing import Optional

import uvicorn
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .control import ControlCommand
from .engine import Engine, EngineError
from .events import SENTINEL, SampleFrame

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
SUBPROTOCOL = "ccscope.v1"
BATCH_WINDOW_S = 0.4
CLIENT_QUEUE_LIMIT = 32
STATIC_DIR = Path(__file__).parent / "webstatic"

WS_POLICY_VIOLATION = 1008


def _frame_dict(frame: SampleFrame) -> dict:
    doc = {
        "t": frame.t,
        "elapsed": frame.elapsed,
        "v": [None if v == SENTINEL else v for v in frame.values],
    }
    if frame.label is not None:
        doc["label"] = frame.label
    return doc


class _Client:
    _next_id = 0

    def __init__(self, ws: WebSocket) -> None:
        self.ws = ws
        self.queue: asyncio.Queue[str] = asyncio.Queue(maxsize=CLIENT_QUEUE_LIMIT)
        self.writer: Optional[asyncio.Task] = None
        _Client._next_id += 1
        self.id = _Client._next_id


class LiveServer:
    """Wires the engine's frame and control streams into websockets."""

    def __init__(self, engine: Engine, recordings_dir: Optional[Path] = None) -> None:
        self.engine = engine
        self.recordings_dir = Path(recordings_dir) if recordings_dir else None
        self._clients: dict[int, _Client] = {}
        self._frames: Optional[queue.SimpleQueue] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._batcher: Optional[asyncio.Task] = None

    # -- lifecycle -------------------------------------------------------------

    async def startup(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._frames = self.engine.subscribe()
        self.engine.add_listener(self._on_control_event)
        self._batcher = asyncio.create_task(self._batch_loop())

    async def shutdown(self) -> None:
        if self._batcher is not None:
            self._batcher.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await self._batcher
        if self._frames is not None:
            self.engine.unsubscribe(self._frames)
        for client in list(self._clients.values()):
            await self._drop(client)

    # -- messages ---------------------------------------------------------------

    def hello_message(self) -> str:
        rates = {
            d.name: d.rate for d in self.engine.sensor_descriptors() if d.present
        }
        clocks = {
            s.name(): s.core_clock_hz()
            for s in self.engine.sensors()
            if s.present()
        }
        return json.dumps(
            {
                "type": "hello",
                "version": PROTOCOL_VERSION,
                "interval": self.engine.interval_ms,
                "discrete": self.engine.discrete,
                "headings": self.engine.headings(True),
                "descriptions": self.engine.headings(False),
                "rates": rates,
                "clockHz": clocks,
            }
        )

    def sensors_message(self) -> str:
        return json.dumps(
            {
                "type": "sensors",
                "sensors": [d.as_dict() for d in self.engine.sensor_descriptors()],
            }
        )

    # -- broadcast --------------------------------------------------------------

    async def _batch_loop(self) -> None:
        loop = asyncio.get_running_loop()
        deadline = loop.time() + BATCH_WINDOW_S
        while True:
            await asyncio.sleep(max(0.0, deadline - loop.time()))
            deadline += BATCH_WINDOW_S
            if deadline < loop.time():  # fell behind; resynchronize
                deadline = loop.time() + BATCH_WINDOW_S
            frames = self._drain_frames()
            if not frames:
                continue
            payload = json.dumps(
                {"type": "batch", "frames": [_frame_dict(f) for f in frames]}
            )
            self._enqueue_all(payload)

    def _drain_frames(self) -> list[SampleFrame]:
        frames: list[SampleFrame] = []
        if self._frames is None:
            return frames
        while True:
            try:
                frames.append(self._frames.get_nowait())
            except queue.Empty:
                return frames

    def _enqueue_all(self, payload: str) -> None:
        for client in list(self._clients.values()):
            try:
                client.queue.put_nowait(payload)
            except asyncio.QueueFull:
                log.warning("client %d too slow (%d batches queued); dropping",
                            client.id, CLIENT_QUEUE_LIMIT)
                asyncio.ensure_future(self._drop(client))

    def _on_control_event(self, event: str, payload: object) -> None:
        # Called from engine/control threads; hop onto the event loop.
        if self._loop is None or self._loop.is_closed():
            return
        if event == "interval":
            msg = json.dumps({"type": "intervalChanged", "interval": payload})
        elif event == "hello":
            msg = None  # built per send, headings may keep changing
        elif event == "label":
            msg = json.dumps({"type": "label", "text": payload})
        else:
            return
        def _send() -> None:
            self._enqueue_all(msg if msg is not None else self.hello_message())
        self._loop.call_soon_threadsafe(_send)

    # -- connection handling ------------------------------------------------------

    async def handle_socket(self, ws: WebSocket) -> None:
        offered = ws.headers.get("sec-websocket-protocol", "")
        subprotocol = SUBPROTOCOL if SUBPROTOCOL in offered else None
        await ws.accept(subprotocol=subprotocol)
        client = _Client(ws)
        await ws.send_text(self.hello_message())
        await ws.send_text(self.sensors_message())
        self._clients[client.id] = client
        client.writer = asyncio.create_task(self._write_loop(client))
        try:
            while True:
                text = await ws.receive_text()
                if not self._handle_client_message(text):
                    await self._drop(client, code=WS_POLICY_VIOLATION)
                    return
        except WebSocketDisconnect:
            pass
        finally:
            await self._drop(client, close=False)

    async def _write_loop(self, client: _Client) -> None:
        try:
            while True:
                payload = await client.queue.get()
                await client.ws.send_text(payload)
        except asyncio.CancelledError:
            raise
        except Exception:
            await self._drop(client, close=False)

    async def _drop(self, client: _Client, code: int = 1000, close: bool = True) -> None:
        self._clients.pop(client.id, None)
        if client.writer is not None and client.writer is not asyncio.current_task():
            client.writer.cancel()
        if close:
            with contextlib.suppress(Exception):
                await client.ws.close(code=code)

    def _handle_client_message(self, text: str) -> bool:
        """Apply one client message; False means protocol violation."""
        try:
            msg = json.loads(text)
            mtype = msg["type"]
        except (json.JSONDecodeError, TypeError, KeyError):
            log.warning("malformed websocket message: %.200r", text)
            return False
        try:
            if mtype == "setInterval":
                interval = int(msg["interval"])
                self.engine.set_interval(interval)  # broadcasts intervalChanged
            elif mtype == "setEvents":
                events = list(msg["events"])
                self.engine.set_events(events)  # listener re-sends hello
            elif mtype == "setDiscrete":
                self.engine.set_discrete(bool(msg["discrete"]))
            elif mtype == "record":
                self._start_recording(str(msg["filename"]))
            elif mtype == "pause":
                self.engine.control(ControlCommand("pause"))
            elif mtype == "resume":
                self.engine.control(ControlCommand("resume"))
            elif mtype == "label":
                self.engine.control(ControlCommand("label", str(msg["text"])))
            else:
                log.warning("unknown websocket message type %r", mtype)
                return False
        except (KeyError, TypeError) as exc:
            log.warning("websocket message missing field: %s", exc)
            return False
        except ValueError as exc:
            log.warning("websocket message with invalid value: %s", exc)
            return False
        except EngineError as exc:
            log.warning("websocket request refused: %s", exc)
        return True

    def _start_recording(self, filename: str) -> None:
        if self.recordings_dir is None:
            log.warning("record request ignored: no recordings directory configured")
            return
        name = Path(filename).name  # client paths are confined to the directory
        if not name:
            raise ValueError("empty recording filename")
        self.recordings_dir.mkdir(parents=True, exist_ok=True)
        self.engine.control(ControlCommand("record", str(self.recordings_dir / name)))


def create_app(
    engine: Engine,
    recordings_dir: Optional[Path] = None,
    static_dir: Path = STATIC_DIR,
) -> FastAPI:
    """Application serving the client assets, recordings, and /ws."""
    live = LiveServer(engine, recordings_dir)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        await live.startup()
        try:
            yield
        finally:
            await live.shutdown()

    app = FastAPI(lifespan=lifespan)
    app.state.live = live

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket) -> None:
        await live.handle_socket(ws)

    @app.get("/recordings/")
    def list_recordings() -> JSONResponse:
        if live.recordings_dir is None or not live.recordings_dir.is_dir():
            return JSONResponse([])
        names = sorted(p.name for p in live.recordings_dir.iterdir() if p.is_file())
        return JSONResponse(names)

    @app.get("/recordings/{name}")
    def get_recording(name: str):
        if live.recordings_dir is None:
            return JSONResponse({"error": "no recordings directory"}, status_code=404)
        target = (live.recordings_dir / name).resolve()
        if target.parent != live.recordings_dir.resolve() or not target.is_file():
            return JSONResponse({"error": "not found"}, status_code=404)
        return FileResponse(target)

    if static_dir.is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="client")

    return app


class BackgroundServer:
    """Uvicorn in a daemon thread; used by `live` mode tests and tooling."""

    def __init__(self, app: FastAPI, host: str = "127.0.0.1", port: int = 8080) -> None:
        config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self.server = uvicorn.Server(config)
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        servers = getattr(self.server, "servers", None)
        if servers:
            socks = servers[0].sockets
            if socks:
                return socks[0].getsockname()[1]
        return self.server.config.port

    def start(self, timeout: float = 10.0) -> None:
        self._thread = threading.Thread(target=self.server.run, daemon=True)
        self._thread.start()
        import time as _time

        deadline = _time.monotonic() + timeout
        while not self.server.started:
            if _time.monotonic() > deadline:
                raise RuntimeError("web server failed to start")
            _time.sleep(0.02)

    def stop(self) -> None:
        self.server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=10)
            self._thread = None


def serve(app: FastAPI, host: str, port: int) -> None:
    """Run the server in the foreground (CLI `live` mode)."""
    uvicorn.run(app, host=host, port=port, log_level="info")
