"""Recording persistence: self-describing, crash-tolerant capture files.

Format v1 is line-delimited JSON: a header object on the first line,
then one frame object per line ({"t", "elapsed", "v", "label"?}). Each
line is a self-delimiting record, so a file is readable after any
prefix of frames; a trailing line without its newline is treated as a
partial record and discarded. Failed-read sentinels serialize as null.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from .events import SENTINEL, SampleFrame, SensorDescriptor

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
FLUSH_BYTES = 64 * 1024
FLUSH_SECONDS = 30.0


class RecordingError(ValueError):
    """The file is not a readable recording."""


@dataclass
class RecordingHeader:
    created_at: str
    host: str
    sensors: list[SensorDescriptor]
    headings: list[str]
    descriptions: list[str]
    discrete: bool
    initial_interval_ms: int
    core_clock_hz: dict[str, Optional[float]]
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "formatVersion": self.format_version,
            "createdAt": self.created_at,
            "host": self.host,
            "sensors": [s.as_dict() for s in self.sensors],
            "headings": self.headings,
            "descriptions": self.descriptions,
            "discrete": self.discrete,
            "initialInterval": self.initial_interval_ms,
            "coreClockHz": self.core_clock_hz,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RecordingHeader":
        try:
            version = int(doc["formatVersion"])
        except (KeyError, TypeError, ValueError):
            raise RecordingError("header has no usable formatVersion") from None
        if version > FORMAT_VERSION:
            raise RecordingError(
                f"recording format version {version} is newer than supported ({FORMAT_VERSION})"
            )
        try:
            sensors = [
                SensorDescriptor(
                    name=s["name"],
                    present=bool(s["present"]),
                    rate=int(s["rate"]),
                    sources=int(s["sources"]),
                )
                for s in doc.get("sensors", [])
            ]
            return cls(
                created_at=str(doc["createdAt"]),
                host=str(doc["host"]),
                sensors=sensors,
                headings=list(doc["headings"]),
                descriptions=list(doc["descriptions"]),
                discrete=bool(doc["discrete"]),
                initial_interval_ms=int(doc["initialInterval"]),
                core_clock_hz=dict(doc.get("coreClockHz", {})),
                format_version=version,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordingError(f"corrupt recording header: {exc}") from None


@dataclass
class Recording:
    header: RecordingHeader
    frames: list[SampleFrame] = field(default_factory=list)


def frame_to_json(frame: SampleFrame) -> str:
    record: dict = {
        "t": frame.t,
        "elapsed": frame.elapsed,
        "v": [None if v == SENTINEL else v for v in frame.values],
    }
    if frame.label is not None:
        record["label"] = frame.label
    return json.dumps(record, separators=(",", ":"))


def frame_from_json(doc: dict) -> SampleFrame:
    return SampleFrame(
        t=int(doc["t"]),
        elapsed=float(doc["elapsed"]),
        values=[SENTINEL if v is None else int(v) for v in doc["v"]],
        label=doc.get("label"),
    )


class RecordingWriter:
    """Buffered frame writer.

    The header is written and flushed immediately so a crash right
    after open still leaves a parseable file. Frames are buffered and
    flushed when the buffer reaches 64 KiB or 30 s after the previous
    flush, whichever comes first.
    """

    def __init__(self, path: str, header: RecordingHeader, monotonic=time.monotonic) -> None:
        self.path = path
        self.header = header
        self._monotonic = monotonic
        self._fh = open(path, "wb")
        self._buf = bytearray()
        self._last_flush = monotonic()
        self.frames_written = 0
        self.dropped = 0
        try:
            self._fh.write((json.dumps(header.to_dict(), separators=(",", ":")) + "\n").encode())
            self._fh.flush()
        except Exception:
            self._fh.close()
            raise

    def append(self, frame: SampleFrame) -> None:
        try:
            line = frame_to_json(frame)
        except (TypeError, ValueError) as exc:
            self.dropped += 1
            log.error("frame not serializable, dropping: %s", exc)
            return
        self._buf += line.encode()
        self._buf += b"\n"
        self.frames_written += 1
        if len(self._buf) >= FLUSH_BYTES:
            self.flush()

    def maybe_flush(self) -> None:
        if self._buf and self._monotonic() - self._last_flush >= FLUSH_SECONDS:
            self.flush()

    def flush(self) -> None:
        if self._buf:
            self._fh.write(self._buf)
            self._buf.clear()
        self._fh.flush()
        self._last_flush = self._monotonic()

    def close(self) -> None:
        if self._fh.closed:
            return
        self.flush()
        self._fh.close()


def read_recording(path: str) -> Recording:
    """Header plus all complete frames; a trailing partial record is dropped."""
    with open(path, "rb") as fh:
        data = fh.read()
    newline = data.find(b"\n")
    if newline < 0:
        raise RecordingError("no complete header line")
    try:
        header_doc = json.loads(data[:newline])
    except json.JSONDecodeError as exc:
        raise RecordingError(f"corrupt recording header: {exc}") from None
    if not isinstance(header_doc, dict):
        raise RecordingError("recording header is not an object")
    header = RecordingHeader.from_dict(header_doc)

    frames: list[SampleFrame] = []
    body = data[newline + 1 :]
    end = body.rfind(b"\n")
    if end >= 0:
        for line in body[:end].split(b"\n"):
            if not line:
                continue
            try:
                doc = json.loads(line)
                frames.append(frame_from_json(doc))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                log.warning("stopping at undecodable frame record in %s", path)
                break
    return Recording(header=header, frames=frames)


class RecordingSink:
    """Single writer task consuming the frame stream.

    Frames and state transitions share one inbox so persistence is
    exact with respect to arrival order: a pause marker enqueued before
    a frame guarantees that frame is not written.
    """

    def __init__(self) -> None:
        self._inbox: queue.Queue = queue.Queue()
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self._writer: Optional[RecordingWriter] = None
        self._paused = False

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="ccscope-storage", daemon=True)
        self._thread.start()

    @property
    def running(self) -> bool:
        return self._thread is not None

    def submit(self, frame: SampleFrame) -> None:
        if self._thread is None:  # nothing consumes the inbox; don't grow it
            return
        self._inbox.put(("frame", frame))

    def open(self, writer: RecordingWriter) -> None:
        self._inbox.put(("open", writer))

    def pause(self) -> None:
        self._inbox.put(("pause", None))

    def resume(self) -> None:
        self._inbox.put(("resume", None))

    def close_current(self) -> None:
        self._inbox.put(("close", None))

    def shutdown(self) -> None:
        if self._thread is None:
            return
        self._stop.set()
        self._inbox.put(("stop", None))
        self._thread.join(timeout=5)
        self._thread = None

    def drain(self, timeout: float = 5.0) -> None:
        """Block until previously submitted work has been applied (tests)."""
        done = threading.Event()
        self._inbox.put(("sync", done))
        done.wait(timeout)

    def _run(self) -> None:
        while True:
            try:
                kind, payload = self._inbox.get(timeout=1.0)
            except queue.Empty:
                if self._writer is not None:
                    self._writer.maybe_flush()
                continue
            if kind == "frame":
                if self._writer is not None and not self._paused:
                    self._writer.append(payload)
                    self._writer.maybe_flush()
            elif kind == "open":
                if self._writer is not None:
                    self._writer.close()
                self._writer = payload
                self._paused = False
            elif kind == "pause":
                self._paused = True
            elif kind == "resume":
                self._paused = False
            elif kind == "close":
                if self._writer is not None:
                    self._writer.close()
                    self._writer = None
                self._paused = False
            elif kind == "sync":
                if self._writer is not None:
                    self._writer.flush()
                payload.set()
            elif kind == "stop":
                if self._writer is not None:
                    self._writer.close()
                    self._writer = None
                return
