"""Named-pipe control channel.

Scripts steer a running capture by writing newline-terminated commands
into a FIFO:

    record <filename>   close any open recording, start a new one
    label <text>        mark the next frame in graphs and files
    pause               suspend recording without suspending capture
    resume              continue recording
    interval <n>ms      change the sampling period

A malformed line is logged and skipped; the reader keeps going.
"""

from __future__ import annotations

import logging
import os
import re
import select
import stat
import threading
from dataclasses import dataclass

from .events import INTERVAL_MAX_MS, INTERVAL_MIN_MS

log = logging.getLogger(__name__)

DEFAULT_FIFO_PATH = "/run/ccscope-ctl"
FIFO_MODE = 0o622

_INTERVAL_RE = re.compile(r"^(\d+)ms$")

VERBS = ("record", "label", "pause", "resume", "interval")


class CommandError(ValueError):
    """A control line that does not follow the grammar."""


@dataclass(frozen=True)
class ControlCommand:
    verb: str
    arg: str = ""


def parse_command(line: str) -> ControlCommand:
    """Parse one newline-delimited control line."""
    text = line.strip()
    if not text:
        raise CommandError("empty command")
    verb, _, rest = text.partition(" ")
    rest = rest.strip()
    if verb == "record":
        if not rest:
            raise CommandError("record requires a filename")
        return ControlCommand("record", rest)
    if verb == "label":
        if not rest:
            raise CommandError("label requires text")
        return ControlCommand("label", rest)
    if verb in ("pause", "resume"):
        if rest:
            raise CommandError(f"{verb} takes no argument")
        return ControlCommand(verb)
    if verb == "interval":
        m = _INTERVAL_RE.match(rest)
        if not m:
            raise CommandError("interval requires '<number>ms'")
        ms = int(m.group(1))
        if not INTERVAL_MIN_MS <= ms <= INTERVAL_MAX_MS:
            raise CommandError(
                f"interval {ms} ms outside [{INTERVAL_MIN_MS}, {INTERVAL_MAX_MS}]"
            )
        return ControlCommand("interval", str(ms))
    raise CommandError(f"unknown verb {verb!r}; expected one of {', '.join(VERBS)}")


class FifoServer:
    """Reads control commands from a named pipe and applies them to the engine.

    The pipe is created at startup if absent and removed on clean
    shutdown when this process created it. Opened read-write so the
    reader never sees EOF between writers.
    """

    def __init__(self, engine, path: str = DEFAULT_FIFO_PATH) -> None:
        self._engine = engine
        self._path = path
        self._fd: int | None = None
        self._created = False
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def path(self) -> str:
        return self._path

    def start(self) -> None:
        if not os.path.exists(self._path):
            os.mkfifo(self._path, FIFO_MODE)
            self._created = True
        elif not stat.S_ISFIFO(os.stat(self._path).st_mode):
            raise OSError(f"{self._path} exists and is not a FIFO")
        self._fd = os.open(self._path, os.O_RDWR | os.O_NONBLOCK)
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="ccscope-fifo", daemon=True)
        self._thread.start()
        log.info("control pipe at %s", self._path)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
        if self._created and os.path.exists(self._path):
            os.unlink(self._path)
            self._created = False

    def _run(self) -> None:
        buf = b""
        while not self._stop.is_set():
            ready, _, _ = select.select([self._fd], [], [], 0.2)
            if not ready:
                continue
            try:
                chunk = os.read(self._fd, 4096)
            except BlockingIOError:
                continue
            if not chunk:
                continue
            buf += chunk
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                self._dispatch(line.decode("utf-8", "replace"))

    def _dispatch(self, line: str) -> None:
        if not line.strip():
            return
        try:
            cmd = parse_command(line)
        except CommandError as exc:
            log.warning("rejected control command %r: %s", line, exc)
            return
        try:
            self._engine.control(cmd)
        except Exception:
            log.exception("control command %r failed", line)
