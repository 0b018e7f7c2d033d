"""Kernel virtual-memory statistics sensor.

Reads the whole pseudo-file with one reposition and one read per sample
and parses only the enabled lines; name-to-line positions are resolved
once at probe time and verified cheaply on every read. Values are kept
signed so counters that legitimately decrease (e.g. swapped-page counts
shrinking as pages are read back in) produce negative rates downstream.
"""

from __future__ import annotations

import collections
import logging
import os
from typing import Iterable, Optional

import numpy as np

from .events import SENTINEL, EventDescriptor, EventKind, Sensor

log = logging.getLogger(__name__)

DEFAULT_PATH = "/proc/vmstat"
READ_SIZE = 64 * 1024  # pseudo-file is far smaller on all known kernels

# Nominal events/second reference for percentage views; page-event rates
# on loaded machines sit in this range.
NOMINAL_RATE = 1_000_000


class VmstatSensor(Sensor):
    """Software-events sensor over a vmstat-format pseudo-file."""

    wrap_bits = None  # signed, non-wrapping

    def __init__(self, path: str = DEFAULT_PATH) -> None:
        super().__init__()
        self._path = path
        self._fd: Optional[int] = None
        self._names: list[str] = []
        self._ordinals: dict[str, int] = {}
        self._events: list[EventDescriptor] = []
        self._enabled: list[tuple[bytes, int]] = []  # (name bytes, line ordinal)
        self._enabled_names: list[str] = []
        self._present: Optional[bool] = None
        self.diagnostics = collections.Counter()

    def name(self) -> str:
        return "vmstat"

    def present(self) -> bool:
        """Probe the pseudo-file; on success the handle is retained for reuse."""
        if self._present is not None:
            return self._present
        try:
            fd = os.open(self._path, os.O_RDONLY)
        except OSError as exc:
            log.debug("vmstat not available at %s: %s", self._path, exc)
            self._present = False
            return False
        buf = os.read(fd, READ_SIZE)
        parsed = self._parse_all(buf)
        if not parsed:
            os.close(fd)
            log.warning("vmstat file %s exists but has no parseable lines", self._path)
            self._present = False
            return False
        self._fd = fd
        self._names = [name for name, _, _ in parsed]
        self._ordinals = {name: ordinal for name, _, ordinal in parsed}
        self._events = [
            EventDescriptor(name, f"kernel virtual-memory counter '{name}'", EventKind.COUNTER)
            for name in self._names
        ]
        self._present = True
        return True

    def rate(self) -> int:
        return NOMINAL_RATE

    def sources(self) -> int:
        return 1

    def events(self) -> list[EventDescriptor]:
        return self._events

    def enable(self, mnemonics: Iterable[str], discrete: bool) -> None:
        wanted = set(mnemonics)
        unknown = wanted - set(self._ordinals)
        if unknown:
            raise ValueError(f"unknown events: {sorted(unknown)}")
        self.lock()
        try:
            self._enabled_names = [n for n in self._names if n in wanted]
            self._enabled = [
                (n.encode(), self._ordinals[n]) for n in self._enabled_names
            ]
            for e in self._events:
                e.enabled = e.mnemonic in wanted
        finally:
            self.unlock()

    def headings(self, mnemonic: bool = True) -> list[str]:
        if mnemonic:
            return list(self._enabled_names)
        return [f"kernel virtual-memory counter '{n}'" for n in self._enabled_names]

    def sample(self) -> np.ndarray:
        """Raw signed values for enabled names: one lseek + one read."""
        os.lseek(self._fd, 0, os.SEEK_SET)
        buf = os.read(self._fd, READ_SIZE)
        lines = buf.split(b"\n")
        out = np.empty(len(self._enabled), dtype=np.int64)
        rescan = None
        for i, (name, ordinal) in enumerate(self._enabled):
            if ordinal < len(lines):
                line = lines[ordinal]
                if line.startswith(name) and line[len(name) : len(name) + 1] == b" ":
                    try:
                        out[i] = int(line[len(name) + 1 :])
                        continue
                    except ValueError:
                        pass
            # Line moved or is malformed: fall back to a full scan of this read.
            if rescan is None:
                rescan = {n: v for n, v, _ in self._parse_all(buf)}
                self.diagnostics["vmstat_slow_scan"] += 1
            if name.decode() in rescan:
                out[i] = rescan[name.decode()]
            else:
                out[i] = SENTINEL
                self.diagnostics["vmstat_missing_name"] += 1
        return out

    def close(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def _parse_all(self, buf: bytes) -> list[tuple[str, int, int]]:
        """All well-formed (name, value, line ordinal) entries in a read."""
        entries = []
        for ordinal, line in enumerate(buf.split(b"\n")):
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                self.diagnostics["vmstat_malformed_line"] += 1
                log.debug("skipping malformed vmstat line %d: %r", ordinal, line)
                continue
            try:
                value = int(parts[1])
            except ValueError:
                self.diagnostics["vmstat_malformed_line"] += 1
                log.debug("skipping malformed vmstat line %d: %r", ordinal, line)
                continue
            name = parts[0].decode("ascii", "replace")
            entries.append((name, value, ordinal))
        return entries
