"""Sensor abstraction and the rate math used by the sampling engine.

Sensors expose cumulative raw counters; everything here turns successive
raw snapshots into signed per-second rates. Hardware counters wrap at a
fixed bit width, software counters are plain signed values that may
legitimately decrease.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

# Reserved marker for a failed or missing reading. Renders as "-" in the
# CLI and null on the wire / on disk.
SENTINEL = -(2**63)

INTERVAL_MIN_MS = 1
INTERVAL_MAX_MS = 60_000


class EventKind(Enum):
    """Normalization class of an event counter."""

    COUNTER = "counter"
    OCCUPANCY_CYCLES = "occupancy-cycles"
    CONTEXT_LEVEL = "context-level"


@dataclass
class EventDescriptor:
    """One catalog entry of a sensor."""

    mnemonic: str
    description: str
    kind: EventKind = EventKind.COUNTER
    enabled: bool = False
    unit: str = "events/s"


@dataclass(frozen=True)
class SensorDescriptor:
    """Summary of a registered sensor as shown to users and clients."""

    name: str
    present: bool
    rate: int
    sources: int

    def __post_init__(self) -> None:
        if self.present and self.sources < 1:
            raise ValueError(f"sensor {self.name!r}: present but sources < 1")
        if self.rate <= 0:
            raise ValueError(f"sensor {self.name!r}: rate must be > 0")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "present": self.present,
            "rate": self.rate,
            "sources": self.sources,
        }


@dataclass
class SampleFrame:
    """One timestamped vector of signed per-second rates."""

    t: int  # milliseconds since epoch
    elapsed: float  # measured seconds covered by this window
    values: list[int]  # one rate per heading, SENTINEL for failed reads
    label: Optional[str] = None


class ShortWindowError(ValueError):
    """The sampling window was too short to normalize (zero cycles elapsed)."""


def round_half_away(x: np.ndarray | float) -> np.ndarray | int:
    """Round to nearest integer, ties away from zero."""
    if isinstance(x, np.ndarray):
        return np.trunc(x + np.copysign(0.5, x)).astype(np.int64)
    return int(np.trunc(x + np.copysign(0.5, x)))


def wrap_aware_delta(prev: int, cur: int, wrap_bits: Optional[int]) -> int:
    """Difference between two raw readings.

    A negative plain delta on a wrapping hardware counter is treated as a
    single wrap. Non-wrapping (software) counters pass negative deltas
    through unchanged.
    """
    d = cur - prev
    if wrap_bits is not None and d < 0:
        d += 1 << wrap_bits
    return d


def compute_rates(
    prev_raw: np.ndarray,
    cur_raw: np.ndarray,
    elapsed: float,
    wrap_bits: Optional[int],
) -> np.ndarray:
    """Per-second rates from two raw counter snapshots.

    Both vectors must be int64 and the same length; elapsed must be
    positive (callers discard the frame otherwise). Output is int64,
    rounded half away from zero.
    """
    if prev_raw.shape != cur_raw.shape:
        raise ValueError(
            f"raw vector length mismatch: {prev_raw.shape} vs {cur_raw.shape}"
        )
    if elapsed <= 0:
        raise ValueError(f"elapsed must be > 0, got {elapsed}")
    delta = cur_raw - prev_raw
    if wrap_bits is not None:
        delta = np.where(delta < 0, delta + (1 << wrap_bits), delta)
    scaled = delta / elapsed
    return np.trunc(scaled + np.copysign(0.5, scaled)).astype(np.int64)


def elapsed_from_cycles(cycles_delta: int, core_clock_hz: float) -> float:
    """Window length in seconds derived from a free-running cycles counter."""
    if core_clock_hz <= 0:
        raise ValueError(f"core clock must be > 0, got {core_clock_hz}")
    if cycles_delta == 0:
        raise ShortWindowError("zero cycles elapsed; window too short to normalize")
    return cycles_delta / core_clock_hz


def wait_cycle_percent(
    wait_cycles: Sequence[float],
    window_seconds: float,
    core_clock_hz: float,
) -> tuple[float, list[float]]:
    """Percentage of available cycles spent waiting, per source and total.

    Each source's percentage is clamped to 100 (a counter cannot exceed
    the cycles in the window); the total is the sum over sources and may
    exceed 100, bounded by 100 x len(wait_cycles).
    """
    if window_seconds <= 0:
        raise ValueError(f"window must be > 0, got {window_seconds}")
    if core_clock_hz <= 0:
        raise ValueError(f"core clock must be > 0, got {core_clock_hz}")
    budget = core_clock_hz * window_seconds
    per = []
    for n, wc in enumerate(wait_cycles):
        pct = 100.0 * wc / budget
        if pct > 100.0:
            log.warning(
                "wait cycles on source %d exceed cycle budget (%g > %g); clamping",
                n,
                wc,
                budget,
            )
            pct = 100.0
        per.append(pct)
    return sum(per), per


def expand_headings(names: Iterable[str], sources: int) -> list[str]:
    """Expand each name to one heading per source with an @index suffix."""
    return [f"{name}@{s}" for name in names for s in range(sources)]


class Sensor:
    """Operation table every event source implements.

    Raw samples are cumulative counter snapshots in event-major order
    (all sources of event 0, then event 1, ...); the engine turns them
    into rates. `lock`/`unlock` guard all hardware access; the engine
    holds the lock across `sample` + `cycles`.
    """

    #: bit width at which raw counters wrap, or None for non-wrapping
    #: signed (software) counters.
    wrap_bits: Optional[int] = None

    def __init__(self) -> None:
        self._lock = threading.RLock()

    def name(self) -> str:
        raise NotImplementedError

    def present(self) -> bool:
        raise NotImplementedError

    def rate(self) -> int:
        """Maximum events/second, the 100% reference for percentage views."""
        raise NotImplementedError

    def sources(self) -> int:
        raise NotImplementedError

    def events(self) -> list[EventDescriptor]:
        raise NotImplementedError

    def enable(self, mnemonics: Iterable[str], discrete: bool) -> None:
        """Activate the given events and set per-source vs summed mode."""
        raise NotImplementedError

    def headings(self, mnemonic: bool = True) -> list[str]:
        """Names of enabled events, expanded per source in discrete mode."""
        raise NotImplementedError

    def sample(self) -> np.ndarray:
        """Current raw counter values for enabled events (int64, event-major)."""
        raise NotImplementedError

    def cycles(self) -> Optional[int]:
        """Raw cycles counter for time normalization, None if unsupported."""
        return None

    def core_clock_hz(self) -> Optional[float]:
        """Clock driving the cycles counter, None if `cycles` is unsupported."""
        return None

    def lock(self) -> None:
        self._lock.acquire()

    def unlock(self) -> None:
        self._lock.release()

    def descriptor(self) -> SensorDescriptor:
        return SensorDescriptor(
            name=self.name(),
            present=self.present(),
            rate=self.rate(),
            sources=self.sources(),
        )


def validate_catalog(events: Sequence[EventDescriptor], sensor_name: str) -> None:
    """Enforce catalog invariants: unique, whitespace-free mnemonics."""
    seen = set()
    for ev in events:
        if not ev.mnemonic or any(c.isspace() for c in ev.mnemonic):
            raise ValueError(
                f"sensor {sensor_name!r}: bad mnemonic {ev.mnemonic!r} (whitespace)"
            )
        if ev.mnemonic in seen:
            raise ValueError(
                f"sensor {sensor_name!r}: duplicate mnemonic {ev.mnemonic!r}"
            )
        seen.add(ev.mnemonic)
