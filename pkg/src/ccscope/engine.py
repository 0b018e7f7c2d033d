"""Periodic sampling engine: registry, hot path, and control state.

One timer thread owns the schedule; each sensor's lock serializes its
hardware access against control changes. Emitted frames fan out through
a broadcast to however many consumers are attached (CLI renderer,
recording sink, web batcher); consumers never touch sensor state.
"""

from __future__ import annotations

import collections
import logging
import os
import queue
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from . import storage
from .control import ControlCommand
from .events import (
    INTERVAL_MAX_MS,
    INTERVAL_MIN_MS,
    SENTINEL,
    SampleFrame,
    Sensor,
    SensorDescriptor,
    ShortWindowError,
    compute_rates,
    elapsed_from_cycles,
    validate_catalog,
)

log = logging.getLogger(__name__)


class EngineError(RuntimeError):
    """A control request that cannot be honored in the current state."""


@dataclass
class SamplerState:
    """Snapshot of the engine's control state."""

    interval_ms: int
    discrete: bool
    recording: str  # "off" | "active" | "paused"
    recording_path: Optional[str]


class Broadcast:
    """Fan-out of frames to per-consumer queues."""

    def __init__(self) -> None:
        self._queues: list[queue.SimpleQueue] = []
        self._lock = threading.Lock()

    def subscribe(self) -> queue.SimpleQueue:
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self._lock:
            self._queues.append(q)
        return q

    def unsubscribe(self, q: queue.SimpleQueue) -> None:
        with self._lock:
            if q in self._queues:
                self._queues.remove(q)

    def publish(self, item: SampleFrame) -> None:
        with self._lock:
            for q in self._queues:
                q.put(item)


class _ActiveSensor:
    """Per-sensor sampling state held by the engine."""

    __slots__ = (
        "sensor",
        "n_events",
        "src",
        "wrap_bits",
        "clock_hz",
        "prev_raw",
        "prev_cycles",
        "prev_wall",
    )

    def __init__(self, sensor: Sensor) -> None:
        self.sensor = sensor
        self.n_events = 0
        self.src = sensor.sources()
        self.wrap_bits = sensor.wrap_bits
        self.clock_hz = sensor.core_clock_hz()
        self.prev_raw: Optional[np.ndarray] = None
        self.prev_cycles: Optional[int] = None
        self.prev_wall = 0.0


def _first_node_cpus() -> set[int]:
    try:
        with open("/sys/devices/system/node/node0/cpulist") as fh:
            spec = fh.read().strip()
        cpus: set[int] = set()
        for part in spec.split(","):
            if "-" in part:
                lo, hi = part.split("-")
                cpus.update(range(int(lo), int(hi) + 1))
            elif part:
                cpus.add(int(part))
        return cpus
    except OSError:
        return {0}


class Engine:
    """Owns sensors, the sampling schedule, and capture control."""

    def __init__(
        self,
        interval_ms: int = 100,
        discrete: bool = False,
        pin_to_first_node: bool = True,
        monotonic: Callable[[], float] = time.monotonic,
        wall: Callable[[], float] = time.time,
    ) -> None:
        self._check_interval(interval_ms)
        self._interval_ms = interval_ms
        self._discrete = discrete
        self._pin = pin_to_first_node
        self._monotonic = monotonic
        self._wall = wall

        self._sensors: list[Sensor] = []  # registration order, absent included
        self._active: list[_ActiveSensor] = []  # present sensors only
        self._enabled: set[str] = set()
        self._headings_mnemonic: list[str] = []
        self._headings_verbose: list[str] = []

        self._control_lock = threading.RLock()  # serializes all control mutations
        self._sample_lock = threading.RLock()  # serializes frame production
        self.frames = Broadcast()
        self._listeners: list[Callable[[str, object], None]] = []
        self._pending_label: Optional[str] = None
        self._last_t = 0

        self._sink = storage.RecordingSink()
        self._recording = "off"
        self._recording_path: Optional[str] = None

        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self._wake = threading.Event()
        self.diagnostics = collections.Counter()

    # -- registry ----------------------------------------------------------------

    def register(self, sensor: Sensor) -> bool:
        """Add a sensor; returns False (without error) if it is not present."""
        with self._control_lock:
            if any(s.name() == sensor.name() for s in self._sensors):
                raise ValueError(f"duplicate sensor name {sensor.name()!r}")
            try:
                present = sensor.present()
            except Exception:
                log.exception("presence probe for %r failed; marking absent", sensor.name())
                present = False
            self._sensors.append(sensor)
            if not present:
                log.info("sensor %r not present; skipping", sensor.name())
                return False
            validate_catalog(sensor.events(), sensor.name())
            with self._sample_lock:
                self._active.append(_ActiveSensor(sensor))
                self._rebuild()
            return True

    def sensor_descriptors(self) -> list[SensorDescriptor]:
        return [s.descriptor() for s in self._sensors]

    def sensors(self) -> list[Sensor]:
        return list(self._sensors)

    def all_mnemonics(self) -> list[str]:
        out = []
        for a in self._active:
            out.extend(e.mnemonic for e in a.sensor.events())
        return out

    # -- configuration -----------------------------------------------------------

    def set_events(self, mnemonics: Iterable[str]) -> None:
        """Select the enabled event set across all present sensors."""
        wanted = list(dict.fromkeys(mnemonics))
        with self._control_lock:
            self._forbid_while_recording("changing events")
            known = set(self.all_mnemonics())
            unknown = [m for m in wanted if m not in known]
            if unknown:
                raise ValueError(f"unknown events: {unknown}")
            with self._sample_lock:
                self._enabled = set(wanted)
                self._rebuild()
        self._notify("hello", None)

    def set_discrete(self, discrete: bool) -> None:
        with self._control_lock:
            self._forbid_while_recording("changing aggregation mode")
            with self._sample_lock:
                self._discrete = discrete
                self._rebuild()
        self._notify("hello", None)

    def set_interval(self, interval_ms: int) -> None:
        self._check_interval(interval_ms)
        with self._control_lock:
            self._interval_ms = interval_ms
            self._wake.set()
        self._notify("interval", interval_ms)

    def _check_interval(self, interval_ms: int) -> None:
        if not INTERVAL_MIN_MS <= interval_ms <= INTERVAL_MAX_MS:
            raise ValueError(
                f"interval {interval_ms} ms outside [{INTERVAL_MIN_MS}, {INTERVAL_MAX_MS}]"
            )

    def _forbid_while_recording(self, what: str) -> None:
        if self._recording != "off":
            raise EngineError(
                f"{what} while recording is {self._recording} would desynchronize "
                "the open file; stop recording first"
            )

    def _rebuild(self) -> None:
        """Re-apply the enabled set to sensors and re-prime raw snapshots."""
        for a in self._active:
            own = [e.mnemonic for e in a.sensor.events() if e.mnemonic in self._enabled]
            a.sensor.lock()
            try:
                a.sensor.enable(own, self._discrete)
                a.n_events = len(own)
            finally:
                a.sensor.unlock()
        self._prime()
        self._headings_mnemonic = self._collect_headings(True)
        self._headings_verbose = self._collect_headings(False)

    def _collect_headings(self, mnemonic: bool) -> list[str]:
        out: list[str] = []
        for a in self._active:
            out.extend(a.sensor.headings(mnemonic))
        return out

    def _prime(self) -> None:
        """Take a baseline raw snapshot so the next sample yields valid deltas."""
        for a in self._active:
            a.sensor.lock()
            try:
                a.prev_raw = a.sensor.sample() if a.n_events else None
                a.prev_cycles = a.sensor.cycles()
            except Exception:
                log.exception("priming read failed for %r", a.sensor.name())
                a.prev_raw = None
                a.prev_cycles = None
            finally:
                a.sensor.unlock()
            a.prev_wall = self._monotonic()

    # -- introspection -----------------------------------------------------------

    def headings(self, mnemonic: bool = True) -> list[str]:
        return list(self._headings_mnemonic if mnemonic else self._headings_verbose)

    @property
    def interval_ms(self) -> int:
        return self._interval_ms

    @property
    def discrete(self) -> bool:
        return self._discrete

    @property
    def state(self) -> SamplerState:
        return SamplerState(
            interval_ms=self._interval_ms,
            discrete=self._discrete,
            recording=self._recording,
            recording_path=self._recording_path,
        )

    def subscribe(self) -> queue.SimpleQueue:
        return self.frames.subscribe()

    def unsubscribe(self, q: queue.SimpleQueue) -> None:
        self.frames.unsubscribe(q)

    def add_listener(self, cb: Callable[[str, object], None]) -> None:
        """Control-event callback: ("interval", ms) | ("hello", None) | ("label", text)."""
        self._listeners.append(cb)

    def _notify(self, event: str, payload: object) -> None:
        for cb in self._listeners:
            try:
                cb(event, payload)
            except Exception:
                log.exception("control listener failed for %s", event)

    # -- recording control ---------------------------------------------------------

    def recording_header(self) -> storage.RecordingHeader:
        clock = {
            a.sensor.name(): a.clock_hz for a in self._active
        }
        return storage.RecordingHeader(
            created_at=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            host=os.uname().nodename if hasattr(os, "uname") else "unknown",
            sensors=[s.descriptor() for s in self._sensors],
            headings=self.headings(True),
            descriptions=self.headings(False),
            discrete=self._discrete,
            initial_interval_ms=self._interval_ms,
            core_clock_hz=clock,
        )

    def start_recording(self, path: str) -> None:
        """Finalize any open recording and start a new one at `path`."""
        with self._control_lock:
            if not self.headings():
                raise EngineError("no events enabled; nothing to record")
            writer = storage.RecordingWriter(path, self.recording_header())
            self._sink.open(writer)
            self._recording = "active"
            self._recording_path = path
            log.info("recording to %s", path)

    def pause_recording(self) -> None:
        with self._control_lock:
            if self._recording == "off":
                self.diagnostics["pause_without_recording"] += 1
                log.warning("pause ignored: no recording open")
                return
            self._sink.pause()
            self._recording = "paused"

    def resume_recording(self) -> None:
        with self._control_lock:
            if self._recording == "off":
                self.diagnostics["resume_without_recording"] += 1
                log.warning("resume ignored: no recording open")
                return
            self._sink.resume()
            self._recording = "active"

    def stop_recording(self) -> None:
        with self._control_lock:
            if self._recording == "off":
                return
            self._sink.close_current()
            self._recording = "off"
            self._recording_path = None

    def set_label(self, text: str) -> None:
        with self._control_lock:
            self._pending_label = text
        self._notify("label", text)

    @property
    def recording_state(self) -> str:
        return self._recording

    def drain_recording(self, timeout: float = 5.0) -> None:
        """Wait until frames submitted so far are persisted and flushed."""
        self._sink.drain(timeout)

    def control(self, cmd: ControlCommand) -> None:
        """Apply one parsed control command (FIFO and websocket share this path)."""
        with self._control_lock:
            if cmd.verb == "record":
                try:
                    self.start_recording(cmd.arg)
                except (OSError, EngineError) as exc:
                    self.diagnostics["record_open_failed"] += 1
                    log.error("cannot record to %s: %s", cmd.arg, exc)
            elif cmd.verb == "label":
                self.set_label(cmd.arg)
            elif cmd.verb == "pause":
                self.pause_recording()
            elif cmd.verb == "resume":
                self.resume_recording()
            elif cmd.verb == "interval":
                self.set_interval(int(cmd.arg))
            else:  # pragma: no cover - parser rejects unknown verbs
                raise ValueError(f"unhandled verb {cmd.verb!r}")

    # -- sampling ----------------------------------------------------------------

    def sample_once(self) -> Optional[SampleFrame]:
        """Read every present sensor once and emit one frame.

        Returns None (with a diagnostic) when the window cannot be
        normalized. Used by the timer thread and directly by replay
        drivers and tests.
        """
        with self._sample_lock:
            if not any(a.n_events for a in self._active):
                return None
            parts: list[np.ndarray] = []
            frame_elapsed: Optional[float] = None
            for a in self._active:
                if not a.n_events:
                    continue
                width = a.n_events * (a.src if self._discrete else 1)
                a.sensor.lock()
                try:
                    raw: Optional[np.ndarray] = a.sensor.sample()
                    cyc = a.sensor.cycles()
                except Exception:
                    log.exception("sensor read failed for %r", a.sensor.name())
                    raw = None
                    cyc = None
                finally:
                    a.sensor.unlock()
                wall_now = self._monotonic()

                if raw is None or a.prev_raw is None:
                    self.diagnostics["sensor_read_failure"] += 1
                    parts.append(np.full(width, SENTINEL, dtype=np.int64))
                    if raw is not None:  # recover: re-prime from this read
                        a.prev_raw, a.prev_cycles, a.prev_wall = raw, cyc, wall_now
                    continue

                try:
                    if cyc is not None and a.clock_hz:
                        delta = cyc - a.prev_cycles
                        if a.wrap_bits is not None and delta < 0:
                            delta += 1 << a.wrap_bits
                        elapsed = elapsed_from_cycles(delta, a.clock_hz)
                    else:
                        elapsed = wall_now - a.prev_wall
                        if elapsed <= 0:
                            raise ShortWindowError("no wall time elapsed")
                except ShortWindowError:
                    self.diagnostics["frame_discarded"] += 1
                    log.warning("window too short for %r; frame discarded", a.sensor.name())
                    return None

                rates = compute_rates(a.prev_raw, raw, elapsed, a.wrap_bits)
                a.prev_raw, a.prev_cycles, a.prev_wall = raw, cyc, wall_now
                if frame_elapsed is None:
                    frame_elapsed = elapsed
                if not self._discrete and a.src > 1:
                    rates = rates.reshape(a.n_events, a.src).sum(axis=1)
                parts.append(rates)

            values = parts[0] if len(parts) == 1 else np.concatenate(parts)
            t = max(self._last_t, int(self._wall() * 1000))
            self._last_t = t
            label = self._pending_label
            self._pending_label = None
            if frame_elapsed is None:  # every sensor failed; use the nominal window
                frame_elapsed = self._interval_ms / 1000.0
            frame = SampleFrame(t=t, elapsed=frame_elapsed, values=values.tolist(), label=label)
            self._sink.submit(frame)
            self.frames.publish(frame)
        return frame

    # -- lifecycle ---------------------------------------------------------------

    def start(self, run_timer: bool = True) -> None:
        """Prime baselines and start the sampling machinery.

        With ``run_timer=False`` only the recording sink runs and the
        caller drives `sample_once` itself (replay, tests).
        """
        if self._thread is not None:
            raise EngineError("engine already started")
        with self._sample_lock:
            self._prime()
        self._sink.start()
        if not run_timer:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="ccscope-sampler", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._wake.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        self.stop_recording()
        self._sink.shutdown()

    def _run(self) -> None:
        if self._pin:
            self._pin_thread()
        deadline = self._monotonic()
        interval_s = self._interval_ms / 1000.0
        while not self._stop.is_set():
            deadline += interval_s
            now = self._monotonic()
            if deadline > now:
                self._wake.wait(deadline - now)
            elif deadline < now - 1.0:
                deadline = now  # fell badly behind (suspend?) - resync
            if self._stop.is_set():
                break
            if self._wake.is_set():
                self._wake.clear()
                new_interval = self._interval_ms / 1000.0
                if new_interval != interval_s:
                    interval_s = new_interval
                    deadline = self._monotonic()
                continue
            try:
                self.sample_once()
            except Exception:
                self.diagnostics["sample_error"] += 1
                log.exception("sampling iteration failed")

    def _pin_thread(self) -> None:
        """Best-effort: keep the sampler on the first NUMA node's CPUs."""
        if not hasattr(os, "sched_setaffinity"):
            return
        try:
            cpus = _first_node_cpus() & os.sched_getaffinity(0)
            if cpus:
                os.sched_setaffinity(0, cpus)
                log.debug("sampler pinned to CPUs %s", sorted(cpus))
        except OSError as exc:
            log.debug("affinity pinning unavailable (%s); continuing unpinned", exc)
