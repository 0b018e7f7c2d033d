"""Simulated second-generation ccNUMA interconnect sensor.

Models one register file of wrapping 48-bit counters per interconnect,
advanced by a scripted scenario instead of real coherence traffic. The
last seven catalog entries are tag-directory events backed by 8 discrete
counters each (cache-tag and memory-tag units, 4-way striped by physical
address); they report stripe sums unless the sensor is built with
``expose_stripes=True``.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .events import EventDescriptor, EventKind, Sensor, validate_catalog

log = logging.getLogger(__name__)

CORE_CLOCK_HZ = 200_000_000  # 200 MHz core clock
MAX_EVENT_RATE = CORE_CLOCK_HZ  # one event per clock is the 100% reference
WRAP_BITS = 48
_MASK = (1 << WRAP_BITS) - 1

SCALAR_EVENTS = 64  # leading single-counter events, cycles first
STRIPED_EVENTS = 7  # trailing tag events, 8 backing counters each
STRIPE_WAYS = 8  # 2 functional units x 4 address stripes
COUNTERS_PER_INTERCONNECT = SCALAR_EVENTS + STRIPED_EVENTS * STRIPE_WAYS  # 120

_C = EventKind.COUNTER
_O = EventKind.OCCUPANCY_CYCLES
_L = EventKind.CONTEXT_LEVEL

# Logical event catalog in counter order: mnemonic, description, kind.
# The first 64 map one-to-one onto scalar counters; the last 7 each own a
# block of 8 striped counters.
CATALOG: list[tuple[str, str, EventKind]] = [
    ("n2Cycles", "cycles", _O),
    ("n2RmpeHalfCtxt", "cycles at least half of the available RMPE contexts were in use", _L),
    ("n2RmpeFreeSiuCtxt", "cycles the RMPE had free contexts for SIU accesses", _L),
    ("n2RmpeFreePiuCtxt", "cycles the RMPE had free contexts for PIU accesses", _L),
    ("n2ReqPiuRmpe", "requests from PIU to RMPE", _C),
    ("n2AckReqPiuRmpe", "valid cycles acked for requests from PIU to RMPE", _O),
    ("n2WaitReqPiuRmpe", "wait cycles for requests from from PIU to RMPE", _O),
    ("n2RspPiuRmpe", "responses from PIU to RMPE", _C),
    ("n2AckRspPiuRmpe", "valid cycles acked for responses from PIU to RMPE", _O),
    ("n2WaitRspPiuRmpe", "wait cycles for responses from from PIU to RMPE", _O),
    ("n2ReqSiuRmpe", "requests from SIU to RMPE", _C),
    ("n2AckReqSiuRmpe", "valid cycles acked for requests from SIU to RMPE", _O),
    ("n2WaitReqSiuRmpe", "wait cycles for requests from from SIU to RMPE", _O),
    ("n2RspSiuRmpe", "responses from SIU to RMPE", _C),
    ("n2AckRspSiuRmpe", "valid cycles acked for responses from SIU to RMPE", _O),
    ("n2WaitRspSiuRmpe", "wait cycles for responses from from SIU to RMPE", _O),
    ("n2LmpeHalfCtxt", "cycles at least half of the available LMPE contexts were in use", _L),
    ("n2LmpeFreeSiuCtxt", "cycles the LMPE had free contexts for SIU accesses", _L),
    ("n2LmpeFreePiuCtxt", "cycles the LMPE had free contexts for PIU accesses", _L),
    ("n2ReqPiuLmpe", "requests from PIU to LMPE", _C),
    ("n2WaitReqPiuLmpe", "wait cycles for requests from from PIU to LMPE", _O),
    ("n2RspPiuLmpe", "responses from PIU to LMPE", _C),
    ("n2AckRspPiuLmpe", "valid cycles acked for responses from PIU to LMPE", _O),
    ("n2WaitRspPiuLmpe", "wait cycles for responses from from PIU to LMPE", _O),
    ("n2ReqSiuLmpe", "requests from SIU to LMPE", _C),
    ("n2AckReqSiuLmpe", "valid cycles acked for requests from SIU to LMPE", _O),
    ("n2WaitReqSiuLmpe", "wait cycles for requests from from SIU to LMPE", _O),
    ("n2RspSiuLmpe", "responses from SIU to LMPE", _C),
    ("n2AckRspSiuLmpe", "valid cycles acked for responses from SIU to LMPE", _O),
    ("n2WaitRspSiuLmpe", "wait cycles for responses from from SIU to LMPE", _O),
    ("n2VicBlkRecv", "VicBlk and VicBlkClean commands received", _C),
    ("n2RdBlkRecv", "RdBlk and RdBlkS commands received", _C),
    ("n2RdBlkModRecv", "RdBlkMod commands received", _C),
    ("n2ChangeToDirtyRecv", "ChangeToDirty commands received", _C),
    ("n2RdSizedRecv", "RdSized commands received", _C),
    ("n2WrSizedRecv", "WrSized commands received", _C),
    ("n2DirPrbRecv", "directed Probe commands received", _C),
    ("n2BcastPrbRecv", "broadcast Probe commands received", _C),
    ("n2BcastRecv", "Broadcast commands received", _C),
    ("n2RdRespRecv", "RdResponse commands received", _C),
    ("n2PrbRespRecv", "ProbeResponse commands received", _C),
    ("n2CachelinesRecv", "data packets with full cachelines of data received", _C),
    ("n2PartialCachelinesRecv", "data packets with less than a full cache line received", _C),
    ("n2VicBlkSent", "VicBlk and VicBlkClean commands sent", _C),
    ("n2RdBlkSent", "RdBlk and RdBlkS commands sent", _C),
    ("n2RdBlkModSent", "RdBlkMod commands sent", _C),
    ("n2ChangeToDirtySent", "ChangeToDirty commands sent", _C),
    ("n2RdSizedSent", "RdSized commands sent", _C),
    ("n2WrSizedSent", "WrSized commands sent", _C),
    ("n2BcastPrbSent", "broadcast Probe commands sent", _C),
    ("n2BcastSent", "broadcast commands sent", _C),
    ("n2RdRespSent", "RdResponse commands sent", _C),
    ("n2PrbRespSent", "ProbeResponse commands sent", _C),
    ("n2CachelinesSent", "data packets with full cachelines of data sent", _C),
    ("n2PartialCachelinesSent", "data packets with less than a full cache line sent", _C),
    ("n2CacheReadHitRmpe", "nCache read hits on RMPE", _C),
    ("n2CacheStoreHitRmpe", "nCache store hits on RMPE", _C),
    ("n2CacheStoreMissRmpe", "nCache store misses on RMPE", _C),
    ("n2CacheRolloutRmpe", "nCache roll outs on RMPE", _C),
    ("n2CacheInvalidateRmpe", "nCache invalidates on RMPE", _C),
    ("n2PiuFreeHreqCtxt", "cycles with at least one free Hreq context in PIU", _L),
    ("n2PiuFreePprbCtxt", "cycles with at least one free Pprb context in PIU", _L),
    ("n2PiuFreeHprbCtxt", "cycles with at least one free Hprb context in PIU", _L),
    ("n2PiuFreePreqCtxt", "cycles with at least one free Preq context in PIU", _L),
    ("n2CMtagAccess", "accesses to C/Mtag cache 0..3", _C),
    ("n2CMtagWriteHit", "write hit accesses to C/Mtag cache 0..3", _C),
    ("n2CMtagReadHit", "read hit accesses to C/Mtag cache 0..3", _C),
    ("n2CMtagWriteWb", "write accesses with writebacks to C/Mtag cache 0..3", _C),
    ("n2CMtagReadWb", "read accesses with writebacks to C/Mtag cache 0..3", _C),
    ("n2CMtagWriteMiss", "write miss accesses to C/Mtag cache 0..3", _C),
    ("n2CMtagReadMiss", "read miss accesses to C/Mtag cache 0..3", _C),
]

STRIPE_SUFFIXES = ["Ct0", "Ct1", "Ct2", "Ct3", "Mt0", "Mt1", "Mt2", "Mt3"]

MNEMONICS = [m for m, _, _ in CATALOG]
_MNEMONIC_INDEX = {m: i for i, m in enumerate(MNEMONICS)}

WAIT_CLASS = frozenset(m for m, d, _ in CATALOG if d.startswith("wait cycles"))


def catalog_events() -> list[EventDescriptor]:
    return [EventDescriptor(m, d, k) for m, d, k in CATALOG]


def _stripe_events() -> list[EventDescriptor]:
    out = []
    for m, d, k in CATALOG[SCALAR_EVENTS:]:
        for way, suffix in enumerate(STRIPE_SUFFIXES):
            unit = "cache-tag" if way < 4 else "main-memory-tag"
            out.append(
                EventDescriptor(f"{m}{suffix}", f"{d} [{unit} stripe {way % 4}]", k)
            )
    return out


class RegisterFile:
    """View of one interconnect's counters inside the shared matrix."""

    def __init__(self, index: int, row: np.ndarray) -> None:
        self.interconnect_index = index
        self._row = row

    @property
    def counters(self) -> np.ndarray:
        return self._row

    @property
    def cycles(self) -> int:
        return int(self._row[0])


@dataclass
class Phase:
    """One scenario segment: per-interconnect target rates held for a duration.

    ``rates`` maps mnemonics to either a scalar (applied to every
    interconnect) or a per-interconnect list. Events not mentioned hold
    at zero.
    """

    duration_s: float
    rates: dict[str, Union[float, Sequence[float]]] = field(default_factory=dict)
    jitter: float = 0.0


@dataclass
class Scenario:
    name: str
    phases: list[Phase]
    loop: bool = False

    def validate(self, sources: int) -> None:
        if not self.phases:
            raise ValueError(f"scenario {self.name!r} has no phases")
        for i, phase in enumerate(self.phases):
            if phase.duration_s < 1e-6:
                raise ValueError(f"scenario {self.name!r} phase {i}: duration must be positive")
            if not 0.0 <= phase.jitter <= 0.5:
                raise ValueError(f"scenario {self.name!r} phase {i}: jitter outside [0, 0.5]")
            for mnemonic, rate in phase.rates.items():
                if mnemonic == "n2Cycles":
                    raise ValueError("the cycles counter advances automatically and cannot be targeted")
                if mnemonic not in _MNEMONIC_INDEX:
                    raise ValueError(f"scenario {self.name!r}: unknown event {mnemonic!r}")
                per_source = _as_per_source(rate, sources, mnemonic)
                if any(r < 0 for r in per_source):
                    raise ValueError(f"scenario {self.name!r}: negative rate for {mnemonic!r}")
                if mnemonic in WAIT_CLASS and any(r > MAX_EVENT_RATE for r in per_source):
                    raise ValueError(
                        f"scenario {self.name!r}: wait-cycle event {mnemonic!r} "
                        f"exceeds {MAX_EVENT_RATE:.1e}/s per interconnect"
                    )

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        phases = [
            Phase(
                duration_s=float(p["duration_s"]),
                rates={str(k): v for k, v in p.get("rates", {}).items()},
                jitter=float(p.get("jitter", 0.0)),
            )
            for p in doc.get("phases", [])
        ]
        return cls(name=str(doc.get("name", "unnamed")), phases=phases, loop=bool(doc.get("loop", False)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "loop": self.loop,
            "phases": [
                {"duration_s": p.duration_s, "rates": p.rates, "jitter": p.jitter}
                for p in self.phases
            ],
        }


def _as_per_source(rate: Union[float, Sequence[float]], sources: int, mnemonic: str) -> list[float]:
    if isinstance(rate, (int, float)):
        return [float(rate)] * sources
    vals = [float(r) for r in rate]
    if len(vals) != sources:
        raise ValueError(
            f"rate list for {mnemonic!r} has {len(vals)} entries, expected {sources}"
        )
    return vals


BUILTIN_SCENARIOS = ("idle", "balanced", "imbalanced-stack", "patched-stack")


def builtin_scenario(name: str, sources: int = 6) -> Scenario:
    """Named scenario fixtures, including the imbalanced-workload signature."""
    if name == "idle":
        return Scenario("idle", [Phase(duration_s=3600.0)])
    if name == "balanced":
        rates = {
            "n2CachelinesSent": 2.0e5,
            "n2CachelinesRecv": 2.0e5,
            "n2DirPrbRecv": 8.0e4,
            "n2CacheRolloutRmpe": 1.2e4,
            "n2ReqSiuRmpe": 1.5e5,
            "n2WaitReqSiuRmpe": 1.0e6,
            "n2PartialCachelinesSent": 1.9e5,
            "n2CMtagAccess": 3.0e5,
        }
        return Scenario("balanced", [Phase(duration_s=3600.0, rates=rates, jitter=0.05)])
    if name == "imbalanced-stack":
        # One interconnect pinned at ~97% wait, its neighbor at ~2.5%.
        wait = [0.5e7, 1.94e8] + [0.0] * (sources - 2)
        lines = [1.2e5, 5.2e5] + [4.0e4] * (sources - 2)
        phase = Phase(
            duration_s=3600.0,
            rates={
                "n2WaitReqSiuRmpe": wait,
                "n2ReqSiuRmpe": [w / 40.0 for w in wait],
                "n2CachelinesSent": lines,
                "n2CachelinesRecv": lines,
                "n2CacheRolloutRmpe": [l / 12.0 for l in lines],
            },
            jitter=0.02,
        )
        return Scenario("imbalanced-stack", [phase])
    if name == "patched-stack":
        # Short initialization burst, then low steady-state traffic at ~2% wait.
        init = Phase(
            duration_s=5.0,
            rates={
                "n2CachelinesSent": 6.0e6 / sources,
                "n2CachelinesRecv": 6.0e6 / sources,
                "n2WaitReqSiuRmpe": 1.2e7,
                "n2ReqSiuRmpe": 1.5e5,
            },
            jitter=0.02,
        )
        steady = Phase(
            duration_s=3600.0,
            rates={
                "n2CachelinesSent": 3.80e5 / sources,
                "n2CachelinesRecv": 3.80e5 / sources,
                "n2WaitReqSiuRmpe": 4.0e6 / sources,
                "n2ReqSiuRmpe": 1.0e4,
            },
            jitter=0.0,
        )
        return Scenario("patched-stack", [init, steady])
    raise ValueError(
        f"unknown scenario {name!r}; available: {', '.join(BUILTIN_SCENARIOS)}"
    )


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Load a scenario document (JSON: name, phases[{duration_s, rates, jitter}])."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return Scenario.from_dict(doc)


def resolve_scenario(selector: str, sources: int = 6) -> Scenario:
    """Builtin name or path to a scenario file."""
    if selector in BUILTIN_SCENARIOS:
        return builtin_scenario(selector, sources)
    if Path(selector).exists():
        return load_scenario(selector)
    raise ValueError(
        f"unknown scenario {selector!r}; available: {', '.join(BUILTIN_SCENARIOS)} or a file path"
    )


class _CompiledPhase:
    """Per-phase scatter plan: which counter cells advance at what rate."""

    def __init__(self, phase: Phase, sources: int) -> None:
        rows: list[int] = []
        cols: list[int] = []
        rates: list[float] = []
        for mnemonic, rate in phase.rates.items():
            per_source = _as_per_source(rate, sources, mnemonic)
            idx = _MNEMONIC_INDEX[mnemonic]
            if idx < SCALAR_EVENTS:
                cell_cols = [idx]
            else:
                base = SCALAR_EVENTS + (idx - SCALAR_EVENTS) * STRIPE_WAYS
                cell_cols = list(range(base, base + STRIPE_WAYS))
            for src in range(sources):
                share = per_source[src] / len(cell_cols)
                for col in cell_cols:
                    rows.append(src)
                    cols.append(col)
                    rates.append(share)
        self.duration = phase.duration_s
        self.jitter = phase.jitter
        self.rows = np.asarray(rows, dtype=np.intp)
        self.cols = np.asarray(cols, dtype=np.intp)
        self.rates = np.asarray(rates, dtype=np.float64)


class SimSensor(Sensor):
    """Simulated interconnect implementing the sensor operation table.

    Simulated time is decoupled from wall time: with ``autoclock`` on,
    each ``sample()`` advances the scenario by the real time elapsed
    since the previous call, so live capture behaves like hardware;
    with it off, tests drive time explicitly through ``step()``.
    """

    wrap_bits = WRAP_BITS

    def __init__(
        self,
        sources: int = 6,
        scenario: Union[Scenario, str] = "idle",
        seed: int = 0,
        autoclock: bool = True,
        expose_stripes: bool = False,
        monotonic=time.monotonic,
    ) -> None:
        super().__init__()
        if sources < 1:
            raise ValueError("sources must be >= 1")
        if isinstance(scenario, str):
            scenario = resolve_scenario(scenario, sources)
        scenario.validate(sources)
        self._sources = sources
        self._scenario = scenario
        self._autoclock = autoclock
        self._monotonic = monotonic
        self._rng = np.random.default_rng(seed)
        self._expose_stripes = expose_stripes

        self._counters = np.zeros((sources, COUNTERS_PER_INTERCONNECT), dtype=np.int64)
        self._frac = np.zeros_like(self._counters, dtype=np.float64)
        self._phases = [_CompiledPhase(p, sources) for p in scenario.phases]
        self._phase_idx = 0
        self._phase_left = self._phases[0].duration
        self._last_clock: Optional[float] = None

        if expose_stripes:
            self._events = catalog_events()[:SCALAR_EVENTS] + _stripe_events()
        else:
            self._events = catalog_events()
        validate_catalog(self._events, self.name())
        self._by_mnemonic = {e.mnemonic: i for i, e in enumerate(self._events)}

        # Gather plan rebuilt by enable(): column indices for scalar events
        # and stripe-block selectors for striped ones.
        self._enabled_idx: list[int] = []
        self._discrete = False
        self._scalar_cols = np.empty(0, dtype=np.intp)
        self._scalar_pos = np.empty(0, dtype=np.intp)
        self._striped_sel = np.empty(0, dtype=np.intp)
        self._striped_pos = np.empty(0, dtype=np.intp)
        self._out = np.empty((sources, 0), dtype=np.int64)

    # -- sensor operation table -------------------------------------------------

    def name(self) -> str:
        return "numachip2-sim"

    def present(self) -> bool:
        return True

    def rate(self) -> int:
        return MAX_EVENT_RATE

    def sources(self) -> int:
        return self._sources

    def events(self) -> list[EventDescriptor]:
        return self._events

    def enable(self, mnemonics: Iterable[str], discrete: bool) -> None:
        wanted = set(mnemonics)
        unknown = wanted - set(self._by_mnemonic)
        if unknown:
            raise ValueError(f"unknown events: {sorted(unknown)}")
        self.lock()
        try:
            self._discrete = discrete
            self._enabled_idx = [
                i for i, e in enumerate(self._events) if e.mnemonic in wanted
            ]
            for e in self._events:
                e.enabled = e.mnemonic in wanted
            scalar_cols, scalar_pos, striped_sel, striped_pos = [], [], [], []
            for pos, i in enumerate(self._enabled_idx):
                col = self._counter_column(i)
                if col is not None:
                    scalar_cols.append(col)
                    scalar_pos.append(pos)
                else:
                    striped_sel.append(i - SCALAR_EVENTS)
                    striped_pos.append(pos)
            self._scalar_cols = np.asarray(scalar_cols, dtype=np.intp)
            self._scalar_pos = np.asarray(scalar_pos, dtype=np.intp)
            self._striped_sel = np.asarray(striped_sel, dtype=np.intp)
            self._striped_pos = np.asarray(striped_pos, dtype=np.intp)
            self._out = np.empty((self._sources, len(self._enabled_idx)), dtype=np.int64)
        finally:
            self.unlock()

    def headings(self, mnemonic: bool = True) -> list[str]:
        names = [
            (self._events[i].mnemonic if mnemonic else self._events[i].description)
            for i in self._enabled_idx
        ]
        if self._discrete and self._sources > 1:
            return [f"{n}@{s}" for n in names for s in range(self._sources)]
        return names

    def sample(self) -> np.ndarray:
        if self._autoclock:
            now = self._monotonic()
            if self._last_clock is not None and now > self._last_clock:
                self._advance(now - self._last_clock)
            self._last_clock = now
        out = self._out
        if self._scalar_cols.size:
            out[:, self._scalar_pos] = self._counters[:, self._scalar_cols]
        if self._striped_sel.size:
            blocks = self._counters[:, SCALAR_EVENTS:].reshape(
                self._sources, STRIPED_EVENTS, STRIPE_WAYS
            ).sum(axis=2)
            out[:, self._striped_pos] = blocks[:, self._striped_sel]
        return out.T.flatten()  # copy: callers keep this as their snapshot

    def cycles(self) -> int:
        return int(self._counters[0, 0])

    def core_clock_hz(self) -> float:
        return float(CORE_CLOCK_HZ)

    # -- simulation ---------------------------------------------------------------

    def step(self, dt: float) -> None:
        """Advance simulated time explicitly (test/replay drive)."""
        self.lock()
        try:
            self._advance(dt)
        finally:
            self.unlock()

    def _counter_column(self, event_idx: int) -> Optional[int]:
        """Counter column for an event, None if it is a striped block."""
        if self._expose_stripes:
            return event_idx  # 64 scalars + 56 discrete stripes, one column each
        if event_idx < SCALAR_EVENTS:
            return event_idx
        return None

    def _advance(self, dt: float) -> None:
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        remaining = dt
        while remaining > 0:
            # Float residue guard: treat a near-exhausted phase as done.
            if self._phase_left <= remaining * 1e-12:
                self._next_phase()
                continue
            step = min(remaining, self._phase_left)
            self._apply(self._phases[self._phase_idx], step)
            self._phase_left -= step
            remaining -= step

    def _next_phase(self) -> None:
        if self._phase_idx + 1 < len(self._phases):
            self._phase_idx += 1
        elif self._scenario.loop:
            self._phase_idx = 0
        # else: hold the final phase indefinitely
        self._phase_left = self._phases[self._phase_idx].duration

    def _apply(self, phase: _CompiledPhase, dt: float) -> None:
        # Fractional event counts carry over between steps so that slow
        # rates survive fast sampling (floor-release accumulator).
        frac = self._frac
        counters = self._counters
        frac[:, 0] += CORE_CLOCK_HZ * dt
        cyc_inc = np.floor(frac[:, 0])
        frac[:, 0] -= cyc_inc
        counters[:, 0] += cyc_inc.astype(np.int64)
        if phase.rows.size:
            grow = phase.rates * dt
            if phase.jitter:
                grow = grow * (
                    1.0 + phase.jitter * self._rng.uniform(-1.0, 1.0, phase.rates.size)
                )
            cells = frac[phase.rows, phase.cols] + grow
            inc = np.floor(cells)
            frac[phase.rows, phase.cols] = cells - inc
            counters[phase.rows, phase.cols] += inc.astype(np.int64)
        counters &= _MASK

    @property
    def register_files(self) -> list[RegisterFile]:
        return [RegisterFile(i, self._counters[i]) for i in range(self._sources)]

    @property
    def scenario(self) -> Scenario:
        return self._scenario
