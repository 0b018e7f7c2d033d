"""Catalog fidelity for the simulated interconnect sensor."""

import numpy as np
import pytest

from ccscope.numachip import (
    COUNTERS_PER_INTERCONNECT,
    SCALAR_EVENTS,
    STRIPE_WAYS,
    STRIPED_EVENTS,
    SimSensor,
    catalog_events,
)

# Frozen expected catalog, in counter order. Kept independent of the
# implementation module on purpose.
EXPECTED_DESCRIPTIONS = [
    "cycles",
    "cycles at least half of the available RMPE contexts were in use",
    "cycles the RMPE had free contexts for SIU accesses",
    "cycles the RMPE had free contexts for PIU accesses",
    "requests from PIU to RMPE",
    "valid cycles acked for requests from PIU to RMPE",
    "wait cycles for requests from from PIU to RMPE",
    "responses from PIU to RMPE",
    "valid cycles acked for responses from PIU to RMPE",
    "wait cycles for responses from from PIU to RMPE",
    "requests from SIU to RMPE",
    "valid cycles acked for requests from SIU to RMPE",
    "wait cycles for requests from from SIU to RMPE",
    "responses from SIU to RMPE",
    "valid cycles acked for responses from SIU to RMPE",
    "wait cycles for responses from from SIU to RMPE",
    "cycles at least half of the available LMPE contexts were in use",
    "cycles the LMPE had free contexts for SIU accesses",
    "cycles the LMPE had free contexts for PIU accesses",
    "requests from PIU to LMPE",
    "wait cycles for requests from from PIU to LMPE",
    "responses from PIU to LMPE",
    "valid cycles acked for responses from PIU to LMPE",
    "wait cycles for responses from from PIU to LMPE",
    "requests from SIU to LMPE",
    "valid cycles acked for requests from SIU to LMPE",
    "wait cycles for requests from from SIU to LMPE",
    "responses from SIU to LMPE",
    "valid cycles acked for responses from SIU to LMPE",
    "wait cycles for responses from from SIU to LMPE",
    "VicBlk and VicBlkClean commands received",
    "RdBlk and RdBlkS commands received",
    "RdBlkMod commands received",
    "ChangeToDirty commands received",
    "RdSized commands received",
    "WrSized commands received",
    "directed Probe commands received",
    "broadcast Probe commands received",
    "Broadcast commands received",
    "RdResponse commands received",
    "ProbeResponse commands received",
    "data packets with full cachelines of data received",
    "data packets with less than a full cache line received",
    "VicBlk and VicBlkClean commands sent",
    "RdBlk and RdBlkS commands sent",
    "RdBlkMod commands sent",
    "ChangeToDirty commands sent",
    "RdSized commands sent",
    "WrSized commands sent",
    "broadcast Probe commands sent",
    "broadcast commands sent",
    "RdResponse commands sent",
    "ProbeResponse commands sent",
    "data packets with full cachelines of data sent",
    "data packets with less than a full cache line sent",
    "nCache read hits on RMPE",
    "nCache store hits on RMPE",
    "nCache store misses on RMPE",
    "nCache roll outs on RMPE",
    "nCache invalidates on RMPE",
    "cycles with at least one free Hreq context in PIU",
    "cycles with at least one free Pprb context in PIU",
    "cycles with at least one free Hprb context in PIU",
    "cycles with at least one free Preq context in PIU",
    "accesses to C/Mtag cache 0..3",
    "write hit accesses to C/Mtag cache 0..3",
    "read hit accesses to C/Mtag cache 0..3",
    "write accesses with writebacks to C/Mtag cache 0..3",
    "read accesses with writebacks to C/Mtag cache 0..3",
    "write miss accesses to C/Mtag cache 0..3",
    "read miss accesses to C/Mtag cache 0..3",
]


class TestCatalog:
    def test_exactly_71_logical_events(self):
        assert len(catalog_events()) == 71

    def test_descriptions_match_one_for_one(self):
        got = [e.description for e in catalog_events()]
        assert got == EXPECTED_DESCRIPTIONS

    def test_known_mnemonics(self):
        by_desc = {e.description: e.mnemonic for e in catalog_events()}
        assert by_desc["directed Probe commands received"] == "n2DirPrbRecv"
        assert by_desc["data packets with full cachelines of data sent"] == "n2CachelinesSent"
        assert by_desc["nCache roll outs on RMPE"] == "n2CacheRolloutRmpe"

    def test_mnemonics_unique_and_clean(self):
        names = [e.mnemonic for e in catalog_events()]
        assert len(set(names)) == len(names)
        assert all(not any(c.isspace() for c in n) for n in names)

    def test_paired_command_families(self):
        descs = set(EXPECTED_DESCRIPTIONS)
        for family in (
            "VicBlk and VicBlkClean commands",
            "RdBlk and RdBlkS commands",
            "RdBlkMod commands",
            "ChangeToDirty commands",
            "RdSized commands",
            "WrSized commands",
            "RdResponse commands",
            "ProbeResponse commands",
            "data packets with full cachelines of data",
            "data packets with less than a full cache line",
        ):
            assert f"{family} received" in descs
            assert f"{family} sent" in descs

    def test_counter_layout(self):
        assert SCALAR_EVENTS == 64
        assert STRIPED_EVENTS == 7
        assert STRIPE_WAYS == 8
        assert COUNTERS_PER_INTERCONNECT == 120
        assert SCALAR_EVENTS + STRIPED_EVENTS * STRIPE_WAYS == 120


class TestSensorSurface:
    def test_sources_on_reference_topology(self):
        assert SimSensor(sources=6).sources() == 6

    def test_rate_reference_is_one_event_per_clock(self):
        sensor = SimSensor()
        assert sensor.rate() == 200_000_000
        assert sensor.core_clock_hz() == 200e6

    def test_register_file_per_interconnect(self):
        sensor = SimSensor(sources=6)
        files = sensor.register_files
        assert len(files) == 6
        for i, rf in enumerate(files):
            assert rf.interconnect_index == i
            assert rf.counters.shape == (120,)
            assert rf.cycles == 0

    def test_stripe_exposure_option(self):
        sensor = SimSensor(sources=2, expose_stripes=True)
        events = sensor.events()
        assert len(events) == 64 + 56
        names = [e.mnemonic for e in events]
        assert "n2CMtagAccessCt0" in names
        assert "n2CMtagReadMissMt3" in names

    def test_striped_sample_reports_stripe_sum(self):
        sensor = SimSensor(sources=1, autoclock=False)
        sensor.enable(["n2CMtagAccess"], discrete=False)
        rf = sensor.register_files[0]
        rf.counters[64:72] = 5  # all 8 backing counters of the first tag event
        assert sensor.sample().tolist() == [40]

    def test_disabled_event_absent_from_sample(self):
        sensor = SimSensor(sources=2, autoclock=False)
        sensor.enable(["n2CachelinesSent"], discrete=False)
        assert sensor.sample().shape == (2,)  # one slot per source, one event

    def test_cycles_counter_is_first(self):
        sensor = SimSensor(sources=1, autoclock=False)
        sensor.step(1.0)
        assert sensor.cycles() == 200_000_000
        assert sensor.register_files[0].counters[0] == 200_000_000
