"""Rate math: wrap-aware deltas, rounding, cycle-derived windows, wait percents."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccscope.events import (
    ShortWindowError,
    compute_rates,
    elapsed_from_cycles,
    expand_headings,
    round_half_away,
    wait_cycle_percent,
    wrap_aware_delta,
)

WRAP = 48
MOD = 1 << WRAP


def oracle_rate(prev: int, cur: int, elapsed: float, wrapping: bool) -> int:
    """Independent recomputation: modular subtraction, then round half away."""
    if wrapping:
        delta = (cur - prev) % MOD
    else:
        delta = cur - prev
    x = delta / elapsed
    import math

    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


class TestWrapAwareDelta:
    def test_plain_delta(self):
        assert wrap_aware_delta(1000, 1100, WRAP) == 100

    def test_negative_software_delta_passes_through(self):
        assert wrap_aware_delta(500, 300, None) == -200

    def test_hardware_wrap(self):
        assert wrap_aware_delta(MOD - 10, 40, WRAP) == 50


class TestComputeRates:
    def test_plain(self):
        prev = np.array([1000], dtype=np.int64)
        cur = np.array([1100], dtype=np.int64)
        assert compute_rates(prev, cur, 1.0, WRAP).tolist() == [100]

    def test_negative_software_rate(self):
        prev = np.array([500], dtype=np.int64)
        cur = np.array([300], dtype=np.int64)
        assert compute_rates(prev, cur, 1.0, None).tolist() == [-200]

    def test_wrap(self):
        prev = np.array([MOD - 10], dtype=np.int64)
        cur = np.array([40], dtype=np.int64)
        assert compute_rates(prev, cur, 1.0, WRAP).tolist() == [50]

    def test_length_mismatch_is_programming_fault(self):
        with pytest.raises(ValueError, match="length mismatch"):
            compute_rates(np.zeros(2, np.int64), np.zeros(3, np.int64), 1.0, None)

    def test_nonpositive_elapsed_rejected(self):
        with pytest.raises(ValueError):
            compute_rates(np.zeros(1, np.int64), np.zeros(1, np.int64), 0.0, None)

    def test_rounding_ties_away_from_zero(self):
        prev = np.array([0, 0], dtype=np.int64)
        cur = np.array([1, -1], dtype=np.int64)
        assert compute_rates(prev, cur, 2.0, None).tolist() == [1, -1]

    def test_monotonic_counters_never_negative(self):
        rng = np.random.default_rng(7)
        prev = rng.integers(0, MOD, size=64)
        step = rng.integers(0, 10**9, size=64)
        cur = (prev + step) % MOD
        rates = compute_rates(prev.astype(np.int64), cur.astype(np.int64), 0.37, WRAP)
        assert (rates >= 0).all()

    @given(
        prev=st.integers(min_value=0, max_value=MOD - 1),
        delta=st.integers(min_value=0, max_value=10**12),
        elapsed=st.floats(min_value=1e-4, max_value=100.0, allow_nan=False),
    )
    @settings(max_examples=300, deadline=None)
    def test_hardware_matches_oracle(self, prev, delta, elapsed):
        cur = (prev + delta) % MOD
        got = compute_rates(
            np.array([prev], dtype=np.int64), np.array([cur], dtype=np.int64), elapsed, WRAP
        )[0]
        assert got == oracle_rate(prev, cur, elapsed, wrapping=True)

    @given(
        prev=st.integers(min_value=-(10**15), max_value=10**15),
        cur=st.integers(min_value=-(10**15), max_value=10**15),
        elapsed=st.floats(min_value=1e-4, max_value=100.0, allow_nan=False),
    )
    @settings(max_examples=300, deadline=None)
    def test_software_matches_oracle(self, prev, cur, elapsed):
        got = compute_rates(
            np.array([prev], dtype=np.int64), np.array([cur], dtype=np.int64), elapsed, None
        )[0]
        assert got == oracle_rate(prev, cur, elapsed, wrapping=False)


class TestElapsedFromCycles:
    def test_one_second_at_200mhz(self):
        assert elapsed_from_cycles(int(2.0e8), 200e6) == pytest.approx(1.0)

    def test_half_second(self):
        assert elapsed_from_cycles(int(1.0e8), 200e6) == pytest.approx(0.5)

    def test_tenth_second(self):
        assert elapsed_from_cycles(int(2.0e7), 200e6) == pytest.approx(0.1)

    def test_zero_delta_discards_window(self):
        with pytest.raises(ShortWindowError):
            elapsed_from_cycles(0, 200e6)

    def test_bad_clock(self):
        with pytest.raises(ValueError):
            elapsed_from_cycles(100, 0.0)


class TestWaitCyclePercent:
    def test_saturated_single_interconnect(self):
        total, per = wait_cycle_percent([2.0e8], 1.0, 200e6)
        assert per == [pytest.approx(100.0)]
        assert total == pytest.approx(100.0)

    def test_imbalanced_profile(self):
        total, per = wait_cycle_percent([1.94e8, 0.5e7, 0, 0, 0, 0], 1.0, 200e6)
        assert per[0] == pytest.approx(97.0)
        assert per[1] == pytest.approx(2.5)
        assert per[2:] == [0, 0, 0, 0]
        assert total == pytest.approx(99.5)

    def test_all_zero(self):
        total, per = wait_cycle_percent([0] * 6, 1.0, 200e6)
        assert total == 0.0

    def test_overflow_clamps_to_100(self):
        total, per = wait_cycle_percent([3.0e8], 1.0, 200e6)
        assert per == [100.0]

    @given(
        waits=st.lists(st.floats(min_value=0, max_value=2.0e8), min_size=1, max_size=8),
        window=st.floats(min_value=0.01, max_value=10.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_bounds(self, waits, window):
        total, per = wait_cycle_percent(waits, window, 200e6)
        assert all(0.0 <= p <= 100.0 for p in per)
        assert 0.0 <= total <= 100.0 * len(waits) + 1e-9


class TestRounding:
    def test_scalar(self):
        assert round_half_away(0.5) == 1
        assert round_half_away(-0.5) == -1
        assert round_half_away(2.4) == 2
        assert round_half_away(-2.4) == -2

    def test_vector(self):
        x = np.array([0.5, -0.5, 1.49, -1.51])
        assert round_half_away(x).tolist() == [1, -1, 1, -2]


def test_expand_headings():
    assert expand_headings(["x"], 2) == ["x@0", "x@1"]
    assert expand_headings(["a", "b"], 3) == ["a@0", "a@1", "a@2", "b@0", "b@1", "b@2"]
