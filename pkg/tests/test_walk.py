import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loctime.rng import RngStream
from loctime.walk import (
    StepSequence,
    WalkPath,
    centered_local_time,
    compressed_counts,
    compressed_walk,
    default_zero_stride,
    lil_scan,
    local_time,
    local_time_profile,
    simulate_walk,
    step_chunks,
    stream_profile,
    walk_until_returns,
    zero_increment_maxima,
)

steps_strategy = st.lists(st.sampled_from([-1, 1]), min_size=0, max_size=200)


def naive_local_time(steps, k, n):
    pos = np.cumsum(steps[:n])
    return int(np.count_nonzero(pos == k))


class TestSimulateWalk:
    def test_empty(self):
        seq = simulate_walk(0, RngStream(1))
        assert seq.length == 0
        assert WalkPath(seq).positions.tolist() == [0]

    def test_deterministic(self):
        a = simulate_walk(4, RngStream(7, ("walk", 0)))
        b = simulate_walk(4, RngStream(7, ("walk", 0)))
        assert a.steps.tolist() == b.steps.tolist()

    def test_distinct_streams_differ(self):
        a = simulate_walk(256, RngStream(7, ("walk", 0)))
        b = simulate_walk(256, RngStream(7, ("walk", 1)))
        assert a.steps.tolist() != b.steps.tolist()

    def test_steps_are_signs(self):
        seq = simulate_walk(1001, RngStream(3))
        assert set(np.unique(seq.steps)) <= {-1, 1}
        assert seq.length == 1001

    def test_mean_step_clt_band(self):
        seq = simulate_walk(10**6, RngStream(11, ("clt",)))
        assert abs(seq.steps.mean()) <= 3.3 / math.sqrt(10**6)

    def test_negative_length(self):
        with pytest.raises(ValueError):
            simulate_walk(-1, RngStream(0))

    def test_invalid_steps_rejected(self):
        with pytest.raises(ValueError):
            StepSequence(np.array([1, 0, -1]))


class TestSnapshot:
    @pytest.mark.parametrize("n", [0, 1, 7, 8, 9, 1000])
    def test_round_trip(self, n):
        seq = simulate_walk(n, RngStream(5, ("snap", n)))
        assert StepSequence.from_bytes(seq.to_bytes()).steps.tolist() == seq.steps.tolist()

    def test_layout(self):
        # +1 -1 +1 +1 -> bits 1,0,1,1 little-endian within the byte = 0b1101
        data = StepSequence(np.array([1, -1, 1, 1])).to_bytes()
        assert data[:8] == (4).to_bytes(8, "little")
        assert data[8:] == bytes([0b1101])

    def test_truncated(self):
        with pytest.raises(ValueError):
            StepSequence.from_bytes(b"\x05\x00")
        with pytest.raises(ValueError):
            StepSequence.from_bytes((16).to_bytes(8, "little") + b"\x00")


class TestLocalTime:
    def test_alternating_path(self):
        p = WalkPath.from_steps([1, -1, 1, -1])
        assert [local_time(p, k, 4) for k in (0, 1, 2)] == [2, 2, 0]

    def test_tent_path(self):
        p = WalkPath.from_steps([1, 1, -1, -1])
        assert [local_time(p, k, 4) for k in (0, 1, 2)] == [1, 2, 1]

    def test_time_zero(self):
        p = WalkPath.from_steps([1, 1, -1, -1])
        assert all(local_time(p, k, 0) == 0 for k in range(-3, 4))

    def test_time_beyond_path(self):
        with pytest.raises(ValueError):
            local_time(WalkPath.from_steps([1]), 0, 2)

    def test_centered(self):
        p = WalkPath.from_steps([1, 1, -1, -1])
        assert centered_local_time(p, 1, 4) == 1
        assert centered_local_time(WalkPath.from_steps([-1, -1]), 3, 2) == 0
        with pytest.raises(ValueError):
            centered_local_time(p, 0, 4)

    @given(steps_strategy)
    def test_partition(self, steps):
        n = len(steps)
        p = WalkPath.from_steps(np.array(steps, dtype=np.int8))
        total = sum(local_time(p, k, n) for k in range(-n, n + 1))
        assert total == n

    @given(steps_strategy, st.integers(-5, 5))
    def test_monotone_unit_increments(self, steps, k):
        n = len(steps)
        p = WalkPath.from_steps(np.array(steps, dtype=np.int8))
        series = [local_time(p, k, m) for m in range(n + 1)]
        assert all(b - a in (0, 1) for a, b in zip(series, series[1:]))


class TestProfile:
    def test_window_counts(self):
        p = WalkPath.from_steps([1, -1, 1, -1])
        prof = local_time_profile(p, 4, (-1, 2))
        assert prof.counts.tolist() == [0, 2, 2, 0]
        assert prof[5] == 0  # beyond [-n, n]

    def test_level_outside_window_inside_range(self):
        prof = local_time_profile(WalkPath.from_steps([1, 1, 1]), 3, (0, 1))
        with pytest.raises(KeyError):
            prof[2]

    @given(steps_strategy, st.integers(-4, 0), st.integers(0, 4))
    @settings(max_examples=50)
    def test_matches_naive_with_spill(self, steps, lo, hi):
        steps = np.array(steps, dtype=np.int8)
        n = steps.size
        prof = local_time_profile(StepSequence(steps), n, (lo, hi))
        for k in range(lo, hi + 1):
            assert prof[k] == naive_local_time(steps, k, n)
        assert prof.total() == n

    def test_empty_window(self):
        with pytest.raises(ValueError):
            local_time_profile(WalkPath.from_steps([1]), 1, (2, 1))

    def test_zero_series(self):
        steps = np.array([1, -1, -1, 1, 1, 1], dtype=np.int8)
        prof = local_time_profile(StepSequence(steps), 6, (0, 0), zero_stride=2)
        assert prof.zero_times().tolist() == [2, 4, 6]
        assert prof.zero_series.tolist() == [1, 2, 2]

    def test_default_stride(self):
        assert default_zero_stride(10**6) == 1
        assert default_zero_stride(10**8) == 100

    def test_streaming_equals_stored(self):
        rng = RngStream(9, ("stream",))
        n = 300_000
        a = stream_profile(n, rng, (-50, 50), zero_stride=1000)
        b = local_time_profile(simulate_walk(n, rng), n, (-50, 50), zero_stride=1000)
        assert a.counts.tolist() == b.counts.tolist()
        assert (a.spill_below, a.spill_above) == (b.spill_below, b.spill_above)
        assert a.zero_series.tolist() == b.zero_series.tolist()

    def test_chunked_source(self):
        rng = RngStream(4, ("chunks",))
        n = 10_000
        whole = simulate_walk(n, rng)
        chunks = [whole.steps[i:i + 777] for i in range(0, n, 777)]
        a = local_time_profile(iter(chunks), n, (-20, 20))
        b = local_time_profile(whole, n, (-20, 20))
        assert a.counts.tolist() == b.counts.tolist()
        with pytest.raises(ValueError):
            local_time_profile(iter(chunks[:2]), n, (-20, 20))

    def test_million_steps_against_naive_levels(self):
        rng = RngStream(21, ("profile",))
        n = 10**6
        seq = simulate_walk(n, rng)
        prof = local_time_profile(seq, n, (-n, n), zero_stride=0)
        pos = np.cumsum(seq.steps, dtype=np.int64)
        levels = np.random.default_rng(0).integers(pos.min(), pos.max() + 1, 100)
        for k in levels:
            assert prof[int(k)] == int(np.count_nonzero(pos == k))
        assert prof.total() == n

    def test_step_chunks_reproduce_walk(self):
        rng = RngStream(2, ("sc",))
        joined = np.concatenate(list(step_chunks(5000, rng, chunk_steps=640)))
        assert joined.tolist() == simulate_walk(5000, rng).steps.tolist()


class TestCompressedWalks:
    def test_window_must_hold_zero(self):
        with pytest.raises(ValueError):
            compressed_walk(RngStream(0), (1, 3), 5)

    def test_stops_at_return(self):
        seq = walk_until_returns(RngStream(8, ("r",)), 7)
        pos = np.cumsum(seq.steps)
        assert pos[-1] == 0
        assert np.count_nonzero(pos == 0) == 7

    def test_upward_only(self):
        seq = walk_until_returns(RngStream(8, ("u",)), 5, upward_only=True)
        pos = np.concatenate([[0], np.cumsum(seq.steps)])
        ups = np.count_nonzero((pos[1:] == 0) & (pos[:-1] == 1))
        assert ups == 5 and pos[-1] == 0 and pos[-2] == 1

    def test_window_levels_are_consistent(self):
        seq = compressed_walk(RngStream(1, ("cw",)), (-2, 3), 50)
        pos = np.cumsum(seq.steps)
        # outside the window the walk only makes two-step excursions
        assert pos.max() <= 4 and pos.min() >= -3
        assert np.count_nonzero(pos == 0) == 50

    def test_counts_shape(self):
        visits, ups, downs = compressed_counts(RngStream(3, ("cc",)), (0, 4), 10, True, 20)
        assert visits.shape == ups.shape == downs.shape == (20, 5)
        assert np.all(ups[:, 0] == 10)  # ten upward excursions from zero

    def test_max_steps_guard(self):
        with pytest.raises(ValueError):
            walk_until_returns(RngStream(0, ("g",)), 10**6, max_steps=100)


def test_zero_increment_maxima_brute_force():
    rng = RngStream(6, ("inc",))
    got = zero_increment_maxima(200, 16, 3, rng)
    gen = rng.generator()
    for r in range(3):
        pos = np.cumsum(simulate_walk(200, gen).steps)
        z = np.concatenate([[0], np.cumsum(pos == 0)])
        best = max(z[j + 16] - z[j] for j in range(0, 200 - 16 + 1))
        assert got[r] == pytest.approx(best / 4.0)


class TestLilScan:
    def test_statistics_match_direct_computation(self):
        rng = RngStream(12, ("lil",))
        n = 200_000
        cps = np.array([20_000, 50_000, 100_000, 200_000])
        scan = lil_scan(n, rng, levels=8, n_min=10_000, checkpoints=cps)
        pos = np.cumsum(simulate_walk(n, rng).steps)
        for row, c in enumerate(cps):
            seg = pos[:c]
            d = np.count_nonzero(seg == 1) - np.count_nonzero(seg == 0)
            ll = math.log(math.log(c))
            expect = d / (math.sqrt(2) * c**0.25 * ll**0.75)
            assert scan.series[row, 0] == pytest.approx(expect, rel=1e-12)
        assert np.all(scan.sups[[0, 1, 3]] >= scan.series[:, [0, 1, 3]].max(axis=0) - 1e-12)

    def test_bad_checkpoints(self):
        with pytest.raises(ValueError):
            lil_scan(1000, RngStream(0), n_min=100, checkpoints=[500, 400])
        with pytest.raises(ValueError):
            lil_scan(1000, RngStream(0), levels=4, k_c=5)
