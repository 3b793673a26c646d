import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loctime.excursions import InsufficientExcursionsError
from loctime.ray_knight import (
    CenteredSumSeries,
    extract_T_from_path,
    first_excursion_law,
    first_return_tail,
    offspring_samples,
    sample_T,
    simulate_gw,
    simulate_gw_batch,
    upward_return_time,
    verify_identities,
)
from loctime.rng import RngStream
from loctime.stats import GeometricHalf, chi_square_test, chi_square_two_sample
from loctime.walk import WalkPath, compressed_counts, compressed_walk, walk_until_returns


def path(steps):
    return WalkPath.from_steps(np.array(steps, dtype=np.int8))


class TestOffspring:
    def test_mean(self):
        T = sample_T(RngStream(1, ("T",)), size=10**6)
        assert abs(T.mean() - 2) <= 3 * math.sqrt(2 / 10**6)

    def test_p_one(self):
        T = sample_T(RngStream(2, ("T",)), size=10**5)
        se = math.sqrt(0.25 / 10**5)
        assert abs(np.mean(T == 1) - 0.5) <= 4 * se

    def test_chi_square(self):
        T = sample_T(RngStream(3, ("T",)), size=10**5)
        assert chi_square_test(T, GeometricHalf(), support=np.arange(1, 13)).passed

    def test_scalar(self):
        assert isinstance(sample_T(RngStream(4)), int)


class TestCenteredSums:
    def test_values(self):
        u = CenteredSumSeries.from_T(1, [1, 3, 2, 1])
        assert u.values.tolist() == [-1, 0, 0, -1]
        assert u(0) == 0 and u(2) == 0
        with pytest.raises(IndexError):
            u(5)

    @given(st.lists(st.integers(1, 20), min_size=1, max_size=50))
    def test_increments_at_least_minus_one(self, T):
        u = CenteredSumSeries.from_T(1, T).values
        assert np.all(np.diff(np.concatenate([[0], u])) >= -1)


class TestExtract:
    def test_single_excursion(self):
        assert extract_T_from_path(path([1, -1]), 1, 1).tolist() == [1]

    def test_tent(self):
        assert extract_T_from_path(path([1, 1, -1, -1]), 1, 1).tolist() == [2]

    def test_insufficient(self):
        with pytest.raises(InsufficientExcursionsError):
            extract_T_from_path(path([1, -1]), 1, 2)
        with pytest.raises(ValueError):
            extract_T_from_path(path([1, -1]), 0, 1)

    def test_pooled_law(self):
        rng = RngStream(5, ("pool",))
        pooled = []
        for i in range(200):
            # levels 0..5 are exact in a walk compressed outside [0, 6]
            w = compressed_walk(rng.child(i), (0, 6), 50, upward_only=True)
            for T in offspring_samples(w, 50, 5).values():
                pooled.append(T)
        T = np.concatenate(pooled)
        assert T.size > 10_000
        assert chi_square_test(T, GeometricHalf(), support=np.arange(1, 13)).passed

    def test_offspring_counts_match_up_counts(self):
        w = walk_until_returns(RngStream(6, ("oc",)), 10, upward_only=True)
        samples = offspring_samples(w, 10, 4)
        assert samples[1].size == 10  # one offspring count per upward zero-excursion


class TestIdentities:
    def test_single_excursion(self):
        rep = verify_identities(path([1, -1]), 1, 1)
        assert rep.all_hold
        assert rep.rows == [(1, 1, "a", True), (1, 1, "b", True), (1, 1, "c", True)]

    def test_extinction(self):
        # rho_1^+ = 2; no upward excursions from level 1, so level 2 is empty
        rep = verify_identities(path([1, -1]), 1, 3)
        assert rep.all_hold

    def test_needs_upward_excursions(self):
        with pytest.raises(InsufficientExcursionsError):
            verify_identities(path([-1, 1]), 1, 2)
        with pytest.raises(ValueError):
            verify_identities(path([1, -1]), 0, 2)

    def test_json_export(self):
        rep = verify_identities(path([1, 1, -1, -1]), 1, 2, path_seed="demo")
        rec = json.loads(rep.to_json())
        assert rec[0] == {"path_seed": "demo", "N": 1, "k": 1, "identity": "a", "holds": True}
        assert len(rec) == 6

    @given(st.lists(st.sampled_from([-1, 1]), min_size=2, max_size=300), st.integers(1, 8))
    @settings(max_examples=300)
    def test_hold_on_arbitrary_paths(self, steps, k_max):
        p = path(steps)
        pos = p.positions
        ups = int(np.count_nonzero((pos[1:] == 0) & (pos[:-1] == 1)))
        for N in range(1, ups + 1):
            assert verify_identities(p, N, k_max).all_hold

    def test_random_walks(self):
        rng = RngStream(7, ("ident",))
        for i in range(300):
            N = 1 + i % 100
            w = compressed_walk(rng.child(i), (0, 11), N, upward_only=True)
            assert verify_identities(w, N, 10).failures == 0

    def test_completed_convention_breaks_c(self):
        # at rho_1^+ = 4 the downward excursion from level 1 begun at time 3
        # is still open, so the completed count misses it
        rep = verify_identities(path([1, 1, -1, -1]), 1, 1, convention="completed")
        assert not dict(((k, i), h) for _, k, i, h in rep.rows)[(1, "c")]

    def test_upward_return_time(self):
        assert upward_return_time(path([-1, 1, 1, -1]), 1) == 4


class TestGaltonWatson:
    def test_absorbing(self):
        assert simulate_gw(0, 5, RngStream(1)).Z.tolist() == [0] * 6

    def test_invalid(self):
        with pytest.raises(ValueError):
            simulate_gw(-1, 2, RngStream(1))

    def test_one_step_law(self):
        Z = simulate_gw_batch(1, 1, 100_000, RngStream(8, ("gw1",)))[:, 1]
        pmf = lambda m: 0.5 if m == 0 else 2.0 ** -(m + 1)  # noqa: E731
        assert chi_square_test(Z, pmf, support=np.arange(0, 15)).passed

    def test_critical(self):
        Z = simulate_gw_batch(20, 4, 50_000, RngStream(9, ("gw",)))
        for k in range(5):
            se = Z[:, k].std(ddof=1) / math.sqrt(Z.shape[0]) if k else 1.0
            assert abs(Z[:, k].mean() - 20) <= 3 * se

    def test_matches_walk_levels(self):
        rng = RngStream(10, ("gw-walk",))
        reps = 20_000
        _, ups, _ = compressed_counts(rng.child("walk"), (0, 4), 5, True, reps)
        Z = simulate_gw_batch(5, 3, reps, rng.child("gw"))
        for k in (1, 2, 3):
            assert chi_square_two_sample(ups[:, k], Z[:, k]).passed


class TestFirstExcursionLaw:
    def test_k1(self):
        assert first_excursion_law(1).pmf(0) == 0

    def test_k2(self):
        assert first_excursion_law(2).pmf(0) == Fraction(1, 2)

    @pytest.mark.parametrize("k", range(1, 51))
    def test_normalized(self, k):
        law = first_excursion_law(k)
        # geometric tail in closed form beyond m_max
        m_max = 200
        head = sum(float(law.pmf(m)) for m in range(m_max + 1))
        assert abs(head + float(law.sf(m_max + 1)) - 1) <= 1e-12

    def test_invalid(self):
        with pytest.raises(ValueError):
            first_excursion_law(0)
        with pytest.raises(ValueError):
            first_return_tail(0, 1)

    def test_gamblers_ruin_oracle(self):
        # from level k the walk returns to k before hitting 0 w.p. 1 - 1/(2k);
        # it reaches k at all w.p. 1/k from level 1 after the first up-step
        for k in (1, 2, 5):
            back = 1 - Fraction(1, 2 * k)
            for m in range(1, 6):
                expect = Fraction(1, k) * back ** (m - 1) * (1 - back)
                assert first_excursion_law(k).pmf(m) == expect

    def test_return_tail(self):
        assert first_return_tail(1, 1) == Fraction(1, 2)
        assert first_return_tail(2, 3) == Fraction(1, 4) * Fraction(3, 4) ** 2
        assert first_return_tail(3, 0) == 1

    def test_monte_carlo(self):
        visits, _, _ = compressed_counts(RngStream(11, ("fe",)), (0, 6), 1, True, 200_000)
        for k in (1, 2, 5):
            law = first_excursion_law(k)
            rep = chi_square_test(visits[:, k], lambda m: float(law.pmf(m)), support=np.arange(0, 40))
            assert rep.passed
