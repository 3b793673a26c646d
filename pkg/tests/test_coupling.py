import math

import numpy as np
import pytest

from loctime.coupling import (
    CouplingReport,
    EmbeddedWalk,
    EtaMarks,
    HitWalk,
    assemble_sheet_coupling,
    audit_exit_sum_tail,
    audit_exponential_sums,
    coupling_error_eta,
    embed_level,
    embed_U_sums,
    embed_walk,
    embedding_error_report,
    eta_coupling_report,
    eta_errors,
    exit_time_laplace,
    sample_excursion_table,
    sample_exit_time,
    sheet_coupling_report,
    splice_coupling_report,
    splice_tables,
)
from loctime.excursions import BlockSchedule
from loctime.ray_knight import first_return_tail
from loctime.rng import RngStream
from loctime.stats import (
    Exponential,
    GeometricHalf,
    TargetLaw,
    chi_square_test,
    chi_square_two_sample,
    ks_test,
    sup_abs_wiener_sf,
)
from loctime.walk import StepSequence, compressed_counts

SECH_1 = 0.64805427366388539957  # 1/cosh(1), 20 digits


class ExitTimeLaw(TargetLaw):
    """P(tau <= t) = P(sup_{s<=t} |W(s)| >= 1) = P(sup_{s<=1} |W| >= t^{-1/2})."""

    name = "exit-time"

    def cdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([sup_abs_wiener_sf(1 / math.sqrt(t)) if t > 0 else 0.0 for t in x])


@pytest.fixture(scope="module")
def draws():
    return sample_exit_time(RngStream(1, ("exit",)), 200_000)


@pytest.fixture(scope="module")
def table():
    return sample_excursion_table(200_000, 3, RngStream(16, ("tab",)))


class TestExitTime:
    def test_mean(self, draws):
        assert abs(draws.mean() - 1) <= 3 * draws.std(ddof=1) / math.sqrt(draws.size)

    def test_variance(self, draws):
        c = draws - draws.mean()
        v = c.var(ddof=1)
        se = math.sqrt((np.mean(c**4) - v**2) / draws.size)
        assert abs(v - 2 / 3) <= 3 * se

    def test_laplace_probe(self, draws):
        y = np.exp(-0.5 * draws)
        assert abs(y.mean() - SECH_1) <= 3 * y.std(ddof=1) / math.sqrt(y.size)
        assert exit_time_laplace(0.5) == pytest.approx(SECH_1, abs=1e-15)

    def test_distribution(self, draws):
        assert ks_test(draws[:20_000], ExitTimeLaw(), 0.015).passed

    def test_positive_and_scalar(self, draws):
        assert draws.min() > 0
        assert isinstance(sample_exit_time(RngStream(2)), float)

    def test_deterministic(self):
        a = sample_exit_time(RngStream(3, ("d",)), 10)
        b = sample_exit_time(RngStream(3, ("d",)), 10)
        assert a.tolist() == b.tolist()


class TestEmbedWalk:
    def test_marks_per_return(self):
        walk, marks = embed_walk(10_000, RngStream(4, ("ew",)))
        zeros = np.count_nonzero(np.cumsum(walk.steps.steps) == 0)
        assert marks.values.size == zeros
        assert walk.tau.size == 10_000 and np.all(np.diff(walk.tau) > 0)

    def test_without_times(self):
        walk, _ = embed_walk(100, RngStream(4, ("ew",)), times=False)
        assert walk.tau is None

    def test_guards(self):
        with pytest.raises(ValueError):
            embed_walk(0, RngStream(0))
        with pytest.raises(TypeError):
            embed_walk(10, np.random.default_rng(0))

    def test_marks_exponential(self):
        pooled = np.concatenate([embed_walk(4096, RngStream(5, ("m", r)), times=False)[1].values
                                 for r in range(200)])
        assert pooled.size > 5000
        assert ks_test(pooled, Exponential(), 0.03).passed

    def test_eta_errors_by_hand(self):
        walk = EmbeddedWalk(StepSequence(np.array([1, -1, 1, -1])), None)
        marks = EtaMarks(np.array([0.5, 2.0]))
        assert eta_errors(walk, marks, [0, 2, 3, 4]).tolist() == [0.0, 0.5, 0.5, 0.5]
        with pytest.raises(ValueError):
            eta_errors(walk, marks, [5])

    def test_reports(self):
        walk, marks = embed_walk(2**14, RngStream(6, ("r",)), times=False)
        grid = [2**i for i in range(6, 15)]
        rep = coupling_error_eta(walk, marks, grid, seed="demo")
        assert isinstance(rep, CouplingReport) and math.isfinite(rep.exponent)
        many = eta_coupling_report(grid, 8, RngStream(6, ("many",)))
        assert np.asarray(many.errors).shape == (8, len(grid))
        assert many.to_dict()["replications"] == 8


class TestLevelEmbedding:
    def test_hits_embed_sums_exactly(self):
        lev = embed_level(1, 500, RngStream(7, ("lev",)))
        assert np.all(lev.T >= 1)
        assert lev.U.values.tolist() == lev.hits.positions[lev.stop].tolist()
        assert np.all(np.diff(lev.sigma) >= 0)  # a zero increment stops at once
        assert np.all(lev.sigma[lev.T == 2] == np.concatenate([[0.0], lev.sigma[:-1]])[lev.T == 2])

    def test_prefix_stable_in_j_max(self):
        a = embed_level(1, 100, RngStream(8, ("pre",)))
        b = embed_level(1, 400, RngStream(8, ("pre",)))
        assert b.U.values[:100].tolist() == a.U.values.tolist()
        assert b.stop[:100].tolist() == a.stop.tolist()
        assert b.hits.positions[:a.stop[-1] + 1].tolist() == a.hits.positions[:a.stop[-1] + 1].tolist()

    def test_offspring_law(self):
        T = np.concatenate([embed_level(1, 2000, RngStream(9, ("T", r))).T for r in range(20)])
        assert chi_square_test(T, GeometricHalf(), support=np.arange(1, 13)).passed

    def test_mean_gap(self):
        gaps = np.concatenate([np.diff(embed_level(1, 5000, RngStream(10, ("g", r))).sigma)
                               for r in range(10)])
        assert abs(gaps.mean() - 2) <= 3 * gaps.std(ddof=1) / math.sqrt(gaps.size)

    def test_hit_walk_horizon(self):
        hw = HitWalk(np.array([0, 1, 0]), np.array([0.0, 1.0, 2.0]))
        assert hw.value_at([0.5, 1.0, 1.5]).tolist() == [0, 1, 1]
        with pytest.raises(ValueError):
            hw.value_at(2.0)

    def test_W_reads_near_sums(self):
        lev = embed_level(1, 4096, RngStream(11, ("w",)))
        W2j = lev.W_at_2j()
        assert W2j.size == 4096
        # sqrt(j) scale fluctuations are O(j^{1/4}); far below j^{1/2}
        assert np.max(np.abs(lev.U.values - W2j)) < 4096**0.5

    def test_guards(self):
        with pytest.raises(ValueError):
            embed_U_sums(0, 10, RngStream(0))

    def test_error_report(self):
        rep = embedding_error_report(2, [2**i for i in range(6, 12)], 4, RngStream(12, ("e",)))
        assert set(rep) == {"U-vs-W", "sigma-deformation"}
        assert 0 < rep["U-vs-W"].exponent < 1


class TestSheetCoupling:
    def test_guards(self):
        with pytest.raises(ValueError):
            assemble_sheet_coupling([7], 2, RngStream(0))
        with pytest.raises(ValueError):
            assemble_sheet_coupling([0], 1, RngStream(0))

    def test_structure(self):
        run = assemble_sheet_coupling([64, 128, 256], 3, RngStream(13, ("s",)))
        assert run.xi_up.shape == (4, 3) and run.G.shape == (3, 3)
        assert run.xi_up_plus[0].tolist() == [64, 128, 256]
        assert np.all(run.xi_up[0] <= run.N_grid)
        assert np.allclose(run.errors, run.centered() - run.G)
        assert run.sup_errors.shape == (3,)

    def test_level_law_matches_walks(self):
        # xi(k, rho_N, up) from the coupling against direct walks, N = 27
        reps = 3000
        N = 27
        coupled = np.array([assemble_sheet_coupling([N], 3, RngStream(14, ("law", r))).xi_up[:, 0]
                            for r in range(reps)])
        _, ups, _ = compressed_counts(RngStream(14, ("walks",)), (0, 4), N, False, reps)
        for k in range(4):
            assert chi_square_two_sample(coupled[:, k], ups[:, k]).passed

    def test_report(self):
        rep, runs = sheet_coupling_report([8, 16, 32, 64], 2, 6, RngStream(15, ("rep",)))
        assert len(runs) == 6 and np.asarray(rep.errors).shape == (6, 4)
        assert rep.to_dict()["K"] == 2


class TestExcursionTables:
    def test_signs_and_lengths(self, table):
        assert abs(np.mean(table.sign == 1) - 0.5) < 4 * math.sqrt(0.25 / len(table))
        assert np.all(table.length >= 2) and np.all(table.length % 2 == 0)
        assert np.all(table.local[table.sign == -1] == 0)

    def test_length_law(self, table):
        pmf = [0.5, 1 / 8, 1 / 16, 5 / 128]
        bins = np.minimum(table.length // 2, 5)
        assert chi_square_test(bins, pmf + [1 - sum(pmf)], support=np.arange(1, 6)).passed

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_visit_law(self, table, k):
        j = np.arange(0, 30)
        sf = np.array([float(first_return_tail(k, int(v))) for v in j] + [0.0])
        assert chi_square_test(table.local[:, k - 1], sf[:-1] - sf[1:], support=j).passed

    def test_local_bounded_by_length(self, table):
        assert np.all(table.local.sum(axis=1) < table.length)

    def test_splice_identity(self, table):
        s = BlockSchedule(6)
        sub = sample_excursion_table(s.total, 3, RngStream(17))
        same = splice_tables(sub, sub, s)
        assert same.length.tolist() == sub.length.tolist()

    def test_identity_report_zero(self):
        rep = splice_coupling_report(6, 3, 2, RngStream(18, ("z",)), identical=True)
        assert all(r.extra.get("zero") for r in rep.values())
        assert set(rep) == {"rho", "local-vs-walk1", "local-vs-walk2", "zero-vs-walk1"}

    def test_report_grids(self):
        rep = splice_coupling_report(8, 2, 4, RngStream(19, ("g",)))
        assert rep["rho"].n_grid == [2**l for l in range(1, 9)]
        assert rep["zero-vs-walk1"].n_grid == [4**l for l in range(1, 7)]


class TestSumAudits:
    def test_exit_sums(self):
        a = audit_exit_sum_tail(100, 2000, [0.5, 1.0, 2.0, 3.0], RngStream(20))
        assert a.passed
        with pytest.raises(ValueError):
            audit_exit_sum_tail(100, 10, [7.0], RngStream(20))

    def test_exponential_sums(self):
        a = audit_exponential_sums(100, 2000, [0.5, 1.0, 2.0, 4.0], RngStream(21))
        assert a.passed
        with pytest.raises(ValueError):
            audit_exponential_sums(100, 10, [0.0], RngStream(21))
