import math

import numpy as np
import pytest

from loctime.gaussian import (
    TimeGrid,
    audit_sup_inequality,
    build_sheet,
    g_at_local_time,
    g_covariance,
    g_covariance_probes,
    g_lil_series,
    g_process,
    sample_eta0,
    sample_sup_statistic,
    sample_wiener,
    sheet_covariance_probes,
    sup_statistic,
    wiener_increment_maxima,
)
from loctime.rng import RngStream
from loctime.stats import HalfNormal, ProductLaw, ks_test, sup_abs_wiener_sf


def within(x, target, se, n_se=3.0):
    return abs(x - target) <= n_se * se


class TestTimeGrid:
    def test_points(self):
        g = TimeGrid(1.0, 0.25)
        assert g.n_steps == 4
        assert g.points.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert g.index(0.6).tolist() == 2

    @pytest.mark.parametrize("t_max, dt", [(1.0, 0.0), (0.0, 0.1), (1.0, 0.3)])
    def test_invalid(self, t_max, dt):
        with pytest.raises(ValueError):
            TimeGrid(t_max, dt)


class TestWiener:
    def test_starts_at_zero(self):
        w = sample_wiener(TimeGrid(1.0, 0.01), RngStream(1), size=5)
        assert np.all(w.values[:, 0] == 0)

    def test_terminal_variance(self):
        w = sample_wiener(TimeGrid(2.0, 0.5), RngStream(2, ("w",)), size=100_000)
        end = w.values[:, -1]
        v = end.var(ddof=1)
        se = math.sqrt(2 / (end.size - 1)) * 2.0
        assert within(v, 2.0, se)

    def test_independent_increments(self):
        w = sample_wiener(TimeGrid(2.0, 0.5), RngStream(3, ("w",)), size=100_000)
        r = np.corrcoef(w.at(1.0), w.at(2.0) - w.at(1.0))[0, 1]
        assert abs(r) < 3 / math.sqrt(100_000)


class TestSheet:
    def test_level_zero(self):
        s = build_sheet(3, TimeGrid(1.0, 0.1), RngStream(1), size=4)
        assert np.all(s.level(0) == 0)
        with pytest.raises(ValueError):
            s.level(4)
        with pytest.raises(ValueError):
            build_sheet(0, TimeGrid(1.0, 0.1), RngStream(1))

    def test_covariance_2_3(self):
        g = TimeGrid(1.0, 0.25)
        s = build_sheet(3, g, RngStream(4, ("sheet",)), size=100_000)
        a, b = s.level(2)[:, 2], s.level(3)[:, 4]  # s = 0.5, t = 1
        prod = a * b
        assert within(prod.mean(), 2 * 0.5, prod.std(ddof=1) / math.sqrt(prod.size))

    def test_level_increment_independent(self):
        s = build_sheet(3, TimeGrid(1.0, 0.5), RngStream(5, ("sheet",)), size=100_000)
        r = np.corrcoef(s.level(3)[:, -1] - s.level(2)[:, -1], s.level(2)[:, -1])[0, 1]
        assert abs(r) < 4 / math.sqrt(100_000)

    def test_probe_grid(self):
        probes = sheet_covariance_probes(40_000, 4, [0.25, 0.5, 1.0, 2.0], RngStream(6, ("p",)))
        assert len(probes) == 136
        assert sum(not p.within(4.0) for p in probes) == 0


class TestG:
    def test_g_process(self):
        g = TimeGrid(1.0, 0.5)
        rng = RngStream(7, ("g",)).generator()
        s = build_sheet(2, g, rng, size=100_000)
        w = sample_wiener(g, rng, size=100_000)
        G1 = g_process(s, w, 1).values[:, -1]
        G2 = g_process(s, w, 2).values[:, -1]
        assert within(G1.var(ddof=1), 2.0, 2.0 * math.sqrt(2 / 1e5))
        prod = G1 * G2
        assert within(prod.mean(), 3.0, prod.std(ddof=1) / math.sqrt(prod.size))

    def test_g_process_errors(self):
        g = TimeGrid(1.0, 0.5)
        s = build_sheet(2, g, RngStream(1))
        with pytest.raises(ValueError):
            g_process(s, sample_wiener(g, RngStream(2)), 3)
        with pytest.raises(ValueError):
            g_process(s, sample_wiener(TimeGrid(1.0, 0.25), RngStream(2)), 1)

    def test_covariance_formula(self):
        assert g_covariance(1, 1.0, 1, 1.0) == 2
        assert g_covariance(1, 0.3, 2, 0.7) == pytest.approx(3 * 0.3)
        assert g_covariance(3, 0.0, 2, 5.0) == 0
        assert g_covariance(4, 2.0, 4, 1.0) == pytest.approx(1.0 * (16 - 2))
        with pytest.raises(ValueError):
            g_covariance(0, 1.0, 1, 1.0)

    def test_variance_by_level(self):
        probes = g_covariance_probes(50_000, 5, [1.0], RngStream(8, ("gv",)))
        diag = [p for p in probes if p.k == p.l]
        assert [p.target for p in diag] == [(4 * k - 2) * 1.0 for k in range(1, 6)]
        assert all(p.within(3.5) for p in diag)


class TestEta0:
    def test_basic(self):
        e = sample_eta0(TimeGrid(1.0, 0.01), RngStream(1), size=20)
        assert np.all(e.values[:, 0] == 0)
        assert np.all(np.diff(e.values, axis=1) >= 0)

    def test_half_normal(self):
        e = sample_eta0(TimeGrid(4.0, 1.0), RngStream(9, ("eta",)), size=100_000)
        assert ks_test(e.values[:, -1] / 2.0, HalfNormal(), 0.01).passed


def test_g_at_local_time_product_law():
    x = g_at_local_time(2, 1.0, 50_000, RngStream(10, ("gl",)))
    assert ks_test(x, ProductLaw(), 0.01).passed


class TestSupAudit:
    def test_sup_statistic(self):
        G = np.array([[[1.0, -3.0, 2.0], [0.5, 0.5, 4.0]]])
        assert sup_statistic(G).tolist() == [4.0]
        assert sup_statistic(G, upto=[1]).tolist() == [3.0]

    def test_u_zero_is_one(self):
        x = sample_sup_statistic(3, 1.0, 500, RngStream(11, ("sup",)), n_steps=200)
        audit = audit_sup_inequality(x, 1.5, 3, 1.0, [0.0, 1.0, 2.0, 3.0, 4.0], u0=0.0)
        assert audit.empirical[0] == 1.0

    def test_invalid(self):
        x = np.ones(200)
        with pytest.raises(ValueError):
            audit_sup_inequality(x, 1.0, 3, 1.0, [1.0])
        with pytest.raises(ValueError):
            audit_sup_inequality(np.ones(10), 1.5, 3, 1.0, [1.0])
        with pytest.raises(ValueError):
            audit_sup_inequality(x, 1.5, 3, 1.0, [1.0], variant="other")

    def test_fixed_slope(self):
        rng = RngStream(12, ("sup",))
        x = sample_sup_statistic(3, 1.0, 4000, rng, n_steps=500)
        u = np.linspace(0, 14, 29)
        audit = audit_sup_inequality(x, 1.5, 3, 1.0, u, rng=rng.generator())
        assert audit.passed

    def test_coarse_grid_is_below(self):
        fine, rough = sample_sup_statistic(2, 1.0, 200, RngStream(13), n_steps=100, coarse=True)
        assert np.all(rough <= fine)


def test_g_lil_series_shape():
    t = np.geomspace(10, 1e6, 50)
    x = g_lil_series(3, t, RngStream(14))
    assert x.shape == (50,) and np.all(x >= 0)
    with pytest.raises(ValueError):
        g_lil_series(3, [1.0, 2.0], RngStream(14))


class TestWienerIncrements:
    def test_brute_force(self):
        rng = RngStream(15, ("inc",))
        got = wiener_increment_maxima(4.0, 1.0, 3, rng, n_steps=64)
        gen = rng.generator()
        from loctime.gaussian import _paths  # same draws as the function
        W = _paths(TimeGrid(4.0, 4.0 / 64), gen, (3,))
        for r in range(3):
            best = max(abs(W[r, s + u] - W[r, s]) for s in range(0, 64 - 16 + 1) for u in range(17))
            assert got[r] == pytest.approx(best)

    def test_single_window_matches_exact_law(self):
        # with T = h the statistic is sup_{u<=1}|W(u)|; the grid sup sits a
        # little below the continuous one
        x = wiener_increment_maxima(1.0, 1.0, 40_000, RngStream(16, ("inc",)), n_steps=1024)
        for v in (1.0, 2.0):
            emp = np.mean(x >= v)
            exact = sup_abs_wiener_sf(v)
            se = math.sqrt(exact * (1 - exact) / x.size)
            assert exact - 4 * se - 0.01 <= emp <= exact + 4 * se

    def test_invalid(self):
        with pytest.raises(ValueError):
            wiener_increment_maxima(1.0, 2.0, 1, RngStream(0))
