"""Experiment drivers behind ``loctime run``.

Each experiment takes its parameter dict, a root ``RngStream`` and a
worker count and returns an ``ExperimentResult``.  Work is cut into
fixed-size batches, each drawing from its own substream, so results do not
depend on the number of workers; batch outputs are combined in batch order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import coupling, gaussian
from .excursions import BlockSchedule, splice_walks
from .ray_knight import (FirstExcursionLaw, first_return_tail, offspring_samples,
                         simulate_gw_batch, verify_identities)
from .rng import RngStream, kernel_seed
from .stats import (Exponential, GeometricHalf, HalfNormal, ProductLaw, StandardNormal, TailAudit,
                    audit_binomial_tail, audit_increment_bounds, audit_level_max,
                    audit_rho_tail, audit_usum_tail, rho_sf_exact, chi_square_test, chi_square_two_sample,
                    fair_coin_tests, ks_test, lil_tracker)
from .walk import (LIL_STATISTICS, compressed_counts, compressed_walk, lil_scan,
                   stream_profile, walk_until_returns, zero_increment_maxima)
from . import _kernels

LIL_C1 = 2.0 / 3.0 * 6.0 ** 0.25
LIL_C2 = math.sqrt(2.0)


# ---------------------------------------------------------------- results


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    hard: bool = True
    detail: str = ""


@dataclass
class ExperimentResult:
    experiment: str
    checks: list = field(default_factory=list)
    tests: list = field(default_factory=list)
    audits: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    distributions: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    streams: list = field(default_factory=list)

    def check(self, name: str, passed: bool, value=None, threshold=None, hard: bool = True,
              detail: str = "") -> Check:
        c = Check(name, bool(passed), None if value is None else float(value),
                  None if threshold is None else float(threshold), hard, detail)
        self.checks.append(c)
        return c

    def add_test(self, name: str, report, hard: bool = True):
        report.label = report.label or name
        self.tests.append(report)
        value = report.p_value if report.kind.startswith("chi2") else report.statistic
        self.check(name, report.passed, value, report.threshold, hard, report.kind)

    def add_audit(self, name: str, audit, hard: bool = True):
        self.audits.append(audit)
        if isinstance(audit, TailAudit):
            self.check(name, audit.passed, audit.violations, 0, hard, "violations beyond CI")
        else:
            self.check(name, audit.passed, audit.fit.ci_hi, audit.bound_slope, hard,
                       "decay slope CI upper end vs bound")

    def add_rate(self, name: str, report, limit: float | None, hard: bool = True):
        self.rates.append(report)
        if limit is not None:
            self.check(name, report.ci_hi <= limit, report.ci_hi, limit, hard,
                       f"fitted exponent {report.exponent:.4f}")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)


# ---------------------------------------------------------------- orchestration


def ordered_reduce(op, items):
    """Pairwise reduction in a fixed tree order (independent of workers)."""
    items = list(items)
    if not items:
        raise ValueError("nothing to reduce")
    while len(items) > 1:
        items = [op(items[i], items[i + 1]) if i + 1 < len(items) else items[i]
                 for i in range(0, len(items), 2)]
    return items[0]


def _concat(a, b):
    return np.concatenate([a, b])


def batches(total: int, size: int) -> list[tuple[int, int, int]]:
    """(batch index, first replication, count) covering ``total``."""
    return [(b, s, min(size, total - s)) for b, s in enumerate(range(0, total, size))]


def parallel_map(fn, tasks: list, workers: int) -> list:
    """``fn(*task)`` for every task, results in task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        futures = [ex.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


def _gather(parts: list, empty) -> np.ndarray:
    return ordered_reduce(_concat, parts) if parts else empty


def _within(mean: float, target: float, se: float, n_se: float) -> bool:
    return abs(mean - target) <= n_se * se


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return (float(x.mean()) if x.size else 0.0), math.inf
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _var_se(x: np.ndarray) -> tuple[float, float]:
    """Sample variance and its standard error from the fourth moment."""
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    v = float(c.var(ddof=1))
    m4 = float((c**4).mean())
    return v, math.sqrt(max(m4 - v * v, 0.0) / x.size)


# ---------------------------------------------------------------- identities


def _identities_batch(rng: RngStream, start: int, count: int, N: int, k_max: int,
                      convention: str):
    rows, fails, sizes = 0, [], []
    for r in range(start, start + count):
        s = rng.child(r)
        n_r = 1 + int(s.child("N").generator().integers(N))
        # excursions below 0 and above k_max + 1 do not touch the checked counts
        path = compressed_walk(s.child("walk"), (0, k_max + 1), n_r, upward_only=True)
        rep = verify_identities(path, n_r, k_max, convention, path_seed=s.label())
        rows += len(rep.rows)
        sizes.append(n_r)
        fails += [rec for rec in rep.records() if not rec["holds"]]
    return rows, fails, np.array(sizes, dtype=np.int64)


def run_identities(p: dict, rng: RngStream, workers: int) -> ExperimentResult:
    res = ExperimentResult("identities")
    root = rng.child("paths")
    tasks = [(root, s, c, p["N"], p["k_max"], p["convention"]) for _, s, c in batches(p["reps"], p["batch"])]
    out = parallel_map(_identities_batch, tasks, workers)
    rows = sum(o[0] for o in out)
    fails = [f for o in out for f in o[1]]
    res.distributions["N"] = _gather([o[2] for o in out], np.empty(0, np.int64))
    res.diagnostics.update({"checked": rows, "failures": fails[:100], "paths": p["reps"]})
    res.streams.append(root.label() + "/<replication>/{N,walk}")
    res.check("identity failures", not fails, len(fails), 0, detail=f"{rows} identity checks")
    return res


# ---------------------------------------------------------------- laws


def _offspring_batch(rng: RngStream, start: int, count: int, N: int, k_max: int):
    parts = []
    for r in range(start, start + count):
        path = compressed_walk(rng.child(r), (0, k_max + 1), N, upward_only=True)
        T = offspring_samples(path, N, k_max)
        parts += [T[k] for k in range(1, k_max + 1)]
    return np.concatenate(parts) if parts else np.empty(0, np.int64)


def _direct_up_batch(rng: RngStream, b: int, count: int, N: int, k: int):
    visits, ups, downs = compressed_counts(rng.child(b), (0, k + 1), N, True, count)
    return ups[:, k]


def _gw_batch(rng: RngStream, b: int, count: int, N: int, k: int):
    return simulate_gw_batch(N, k, count, rng.child(b))[:, k]


def _first_excursion_batch(rng: RngStream, b: int, count: int, k_max: int, upward: bool):
    visits, _, _ = compressed_counts(rng.child(b), (0, k_max + 1), 1, upward, count)
    return visits[:, 1:k_max + 1]


def run_laws(p: dict, rng: RngStream, workers: int) -> ExperimentResult:
    res = ExperimentResult("laws")
    level = p["level"]

    # offspring counts read off paths
    root = rng.child("offspring")
    tasks = [(root, s, c, p["t_N"], p["t_levels"]) for _, s, c in batches(p["t_paths"], p["batch_paths"])]
    T = _gather(parallel_map(_offspring_batch, tasks, workers), np.empty(0, np.int64))
    res.distributions["offspring"] = T
    if T.size:
        rep = chi_square_test(T, GeometricHalf(), np.arange(1, p["t_bins"] + 1), level,
                              seed=root.label())
        res.add_test("offspring law", rep)

    # branching equivalence
    N, k = p["gw_N"], p["gw_k"]
    if p["gw_reps"]:
        bt = batches(p["gw_reps"], p["batch_reps"])
        direct = _gather(parallel_map(_direct_up_batch, [(rng.child("direct"), b, c, N, k) for b, _, c in bt],
                                      workers), np.empty(0, np.int64))
        gw = _gather(parallel_map(_gw_batch, [(rng.child("gw"), b, c, N, k) for b, _, c in bt], workers),
                     np.empty(0, np.int64))
        res.distributions["branching-direct"] = direct
        res.distributions["branching-gw"] = gw
        res.add_test("branching equivalence", chi_square_two_sample(direct, gw, level, seed=rng.label()))
        res.check("branching mean", True, direct.mean(), N, hard=False, detail="diagnostic: E xi = N")

    # first-excursion laws
    levels = [int(v) for v in p["fe_levels"]]
    if p["fe_reps"] and levels:
        k_max = max(levels)
        bt = batches(p["fe_reps"], p["batch_reps"])
        plus = np.vstack(parallel_map(_first_excursion_batch,
                                      [(rng.child("first-up"), b, c, k_max, True) for b, _, c in bt], workers))
        both = np.vstack(parallel_map(_first_excursion_batch,
                                      [(rng.child("first-any"), b, c, k_max, False) for b, _, c in bt], workers))
        n = both.shape[0]
        cells = []
        for k in levels:
            law = FirstExcursionLaw(k)
            q = 1.0 - 1.0 / (2 * k)
            m_max = int(math.ceil(math.log(1e-12 * k) / math.log(q))) + 2
            rep = chi_square_test(plus[:, k - 1], law.pmf_array(m_max), np.arange(m_max + 1), level,
                                  seed=rng.child("first-up").label())
            res.add_test(f"first upward excursion law k={k}", rep)
            x = both[:, k - 1]
            j = 1
            while n * float(first_return_tail(k, j)) >= p["fe_min_hits"]:
                expect = float(first_return_tail(k, j))
                emp = float(np.count_nonzero(x >= j)) / n
                rel = abs(emp / expect - 1.0)
                cells.append({"k": k, "j": j, "empirical": emp, "exact": expect, "rel_err": rel})
                j += 1
        worst = max((c["rel_err"] for c in cells), default=0.0)
        bad = [c for c in cells if c["rel_err"] > p["fe_rel_tol"]]
        res.diagnostics["first-return-tail"] = cells
        res.check("first-return tail", not bad, worst, p["fe_rel_tol"],
                  detail=f"{len(cells)} cells, {len(bad)} beyond tolerance")
    return res


# ---------------------------------------------------------------- limits


def _limits_batch(rng: RngStream, start: int, count: int, n: int, k_max: int):
    out = np.empty((count, k_max + 1), dtype=np.int64)
    for i, r in enumerate(range(start, start + count)):
        prof = stream_profile(n, rng.child(r), (0, k_max), zero_stride=0)
        out[i] = prof.counts
    return out


def run_limits(p: dict, rng: RngStream, workers: int) -> ExperimentResult:
    res = ExperimentResult("limits")
    n, k1, k2 = p["n"], p["k_a1"], p["k_a2"]
    root = rng.child("walks")
    tasks = [(root, s, c, n, max(k1, k2)) for _, s, c in batches(p["reps"], p["batch"])]
    parts = parallel_map(_limits_batch, tasks, workers)
    if not parts:
        return res
    counts = np.vstack(parts)
    xi0 = counts[:, 0].astype(float)
    a1 = (counts[:, k1] - xi0) / (math.sqrt(4 * k1 - 2) * n**0.25)
    pos = xi0 > 0
    a2 = (counts[pos, k2] - xi0[pos]) / (math.sqrt(4 * k2 - 2) * np.sqrt(xi0[pos]))
    res.distributions["product-law-statistic"] = a1
    res.distributions["normal-statistic"] = a2
    res.add_test("fixed-n product law", ks_test(a1, ProductLaw(), p["ks_a1"], root.label()))
    res.add_test("fixed-n normal law", ks_test(a2, StandardNormal(), p["ks_a2"], root.label()))
    return res


# ---------------------------------------------------------------- sheet


def run_sheet(p: dict, rng: RngStream, workers: int) -> ExperimentResult:
    res = ExperimentResult("sheet")
    n_se = p["n_se"]
    if p["probe_reps"]:
        probes = gaussian.g_covariance_probes(p["probe_reps"], p["k_max"], p["times"], rng.child("G"))
        out = [q for q in probes if not q.within(n_se)]
        res.diagnostics["g-probes"] = [vars(q) | {"z": q.z} for q in probes]
        res.check("G covariance probes", not out, max(abs(q.z) for q in probes), n_se,
                  detail=f"{len(probes)} probes, {len(out)} outside")
        sheet = gaussian.sheet_covariance_probes(p["probe_reps"], p["sheet_k"], p["sheet_times"],
                                                 rng.child("W"))
        out = [q for q in sheet if not q.within(n_se)]
        res.diagnostics["sheet-probes"] = [vars(q) | {"z": q.z} for q in sheet]
        res.check("sheet covariance probes", not out, max(abs(q.z) for q in sheet), n_se,
                  detail=f"{len(sheet)} probes, {len(out)} outside")
    if p["lt_reps"]:
        g = gaussian.g_at_local_time(p["lt_k"], p["lt_t"], p["lt_reps"], rng.child("G-at-eta"))
        res.distributions["G-at-local-time"] = g
        res.add_test("G at local time vs product law", ks_test(g, ProductLaw(), p["lt_ks"], rng.label()))
        eta = gaussian.sample_eta0(gaussian.TimeGrid(1.0, 1.0 / 64), rng.child("eta"),
                                   size=p["lt_reps"]).values[:, -1]
        res.add_test("local time at zero vs half-normal", ks_test(eta, HalfNormal(), p["lt_ks"], rng.label()))
    return res


# ---------------------------------------------------------------- Skorokhod coupling


def _eta_batch(rng: RngStream, start: int, count: int, n_max: int, n_grid: list):
    errs, marks = [], []
    for r in range(start, start + count):
        walk, m = coupling.embed_walk(n_max, rng.child(r), times=False)
        errs.append(coupling.eta_errors(walk, m, n_grid))
        marks.append(m.values)
    return np.array(errs, dtype=float).reshape(count, len(n_grid)), _gather(marks, np.empty(0))


def _tau_batch(rng: RngStream, start: int, count: int, n: int):
    out = np.empty(count)
    for i, r in enumerate(range(start, start + count)):
        walk, _ = coupling.embed_walk(n, rng.child(r), times=True)
        out[i] = walk.tau[-1]
    return out


def run_couple_eta(p: dict, rng: RngStream, workers: int) -> ExperimentResult:
    res = ExperimentResult("couple-eta")
    n_se = p["n_se"]
    if p["exit_reps"]:
        tau = coupling.sample_exit_time(rng.child("exit"), p["exit_reps"])
        m, se = _mean_se(tau)
        res.check("exit time mean", _within(m, 1.0, se, n_se), m, 1.0, detail=f"se {se:.2e}")
        v, vse = _var_se(tau)
        res.check("exit time variance", _within(v, 2 / 3, vse, n_se), v, 2 / 3, detail=f"se {vse:.2e}")
        for s in p["laplace_s"]:
            lm, lse = _mean_se(np.exp(-s * tau))
            target = coupling.exit_time_laplace(s)
            res.check(f"exit time Laplace s={s}", _within(lm, target, lse, n_se), lm, target,
                      detail=f"se {lse:.2e}")
    n_grid = [int(v) for v in p["n_grid"]]
    root = rng.child("rate")
    tasks = [(root, s, c, max(n_grid), n_grid) for _, s, c in batches(p["rate_reps"], p["batch"])]
    out = parallel_map(_eta_batch, tasks, workers)
    if out:
        errs = np.vstack([o[0] for o in out])
        marks = _gather([o[1] for o in out], np.empty(0))
        rep = coupling.CouplingReport.from_errors("couple-eta", n_grid, errs, "raw", root.label(),
                                                  replications=p["rate_reps"])
        res.add_rate("local-time-at-zero coupling rate", rep, p["rate_max"])
        scaled = np.median(errs, axis=0) / np.sqrt(n_grid)
        rho = sps.spearmanr(n_grid, scaled).statistic if len(n_grid) > 2 else -1.0
        res.check("error / sqrt(n) decreasing", rho < 0, rho, 0.0, hard=False,
                  detail="Spearman correlation of median e(n)/sqrt(n) with n")
        if p["eta_samples"]:
            if marks.size < p["eta_samples"]:
                extra = rng.child("marks-extra").generator().standard_exponential(p["eta_samples"] - marks.size)
                res.diagnostics["extra-marks"] = int(extra.size)
                marks = np.concatenate([marks, extra])
            marks = marks[: p["eta_samples"]]
            res.distributions["eta-marks"] = marks
            res.add_test("marks vs Exponential(1)", ks_test(marks, Exponential(), p["eta_ks"], root.label()))
    if p["coin_steps"]:
        walk, _ = coupling.embed_walk(p["coin_steps"], rng.child("coin"), times=False)
        for rep in fair_coin_tests(walk.steps.steps, p["level"], rng.child("coin").label()):
            res.add_test(f"embedded signs {rep.kind}", rep)
    if p["tau_runs"]:
        tasks = [(rng.child("tau"), s, c, p["tau_n"]) for _, s, c in batches(p["tau_runs"], p["batch"])]
        tau_n = _gather(parallel_map(_tau_batch, tasks, workers), np.empty(0))
        n = p["tau_n"]
        frac = float(np.mean(np.abs(tau_n / n - 1.0) <= 4.0 / math.sqrt(n)))
        res.check("embedding times tau_n / n", frac >= p["tau_quantile"], frac, p["tau_quantile"],
                  detail="fraction of runs with |tau_n/n - 1| <= 4/sqrt(n)")
    for name, audit in (("exit-time sums", coupling.audit_exit_sum_tail(
            p["exit_sum_n"], p["exit_sum_reps"], p["exit_sum_u"], rng.child("exit-sums"))),
                        ("exponential sums", coupling.audit_exponential_sums(
            p["exp_sum_n"], p["exp_sum_reps"], p["exp_sum_u"], rng.child("exp-sums")))):
        if audit.rows and audit.rows[0].n:
            res.add_audit(name, audit)
    return res


# ---------------------------------------------------------------- sheet coupling


def _sheet_batch(rng: RngStream, start: int, count: int, N_grid: list, K: int):
    runs = [coupling.assemble_sheet_coupling(N_grid, K, rng.child(r)) for r in range(start, start + count)]
    return (np.array([r.sup_errors for r in runs], dtype=float),
            np.array([r.xi_up_plus[:, -1] for r in runs]),
            np.array([r.centered()[0, -1] for r in runs], dtype=float),
            np.array([np.abs(r.errors) for r in runs], dtype=float))


def run_couple_sheet(p: dict, rng: RngStream, workers: int) -> ExperimentResult:
    res = ExperimentResult("couple-sheet")
    N_grid = sorted(int(v) for v in p["N_grid"])
    K = p["K"]
    root = rng.child("sheet")
    res.streams += [root.label() + "/<replication>/star", root.label() + "/<replication>/level/<k>"]
    tasks = [(root, s, c, N_grid, K) for _, s, c in batches(p["rate_reps"], p["batch"])]
    out = parallel_map(_sheet_batch, tasks, workers)
    if out:
        errs = np.vstack([o[0] for o in out])
        plus = np.vstack([o[1] for o in out])
        slice1 = np.concatenate([o[2] for o in out])
        surface = np.median(np.vstack([o[3] for o in out]), axis=0)
        rep = coupling.CouplingReport.from_errors("couple-sheet", N_grid, errs, "raw", root.label(),
                                                  K=K, replications=p["rate_reps"],
                                                  median_surface=surface.tolist())
        res.add_rate("sheet coupling rate", rep, p["rate_max"])
        N = N_grid[-1]
        for k in range(K + 1):
            m, se = _mean_se(plus[:, k])
            res.check(f"exact center k={k}", _within(m, N, se, p["n_se"]), m, N, detail=f"se {se:.1f}")
        v, vse = _var_se(slice1)
        res.check("level-1 variance 2N", _within(v, 2 * N, vse, p["n_se"]), v, 2 * N, detail=f"se {vse:.1f}")
    if p["embed_reps"]:
        em = coupling.embedding_error_report(p["embed_levels"], p["embed_grid"], p["embed_reps"],
                                             rng.child("embed"))
        # rate fits outside the acceptance set are diagnostics
        res.add_rate("embedded sums vs W(2j)", em["U-vs-W"], p["embed_max"], hard=False)
        res.add_rate("embedding time deformation", em["sigma-deformation"], p["deform_max"], hard=False)
        gaps = []
        for r in range(min(p["embed_reps"], 4)):
            for lev in coupling.embed_U_sums(1, max(p["embed_grid"]), rng.child("embed", r)):
                gaps.append(np.diff(np.concatenate([[0.0], lev.sigma])))
        g = np.concatenate(gaps)
        m, se = _mean_se(g)
        res.check("mean embedding time per offspring", _within(m, 2.0, se, p["n_se"]), m, 2.0,
                  detail=f"se {se:.2e}")
    return res


# ---------------------------------------------------------------- splice


def _bounded_walk(rng: RngStream, returns: int, max_steps: int):
    """A walk to its ``returns``-th return; a draw longer than ``max_steps``
    is replaced by the next substream, and the replacements are counted."""
    attempt = 0
    while True:
        try:
            return walk_until_returns(rng.child(attempt), returns, max_steps=max_steps), attempt
        except ValueError:
            attempt += 1


def run_splice(p: dict, rng: RngStream, workers: int) -> ExperimentResult:
    res = ExperimentResult("splice")
    schedule = BlockSchedule(p["coin_l_max"])
    pieces, total, i, redraws = [], 0, 0, 0
    while total < p["coin_steps"]:
        w1, a1 = _bounded_walk(rng.child("coin", i, 1), schedule.total, p["max_walk_steps"])
        w2, a2 = _bounded_walk(rng.child("coin", i, 2), schedule.total, p["max_walk_steps"])
        redraws += a1 + a2
        sp = splice_walks(w1, w2, schedule)
        pieces.append(sp.steps)
        total += sp.length
        i += 1
    if pieces:
        steps = np.concatenate(pieces)[: p["coin_steps"]]
        res.diagnostics.update({"coin-splices": i, "coin-redraws": redraws})
        for rep in fair_coin_tests(steps, p["level"], rng.child("coin").label()):
            res.add_test(f"spliced steps {rep.kind}", rep)

    ident = BlockSchedule(p["identity_l_max"])
    w, _ = _bounded_walk(rng.child("identity"), ident.total, p["max_walk_steps"])
    same = splice_walks(w, w, ident)
    ok = np.array_equal(same.steps, w.steps[: same.length]) and same.length == w.length
    res.check("identity splice reproduces the walk", ok)
    zero = coupling.splice_coupling_report(ident.l_max, p["K"], 2, rng.child("identity-table"),
                                           identical=True)
    res.check("identity splice has zero error",
              all(not np.any(np.asarray(r.errors)) for r in zero.values()))
    returns = int(np.count_nonzero(np.cumsum(same.steps, dtype=np.int64) == 0))
    res.check("spliced walk returns to zero N times", returns == ident.total, returns, ident.total)

    if p["rate_reps"]:
        rep = coupling.splice_coupling_report(p["l_max"], p["K"], p["rate_reps"], rng.child("rate"))
        res.add_rate("splice return-time gap rate", rep["rho"], p["rho_rate_max"], hard=False)
        res.add_rate("splice local time vs walk 1", rep["local-vs-walk1"], None)
        res.add_rate("splice local time vs walk 2", rep["local-vs-walk2"], None)
        res.add_rate("splice local time at zero vs walk 1", rep["zero-vs-walk1"], p["zero_rate_max"],
                     hard=False)
    return res


# ---------------------------------------------------------------- audits


def run_audits(p: dict, rng: RngStream, workers: int) -> ExperimentResult:
    res = ExperimentResult("audits")
    conf = p["confidence"]
    if p["rho_reps"]:
        for N in p["rho_N"]:
            u = [float(v) for v in p["rho_u"]]
            cap = int(math.ceil(max(u) * N * N))
            x = _kernels.return_time_censored(kernel_seed(rng.child("rho", N)), int(N), cap, p["rho_reps"])
            res.add_audit(f"return-time tail N={N}", audit_rho_tail(x, N, u, cap, conf))
        # the bound fails exactly for N = 1 and 1 < u <= 2, where rho_1 >= 2 surely
        exact = float(rho_sf_exact(1, 0))
        res.diagnostics["return-time bound, N=1, u=2"] = {"exact": exact, "bound": 2 ** -0.5}
        res.check("return-time bound at N=1, u=2 (exact)", exact <= 2 ** -0.5, exact, 2 ** -0.5,
                  hard=False, detail="exact counterexample, reported only")
    if p["nu_reps"]:
        N = p["nu_N"]
        _, ups, _ = compressed_counts(rng.child("nu"), (0, 0), N, False, p["nu_reps"])
        res.add_audit(f"upward-count tail N={N}", audit_binomial_tail(ups[:, 0], N, p["nu_u"], conf))
    if p["usum_reps"]:
        n = p["usum_n"]
        gen = rng.child("usum").generator()
        m = np.empty(p["usum_reps"])
        for b, s, c in batches(p["usum_reps"], 10000):
            T = gen.geometric(0.5, size=(c, n))
            m[s:s + c] = np.abs(np.cumsum(T - 2, axis=1)).max(axis=1)
        res.add_audit(f"centered-sum tail n={n}", audit_usum_tail(m, n, p["usum_z"], conf))
    if p["level_reps"]:
        K = p["level_K"]
        maxima = {}
        for N in p["level_N"]:
            visits, _, _ = compressed_counts(rng.child("level-max", N), (0, K + 1), N, True, p["level_reps"])
            maxima[int(N)] = visits[:, 1:K + 1].max(axis=1)
        res.add_audit(f"level-max tail K={K}", audit_level_max(maxima, K, conf))
    if p["sup_reps"]:
        K, t, alpha = p["sup_K"], p["sup_t"], p["sup_alpha"]
        for variant in ("fixed", "local-time"):
            x = gaussian.sample_sup_statistic(K, t, p["sup_reps"], rng.child("sup", variant),
                                              n_steps=p["sup_steps"], variant=variant)
            scale = math.sqrt(4 * K - 2) * (math.sqrt(t) if variant == "fixed" else t**0.25)
            grid = np.linspace(0.0, 5.0 * scale, 26)
            res.add_audit(f"sup of G ({variant})",
                          gaussian.audit_sup_inequality(x, alpha, K, t, grid, variant,
                                                        rng=np.random.default_rng(0)))
    if p["inc_walk_reps"]:
        z = zero_increment_maxima(p["inc_walk_t"], p["inc_walk_a"], p["inc_walk_reps"], rng.child("inc-walk"))
        res.add_audit("walk local-time increments",
                      audit_increment_bounds(z, np.linspace(0, 5, 21), p["inc_C2"], p["inc_walk_x0"],
                                             np.random.default_rng(0), "walk-increments"))
    if p["inc_wiener_reps"]:
        w = gaussian.wiener_increment_maxima(p["inc_wiener_T"], p["inc_wiener_h"], p["inc_wiener_reps"],
                                             rng.child("inc-wiener"))
        res.add_audit("Wiener increments",
                      audit_increment_bounds(w, np.linspace(0, 6, 25), p["inc_C2"], p["inc_wiener_x0"],
                                             np.random.default_rng(0), "wiener-increments"))
    return res


# ---------------------------------------------------------------- LIL


def run_lil(p: dict, rng: RngStream, workers: int) -> ExperimentResult:
    res = ExperimentResult("lil")
    band = tuple(float(v) for v in p["band"])
    scan = lil_scan(p["n"], rng.child("walk"), p["levels"], p["n_min"], p["k_c"],
                    p["k_exp_rho"], p["k_exp_n"])
    consts = (LIL_C1, LIL_C2, LIL_C2, LIL_C1)
    names = ("n^{1/4} form, level k", "local-time form, level k",
             "return-time form, K(N) levels", "n^{1/4} form, K(n) levels")
    for j, (name, c) in enumerate(zip(names, consts)):
        col = scan.series[:, j]
        rep = lil_tracker(scan.checkpoints, col, c, band, name)
        d = rep.to_dict()
        d["final_sup"] = float(scan.sups[j])
        d["sup_ratio"] = float(scan.sups[j] / c)
        d["statistic"] = LIL_STATISTICS[j]
        res.diagnostics[name] = d
        inside = band[0] <= scan.sups[j] / c <= band[1]
        res.check(f"LIL {name}", inside, scan.sups[j] / c, band[1], hard=False,
                  detail="running sup over constant; diagnostic")
    t = np.geomspace(10.0, p["g_t_max"], p["g_points"])
    g = gaussian.g_lil_series(p["g_K"], t, rng.child("G"))
    rep = lil_tracker(t, g, LIL_C2, band, "Gaussian limit process")
    res.diagnostics["Gaussian limit process"] = rep.to_dict()
    res.check("LIL Gaussian limit process", rep.inside, rep.running_sup[-1] / LIL_C2, band[1], hard=False,
              detail="diagnostic")
    return res


# ---------------------------------------------------------------- registry

_GRID_10_22 = [2**i for i in range(10, 23)]
_GRID_8_16 = [2**i for i in range(8, 17)]

DEFAULTS = {
    "identities": {"N": 100, "k_max": 10, "reps": 10000, "convention": "started", "batch": 500},
    "laws": {"t_paths": 1000, "t_N": 100, "t_levels": 10, "t_bins": 12, "gw_N": 20, "gw_k": 3,
             "gw_reps": 100000, "fe_levels": [1, 2, 5], "fe_reps": 1000000, "fe_rel_tol": 0.05,
             "fe_min_hits": 1000, "level": 0.001, "batch_paths": 100, "batch_reps": 50000},
    "limits": {"n": 1000000, "reps": 10000, "k_a1": 1, "k_a2": 2, "ks_a1": 0.02, "ks_a2": 0.02,
               "batch": 250},
    "sheet": {"probe_reps": 100000, "k_max": 5, "times": [0.25, 0.5, 1.0, 2.0], "sheet_k": 4,
              "sheet_times": [0.25, 0.5, 1.0, 2.0], "lt_reps": 100000, "lt_k": 2, "lt_t": 1.0,
              "lt_ks": 0.01, "n_se": 3.0},
    "couple-eta": {"exit_reps": 1000000, "laplace_s": [0.25, 0.5, 1.0], "n_se": 3.0,
                   "eta_samples": 100000, "eta_ks": 0.01, "n_grid": _GRID_10_22, "rate_reps": 100,
                   "rate_max": 0.35, "tau_n": 1000000, "tau_runs": 100, "tau_quantile": 0.99,
                   "coin_steps": 1000000, "level": 0.001, "exit_sum_n": 100,
                   "exit_sum_u": [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0], "exit_sum_reps": 20000,
                   "exp_sum_n": 100, "exp_sum_u": [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0],
                   "exp_sum_reps": 20000, "batch": 10},
    "couple-sheet": {"N_grid": _GRID_8_16, "K": 3, "rate_reps": 100, "rate_max": 0.40, "n_se": 3.0,
                     "embed_levels": 3, "embed_grid": _GRID_8_16, "embed_reps": 20,
                     "embed_max": 0.35, "deform_max": 0.6, "batch": 10},
    "splice": {"l_max": 16, "K": 3, "rate_reps": 20, "rho_rate_max": 1.75, "zero_rate_max": 0.5,
               "coin_steps": 1000000,
               "coin_l_max": 8, "identity_l_max": 6, "max_walk_steps": 2**27, "level": 0.001},
    "audits": {"rho_N": [1, 10], "rho_u": [1.0, 4.0, 9.0, 25.0, 100.0], "rho_reps": 100000,
               "nu_N": 100, "nu_u": [0, 5, 10, 15, 20, 25, 30, 35, 40], "nu_reps": 100000,
               "usum_n": 100, "usum_z": [5, 10, 20, 30, 40, 50, 60], "usum_reps": 100000,
               "level_K": 3, "level_N": [10, 20, 40, 80], "level_reps": 20000,
               "sup_K": 3, "sup_t": 1.0, "sup_alpha": 1.5, "sup_reps": 10000, "sup_steps": 1000,
               "inc_walk_t": 65536, "inc_walk_a": 256, "inc_walk_reps": 2000, "inc_walk_x0": 2.0,
               "inc_wiener_T": 16.0, "inc_wiener_h": 1.0, "inc_wiener_reps": 4000,
               "inc_wiener_x0": 3.0, "inc_C2": 0.4, "confidence": 0.99},
    "lil": {"n": 100000000, "n_min": 10000, "levels": 64, "k_c": 1, "k_exp_rho": 0.2,
            "k_exp_n": 0.15, "band": [0.3, 1.3], "g_K": 3, "g_t_max": 1e8, "g_points": 400},
}

RUNNERS = {
    "identities": run_identities, "laws": run_laws, "limits": run_limits, "sheet": run_sheet,
    "couple-eta": run_couple_eta, "couple-sheet": run_couple_sheet, "splice": run_splice,
    "audits": run_audits, "lil": run_lil,
}

EXPERIMENTS = tuple(RUNNERS)


def defaults_for(experiment: str) -> dict:
    from .config import ConfigError

    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    return dict(DEFAULTS[experiment])


def run_experiment(experiment: str, params: dict, seed: int, workers: int = 1) -> ExperimentResult:
    p = defaults_for(experiment)
    p.update(params)
    rng = RngStream(int(seed), (experiment,))
    res = RUNNERS[experiment](p, rng, workers)
    res.streams.insert(0, rng.label())
    return res
