"""Goodness-of-fit tests, target laws, tail-inequality audits, rate fits
and the law-of-the-iterated-logarithm tracker."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from math import comb

import numpy as np
from scipy import integrate, interpolate, special, stats

# ---------------------------------------------------------------- samples


@dataclass(frozen=True)
class EmpiricalDistribution:
    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return int(self.values.size)

    def ecdf(self, x):
        """Right-continuous ECDF, #{v <= x} / n."""
        return np.searchsorted(self.values, x, side="right") / self.count

    def survival(self, u, strict: bool = True):
        """Fraction of samples > u (``strict``) or >= u."""
        side = "right" if strict else "left"
        return 1.0 - np.searchsorted(self.values, u, side=side) / self.count


def _as_empirical(samples) -> EmpiricalDistribution:
    if isinstance(samples, EmpiricalDistribution):
        return samples
    return EmpiricalDistribution(np.asarray(samples))


# ---------------------------------------------------------------- laws


class TargetLaw:
    name = "law"
    discrete = False

    def cdf(self, x):
        raise NotImplementedError


class StandardNormal(TargetLaw):
    name = "standard-normal"

    def cdf(self, x):
        return special.ndtr(x)


class HalfNormal(TargetLaw):
    name = "half-normal"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, special.erf(np.maximum(x, 0) / math.sqrt(2)), 0.0)


class Exponential(TargetLaw):
    name = "exponential"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-np.maximum(x, 0)), 0.0)


class GeometricHalf(TargetLaw):
    """P(j) = 2^-j on j = 1, 2, ..."""

    name = "geometric-half"
    discrete = True

    def pmf(self, j):
        j = np.asarray(j)
        return np.where(j >= 1, np.ldexp(1.0, -np.maximum(j, 1).astype(int)), 0.0)

    def cdf(self, x):
        x = np.floor(np.asarray(x, dtype=float))
        return np.where(x >= 1, 1.0 - np.exp2(-np.maximum(x, 0)), 0.0)


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _product_integrand(theta: float, x: float) -> float:
    v = math.tan(theta)
    if v <= 0.0:
        return 0.0
    c = math.cos(theta)
    phi2 = 2.0 * _INV_SQRT_2PI * math.exp(-0.5 * v * v)
    return phi2 * 0.5 * math.erfc(-x / math.sqrt(2.0 * v)) / (c * c)


def cdf_product_law(x: float) -> float:
    """P(U |V|^{1/2} <= x) for independent standard normals U, V, as
    int_0^inf 2 phi(v) Phi(x / sqrt v) dv with v = tan(theta)."""
    x = float(x)
    if x == 0.0:
        return 0.5
    # split where the integrand has most of its mass to help the adaptive rule
    pts = [math.atan(0.05), math.atan(1.0)]
    val, _ = integrate.quad(_product_integrand, 0.0, math.pi / 2, args=(x,),
                            points=pts, epsabs=1e-13, epsrel=1e-12, limit=500)
    return min(1.0, max(0.0, val))


class TabulatedCDF(TargetLaw):
    """Monotone interpolation of a CDF known on a grid; 0 / 1 beyond it."""

    name = "tabulated"

    def __init__(self, x, F, name: str | None = None):
        self.x = np.asarray(x, dtype=float)
        self.F = np.asarray(F, dtype=float)
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.F) < 0):
            raise ValueError("table must be increasing in x and nondecreasing in F")
        self._interp = interpolate.PchipInterpolator(self.x, self.F, extrapolate=False)
        if name:
            self.name = name

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = self._interp(np.clip(x, self.x[0], self.x[-1]))
        out = np.where(x < self.x[0], 0.0, out)
        out = np.where(x > self.x[-1], 1.0, out)
        return np.clip(out, 0.0, 1.0)


class ProductLaw(TargetLaw):
    """Law of U |V|^{1/2}.  Scalar values come from quadrature; arrays use a
    symmetric table built from the quadrature (interpolation error < 1e-9)."""

    name = "product-law"
    _table: TabulatedCDF | None = None

    @classmethod
    def table(cls) -> TabulatedCDF:
        if cls._table is None:
            pos = np.concatenate([np.linspace(0.0, 2.0, 801)[1:], np.linspace(2.0, 12.0, 1001)[1:]])
            Fp = np.array([cdf_product_law(x) for x in pos])
            xs = np.concatenate([-pos[::-1], [0.0], pos])
            Fs = np.concatenate([1.0 - Fp[::-1], [0.5], Fp])
            cls._table = TabulatedCDF(xs, Fs, name="product-law")
        return cls._table

    def cdf(self, x):
        if np.ndim(x) == 0:
            return cdf_product_law(float(x))
        return self.table().cdf(x)


LAWS = {law.name: law for law in (StandardNormal(), HalfNormal(), Exponential(),
                                  GeometricHalf(), ProductLaw())}

# ---------------------------------------------------------------- tests


@dataclass
class TestReport:
    kind: str
    statistic: float
    threshold: float
    passed: bool
    sample_size: int
    seed: str | int | None = None
    p_value: float | None = None
    label: str = ""

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def ks_test(samples, law: TargetLaw, threshold: float, seed=None, label: str = "") -> TestReport:
    """Kolmogorov-Smirnov distance between the ECDF and a continuous law;
    passes iff the distance is at most ``threshold``."""
    if law.discrete:
        raise ValueError("KS needs a continuous law; use chi_square_test for discrete laws")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise ValueError("KS test needs at least 100 samples")
    res = stats.kstest(x, law.cdf)
    d = float(res.statistic)
    return TestReport("ks", d, float(threshold), d <= threshold, int(x.size), seed,
                      float(res.pvalue), label)


def merge_bins(expected: np.ndarray, min_expected: float = 5.0) -> list[np.ndarray]:
    """Group consecutive bins so that every group expects at least
    ``min_expected``, scanning from the left; a short remainder at the
    right end joins the last group."""
    expected = np.asarray(expected, dtype=float)
    groups: list[list[int]] = []
    cur: list[int] = []
    acc = 0.0
    for i, e in enumerate(expected):
        cur.append(i)
        acc += e
        if acc >= min_expected:
            groups.append(cur)
            cur, acc = [], 0.0
    if cur:
        if not groups:
            groups.append(cur)
        else:
            groups[-1].extend(cur)
    return [np.array(g) for g in groups]


def chi_square_test(samples, pmf, support=None, level: float = 0.001,
                    min_expected: float = 5.0, seed=None, label: str = "") -> TestReport:
    """Pearson goodness of fit of integer samples against ``pmf``.

    ``pmf`` is a TargetLaw with a pmf, a callable, or an array of
    probabilities on ``support``.  ``support`` lists the bins; its last
    entry collects everything at or above it, its first everything at or
    below it.  Bins are merged until each expects ``min_expected``.
    """
    x = np.asarray(samples).ravel()
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    if support is None:
        lo, hi = int(x.min()), int(x.max())
        support = np.arange(lo, hi + 1)
    support = np.asarray(support)
    if isinstance(pmf, TargetLaw):
        pmf = pmf.pmf
    if callable(pmf):
        p = np.asarray([float(pmf(int(j))) for j in support], dtype=float)
    else:
        p = np.asarray(pmf, dtype=float)
    if p.size != support.size:
        raise ValueError("pmf and support differ in length")
    # fold mass outside the support into the end bins
    p = p.copy()
    rest = 1.0 - p.sum()
    p[-1] += max(rest, 0.0)
    xi = np.clip(x, support[0], support[-1])
    idx = np.searchsorted(support, xi)
    if np.any(support[np.minimum(idx, support.size - 1)] != xi):
        raise ValueError("samples fall between support points")
    observed = np.bincount(idx, minlength=support.size).astype(float)
    groups = merge_bins(n * p, min_expected)
    if len(groups) < 2:
        raise ValueError("degenerate binning: fewer than two bins after merging")
    obs = np.array([observed[g].sum() for g in groups])
    exp = np.array([n * p[g].sum() for g in groups])
    stat = float(((obs - exp) ** 2 / exp).sum())
    pval = float(stats.chi2.sf(stat, len(groups) - 1))
    return TestReport("chi2", stat, float(level), pval >= level, int(n), seed, pval, label)


def chi_square_two_sample(a, b, level: float = 0.001, min_expected: float = 5.0,
                          seed=None, label: str = "") -> TestReport:
    """Homogeneity of two integer samples (2 x B contingency table with
    bins merged until each pooled cell expects ``min_expected``)."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    lo = int(min(a.min(), b.min()))
    hi = int(max(a.max(), b.max()))
    ca = np.bincount(a - lo, minlength=hi - lo + 1).astype(float)
    cb = np.bincount(b - lo, minlength=hi - lo + 1).astype(float)
    pooled = ca + cb
    frac = min(a.size, b.size) / (a.size + b.size)
    groups = merge_bins(pooled * frac, min_expected)
    table = np.array([[ca[g].sum() for g in groups], [cb[g].sum() for g in groups]])
    if table.shape[1] < 2:
        raise ValueError("degenerate binning: fewer than two bins after merging")
    stat, pval, dof, _ = stats.chi2_contingency(table, correction=False)
    return TestReport("chi2-two-sample", float(stat), float(level), pval >= level,
                      int(a.size + b.size), seed, float(pval), label)


def fair_coin_tests(steps, level: float = 0.001, seed=None) -> list[TestReport]:
    """Chi-square tests that +-1 steps are fair and lag-1 independent."""
    s = np.asarray(steps).ravel() > 0
    n = s.size
    ups = int(s.sum())
    obs = np.array([n - ups, ups], dtype=float)
    stat = float(((obs - n / 2) ** 2 / (n / 2)).sum())
    p1 = float(stats.chi2.sf(stat, 1))
    pairs = 2 * s[:-1].astype(int) + s[1:].astype(int)
    table = np.bincount(pairs, minlength=4).reshape(2, 2).astype(float)
    stat2, p2, _, _ = stats.chi2_contingency(table, correction=False)
    return [TestReport("chi2-fair-coin", stat, level, p1 >= level, n, seed, p1),
            TestReport("chi2-lag1", float(stat2), level, p2 >= level, n - 1, seed, float(p2))]


# ---------------------------------------------------------------- audits


@dataclass
class AuditRow:
    u: float
    empirical: float
    bound: float
    ci: float
    violated: bool
    tight: bool = False
    lower: float = 0.0
    hits: int = 0
    n: int = 0


def clopper_pearson(hits: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    a = 1.0 - confidence
    lo = 0.0 if hits == 0 else float(stats.beta.ppf(a / 2, hits, n - hits + 1))
    hi = 1.0 if hits == n else float(stats.beta.ppf(1 - a / 2, hits + 1, n - hits))
    return lo, hi


@dataclass
class TailAudit:
    """Rows (u, empirical survival, bound, CI half-width, violated, tight).

    A row is violated when even the lower end of the 99% Clopper-Pearson
    interval exceeds the bound.  Rows where the bound is attained exactly
    are flagged tight and kept out of the violation count.
    """

    name: str
    rows: list = field(default_factory=list)
    confidence: float = 0.99
    notes: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return sum(r.violated and not r.tight for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dicts(self) -> list[dict]:
        return [asdict(r) for r in self.rows]

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "confidence": self.confidence,
                           "rows": self.to_dicts(), "notes": self.notes})


def audit_events(name: str, events: np.ndarray, u_grid, bounds, tight=None,
                 confidence: float = 0.99) -> TailAudit:
    """Audit from a boolean matrix ``events[i, j]`` = event j seen in
    sample i, against ``bounds[j]``."""
    events = np.asarray(events, dtype=bool)
    n = events.shape[0]
    tight = np.zeros(len(u_grid), dtype=bool) if tight is None else np.asarray(tight)
    audit = TailAudit(name, confidence=confidence)
    for j, u in enumerate(u_grid):
        hits = int(events[:, j].sum()) if n else 0
        emp = hits / n if n else 0.0
        lo, hi = clopper_pearson(hits, n, confidence) if n else (0.0, 1.0)
        b = float(bounds[j])
        audit.rows.append(AuditRow(float(u), emp, b, max(emp - lo, hi - emp),
                                   bool(lo > b), bool(tight[j]), lo, hits, n))
    return audit


def rho_sf_exact(N: int, n: int) -> Fraction:
    """P(rho_N > 2n) = 2^-2n sum_{j<N} 2^j C(2n - j, n)."""
    if n <= 0:
        return Fraction(1)
    total = sum((1 << j) * comb(2 * n - j, n) for j in range(min(N, n + 1)))
    return Fraction(total, 1 << (2 * n))


def audit_rho_tail(samples, N: int, u_grid, cap: int | None = None,
                   confidence: float = 0.99) -> TailAudit:
    """P(rho_N >= u N^2) <= u^{-1/2} for u >= 1.

    ``samples`` may be censored at ``cap``: a value of cap + 1 stands for
    "later than cap", which decides the event only while u N^2 <= cap + 1.
    """
    x = np.asarray(samples, dtype=np.int64)
    u_grid = [float(u) for u in u_grid]
    if any(u < 1 for u in u_grid):
        raise ValueError("u must be >= 1")
    if cap is not None and any(u * N * N > cap + 1 for u in u_grid):
        raise ValueError("u N^2 beyond the censoring cap")
    thresh = np.array([u * N * N for u in u_grid])
    events = x[:, None] >= thresh[None, :]
    bounds = [1.0 / math.sqrt(u) for u in u_grid]
    tight = []
    for u, b in zip(u_grid, bounds):
        # rho_N is even: P(rho_N >= x) = P(rho_N > 2n) with 2n the largest even < x
        m = math.ceil(u * N * N)
        n = (m - 1) // 2 if m % 2 else (m - 2) // 2
        exact = float(rho_sf_exact(N, n)) if m > 2 * N - 1 else 1.0
        tight.append(abs(exact - b) <= 1e-12)
    audit = audit_events(f"rho-tail N={N}", events, u_grid, bounds, tight, confidence)
    return audit


def binomial_tail_exact(N: int, u: float) -> Fraction:
    """P(|2 nu_N - N| >= u) for nu_N ~ Binomial(N, 1/2)."""
    hits = sum(comb(N, j) for j in range(N + 1) if abs(2 * j - N) >= u)
    return Fraction(hits, 1 << N)


def audit_binomial_tail(samples, N: int, u_grid, confidence: float = 0.99) -> TailAudit:
    """P(|2 nu_N - N| >= u) <= 2 exp(-u^2 / (2N))."""
    x = np.abs(2 * np.asarray(samples, dtype=np.int64) - N)
    u = np.asarray(u_grid, dtype=float)
    events = x[:, None] >= u[None, :]
    bounds = [min(1.0, 2 * math.exp(-v * v / (2 * N))) if v > 0 else 1.0 for v in u]
    audit = audit_events(f"binomial-tail N={N}", events, u, bounds, None, confidence)
    audit.notes["exact"] = [float(binomial_tail_exact(N, v)) for v in u]
    return audit


def audit_usum_tail(max_abs_u, n: int, z_grid, confidence: float = 0.99) -> TailAudit:
    """P(max_{i<=n} |U(i)| > z) <= 2 exp(-z^2 / (8n))."""
    x = np.asarray(max_abs_u, dtype=float)
    z = np.asarray(z_grid, dtype=float)
    events = x[:, None] > z[None, :]
    bounds = [2 * math.exp(-v * v / (8 * n)) for v in z]
    return audit_events(f"centered-sum-tail n={n}", events, z, bounds, None, confidence)


def audit_level_max(maxima_by_N: dict, K: int, confidence: float = 0.99) -> TailAudit:
    """P(max_{k<=K} xi(k, rho_N^+) >= 5N) <= K exp(-N/(4K)); one row per N
    (the row's u is N)."""
    audit = TailAudit(f"level-max K={K}", confidence=confidence)
    for N, m in sorted(maxima_by_N.items()):
        m = np.asarray(m)
        sub = audit_events("", (m >= 5 * N)[:, None], [N], [K * math.exp(-N / (4 * K))],
                           None, confidence)
        audit.rows += sub.rows
    return audit


# ---------------------------------------------------------------- decay fits


@dataclass
class DecayFit:
    """log P(X > x) ~ log C + slope * x^power over the fitted rows."""

    slope: float
    ci_lo: float
    ci_hi: float
    log_c: float
    power: float
    x_used: list

    @property
    def C(self) -> float:
        return math.exp(self.log_c)


def fit_decay_slope(samples, x_grid, power: float = 2.0, min_hits: int = 20,
                    n_boot: int = 200, rng=None, confidence: float = 0.95) -> DecayFit:
    """Least-squares slope of log-survival against x^power, with a
    percentile bootstrap CI over resampled samples.  Rows with fewer than
    ``min_hits`` exceedances are dropped."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    grid = np.asarray(x_grid, dtype=float)

    def surv(sorted_x):
        return 1.0 - np.searchsorted(sorted_x, grid, side="right") / n

    s = surv(x)
    keep = s * n >= min_hits
    if keep.sum() < 3:
        raise ValueError("too few populated rows for a decay fit")
    g = grid[keep] ** power

    def fit(sv):
        return np.polyfit(g, np.log(sv[keep]), 1)

    slope, logc = fit(s)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    boots = []
    for _ in range(n_boot):
        xb = np.sort(x[gen.integers(0, n, n)])
        sb = surv(xb)
        if np.all(sb[keep] > 0):
            boots.append(fit(sb)[0])
    a = (1 - confidence) / 2
    lo, hi = (np.quantile(boots, [a, 1 - a]) if boots else (slope, slope))
    return DecayFit(float(slope), float(lo), float(hi), float(logc), power, grid[keep].tolist())


@dataclass
class DecayAudit:
    """Empirical log-survival against the shape of an exponential bound.

    ``passed`` holds when the whole CI of the fitted decay coefficient lies
    at or below the bound's coefficient (the tail falls at least as fast).
    """

    name: str
    u: list
    empirical: list
    shape: list
    fit: DecayFit
    bound_slope: float
    fitted_C: float
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.fit.ci_hi <= self.bound_slope

    def to_dict(self) -> dict:
        return {"name": self.name, "u": self.u, "empirical": self.empirical, "shape": self.shape,
                "slope": self.fit.slope, "ci_lo": self.fit.ci_lo, "ci_hi": self.fit.ci_hi,
                "bound_slope": self.bound_slope, "fitted_C": self.fitted_C,
                "passed": self.passed, "notes": self.notes}

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["u", "empirical", "bound"])
        for u, e, s in zip(self.u, self.empirical, self.shape):
            w.writerow([u, e, self.fitted_C * s])
        return out.getvalue()


def decay_audit(name: str, samples, u_grid, bound_slope: float, power: float,
                u0: float = 0.0, rng=None, min_hits: int = 20) -> DecayAudit:
    """Fit log P(X > u) ~ log C + slope u^power over u >= u0 and compare the
    slope with ``bound_slope`` (negative).  ``fitted_C`` is the least C for
    which C exp(bound_slope u^power) dominates every empirical row."""
    emp = EmpiricalDistribution(samples)
    u = np.asarray(u_grid, dtype=float)
    surv = emp.survival(u)
    shape = np.exp(bound_slope * u ** power)
    fit = fit_decay_slope(emp.values, u[u >= u0], power=power, min_hits=min_hits, rng=rng)
    ok = surv > 0
    C = float(np.max(surv[ok] / shape[ok])) if ok.any() else 0.0
    return DecayAudit(name, u.tolist(), surv.tolist(), shape.tolist(), fit, bound_slope, C)


def audit_increment_bounds(samples, x_grid, C2: float = 0.4, x0: float = 1.0,
                           rng=None, name: str = "increments") -> DecayAudit:
    """Decay of P(M >= x) for a normalized maximal increment M (of a Wiener
    path over windows of length h, scaled by sqrt(h), or of the walk's
    local time at zero over windows of length a, scaled by sqrt(a)) against
    the shape exp(-C2 x^2), C2 < 1/2.  Only the slope is asserted."""
    if not 0 < C2 < 0.5:
        raise ValueError("C2 must lie in (0, 1/2)")
    audit = decay_audit(name, samples, x_grid, -C2, 2.0, x0, rng)
    audit.notes.update({"C2": C2, "x0": x0})
    return audit


def sup_abs_wiener_sf(v: float, terms: int = 200) -> float:
    """P(sup_{s<=1} |W(s)| >= v) from the exit-time series of [-v, v]."""
    if v <= 0:
        return 1.0
    n = np.arange(terms)
    inside = 4 / math.pi * np.sum((-1.0) ** n / (2 * n + 1)
                                  * np.exp(-((2 * n + 1) ** 2) * math.pi**2 / (8 * v * v)))
    return float(min(1.0, max(0.0, 1.0 - inside)))


# ---------------------------------------------------------------- rates


@dataclass
class RateFit:
    exponent: float
    ci_lo: float
    ci_hi: float
    intercept: float
    points: int


def fit_rate_exponent(n_grid, errors, confidence: float = 0.95) -> RateFit:
    """Slope of log(median error) against log n with a t-based CI.

    ``errors`` is either one value per grid point or a (replications,
    points) array whose column medians are used.  Points with a zero
    median are dropped; at least three must remain.
    """
    n = np.asarray(n_grid, dtype=float)
    e = np.asarray(errors, dtype=float)
    med = np.median(e, axis=0) if e.ndim == 2 else e
    ok = (med > 0) & (n > 0)
    if ok.sum() < 3:
        raise ValueError("need at least three positive points for a rate fit")
    res = stats.linregress(np.log(n[ok]), np.log(med[ok]))
    t = stats.t.ppf(0.5 + confidence / 2, ok.sum() - 2)
    return RateFit(float(res.slope), float(res.slope - t * res.stderr),
                   float(res.slope + t * res.stderr), float(res.intercept), int(ok.sum()))


# ---------------------------------------------------------------- LIL


@dataclass
class LilReport:
    """Running supremum of statistic / constant; diagnostic only."""

    name: str
    n: np.ndarray
    running_sup: np.ndarray
    constant: float
    band: tuple
    inside: bool
    diagnostic: bool = True

    def to_dict(self) -> dict:
        return {"name": self.name, "constant": self.constant, "band": list(self.band),
                "inside": self.inside, "diagnostic": True,
                "final_ratio": float(self.running_sup[-1] / self.constant) if self.running_sup.size else 0.0,
                "n": self.n.tolist(), "running_sup": self.running_sup.tolist()}


def lil_tracker(n, statistic, constant: float, band=(0.3, 1.3), name: str = "") -> LilReport:
    """Running sup of ``statistic`` and whether sup / constant stays in
    ``band`` from the first point on.  A limsup cannot be observed on a
    finite path, so this is reported, never asserted."""
    n = np.asarray(n)
    if np.any(np.diff(n) <= 0):
        raise ValueError("series must be increasing in n")
    run = np.maximum.accumulate(np.asarray(statistic, dtype=float)) if n.size else np.empty(0)
    ratio = run / constant if constant else run
    inside = bool(np.all((ratio >= band[0]) & (ratio <= band[1]))) if n.size else True
    return LilReport(name, n, run, constant, tuple(band), inside)
