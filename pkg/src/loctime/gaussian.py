"""Wiener processes, the integer-level Wiener sheet, the limit process
G(k, t) = W(k, t) + W(k-1, t) - W*(t), Brownian local time at zero via the
running maximum, and the sup-tail audits for G."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .rng import as_generator
from .stats import DecayAudit, decay_audit


@dataclass(frozen=True)
class TimeGrid:
    """Points t_j = j dt, j = 0..n_steps, with n_steps dt = t_max."""

    t_max: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0 or not self.t_max > 0:
            raise ValueError("t_max and dt must be positive")
        steps = self.t_max / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("t_max must be a whole number of steps dt")
        if round(steps) >= 2**62:
            raise ValueError("too many grid points")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def points(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def index(self, t) -> np.ndarray:
        """Index of the last grid point <= t."""
        return np.floor(np.asarray(t) / self.dt + 1e-9).astype(np.int64)


@dataclass(frozen=True)
class WienerPath:
    grid: TimeGrid
    values: np.ndarray

    def at(self, t):
        return self.values[..., self.grid.index(t)]


def _paths(grid: TimeGrid, gen: np.random.Generator, shape: tuple) -> np.ndarray:
    out = np.zeros(shape + (grid.n_steps + 1,))
    inc = gen.standard_normal(shape + (grid.n_steps,))
    inc *= math.sqrt(grid.dt)
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    return out


def sample_wiener(grid: TimeGrid, rng, size: int | None = None) -> WienerPath:
    """Cumulative sums of independent N(0, dt) increments.  With ``size``,
    ``values`` has shape (size, n_steps + 1)."""
    gen = as_generator(rng)
    shape = () if size is None else (int(size),)
    return WienerPath(grid, _paths(grid, gen, shape))


@dataclass(frozen=True)
class WienerSheetLattice:
    """W(k, t_j) = sum_{i<=k} W_i(t_j), k = 0..k_max; ``values[..., k, j]``."""

    k_max: int
    grid: TimeGrid
    values: np.ndarray

    def level(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.k_max:
            raise ValueError(f"level {k} outside 0..{self.k_max}")
        return self.values[..., k, :]


def build_sheet(k_max: int, grid: TimeGrid, rng, size: int | None = None) -> WienerSheetLattice:
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    gen = as_generator(rng)
    shape = () if size is None else (int(size),)
    w = _paths(grid, gen, shape + (k_max,))
    vals = np.zeros(shape + (k_max + 1, grid.n_steps + 1))
    np.cumsum(w, axis=-2, out=vals[..., 1:, :])
    return WienerSheetLattice(k_max, grid, vals)


@dataclass(frozen=True)
class GProcess:
    k: int
    grid: TimeGrid
    values: np.ndarray


def g_process(sheet: WienerSheetLattice, wstar: WienerPath, k: int) -> GProcess:
    """G(k, t_j) = W(k, t_j) + W(k-1, t_j) - W*(t_j); ``wstar`` must be
    independent of the sheet."""
    if not 1 <= k <= sheet.k_max:
        raise ValueError(f"level {k} outside 1..{sheet.k_max}")
    if wstar.grid != sheet.grid:
        raise ValueError("sheet and W* live on different grids")
    vals = sheet.level(k) + sheet.level(k - 1) - wstar.values
    return GProcess(k, sheet.grid, vals)


def g_covariance(k: int, s: float, l: int, t: float) -> float:
    """E G(k,s) G(l,t) = (s ^ t)(4 (k ^ l) - 1{k = l} - 1)."""
    if k < 1 or l < 1:
        raise ValueError("levels must be >= 1")
    return min(s, t) * (4 * min(k, l) - (1 if k == l else 0) - 1)


@dataclass(frozen=True)
class BrownianLocalTimeZero:
    grid: TimeGrid
    values: np.ndarray


def sample_eta0(grid: TimeGrid, rng, size: int | None = None) -> BrownianLocalTimeZero:
    """Running maximum of a fresh Wiener path at the grid points.

    The maximum inside each grid cell is drawn from the exact law of a
    Brownian bridge maximum, so every value has exactly the law of
    sup_{s<=t_j} W(s) and hence of eta(0, t_j); no discretization bias.
    """
    gen = as_generator(rng)
    shape = () if size is None else (int(size),)
    w = _paths(grid, gen, shape)
    a, b = w[..., :-1], w[..., 1:]
    e = gen.standard_exponential(a.shape)
    cell_max = 0.5 * (a + b + np.sqrt((b - a) ** 2 + 2.0 * grid.dt * e))
    out = np.zeros_like(w)
    np.maximum.accumulate(np.maximum(cell_max, 0.0), axis=-1, out=out[..., 1:])
    return BrownianLocalTimeZero(grid, out)


# ---------------------------------------------------------------- probes


@dataclass
class CovarianceProbe:
    k: int
    s: float
    l: int
    t: float
    empirical: float
    se: float
    target: float

    @property
    def z(self) -> float:
        return (self.empirical - self.target) / self.se if self.se > 0 else 0.0

    def within(self, n_se: float = 3.0) -> bool:
        return abs(self.empirical - self.target) <= n_se * self.se


def _probe_table(vals: np.ndarray, labels: list, target) -> list[CovarianceProbe]:
    """Empirical E X_a X_b with its standard error over rows of ``vals``
    (shape (reps, m)); one probe per unordered pair a <= b."""
    reps = vals.shape[0]
    out = []
    for a in range(len(labels)):
        for b in range(a, len(labels)):
            prod = vals[:, a] * vals[:, b]
            mean = float(prod.mean())
            se = float(prod.std(ddof=1) / math.sqrt(reps))
            (k, s), (l, t) = labels[a], labels[b]
            out.append(CovarianceProbe(k, s, l, t, mean, se, target(k, s, l, t)))
    return out


def g_covariance_probes(reps: int, k_max: int, times, rng, chunk: int = 20000) -> list[CovarianceProbe]:
    """E G(k,s) G(l,t) for k, l <= k_max and s, t in ``times`` from ``reps``
    independent (sheet, W*) samples.  The grid is the sorted probe times,
    so the values are exact in law."""
    times = sorted(float(t) for t in times)
    gen = as_generator(rng)
    vals = _sample_g_at(reps, k_max, times, gen, chunk)
    labels = [(k, s) for k in range(1, k_max + 1) for s in times]
    return _probe_table(vals, labels, g_covariance)


def sheet_covariance_probes(reps: int, k_max: int, times, rng, chunk: int = 20000) -> list[CovarianceProbe]:
    """E W(k,s) W(l,t) = (k ^ l)(s ^ t) probes."""
    times = sorted(float(t) for t in times)
    gen = as_generator(rng)
    parts = []
    for start in range(0, reps, chunk):
        m = min(chunk, reps - start)
        W = _sheet_at(m, k_max, times, gen)  # (m, k_max + 1, len(times))
        parts.append(W[:, 1:, :].reshape(m, -1))
    vals = np.concatenate(parts) if parts else np.zeros((0, k_max * len(times)))
    labels = [(k, s) for k in range(1, k_max + 1) for s in times]
    return _probe_table(vals, labels, lambda k, s, l, t: min(k, l) * min(s, t))


def _sheet_at(m: int, k_max: int, times: list, gen) -> np.ndarray:
    dt = np.diff([0.0] + times)
    inc = gen.standard_normal((m, k_max, len(times))) * np.sqrt(dt)
    W = np.zeros((m, k_max + 1, len(times)))
    W[:, 1:, :] = np.cumsum(np.cumsum(inc, axis=2), axis=1)
    return W


def _sample_g_at(reps: int, k_max: int, times: list, gen, chunk: int) -> np.ndarray:
    parts = []
    dt = np.sqrt(np.diff([0.0] + times))
    for start in range(0, reps, chunk):
        m = min(chunk, reps - start)
        W = _sheet_at(m, k_max, times, gen)
        wstar = np.cumsum(gen.standard_normal((m, len(times))) * dt, axis=1)
        G = W[:, 1:, :] + W[:, :-1, :] - wstar[:, None, :]
        parts.append(G.reshape(m, -1))
    return np.concatenate(parts) if parts else np.zeros((0, k_max * len(times)))


def g_at_local_time(k: int, t: float, reps: int, rng, eta_steps: int = 64) -> np.ndarray:
    """Samples of G(k, eta(0,t)) / ((4k-2)^{1/2} t^{1/4}) with eta(0,.) from
    ``sample_eta0`` independent of G.  Given eta, G(k, eta) is read off
    independent Wiener paths at that time, exactly."""
    gen = as_generator(rng)
    eta = sample_eta0(TimeGrid(t, t / eta_steps), gen, size=reps).values[:, -1]
    # W(k,.) + W(k-1,.) - W*(.) = 2 sum_{i<k} W_i + W_k - W*, all independent
    z = gen.standard_normal((reps, k + 1))
    root = np.sqrt(eta)
    g = root * (2.0 * z[:, : k - 1].sum(axis=1) + z[:, k - 1] - z[:, k])
    return g / (math.sqrt(4 * k - 2) * t ** 0.25)


# ---------------------------------------------------------------- sup audits


def sup_statistic(G: np.ndarray, upto=None) -> np.ndarray:
    """max_k sup_j |G[..., k, j]| for G of shape (reps, K, n_points), over
    j <= ``upto`` (per replication) if given."""
    a = np.abs(G).max(axis=1)
    if upto is None:
        return a.max(axis=-1)
    run = np.maximum.accumulate(a, axis=-1)
    return run[np.arange(run.shape[0]), np.asarray(upto)]


def sample_sup_statistic(K: int, t: float, reps: int, rng, n_steps: int = 1000,
                         variant: str = "fixed", chunk: int = 2000,
                         coarse: bool = False) -> np.ndarray:
    """Samples of max_{k<=K} sup_{s<=T} |G(k,s)| with T = t (``"fixed"``) or
    T = eta(0,t) independent of G (``"local-time"``); sup over grid points.
    With ``coarse`` the sup is also returned over every other grid point,
    as a discretization check."""
    gen = as_generator(rng)
    fine, rough = [], []
    for start in range(0, reps, chunk):
        m = min(chunk, reps - start)
        if variant == "fixed":
            T = np.full(m, float(t))
            horizon = float(t)
        elif variant == "local-time":
            T = sample_eta0(TimeGrid(t, t / 64), gen, size=m).values[:, -1]
            horizon = max(float(T.max()), 1e-12)
        else:
            raise ValueError(f"unknown variant {variant!r}")
        grid = TimeGrid(horizon, horizon / n_steps)
        sheet = build_sheet(K, grid, gen, size=m)
        wstar = _paths(grid, gen, (m,))
        G = sheet.values[:, 1:, :] + sheet.values[:, :-1, :] - wstar[:, None, :]
        upto = np.minimum(grid.index(T), grid.n_steps)
        fine.append(sup_statistic(G, upto))
        if coarse:
            rough.append(sup_statistic(G[..., ::2], upto // 2))
    f = np.concatenate(fine) if fine else np.empty(0)
    if coarse:
        return f, (np.concatenate(rough) if rough else np.empty(0))
    return f


def audit_sup_inequality(samples, alpha: float, K: int, t: float, u_grid,
                         variant: str = "fixed", u0: float | None = None, rng=None) -> DecayAudit:
    """Tail of max_{k<=K} sup_s |G(k,s)| against exp(-u^2/(2 alpha t (4K-2)))
    (``"fixed"``) or, for the sup up to eta(0,t), against
    exp(-3 u^{4/3} / (2^{5/3} alpha t^{1/3} (4K-2)^{2/3})) (``"local-time"``)."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    samples = np.asarray(samples, dtype=float)
    if samples.size < 100:
        raise ValueError("too few samples for a tail audit")
    u_grid = np.asarray(u_grid, dtype=float)
    if np.any(u_grid < 0):
        raise ValueError("u must be nonnegative")
    if variant == "fixed":
        slope = -1.0 / (2 * alpha * t * (4 * K - 2))
        power = 2.0
        scale = math.sqrt(t * (4 * K - 2))
    elif variant == "local-time":
        slope = -3.0 / (2 ** (5 / 3) * alpha * t ** (1 / 3) * (4 * K - 2) ** (2 / 3))
        power = 4.0 / 3.0
        scale = math.sqrt(4 * K - 2) * t ** 0.25
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if u0 is None:
        u0 = 2.0 * scale
    audit = decay_audit(f"sup-G {variant} K={K} t={t} alpha={alpha}", samples, u_grid,
                        slope, power, u0, rng)
    audit.notes.update({"alpha": alpha, "K": K, "t": t, "u0": u0, "variant": variant,
                        "samples": int(samples.size)})
    return audit


# ---------------------------------------------------------------- LIL side


def g_lil_series(K: int, t_grid, rng) -> np.ndarray:
    """max_{k<=K} |G(k,t)| / ((4K-2)^{1/2} (t loglog t)^{1/2}) along an
    increasing time grid (t > e), from exact independent increments."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= math.e) or np.any(np.diff(t) <= 0):
        raise ValueError("grid must be increasing with t > e")
    gen = as_generator(rng)
    dt = np.sqrt(np.diff(np.concatenate([[0.0], t])))
    W = np.cumsum(gen.standard_normal((K, t.size)) * dt, axis=1)
    sheet = np.vstack([np.zeros(t.size), np.cumsum(W, axis=0)])
    wstar = np.cumsum(gen.standard_normal(t.size) * dt)
    G = sheet[1:] + sheet[:-1] - wstar
    return np.abs(G).max(axis=0) / (math.sqrt(4 * K - 2) * np.sqrt(t * np.log(np.log(t))))


def wiener_increment_maxima(T: float, h: float, reps: int, rng, n_steps: int = 4096,
                            chunk: int = 500) -> np.ndarray:
    """sup_{0<=s<=T-h} sup_{0<=u<=h} |W(s+u) - W(s)| / sqrt(h) over the
    points of a grid with ``n_steps`` cells."""
    if not 0 < h <= T:
        raise ValueError("need 0 < h <= T")
    grid = TimeGrid(T, T / n_steps)
    w = max(1, int(round(h / grid.dt)))
    gen = as_generator(rng)
    out = []
    for start in range(0, reps, chunk):
        m = min(chunk, reps - start)
        W = _paths(grid, gen, (m,))
        # centred filters of size w+1, shifted so index s covers W[s..s+w]
        c = (w + 1) // 2
        last = grid.n_steps + 1 - w
        hi = maximum_filter1d(W, w + 1, axis=-1)[:, c:c + last]
        lo = minimum_filter1d(W, w + 1, axis=-1)[:, c:c + last]
        base = W[:, :last]
        out.append(np.maximum(hi - base, base - lo).max(axis=-1))
    return (np.concatenate(out) if out else np.empty(0)) / math.sqrt(h)
