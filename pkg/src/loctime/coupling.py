"""Couplings of random-walk local times with Gaussian objects.

* Skorokhod embedding of the walk in Brownian motion: i.i.d. exit times
  of [-1, 1] and exponential local-time marks at the returns to zero.
* A per-level Skorokhod (randomized two-point) embedding of the centered
  offspring sums U^(k)(j) into independent Wiener processes W_k.  Each
  Wiener process is carried by its integer-hit walk: the successive
  integers it visits together with i.i.d. exit-time gaps.  U^(k)(j) equals
  W_k at the j-th embedding stopping time exactly; W_k at a fixed time t is
  read off the last integer hit before t, within 1 of the true value.
* The sheet coupling assembled from those embeddings, and the rate
  reports of the large/small excursion splice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .excursions import BlockSchedule, splice_plan
from .ray_knight import CenteredSumSeries
from .rng import RngStream, as_generator, kernel_seed
from .stats import TailAudit, audit_events, fit_rate_exponent
from .walk import StepSequence, simulate_walk

# ---------------------------------------------------------------- exit times

_T_SPLIT = 0.64
_P_LEFT = 2.0 * math.erfc(1.0 / math.sqrt(2.0 * _T_SPLIT))
_P_RIGHT = 4.0 / math.pi * math.exp(-math.pi**2 * _T_SPLIT / 8.0)


def _series_term(n: int, x: np.ndarray) -> np.ndarray:
    """n-th term of the alternating series for the exit-time density; the
    small-x form is used below the split point, the large-x form above."""
    c = math.pi * (n + 0.5)
    out = np.empty_like(x)
    left = x <= _T_SPLIT
    xl = x[left]
    out[left] = c * (2.0 / (math.pi * xl)) ** 1.5 * np.exp(-2.0 * (n + 0.5) ** 2 / xl)
    out[~left] = c * np.exp(-((n + 0.5) ** 2) * math.pi**2 * x[~left] / 2.0)
    return out


def _left_proposals(gen: np.random.Generator, n: int) -> np.ndarray:
    # 1/sqrt(x) is a standard normal conditioned to exceed 1/sqrt(t):
    # exponential rejection for the normal tail
    out = np.empty(n)
    got = 0
    while got < n:
        m = int((n - got) * 1.5) + 8
        e1 = gen.standard_exponential(m)
        e2 = gen.standard_exponential(m)
        v = (_T_SPLIT / (1.0 + _T_SPLIT * e1) ** 2)[e1 * e1 <= 2.0 * e2 / _T_SPLIT]
        take = min(v.size, n - got)
        out[got:got + take] = v[:take]
        got += take
    return out


def sample_exit_time(rng, size: int | None = None):
    """Exact draws of the first exit time of standard Brownian motion from
    [-1, 1] (Laplace transform 1/cosh(sqrt(2s))).

    Proposals come from the first series term; acceptance is decided by
    the alternating partial sums, so no truncation error arises at all.
    """
    gen = as_generator(rng)
    want = 1 if size is None else int(size)
    out = np.empty(want)
    filled = 0
    while filled < want:
        m = int((want - filled) * 1.01) + 16
        left = gen.random(m) < _P_LEFT / (_P_LEFT + _P_RIGHT)
        x = np.empty(m)
        nl = int(left.sum())
        x[left] = _left_proposals(gen, nl)
        x[~left] = _T_SPLIT + 8.0 / math.pi**2 * gen.standard_exponential(m - nl)
        s = _series_term(0, x)
        y = gen.random(m) * s
        undecided = np.arange(m)
        accept = np.zeros(m, dtype=bool)
        n = 0
        while undecided.size:
            n += 1
            xs = x[undecided]
            if n % 2:
                s[undecided] -= _series_term(n, xs)
                done = y[undecided] <= s[undecided]
                accept[undecided[done]] = True
            else:
                s[undecided] += _series_term(n, xs)
                done = y[undecided] > s[undecided]
            undecided = undecided[~done]
        got = x[accept]
        take = min(got.size, want - filled)
        out[filled:filled + take] = got[:take]
        filled += take
    return float(out[0]) if size is None else out


def exit_time_laplace(s: float) -> float:
    return 1.0 / math.cosh(math.sqrt(2.0 * s))


# ---------------------------------------------------------------- walk embedding


@dataclass(frozen=True)
class EmbeddedWalk:
    """Walk steps and the embedding times tau_n (None when not drawn)."""

    steps: StepSequence
    tau: np.ndarray | None

    @property
    def length(self) -> int:
        return self.steps.length


@dataclass(frozen=True)
class EtaMarks:
    """One Exp(1) mark per return to zero, in order."""

    values: np.ndarray


def embed_walk(n: int, rng: RngStream, times: bool = True) -> tuple[EmbeddedWalk, EtaMarks]:
    """n fair steps, their embedding times tau_i (cumulative exit times)
    and one exponential mark per return to zero.

    Steps, exit times and marks come from three separate substreams, so
    the marks are independent of the step signs.  ``times=False`` skips
    the exit times (they do not enter the local-time error).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not isinstance(rng, RngStream):
        raise TypeError("embed_walk needs an RngStream for its substreams")
    steps = simulate_walk(n, rng.child("steps"))
    tau = np.cumsum(sample_exit_time(rng.child("exit"), n)) if times else None
    zeros = int(np.count_nonzero(np.cumsum(steps.steps, dtype=np.int64) == 0))
    marks = rng.child("marks").generator().standard_exponential(zeros)
    return EmbeddedWalk(steps, tau), EtaMarks(marks)


@dataclass
class CouplingReport:
    experiment: str
    n_grid: list
    errors: list
    normalization: str
    exponent: float
    ci_lo: float
    ci_hi: float
    seed: str | int | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_errors(cls, experiment: str, n_grid, errors, normalization: str = "raw",
                    seed=None, **extra) -> "CouplingReport":
        e = np.asarray(errors, dtype=float)
        fit = fit_rate_exponent(n_grid, e)
        return cls(experiment, [int(v) for v in n_grid], e.tolist(), normalization,
                   fit.exponent, fit.ci_lo, fit.ci_hi, seed, extra)

    @property
    def medians(self) -> list:
        e = np.asarray(self.errors, dtype=float)
        return (np.median(e, axis=0) if e.ndim == 2 else e).tolist()

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "n_grid": self.n_grid, "errors": self.errors,
                "normalization": self.normalization, "exponent": self.exponent,
                "ci_lo": self.ci_lo, "ci_hi": self.ci_hi, "seed": self.seed, **self.extra}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def eta_errors(walk: EmbeddedWalk, marks: EtaMarks, n_grid) -> np.ndarray:
    """|xi(0,n) - sum_{i<=xi(0,n)} eta_i| at each n of the grid."""
    n_grid = np.asarray(n_grid, dtype=np.int64)
    if n_grid.size and (n_grid.min() < 0 or n_grid.max() > walk.length):
        raise ValueError("grid outside the walk")
    zeros = np.cumsum(np.cumsum(walk.steps.steps, dtype=np.int64) == 0)
    xi0 = np.where(n_grid > 0, zeros[np.maximum(n_grid - 1, 0)], 0)
    csum = np.concatenate([[0.0], np.cumsum(marks.values)])
    return np.abs(xi0 - csum[xi0])


def coupling_error_eta(walk: EmbeddedWalk, marks: EtaMarks, n_grid, seed=None) -> CouplingReport:
    """Error e(n) = |xi(0,n) - sum_{i<=xi(0,n)} eta_i| on ``n_grid`` and its
    fitted log-log exponent (one walk; see ``eta_coupling_report`` for
    medians over replications)."""
    e = eta_errors(walk, marks, n_grid)
    return CouplingReport.from_errors("couple-eta", n_grid, e, "raw", seed)


def eta_coupling_report(n_grid, reps: int, rng: RngStream, times: bool = False) -> CouplingReport:
    n_grid = [int(v) for v in n_grid]
    rows = []
    for r in range(reps):
        walk, marks = embed_walk(max(n_grid), rng.child(r), times=times)
        rows.append(eta_errors(walk, marks, n_grid))
    return CouplingReport.from_errors("couple-eta", n_grid, np.array(rows), "raw",
                                      rng.label(), replications=reps)


# ---------------------------------------------------------------- level embeddings


@dataclass(frozen=True)
class HitWalk:
    """Integer-hit skeleton of a Wiener process: it sits at integer
    ``positions[m]`` from time ``times[m]`` until it first reaches a
    neighbour (``positions[0] = 0``, ``times[0] = 0``)."""

    positions: np.ndarray
    times: np.ndarray

    def value_at(self, t) -> np.ndarray:
        """Integer-hit proxy for W(t): the last integer hit by time t,
        within distance 1 of W(t)."""
        t = np.asarray(t, dtype=float)
        if np.any(t >= self.times[-1]):
            raise ValueError("time beyond the simulated horizon")
        return self.positions[np.searchsorted(self.times, t, side="right") - 1]


@dataclass(frozen=True)
class LevelEmbedding:
    """U^(k)(j) embedded as W_k(sigma_j): ``U.values[j-1]`` equals
    ``hits.positions[stop[j-1]]`` exactly and ``sigma[j-1]`` is the
    embedding time."""

    level: int
    T: np.ndarray
    U: CenteredSumSeries
    stop: np.ndarray
    sigma: np.ndarray
    hits: HitWalk

    def W(self, t) -> np.ndarray:
        return self.hits.value_at(t)

    def W_at_2j(self) -> np.ndarray:
        return self.W(2.0 * np.arange(1, self.U.values.size + 1))


def _extend_hits(steps: np.ndarray, gen, horizon: float, exit_rng) -> HitWalk:
    gaps = sample_exit_time(exit_rng, steps.size) if steps.size else np.empty(0)
    times = np.concatenate([[0.0], np.cumsum(gaps)])
    pos = np.concatenate([[0], np.cumsum(steps, dtype=np.int64)])
    # beyond the last stopping time the Wiener process is a fresh one, so
    # its integer-hit skeleton continues with fair steps and new gaps
    while times[-1] <= horizon:
        m = max(64, int(1.1 * (horizon - times[-1])) + 64)
        more = gen.integers(0, 2, m, dtype=np.int8) * 2 - 1
        pos = np.concatenate([pos, pos[-1] + np.cumsum(more, dtype=np.int64)])
        times = np.concatenate([times, times[-1] + np.cumsum(sample_exit_time(gen, m))])
    return HitWalk(pos, times)


def embed_level(level: int, j_max: int, rng: RngStream, horizon: float = 0.0) -> LevelEmbedding:
    """Skorokhod embedding of U^(level)(1..j_max); the hit walk is extended
    so W can be read at any time up to ``max(horizon, 2 j_max)``.

    The increments and hit positions for j <= j_max do not depend on
    j_max, so a larger j_max extends the same offspring sequence.
    """
    y, stop, steps = _kernels.embed_centered_geometric(kernel_seed(rng.child("stops")), int(j_max))
    gen = rng.child("extend").generator()
    hits = _extend_hits(steps, gen, max(horizon, 2.0 * j_max), rng.child("gaps"))
    T = y + 2
    U = CenteredSumSeries.from_T(level, T)
    sigma = hits.times[stop]
    return LevelEmbedding(level, T, U, stop, sigma, hits)


def embed_U_sums(k_max: int, j_max: int, rng: RngStream) -> list[LevelEmbedding]:
    """Independent embeddings for levels 1..k_max (one substream each)."""
    if k_max < 1 or j_max < 1:
        raise ValueError("k_max and j_max must be >= 1")
    return [embed_level(k, j_max, rng.child("level", k)) for k in range(1, k_max + 1)]


def embedding_error_report(k_max: int, j_grid, reps: int, rng: RngStream) -> dict:
    """Growth of max_{j<=J} |U^(k)(j) - W_k(2j)| and of max_{j<=J}
    |sigma_j - 2j| in J, medians over replications and levels."""
    j_grid = [int(j) for j in j_grid]
    err, deform = [], []
    for r in range(reps):
        for lev in embed_U_sums(k_max, max(j_grid), rng.child(r)):
            d1 = np.maximum.accumulate(np.abs(lev.U.values - lev.W_at_2j()))
            d2 = np.maximum.accumulate(np.abs(lev.sigma - 2.0 * np.arange(1, lev.sigma.size + 1)))
            err.append(d1[np.array(j_grid) - 1])
            deform.append(d2[np.array(j_grid) - 1])
    return {"U-vs-W": CouplingReport.from_errors("embed-U", j_grid, np.array(err), "raw", rng.label()),
            "sigma-deformation": CouplingReport.from_errors("embed-sigma", j_grid, np.array(deform),
                                                            "raw", rng.label())}


# ---------------------------------------------------------------- sheet coupling


@dataclass
class SheetCoupling:
    """One replication of the assembled coupling over an N-grid.

    ``xi_up[k, g]`` = xi(k, rho_N, up) at N = N_grid[g] (row 0 is nu_N, the
    number of upward excursions), ``xi_up_plus`` the same at rho_N^+,
    ``G[k-1, g]`` = G(k, N) and ``errors[k-1, g]`` =
    xi(k, rho_N) - xi(0, rho_N) - G(k, N).
    """

    N_grid: np.ndarray
    K: int
    xi_up: np.ndarray
    xi_up_plus: np.ndarray
    G: np.ndarray
    errors: np.ndarray

    @property
    def sup_errors(self) -> np.ndarray:
        return np.abs(self.errors).max(axis=0)

    def centered(self) -> np.ndarray:
        """xi(k, rho_N) - N for k = 1..K."""
        return self.xi_up[1:] + self.xi_up[:-1] - self.N_grid[None, :]


def _branch(start: np.ndarray, levels: list[LevelEmbedding]) -> np.ndarray | None:
    """xi_0 = start, xi_i = xi_{i-1} + U^(i)(xi_{i-1}); None if some level
    needs more offspring than were embedded."""
    out = [np.asarray(start, dtype=np.int64)]
    for lev in levels:
        prev = out[-1]
        if prev.max(initial=0) > lev.U.values.size:
            return None
        U = np.concatenate([[0], lev.U.values])
        out.append(prev + U[prev])
    return np.vstack(out)


def assemble_sheet_coupling(N_grid, K: int, rng: RngStream) -> SheetCoupling:
    """Couple xi(k, rho_N), k <= K, with G(k, N) for every N of the grid on
    one probability space.

    The excursion signs come from the T* sequence (the number of downward
    excursions before each upward one, T* - 1 having the law of T - 2),
    embedded into W*; the level counts branch through the embedded U^(i).
    """
    N_grid = np.asarray(sorted(int(n) for n in N_grid), dtype=np.int64)
    if N_grid.size == 0 or N_grid[0] < 1:
        raise ValueError("N-grid must hold positive counts")
    if K < 1 or K ** 3 > N_grid[0]:
        raise ValueError("need 1 <= K <= N^{1/3} for every N of the grid")
    N_max = int(N_grid[-1])
    j_max = N_max + 8 * int(math.sqrt(N_max * K)) + 16
    while True:
        star = embed_level(0, j_max, rng.child("star"), horizon=N_max)
        Tstar = star.T - 1  # downward excursions before each upward one
        block = np.cumsum(Tstar + 1)  # excursions up to and including each upward one
        if block[-1] >= N_max:
            break
        j_max *= 2
    nu = np.searchsorted(block, N_grid, side="right")  # upward excursions among the first N
    while True:
        levels = embed_U_sums(K, j_max, rng)
        xi_up = _branch(nu, levels)
        xi_plus = _branch(N_grid, levels)
        if xi_up is not None and xi_plus is not None:
            break
        j_max *= 2
    horizon = float(N_max)
    for lev in levels:
        if lev.hits.times[-1] <= horizon:
            raise RuntimeError("hit walk shorter than the horizon")
    W = np.vstack([np.zeros(N_grid.size)] + [lev.W(N_grid.astype(float)) for lev in levels])
    sheet = np.cumsum(W, axis=0)  # W(k, N) = sum_{i<=k} W_i(N)
    wstar = star.W(N_grid.astype(float))
    G = sheet[1:] + sheet[:-1] - wstar[None, :]
    centered = xi_up[1:] + xi_up[:-1] - N_grid[None, :]
    return SheetCoupling(N_grid, K, xi_up, xi_plus, G, centered - G)


def sheet_coupling_report(N_grid, K: int, reps: int, rng: RngStream) -> tuple[CouplingReport, list]:
    runs = [assemble_sheet_coupling(N_grid, K, rng.child(r)) for r in range(reps)]
    errs = np.array([run.sup_errors for run in runs])
    surface = np.median(np.abs(np.array([run.errors for run in runs])), axis=0)
    rep = CouplingReport.from_errors("couple-sheet", N_grid, errs, "raw", rng.label(),
                                     K=K, replications=reps, median_surface=surface.tolist())
    return rep, runs


# ---------------------------------------------------------------- splice rates


@dataclass(frozen=True)
class ExcursionTable:
    """Zero-excursions by sign, length and visits to levels 1..k_max."""

    sign: np.ndarray
    length: np.ndarray
    local: np.ndarray

    def __len__(self):
        return int(self.sign.size)

    def take(self, source: np.ndarray, index: np.ndarray, other: "ExcursionTable") -> "ExcursionTable":
        pick1 = source == 1
        sign = np.where(pick1, self.sign[index], other.sign[index])
        length = np.where(pick1, self.length[index], other.length[index])
        local = np.where(pick1[:, None], self.local[index], other.local[index])
        return ExcursionTable(sign, length, local)


def sample_excursion_table(count: int, k_max: int, rng) -> ExcursionTable:
    """``count`` independent zero-excursions; an upward one is generated
    from its branching profile, which gives its visits and length exactly."""
    sign, length, local = _kernels.excursion_table(kernel_seed(rng), int(count), int(k_max))
    return ExcursionTable(sign, length, local)


def splice_tables(t1: ExcursionTable, t2: ExcursionTable, schedule: BlockSchedule) -> ExcursionTable:
    source, index = splice_plan(t1.length, t2.length, schedule)
    return t1.take(source, index, t2)


def splice_coupling_report(l_max: int, K: int, reps: int, rng: RngStream,
                           identical: bool = False) -> dict:
    """Splice two independent excursion sequences over blocks 1..l_max and
    measure, at N = N_l: max_{i<=N} |rho_i - rho_i^(1)| and
    max_{k<=K} |xi(k, rho_N) - xi^(j)(k, rho_N)| for j = 1, 2 (both walks
    have xi(0, rho_N) = N, so these are the centered differences).  Also
    |xi(0, n) - xi^(1)(0, n)| at times n = 4^l, read off both walks up to
    the shorter horizon ("zero-vs-walk1", indexed by n).
    ``identical`` splices a sequence with itself."""
    schedule = BlockSchedule(l_max)
    total = schedule.total
    N_grid = [schedule.N(l) for l in schedule.levels]
    idx = np.array(N_grid) - 1
    n_times = [4**l for l in range(1, max(l_max - 1, 2))]
    rho_err, loc1, loc2, zero1 = [], [], [], []
    for r in range(reps):
        t1 = sample_excursion_table(total, K, rng.child(r, 1))
        t2 = t1 if identical else sample_excursion_table(total, K, rng.child(r, 2))
        sp = splice_tables(t1, t2, schedule)
        d_rho = np.maximum.accumulate(np.abs(np.cumsum(sp.length) - np.cumsum(t1.length)))
        rho_err.append(d_rho[idx])
        L, L1, L2 = (np.cumsum(t.local, axis=0)[idx] for t in (sp, t1, t2))
        loc1.append(np.abs(L - L1).max(axis=1))
        loc2.append(np.abs(L - L2).max(axis=1))
        rho_sp, rho_1 = np.cumsum(sp.length), np.cumsum(t1.length)
        n = np.minimum(n_times, min(rho_sp[-1], rho_1[-1]))
        zero1.append(np.abs(np.searchsorted(rho_sp, n, "right") - np.searchsorted(rho_1, n, "right")))
    out = {}
    for name, grid, errs in (("rho", N_grid, rho_err), ("local-vs-walk1", N_grid, loc1),
                             ("local-vs-walk2", N_grid, loc2), ("zero-vs-walk1", n_times, zero1)):
        e = np.array(errs, dtype=float)
        positive = int(np.count_nonzero(np.median(e, axis=0) > 0))
        if positive < 3:
            # too few nonzero medians to fit; report a flat rate
            out[name] = CouplingReport("splice-" + name, grid, e.tolist(), "raw", 0.0, 0.0, 0.0,
                                       rng.label(), {"zero": positive == 0, "positive_points": positive})
        else:
            out[name] = CouplingReport.from_errors("splice-" + name, grid, e, "raw", rng.label(),
                                                   replications=reps)
    return out


# ---------------------------------------------------------------- audits


def audit_exit_sum_tail(n: int, reps: int, u_grid, rng) -> TailAudit:
    """P(|tau_n - n| >= u sqrt(n)) <= 2 exp(-3u^2/8) for 0 < u < 2 sqrt(n)/3."""
    u = np.asarray(u_grid, dtype=float)
    if np.any(u <= 0) or np.any(u >= 2 * math.sqrt(n) / 3):
        raise ValueError("u outside (0, 2 sqrt(n)/3)")
    gen = as_generator(rng)
    dev = np.array([abs(sample_exit_time(gen, n).sum() - n) for _ in range(reps)])
    events = dev[:, None] >= u[None, :] * math.sqrt(n)
    return audit_events(f"exit-sum-tail n={n}", events, u, 2 * np.exp(-3 * u**2 / 8))


def audit_exponential_sums(n: int, reps: int, u_grid, rng) -> TailAudit:
    """P(max_{j<=n} |sum_{i<=j} (eta_i - 1)| >= u sqrt(n)) <= 2 exp(-u^2/8)
    for 0 < u < 2 sqrt(n)."""
    u = np.asarray(u_grid, dtype=float)
    if np.any(u <= 0) or np.any(u >= 2 * math.sqrt(n)):
        raise ValueError("u outside (0, 2 sqrt(n))")
    gen = as_generator(rng)
    m = np.empty(reps)
    for start in range(0, reps, 1000):
        b = min(1000, reps - start)
        s = np.cumsum(gen.standard_exponential((b, n)) - 1.0, axis=1)
        m[start:start + b] = np.abs(s).max(axis=1)
    events = m[:, None] >= u[None, :] * math.sqrt(n)
    return audit_events(f"exponential-sum-tail n={n}", events, u, 2 * np.exp(-u**2 / 8))
