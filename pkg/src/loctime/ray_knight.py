"""Branching (Ray-Knight) structure of random-walk local times.

Between consecutive downcrossings k -> k-1 the walk visits level k a
geometric number T of times, P(T = j) = 2^-j.  The up-excursion counts
xi(k, rho_N^+, up) then form a critical Galton-Watson process with
geometric offspring, which ``verify_identities`` checks exactly on paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .excursions import InsufficientExcursionsError, _as_path
from .rng import as_generator


def sample_T(rng, size=None):
    """Geometric offspring on {1, 2, ...} with P(T = j) = 2^-j."""
    out = as_generator(rng).geometric(0.5, size=size)
    return int(out) if size is None else out.astype(np.int64)


@dataclass(frozen=True)
class CenteredSumSeries:
    """U(j) = T_1 + ... + T_j - 2j for j = 1..J (``values[j-1]``)."""

    level: int
    values: np.ndarray

    @classmethod
    def from_T(cls, level: int, T) -> "CenteredSumSeries":
        return cls(level, centered_sums(T))

    def __call__(self, j: int) -> int:
        """U(j), with U(0) = 0."""
        if j == 0:
            return 0
        if not 1 <= j <= self.values.size:
            raise IndexError(f"U({j}) outside 0..{self.values.size}")
        return int(self.values[j - 1])


def centered_sums(T) -> np.ndarray:
    return np.cumsum(np.asarray(T, dtype=np.int64) - 2)


def _downcrossings(pos: np.ndarray, k: int) -> np.ndarray:
    """Times j with S_{j-1} = k and S_j = k - 1."""
    return np.flatnonzero((pos[:-1] == k) & (pos[1:] == k - 1)) + 1


def extract_T_from_path(path, k: int, count: int) -> np.ndarray:
    """T_i^(k) = xi(k, tau_i) - xi(k, tau_{i-1}), i = 1..count, where tau_i
    is the i-th downcrossing of (k, k-1) and tau_0 = 0."""
    if k < 1:
        raise ValueError("level k must be >= 1")
    path = _as_path(path)
    pos = path.positions
    tau = _downcrossings(pos, k)
    if tau.size < count:
        raise InsufficientExcursionsError(
            f"path has {tau.size} downcrossings of ({k},{k - 1}), need {count}")
    visits = np.cumsum(pos == k)  # visits[t] = #{0 <= i <= t: S_i = k}; S_0 = 0 != k
    return np.diff(visits[tau[:count]], prepend=0).astype(np.int64)


IDENTITIES = ("a", "b", "c")


@dataclass
class IdentityReport:
    """Outcome of the three identities at rho_N^+ for levels 1..k_max.

    Each row is ``(N, k, identity, holds)``.  ``path_seed`` labels the
    path for export.
    """

    N: int
    k_max: int
    rows: list = field(default_factory=list)
    path_seed: str | int | None = None
    convention: str = "started"

    @property
    def failures(self) -> int:
        return sum(not r[3] for r in self.rows)

    @property
    def all_hold(self) -> bool:
        return self.failures == 0

    def records(self) -> list[dict]:
        return [{"path_seed": self.path_seed, "N": n, "k": k, "identity": ident, "holds": bool(h)}
                for n, k, ident, h in self.rows]

    def to_json(self) -> str:
        return json.dumps(self.records())


def upward_return_time(path, N: int) -> int:
    """rho_N^+, the end of the N-th upward zero-excursion."""
    pos = _as_path(path).positions
    hits = np.flatnonzero((pos[1:] == 0) & (pos[:-1] == 1)) + 1
    if hits.size < N:
        raise InsufficientExcursionsError(f"path has {hits.size} upward excursions, need {N}")
    return int(hits[N - 1]) if N > 0 else 0


def _level_counts(pos: np.ndarray, steps: np.ndarray, k: int, convention: str):
    """(visits in 1..n, up excursions, down excursions) from level k over
    the whole of ``pos`` (time n = len(pos) - 1)."""
    visits = int(np.count_nonzero(pos[1:] == k))
    at = np.flatnonzero(pos == k)
    if convention == "started":
        at = at[at < pos.size - 1]
    else:
        at = at[:-1]
    ups = int(np.count_nonzero(steps[at] == 1))
    return visits, ups, int(at.size) - ups


def verify_identities(path, N: int, k_max: int, convention: str = "started",
                      path_seed=None) -> IdentityReport:
    """Check, as integers, for k = 1..k_max at n = rho_N^+:

    (a) xi(k,n) = U^(k)(m) + 2m,  (b) xi(k,n,up) = sum_{i<=m} (T_i^(k) - 1),
    (c) xi(k,n,down) = m,  where m = xi(k-1,n,up) and the T_i^(k) are read
    off the path by downcrossings.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    path = _as_path(path)
    end = upward_return_time(path, N)
    pos = path.positions[: end + 1]
    steps = path.steps[:end]
    report = IdentityReport(N, k_max, path_seed=path_seed, convention=convention)
    below = _level_counts(pos, steps, 0, convention)
    for k in range(1, k_max + 1):
        here = _level_counts(pos, steps, k, convention)
        m = below[1]
        tau = _downcrossings(pos, k)
        if tau.size >= m:
            visits_k = np.cumsum(pos == k)
            T = np.diff(visits_k[tau[:m]], prepend=0)
            U = centered_sums(T)
            U_m = int(U[m - 1]) if m else 0
            sum_tm1 = int(T.sum()) - m
            ok_a = here[0] == U_m + 2 * m
            ok_b = here[1] == sum_tm1
        else:
            ok_a = ok_b = False
        ok_c = here[2] == m
        report.rows += [(N, k, "a", ok_a), (N, k, "b", ok_b), (N, k, "c", ok_c)]
        below = here
    return report


@dataclass(frozen=True)
class GWTrajectory:
    """Z_0 = N, Z_k = sum_{i <= Z_{k-1}} (T_i - 1)."""

    Z: np.ndarray

    @property
    def N(self) -> int:
        return int(self.Z[0])

    @property
    def K(self) -> int:
        return int(self.Z.size - 1)


def _offspring_sum(gen: np.random.Generator, z):
    """sum of z independent (T - 1); T - 1 is geometric on {0, 1, ...} with
    parameter 1/2, so the sum is negative binomial (z, 1/2), exactly."""
    z = np.asarray(z, dtype=np.int64)
    out = np.zeros(z.shape, dtype=np.int64)
    live = z > 0
    if np.any(live):
        out[live] = gen.negative_binomial(z[live], 0.5)
    return out


def simulate_gw(N: int, K: int, rng) -> GWTrajectory:
    if N < 0 or K < 0:
        raise ValueError("N and K must be nonnegative")
    return GWTrajectory(simulate_gw_batch(N, K, 1, rng)[0])


def simulate_gw_batch(N: int, K: int, reps: int, rng) -> np.ndarray:
    """``reps`` independent trajectories as a (reps, K+1) array."""
    gen = as_generator(rng)
    Z = np.zeros((reps, K + 1), dtype=np.int64)
    Z[:, 0] = N
    for k in range(1, K + 1):
        Z[:, k] = _offspring_sum(gen, Z[:, k - 1])
    return Z


@dataclass(frozen=True)
class FirstExcursionLaw:
    """Law of xi(k, rho_1^+): visits to level k >= 1 before the first
    upward return to zero.

    P(0) = 1 - 1/k and P(m) = (1/(2k^2)) (1 - 1/(2k))^{m-1} for m >= 1.
    """

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("level k must be >= 1")

    def pmf(self, m: int) -> Fraction:
        k = self.k
        if m < 0:
            return Fraction(0)
        if m == 0:
            return 1 - Fraction(1, k)
        return Fraction(1, 2 * k * k) * (1 - Fraction(1, 2 * k)) ** (m - 1)

    def pmf_array(self, m_max: int) -> np.ndarray:
        return np.array([float(self.pmf(m)) for m in range(m_max + 1)])

    def sf(self, m: int) -> Fraction:
        """P(xi >= m)."""
        if m <= 0:
            return Fraction(1)
        return Fraction(1, self.k) * (1 - Fraction(1, 2 * self.k)) ** (m - 1)


def first_excursion_law(k: int) -> FirstExcursionLaw:
    return FirstExcursionLaw(k)


def first_return_tail(k: int, j: int) -> Fraction:
    """P(xi(k, rho_1) >= j) = (1/(2k)) (1 - 1/(2k))^{j-1} for j >= 1: visits
    to level k during the first zero-excursion of either sign."""
    if k < 1:
        raise ValueError("level k must be >= 1")
    if j <= 0:
        return Fraction(1)
    return Fraction(1, 2 * k) * (1 - Fraction(1, 2 * k)) ** (j - 1)


def offspring_samples(path, N: int, k_max: int) -> dict:
    """Per level k = 1..k_max the offspring counts T_1^(k), ..., T_m^(k)
    used up to rho_N^+, where m = xi(k-1, rho_N^+, up)."""
    path = _as_path(path)
    end = upward_return_time(path, N)
    pos = path.positions[: end + 1]
    steps = path.steps[:end]
    out = {}
    m = _level_counts(pos, steps, 0, "started")[1]
    for k in range(1, k_max + 1):
        out[k] = extract_T_from_path(path, k, m) if m else np.empty(0, np.int64)
        m = _level_counts(pos, steps, k, "started")[1]
    return out
