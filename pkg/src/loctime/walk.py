"""Simple symmetric random walks and their local times."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

from . import _kernels
from .rng import RngStream, as_generator, kernel_seed

CHUNK_WORDS = 1 << 16  # 4M steps per streamed chunk


@dataclass(frozen=True)
class StepSequence:
    """The +-1 increments X_1..X_n of a walk, stored as int8."""

    steps: np.ndarray

    def __post_init__(self):
        steps = np.ascontiguousarray(self.steps, dtype=np.int8)
        if steps.ndim != 1:
            raise ValueError("steps must be one-dimensional")
        if steps.size and not np.all((steps == 1) | (steps == -1)):
            raise ValueError("steps must be +1 or -1")
        object.__setattr__(self, "steps", steps)

    @property
    def length(self) -> int:
        return int(self.steps.size)

    def __len__(self):
        return self.length

    def to_bytes(self) -> bytes:
        """64-bit little-endian length header, then one bit per step
        (bit set = +1), little-endian within each byte."""
        packed = np.packbits(self.steps > 0, bitorder="little")
        return struct.pack("<Q", self.length) + packed.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "StepSequence":
        if len(data) < 8:
            raise ValueError("truncated step snapshot")
        (n,) = struct.unpack("<Q", data[:8])
        body = np.frombuffer(data[8:], dtype=np.uint8)
        if body.size != (n + 7) // 8:
            raise ValueError("snapshot length does not match header")
        bits = np.unpackbits(body, bitorder="little", count=n)
        return cls(bits.astype(np.int8) * 2 - 1)


@dataclass(frozen=True)
class WalkPath:
    """Partial sums S_0 = 0, S_i = X_1 + ... + X_i over a StepSequence."""

    sequence: StepSequence

    @classmethod
    def from_steps(cls, steps) -> "WalkPath":
        return cls(StepSequence(np.asarray(steps)))

    @property
    def steps(self) -> np.ndarray:
        return self.sequence.steps

    @property
    def length(self) -> int:
        return self.sequence.length

    @cached_property
    def positions(self) -> np.ndarray:
        pos = np.zeros(self.length + 1, dtype=np.int64)
        np.cumsum(self.steps, out=pos[1:])
        return pos


@dataclass
class LocalTimeProfile:
    base_time: int
    window: tuple
    counts: np.ndarray
    spill_below: int = 0
    spill_above: int = 0
    zero_series: np.ndarray | None = None
    zero_stride: int = 0
    final_position: int = 0

    def __getitem__(self, k: int) -> int:
        lo, hi = self.window
        if lo <= k <= hi:
            return int(self.counts[k - lo])
        if abs(k) > self.base_time:
            return 0
        raise KeyError(f"level {k} lies outside the profiled window {self.window}")

    def total(self) -> int:
        return int(self.counts.sum()) + self.spill_below + self.spill_above

    def zero_times(self) -> np.ndarray:
        """Times m at which ``zero_series`` was sampled."""
        if self.zero_series is None:
            return np.empty(0, dtype=np.int64)
        return self.zero_stride * np.arange(1, self.zero_series.size + 1, dtype=np.int64)


def _words(gen: np.random.Generator, nwords: int) -> np.ndarray:
    return gen.bit_generator.random_raw(nwords).astype(np.uint64, copy=False)


def _steps_from_words(words: np.ndarray, n: int) -> np.ndarray:
    raw = words.astype("<u8", copy=False).view(np.uint8)
    bits = np.unpackbits(raw, bitorder="little", count=n)
    return bits.astype(np.int8) * 2 - 1


def simulate_walk(n: int, rng: RngStream | np.random.Generator) -> StepSequence:
    if n < 0:
        raise ValueError("n must be nonnegative")
    gen = as_generator(rng)
    words = _words(gen, (n + 63) // 64)
    return StepSequence(_steps_from_words(words, n))


def word_chunks(n: int, rng, chunk_words: int = CHUNK_WORDS) -> Iterator[tuple]:
    """Packed random words for an n-step walk, as (words, nsteps) chunks.

    Concatenating the chunks gives exactly the steps of ``simulate_walk``
    with the same stream.
    """
    gen = as_generator(rng)
    left = n
    while left > 0:
        take = min(left, 64 * chunk_words)
        yield _words(gen, (take + 63) // 64), take
        left -= take


def step_chunks(n: int, rng, chunk_steps: int = 64 * CHUNK_WORDS) -> Iterator[np.ndarray]:
    chunk_words = max(1, chunk_steps // 64)
    for words, take in word_chunks(n, rng, chunk_words):
        yield _steps_from_words(words, take)


def _check_time(path: WalkPath, n: int):
    if not 0 <= n <= path.length:
        raise ValueError(f"time {n} outside [0, {path.length}]")


def local_time(path: WalkPath, k: int, n: int) -> int:
    """xi(k, n) = #{1 <= i <= n : S_i = k}."""
    _check_time(path, n)
    return int(np.count_nonzero(path.positions[1 : n + 1] == k))


def centered_local_time(path: WalkPath, k: int, n: int) -> int:
    if k < 1:
        raise ValueError("centered local time needs level k >= 1")
    _check_time(path, n)
    seg = path.positions[1 : n + 1]
    return int(np.count_nonzero(seg == k)) - int(np.count_nonzero(seg == 0))


def default_zero_stride(n: int) -> int:
    return 1 if n <= 10**6 else max(1, round(n / 10**6))


def _new_profile(n, window, zero_stride):
    lo, hi = int(window[0]), int(window[1])
    if hi < lo:
        raise ValueError("empty level window")
    if zero_stride is None:
        zero_stride = default_zero_stride(n)
    nz = n // zero_stride if zero_stride > 0 else 0
    counts = np.zeros(hi - lo + 1, dtype=np.int64)
    spill = np.zeros(2, dtype=np.int64)
    zseries = np.zeros(nz, dtype=np.int64)
    state = np.zeros(4, dtype=np.int64)
    return lo, hi, counts, spill, zseries, state, zero_stride


def _finish(n, lo, hi, counts, spill, zseries, state, zero_stride):
    return LocalTimeProfile(
        base_time=n,
        window=(lo, hi),
        counts=counts,
        spill_below=int(spill[0]),
        spill_above=int(spill[1]),
        zero_series=zseries if zero_stride > 0 else None,
        zero_stride=zero_stride,
        final_position=int(state[0]),
    )


def local_time_profile(source, n: int, window, zero_stride: int | None = None) -> LocalTimeProfile:
    """Local times xi(k, n) for k in ``window`` in a single pass.

    ``source`` is a WalkPath/StepSequence or any iterable of int8 step
    chunks (consumed lazily, at most ``n`` steps).  Levels outside the
    window are tallied in two spill buckets.  ``zero_stride`` = 0 disables
    the xi(0, .) series.
    """
    lo, hi, counts, spill, zseries, state, zero_stride = _new_profile(n, window, zero_stride)
    if isinstance(source, WalkPath):
        source = source.sequence
    if isinstance(source, StepSequence):
        if n > source.length:
            raise ValueError(f"time {n} outside [0, {source.length}]")
        chunks: Iterable = (source.steps[:n],)
    else:
        chunks = source
    left = n
    for chunk in chunks:
        if left == 0:
            break
        chunk = np.asarray(chunk, dtype=np.int8)[:left]
        _kernels.profile_steps(chunk, state, lo, counts, spill, zero_stride, zseries)
        left -= chunk.size
    if left:
        raise ValueError("step source ended before time n")
    return _finish(n, lo, hi, counts, spill, zseries, state, zero_stride)


def stream_profile(n: int, rng, window, zero_stride: int | None = None) -> LocalTimeProfile:
    """Profile of a fresh n-step walk drawn from ``rng`` without storing it.

    Equal to ``local_time_profile(simulate_walk(n, rng), n, window)`` for the
    same stream.
    """
    lo, hi, counts, spill, zseries, state, zero_stride = _new_profile(n, window, zero_stride)
    for words, take in word_chunks(n, rng):
        _kernels.profile_words(words, take, state, lo, counts, spill, zero_stride, zseries)
    return _finish(n, lo, hi, counts, spill, zseries, state, zero_stride)


def compressed_walk(rng, window, returns: int, upward_only: bool = False,
                    max_steps: int = 1 << 31) -> StepSequence:
    """Walk run until its ``returns``-th return to zero (upward returns only
    if ``upward_only``), with every excursion above ``window[1]`` or below
    ``window[0]`` replaced by a two-step excursion.

    Local times, excursion counts and crossing counts at levels inside the
    window have exactly the law of the uncompressed walk's; only time
    outside the window is shortened.  The window must contain 0.
    """
    lo, hi = int(window[0]), int(window[1])
    if not lo <= 0 <= hi:
        raise ValueError("window must contain level 0")
    steps = _kernels.compressed_walk(kernel_seed(rng), lo, hi, int(returns), upward_only, max_steps)
    return StepSequence(steps)


def compressed_counts(rng, window, returns: int, upward_only: bool, reps: int):
    """Batch form of ``compressed_walk``: per replication, visits and started
    up/down excursions at each window level at the stopping return.

    Returns three (reps, window size) int64 arrays.
    """
    lo, hi = int(window[0]), int(window[1])
    if not lo <= 0 <= hi:
        raise ValueError("window must contain level 0")
    return _kernels.compressed_counts(kernel_seed(rng), lo, hi, int(returns), upward_only, int(reps))


_UNBOUNDED = (-(1 << 62), 1 << 62)


def walk_until_returns(rng, returns: int, upward_only: bool = False,
                       max_steps: int = 1 << 31) -> StepSequence:
    """A plain walk stopped at its ``returns``-th (upward) return to zero.

    Raises ValueError if that takes more than ``max_steps`` steps; the
    walk is never truncated silently.
    """
    return compressed_walk(rng, _UNBOUNDED, returns, upward_only, max_steps)


def zero_increment_maxima(t: int, a: int, reps: int, rng) -> np.ndarray:
    """max_{0<=j<=t-a} (xi(0,a+j) - xi(0,j)) / sqrt(a) for ``reps``
    independent walks of length t."""
    if not 1 <= a <= t:
        raise ValueError("need 1 <= a <= t")
    gen = as_generator(rng)
    out = np.empty(reps)
    for r in range(reps):
        pos = np.cumsum(simulate_walk(t, gen).steps, dtype=np.int64)
        z = np.concatenate([[0], np.cumsum(pos == 0)])
        out[r] = (z[a:] - z[:-a]).max() if a < z.size else z[-1]
    return out / np.sqrt(a)


LIL_STATISTICS = ("level-k over n^{1/4}(loglog n)^{3/4}",
                  "level-k over (xi(0,n) loglog n)^{1/2}",
                  "max_{k<=K(N)} at rho_N over (N loglog N)^{1/2}",
                  "max_{k<=K(n)} over n^{1/4}(loglog n)^{3/4}")


@dataclass
class LilScan:
    """Running sups of the four normalized statistics (see
    ``LIL_STATISTICS``) and their values at ``checkpoints``; column 2 holds
    the running sup, since it is only defined at returns to zero."""

    n: int
    checkpoints: np.ndarray
    series: np.ndarray
    sups: np.ndarray


def lil_scan(n: int, rng, levels: int = 64, n_min: int = 10**4, k_c: int = 1,
             k_exp_rho: float = 0.2, k_exp_n: float = 0.2, checkpoints=None) -> LilScan:
    """Stream an n-step walk once, tracking local times at levels
    0..``levels``, with K(N) = floor(N^k_exp_rho) and K(n) = floor(n^k_exp_n)
    (capped at ``levels``).  The statistics are (4k-2)^{1/2}-normalized."""
    if not 1 <= k_c <= levels:
        raise ValueError("k_c must lie in 1..levels")
    if checkpoints is None:
        checkpoints = np.unique(np.geomspace(max(n_min, 16), n, 200).astype(np.int64))
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    if np.any(np.diff(checkpoints) <= 0) or (checkpoints.size and
                                            (checkpoints[0] < n_min or checkpoints[-1] > n)):
        raise ValueError("checkpoints must increase within [n_min, n]")
    counts = np.zeros(levels + 1, dtype=np.int64)
    state = np.zeros(3, dtype=np.int64)
    series = np.zeros((checkpoints.size, 4))
    sups = np.zeros(4)
    for words, take in word_chunks(n, rng):
        _kernels.lil_scan_words(words, take, state, counts, max(int(n_min), 16), int(k_c),
                                float(k_exp_rho), float(k_exp_n), checkpoints, series, sups)
    return LilScan(n, checkpoints, series, sups)
