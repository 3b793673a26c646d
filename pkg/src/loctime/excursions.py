"""Excursions away from a level, return times, directional local times and
the large/small excursion splice of two walks."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .walk import StepSequence, WalkPath

UP = 1
DOWN = -1

CONVENTIONS = ("started", "completed")


def _as_path(path) -> WalkPath:
    if isinstance(path, WalkPath):
        return path
    if isinstance(path, StepSequence):
        return WalkPath(path)
    return WalkPath.from_steps(path)


@dataclass(frozen=True)
class ReturnTimes:
    """Zeros rho_1 < rho_2 < ... of S (rho_0 = 0 is implicit) and the
    subsequence rho_plus of those ending an upward excursion."""

    rho: np.ndarray
    rho_plus: np.ndarray

    def __len__(self):
        return int(self.rho.size)


def return_times(path, up_to: int | None = None) -> ReturnTimes:
    path = _as_path(path)
    n = path.length if up_to is None else min(int(up_to), path.length)
    pos = path.positions[: n + 1]
    rho = np.flatnonzero(pos[1:] == 0) + 1
    # an excursion ending at rho is upward iff it arrives from +1
    rho_plus = rho[pos[rho - 1] == 1]
    return ReturnTimes(rho.astype(np.int64), rho_plus.astype(np.int64))


@dataclass(frozen=True)
class Excursion:
    start: int
    end: int
    sign: int

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def upward(self) -> bool:
        return self.sign == UP


@dataclass(frozen=True)
class ExcursionList:
    """Completed excursions away from ``level``, in time order.

    ``tail_start`` is the start of the incomplete trailing excursion, or
    None if the path ends on ``level``.  Segments before the first visit
    to a nonzero level belong to no excursion.
    """

    level: int
    starts: np.ndarray
    ends: np.ndarray
    signs: np.ndarray
    tail_start: int | None = None

    def __len__(self):
        return int(self.starts.size)

    def __iter__(self) -> Iterator[Excursion]:
        for a, b, s in zip(self.starts, self.ends, self.signs):
            yield Excursion(int(a), int(b), int(s))

    def __getitem__(self, i) -> Excursion:
        return Excursion(int(self.starts[i]), int(self.ends[i]), int(self.signs[i]))

    @property
    def lengths(self) -> np.ndarray:
        return self.ends - self.starts

    def to_csv(self, fh=None) -> str | None:
        """Rows (start, end, sign, length); sign is "up" or "down".

        Writes to ``fh`` if given, else returns the text.
        """
        out = io.StringIO() if fh is None else fh
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["start", "end", "sign", "length"])
        for a, b, s in zip(self.starts, self.ends, self.signs):
            writer.writerow([int(a), int(b), "up" if s == UP else "down", int(b - a)])
        return out.getvalue() if fh is None else None


def _visits_from(pos: np.ndarray, k: int) -> np.ndarray:
    """Times i >= 0 with S_i = k, including i = 0 when k = 0."""
    return np.flatnonzero(pos == k)


def classify_excursions(path, level: int = 0) -> ExcursionList:
    path = _as_path(path)
    pos = path.positions
    v = _visits_from(pos, level)
    if v.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return ExcursionList(level, empty, empty.copy(), np.empty(0, np.int8), None)
    starts, ends = v[:-1], v[1:]
    signs = path.steps[starts].astype(np.int8)  # X_{a+1} = steps[a]
    tail = int(v[-1]) if v[-1] < path.length else None
    return ExcursionList(level, starts.astype(np.int64), ends.astype(np.int64), signs, tail)


@dataclass(frozen=True)
class DirectionalLocalTime:
    level: int
    time: int
    up_count: int
    down_count: int
    convention: str = "started"

    @property
    def total(self) -> int:
        return self.up_count + self.down_count


def directional_counts(path, k: int, n: int, convention: str = "started") -> DirectionalLocalTime:
    """Upward and downward excursions away from level k by time n.

    ``"started"`` counts every excursion that has begun by time n, that is
    xi(k,n,up) = #{0 <= i < n : S_i = k, X_{i+1} = +1} and likewise for
    down.  ``"completed"`` keeps only excursions that are back at k by
    time n (an excursion ending exactly at n counts).  At an upward return
    to zero only the started convention makes xi(k,.,down) = xi(k-1,.,up)
    hold exactly, so it is the default.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    path = _as_path(path)
    if not 0 <= n <= path.length:
        raise ValueError(f"time {n} outside [0, {path.length}]")
    v = _visits_from(path.positions[: n + 1], k)
    if convention == "started":
        v = v[v < n]
    else:
        v = v[:-1]
    ups = int(np.count_nonzero(path.steps[v] == 1))
    return DirectionalLocalTime(k, n, ups, int(v.size) - ups, convention)


class InsufficientExcursionsError(ValueError):
    pass


@dataclass(frozen=True)
class BlockSchedule:
    """Dyadic excursion blocks for the splice.

    Block l (1 <= l <= l_max) holds zero-excursions N_{l-1}+1 .. N_l with
    N_l = 2^l and N_0 = 0, so r_1 = 2 and r_l = 2^{l-1} for l >= 2.  An
    excursion of block l is large if its length L satisfies L > r_l^{4/3},
    tested exactly as L^3 > r_l^4.
    """

    l_max: int

    def __post_init__(self):
        if self.l_max < 1:
            raise ValueError("l_max must be at least 1")

    @property
    def levels(self) -> range:
        return range(1, self.l_max + 1)

    def N(self, l: int) -> int:
        return 0 if l == 0 else 1 << l

    def r(self, l: int) -> int:
        return self.N(l) - self.N(l - 1)

    def threshold(self, l: int) -> float:
        return float(self.r(l)) ** (4.0 / 3.0)

    @property
    def total(self) -> int:
        return self.N(self.l_max)

    def block_of(self, index: int) -> int:
        """Block containing the (1-based) excursion ``index``."""
        if not 1 <= index <= self.total:
            raise ValueError("excursion index outside the schedule")
        return max(1, (index - 1).bit_length())

    def is_large(self, lengths, l: int) -> np.ndarray:
        # L^3 > r^4  <=>  L > floor(cbrt(r^4)), which avoids overflow
        return np.asarray(lengths, dtype=np.int64) > _icbrt(self.r(l) ** 4)


def _icbrt(m: int) -> int:
    root = int(round(m ** (1.0 / 3.0)))
    while root**3 > m:
        root -= 1
    while (root + 1) ** 3 <= m:
        root += 1
    return root


def splice_plan(lengths1, lengths2, schedule: BlockSchedule):
    """Which excursion fills each output slot.

    Returns ``(source, index)`` arrays of length N_{l_max}: source 1 keeps
    excursion ``index`` of walk 1, source 2 takes excursion ``index`` of
    walk 2 (0-based).  Within each block the large excursions of walk 1
    stay in place and its small ones are replaced, in order, by the small
    ones of walk 2 from the same block for as long as those last.
    """
    total = schedule.total
    lengths1 = np.asarray(lengths1)
    lengths2 = np.asarray(lengths2)
    if lengths1.size < total or lengths2.size < total:
        raise InsufficientExcursionsError(
            f"need {total} excursions, got {lengths1.size} and {lengths2.size}")
    source = np.ones(total, dtype=np.int8)
    index = np.arange(total, dtype=np.int64)
    for l in schedule.levels:
        a, b = schedule.N(l - 1), schedule.N(l)
        small1 = np.flatnonzero(~schedule.is_large(lengths1[a:b], l)) + a
        small2 = np.flatnonzero(~schedule.is_large(lengths2[a:b], l)) + a
        m = min(small1.size, small2.size)
        source[small1[:m]] = 2
        index[small1[:m]] = small2[:m]
    return source, index


def _zero_excursions(path: WalkPath, need: int) -> ExcursionList:
    exc = classify_excursions(path, 0)
    if len(exc) < need:
        raise InsufficientExcursionsError(
            f"walk has {len(exc)} completed zero-excursions, need {need}")
    return exc


def splice_walks(walk1, walk2, schedule: BlockSchedule) -> StepSequence:
    """Walk made of N_{l_max} excursions chosen by ``splice_plan``; it
    stops at its N_{l_max}-th return to zero."""
    walk1, walk2 = _as_path(walk1), _as_path(walk2)
    total = schedule.total
    exc1 = _zero_excursions(walk1, total)
    exc2 = _zero_excursions(walk2, total)
    source, index = splice_plan(exc1.lengths[:total], exc2.lengths[:total], schedule)
    pieces = []
    for src, i in zip(source, index):
        exc, walk = (exc1, walk1) if src == 1 else (exc2, walk2)
        pieces.append(walk.steps[exc.starts[i]:exc.ends[i]])
    steps = np.concatenate(pieces) if pieces else np.empty(0, np.int8)
    return StepSequence(steps)
