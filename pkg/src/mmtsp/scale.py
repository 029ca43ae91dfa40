"""Geometric rounding ladders for per-square tour lengths."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache

ABSENT = -1  # tick index of a tour that does not enter the square


class LadderOverflow(ArithmeticError):
    pass


@dataclass(frozen=True)
class Ladder:
    level: int
    delta: float
    alpha: float
    max_value: float
    tick_count: int  # indices 0..tick_count-1 reach max_value; one guard tick follows
    ticks: tuple[float, ...] = field(repr=False)

    @property
    def top(self) -> float:
        return self.ticks[-1]


def _ticks(delta: float, alpha: float, max_value: float) -> tuple[float, ...]:
    growth = 1.0 + alpha
    ticks = [delta]
    while ticks[-1] < max_value:
        ticks.append(ticks[-1] * growth)
    ticks.append(ticks[-1] * growth)  # guard
    return tuple(ticks)


@lru_cache(maxsize=4096)
def make_ladder(L: int, level: int, m: int, alpha: float) -> Ladder:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    delta = L / (2**level * m)
    max_value = float(L) * L
    ticks = _ticks(delta, alpha, max_value)
    return Ladder(level, delta, alpha, max_value, len(ticks) - 1, ticks)


def tick_count(L: int, level: int, m: int, alpha: float) -> int:
    """Number of ticks from delta up to the first one at or above L**2."""
    return make_ladder(L, level, m, alpha).tick_count


def round_up(ladder: Ladder, length: float, strict: bool = False) -> int:
    """Smallest tick index whose value is >= length; 0 maps to ABSENT.

    Lengths above the guard tick saturate at it, or raise when ``strict``.
    """
    if length <= 0:
        if length < 0:
            raise ValueError("negative length")
        return ABSENT
    j = bisect.bisect_left(ladder.ticks, length)
    if j >= len(ladder.ticks):
        if strict:
            raise LadderOverflow(f"{length} exceeds top tick {ladder.top}")
        return len(ladder.ticks) - 1
    return j


def overflows(ladder: Ladder, length: float) -> bool:
    return length > ladder.top


def tick_value(ladder: Ladder, t: int) -> float:
    if t == ABSENT:
        return 0.0
    if not 0 <= t < len(ladder.ticks):
        raise IndexError(f"tick index {t} outside ladder of {len(ladder.ticks)} ticks")
    return ladder.ticks[t]


def tick_count_bound(L: int, level: int, m: int, alpha: float) -> float:
    return 2.0 * math.log(2**level * L * m) / alpha
