"""Closed-interval arithmetic and box operations.

Only the handful of operations the property similarity / refinement rules
need: Moore subtraction, mignitude of a difference, hull, containment and
subset tests. Everything here is a pure function on immutable values.

Arithmetic is plain float64 without outward rounding; at the magnitudes the
observation space uses (unit-scale values, thresholds around 0.1) 1-ulp
effects are irrelevant, but this is a known soundness caveat of the
downstream verifier.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class Interval:
    """Closed real interval [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"invalid interval: lo={self.lo} > hi={self.hi}")

    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def to_pair(self) -> list:
        return [self.lo, self.hi]

    @staticmethod
    def from_pair(pair: Sequence[float]) -> "Interval":
        if len(pair) != 2:
            raise ValueError(f"interval pair must have 2 elements, got {len(pair)}")
        return Interval(float(pair[0]), float(pair[1]))


@dataclass(frozen=True)
class IntervalBox:
    """Fixed-length tuple of intervals, one per observation dimension."""

    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        for d in self.dims:
            if not isinstance(d, Interval):
                raise TypeError(f"box dimension is not an Interval: {d!r}")

    def __len__(self) -> int:
        return len(self.dims)

    def __getitem__(self, i: int) -> Interval:
        return self.dims[i]

    def __iter__(self):
        return iter(self.dims)

    def to_pairs(self) -> list:
        return [d.to_pair() for d in self.dims]

    @staticmethod
    def from_pairs(pairs: Iterable[Sequence[float]]) -> "IntervalBox":
        return IntervalBox(tuple(Interval.from_pair(p) for p in pairs))


def interval_sub(a: Interval, b: Interval) -> Interval:
    """Moore subtraction: [a.lo - b.hi, a.hi - b.lo]."""
    return Interval(a.lo - b.hi, a.hi - b.lo)


def mignitude(a: Interval) -> float:
    """Minimum absolute value attained over the interval."""
    if a.lo <= 0.0 <= a.hi:
        return 0.0
    return min(abs(a.lo), abs(a.hi))


def mig_abs_diff(a: Interval, b: Interval) -> float:
    """Lower bound of |x - y| over x in a, y in b (mignitude of a - b)."""
    return mignitude(interval_sub(a, b))


def hull(a: Interval, b: Interval) -> Interval:
    """Smallest interval containing both arguments."""
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


def interval_subset(a: Interval, b: Interval) -> bool:
    """True iff a is contained in b (closed bounds)."""
    return b.lo <= a.lo and a.hi <= b.hi


def box_contains(box: IntervalBox, point: Sequence[float]) -> bool:
    """True iff every coordinate lies inside the matching closed interval."""
    if len(point) != len(box):
        raise ValueError(
            f"dimension mismatch: box has {len(box)} dims, point has {len(point)}"
        )
    return all(d.lo <= x <= d.hi for d, x in zip(box.dims, point))
