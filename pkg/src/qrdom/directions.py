"""Quasi-random transport directions.

Directions are generated from the two-dimensional reverse Halton sequence
(bases 2 and 3), mapped area-uniformly onto the first octant of the unit
sphere, and then mirrored across the coordinate planes x1 = 0 and x2 = 0 to
obtain one direction per quadrant of the (s1, s2) plane.  The sequence is
1-indexed so that no component ever equals zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

SUPPORTED_BASES = (2, 3)


class UnitSquarePoint(NamedTuple):
    u1: float
    u2: float


@dataclass(frozen=True)
class Direction:
    """Unit vector on the upper hemisphere with quadrant bookkeeping.

    ``quadrant`` follows the sign pattern of (s1, s2): 1 = (+,+), 2 = (-,+),
    3 = (-,-), 4 = (+,-).  ``seq_index`` is the generating sequence index, or
    0 for directions that do not come from the stream.
    """

    s1: float
    s2: float
    s3: float
    quadrant: int
    seq_index: int = 0

    @property
    def vector(self) -> tuple[float, float, float]:
        return (self.s1, self.s2, self.s3)

    @classmethod
    def from_vector(cls, s1: float, s2: float, s3: float, seq_index: int = 0) -> "Direction":
        if s1 == 0.0 or s2 == 0.0:
            raise ValueError("grazing direction: s1 and s2 must be nonzero")
        if s1 > 0:
            quadrant = 1 if s2 > 0 else 4
        else:
            quadrant = 2 if s2 > 0 else 3
        return cls(float(s1), float(s2), float(s3), quadrant, seq_index)


def _check_index(i: int) -> None:
    if int(i) != i or i < 1:
        raise ValueError(f"sequence index must be a positive integer (1-indexed), got {i!r}")


def reverse_halton(i: int, base: int, reverse: bool = True) -> float:
    """Radical inverse of ``i`` in ``base`` with reverse digit permutation.

    Each base-``b`` digit ``k`` is replaced by ``b - k`` (zero is kept) before
    being mirrored about the radix point.  With ``reverse=False`` the plain
    Halton radical inverse is returned.  The value is computed as a single
    integer ratio so it is correctly rounded.
    """
    _check_index(i)
    if base not in SUPPORTED_BASES:
        raise ValueError(f"unsupported base {base}; expected one of {SUPPORTED_BASES}")
    numerator = 0
    denominator = 1
    n = int(i)
    while n > 0:
        n, digit = divmod(n, base)
        if reverse and digit:
            digit = base - digit
        numerator = numerator * base + digit
        denominator *= base
    return numerator / denominator


def rh_pair(i: int, reverse: bool = True) -> UnitSquarePoint:
    return UnitSquarePoint(reverse_halton(i, 2, reverse), reverse_halton(i, 3, reverse))


def map_to_octant(p: UnitSquarePoint, i: int) -> Direction:
    """Map a point of (0,1)^2 to a first-octant direction.

    The polar angle is ``arccos(1 - u1)`` and the azimuth ``u2 * pi / 2``;
    since cos(theta) is uniform the map is area-preserving up to a constant.
    """
    u1, u2 = p
    if not (0.0 < u1 < 1.0 and 0.0 < u2 < 1.0):
        raise ValueError(f"point {tuple(p)} is not inside the open unit square")
    theta = math.acos(1.0 - u1)
    phi = u2 * math.pi / 2.0
    sin_theta = math.sin(theta)
    return Direction(
        math.cos(phi) * sin_theta,
        math.sin(phi) * sin_theta,
        math.cos(theta),
        1,
        i,
    )


def reflect_quadruple(d: Direction) -> tuple[Direction, Direction, Direction, Direction]:
    if d.quadrant != 1:
        raise ValueError(f"expected a quadrant-1 direction, got quadrant {d.quadrant}")
    s1, s2, s3, i = d.s1, d.s2, d.s3, d.seq_index
    return (
        d,
        Direction(-s1, s2, s3, 2, i),
        Direction(-s1, -s2, s3, 3, i),
        Direction(s1, -s2, s3, 4, i),
    )


def quadruple(i: int, reverse: bool = True) -> tuple[Direction, Direction, Direction, Direction]:
    """The four reflected directions generated by sequence index ``i``."""
    return reflect_quadruple(map_to_octant(rh_pair(i, reverse), i))


def direction_stream(
    from_index: int, count: int, reverse: bool = True
) -> Iterator[tuple[Direction, Direction, Direction, Direction]]:
    _check_index(from_index)
    for i in range(from_index, from_index + count):
        yield quadruple(i, reverse)
