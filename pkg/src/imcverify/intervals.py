"""Closed real intervals and boxes with outward-rounded arithmetic.

Every operation returns an interval that contains the exact real result of
the operation applied to any points of its operands.  Sums, products and
quotients are rounded in the required direction: an endpoint moves one ulp
outward only when the nearest float lies on the wrong side of the exact
value.  Other operations widen inexact endpoints by one ulp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import DomainError

_INF = math.inf


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _sum_error(a: float, b: float, s: float) -> float:
    # TwoSum error term: (a + b) - s, exact when s is finite.
    bb = s - a
    return (a - (s - bb)) + (b - bb)


_SPLIT = 134217729.0  # 2^27 + 1
_SAFE_HI = 2.0 ** 995
_SAFE_LO = 2.0 ** -960


def _split(a: float) -> tuple[float, float]:
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def _prod_error_sign(a: float, b: float, p: float) -> int:
    """Sign of ``a * b - p``."""
    if a == 0.0 or b == 0.0 or a == 1.0 or b == 1.0:
        return 0
    if not (abs(a) < _SAFE_HI and abs(b) < _SAFE_HI and _SAFE_LO < abs(p) < _SAFE_HI):
        # Dekker's error term is unreliable near overflow or underflow
        return _sign(Fraction(a) * Fraction(b) - Fraction(p))
    ah, al = _split(a)
    bh, bl = _split(b)
    return _sign(((ah * bh - p) + ah * bl + al * bh) + al * bl)


def _round_lo(x: float, err_sign: int) -> float:
    return _down(x) if err_sign < 0 else x


def _round_hi(x: float, err_sign: int) -> float:
    return _up(x) if err_sign > 0 else x


def _check_finite(lo: float, hi: float) -> None:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError(f"non-finite interval bound [{lo}, {hi}]")


@dataclass(frozen=True)
class Interval:
    """A closed interval ``[lo, hi]`` of finite reals."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise DomainError("NaN interval bound")
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> Interval:
        return cls(x, x)

    @classmethod
    def hull_of(cls, values: Iterable[float]) -> Interval:
        vals = list(values)
        return cls(min(vals), max(vals))

    # --- queries -----------------------------------------------------------

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def mag(self) -> float:
        """Largest absolute value in the interval."""
        return max(abs(self.lo), abs(self.hi))

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def __contains__(self, x: float) -> bool:
        return self.contains(x)

    def subset_of(self, other: Interval) -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def hull(self, other: Interval) -> Interval:
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def bisect(self) -> tuple[Interval, Interval]:
        m = self.mid
        return Interval(self.lo, m), Interval(m, self.hi)

    # --- arithmetic ------------------------------------------------------

    @staticmethod
    def _coerce(x) -> Interval:
        if isinstance(x, Interval):
            return x
        return Interval(float(x), float(x))

    def __neg__(self) -> Interval:
        return Interval(-self.hi, -self.lo)

    def __add__(self, other) -> Interval:
        o = Interval._coerce(other)
        lo, hi = self.lo + o.lo, self.hi + o.hi
        _check_finite(lo, hi)
        return Interval(_round_lo(lo, _sign(_sum_error(self.lo, o.lo, lo))),
                        _round_hi(hi, _sign(_sum_error(self.hi, o.hi, hi))))

    __radd__ = __add__

    def __sub__(self, other) -> Interval:
        return self + (-Interval._coerce(other))

    def __rsub__(self, other) -> Interval:
        return Interval._coerce(other) + (-self)

    def __mul__(self, other) -> Interval:
        o = Interval._coerce(other)
        pairs = [(a, b) for a in (self.lo, self.hi) for b in (o.lo, o.hi)]
        prods = [a * b for a, b in pairs]
        i_lo = min(range(4), key=lambda i: prods[i])
        i_hi = max(range(4), key=lambda i: prods[i])
        lo, hi = prods[i_lo], prods[i_hi]
        _check_finite(lo, hi)
        return Interval(_round_lo(lo, _prod_error_sign(*pairs[i_lo], lo)),
                        _round_hi(hi, _prod_error_sign(*pairs[i_hi], hi)))

    __rmul__ = __mul__

    def reciprocal(self) -> Interval:
        if self.lo <= 0.0 <= self.hi:
            raise DomainError(f"division by interval containing zero: {self}")
        lo, hi = 1.0 / self.hi, 1.0 / self.lo
        _check_finite(lo, hi)
        return Interval(_round_lo(lo, _sign(1 / Fraction(self.hi) - Fraction(lo))),
                        _round_hi(hi, _sign(1 / Fraction(self.lo) - Fraction(hi))))

    def __truediv__(self, other) -> Interval:
        o = Interval._coerce(other)
        if o.lo == o.hi:
            if o.lo == 0.0:
                raise DomainError("division by zero")
            cands = [self.lo / o.lo, self.hi / o.lo]
            lo, hi = min(cands), max(cands)
            _check_finite(lo, hi)
            num_lo = self.lo if cands[0] == lo else self.hi
            num_hi = self.hi if cands[1] == hi else self.lo
            return Interval(_round_lo(lo, _sign(Fraction(num_lo) / Fraction(o.lo) - Fraction(lo))),
                            _round_hi(hi, _sign(Fraction(num_hi) / Fraction(o.lo) - Fraction(hi))))
        return self * o.reciprocal()

    def __rtruediv__(self, other) -> Interval:
        return Interval._coerce(other) / self

    def sqr(self) -> Interval:
        """Tight square (never negative, unlike ``x * x``)."""
        if self.lo >= 0.0:
            small, big = self.lo, self.hi
        elif self.hi <= 0.0:
            small, big = -self.hi, -self.lo
        else:
            small, big = 0.0, self.mag
        lo, hi = small * small, big * big
        _check_finite(lo, hi)
        return Interval(max(_round_lo(lo, _prod_error_sign(small, small, lo)), 0.0),
                        _round_hi(hi, _prod_error_sign(big, big, hi)))

    def pow_int(self, n: int) -> Interval:
        if n == 0:
            return Interval(1.0, 1.0)
        if n < 0:
            return self.pow_int(-n).reciprocal()
        if n == 1:
            return self
        if n % 2 == 0:
            return self.sqr().pow_int(n // 2)
        # odd powers are monotone
        lo, hi = self.lo ** n, self.hi ** n
        _check_finite(lo, hi)
        return Interval(_down(lo), _up(hi))

    def pow_real(self, p: float) -> Interval:
        if float(p).is_integer():
            return self.pow_int(int(p))
        if self.lo < 0.0 or (self.lo == 0.0 and p < 0):
            raise DomainError(f"non-integer power {p} of interval {self} reaching non-positive values")
        a, b = self.lo ** p, self.hi ** p
        lo, hi = min(a, b), max(a, b)
        _check_finite(lo, hi)
        return Interval(max(_down(lo), 0.0), _up(hi))

    def exp(self) -> Interval:
        try:
            lo, hi = math.exp(self.lo), math.exp(self.hi)
        except OverflowError as exc:
            raise DomainError(f"exp overflow on {self}") from exc
        lo = lo if self.lo == 0.0 else max(_down(lo), 0.0)
        hi = hi if self.hi == 0.0 else _up(hi)
        return Interval(lo, hi)

    def sin(self) -> Interval:
        return _trig(self, math.sin, math.pi / 2)

    def cos(self) -> Interval:
        return _trig(self, math.cos, 0.0)

    def min_with(self, other: Interval) -> Interval:
        return Interval(min(self.lo, other.lo), min(self.hi, other.hi))

    def max_with(self, other: Interval) -> Interval:
        return Interval(max(self.lo, other.lo), max(self.hi, other.hi))

    def __repr__(self) -> str:
        return f"Interval({self.lo!r}, {self.hi!r})"


def _trig(x: Interval, fn, peak_phase: float) -> Interval:
    # fn has maxima at peak_phase + 2k*pi and minima at peak_phase + pi + 2k*pi
    if x.width >= 2 * math.pi:
        return Interval(-1.0, 1.0)
    vals = [fn(x.lo), fn(x.hi)]
    lo, hi = min(vals), max(vals)
    lo, hi = _down(lo), _up(hi)
    slack = 4 * math.ulp(max(abs(x.lo), abs(x.hi), 1.0))
    two_pi = 2 * math.pi
    k = math.ceil((x.lo - peak_phase - slack) / two_pi)
    if peak_phase + k * two_pi <= x.hi + slack:
        hi = 1.0
    k = math.ceil((x.lo - peak_phase - math.pi - slack) / two_pi)
    if peak_phase + math.pi + k * two_pi <= x.hi + slack:
        lo = -1.0
    return Interval(max(lo, -1.0), min(hi, 1.0))


@dataclass(frozen=True)
class IntervalBox:
    """Axis-aligned box: one :class:`Interval` per dimension."""

    dims: tuple[Interval, ...]

    def __post_init__(self):
        dims = tuple(d if isinstance(d, Interval) else Interval(*d) for d in self.dims)
        if not dims:
            raise ValueError("IntervalBox needs at least one dimension")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[float]]) -> IntervalBox:
        return cls(tuple(Interval(lo, hi) for lo, hi in bounds))

    @classmethod
    def point(cls, x: Sequence[float]) -> IntervalBox:
        return cls(tuple(Interval(v, v) for v in x))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def width(self) -> float:
        return max(d.width for d in self.dims)

    @property
    def lo(self) -> tuple[float, ...]:
        return tuple(d.lo for d in self.dims)

    @property
    def hi(self) -> tuple[float, ...]:
        return tuple(d.hi for d in self.dims)

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(d.mid for d in self.dims)

    def __len__(self) -> int:
        return len(self.dims)

    def __getitem__(self, i: int) -> Interval:
        return self.dims[i]

    def __iter__(self):
        return iter(self.dims)

    def contains(self, x: Sequence[float]) -> bool:
        return all(d.contains(v) for d, v in zip(self.dims, x))

    def subset_of(self, other: IntervalBox) -> bool:
        return all(a.subset_of(b) for a, b in zip(self.dims, other.dims))

    def volume(self) -> float:
        return math.prod(d.width for d in self.dims)

    def bisect(self, axis: int | None = None) -> tuple[IntervalBox, IntervalBox]:
        """Split along ``axis`` (default: the longest edge, lowest index on ties)."""
        if axis is None:
            widths = [d.width for d in self.dims]
            axis = widths.index(max(widths))
        left, right = self.dims[axis].bisect()
        a = list(self.dims)
        b = list(self.dims)
        a[axis], b[axis] = left, right
        return IntervalBox(tuple(a)), IntervalBox(tuple(b))

    def as_list(self) -> list[list[float]]:
        return [[d.lo, d.hi] for d in self.dims]
