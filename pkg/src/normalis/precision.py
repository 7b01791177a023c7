"""Certified enclosure plumbing: precision-cap policy, exact rational enclosures,
and bridges into mpmath's outward-rounded interval contexts.

Conventions used throughout the package:

* An :class:`Enclosure` is a closed interval with exact ``Fraction`` endpoints that
  provably contains the real number under discussion.  All enclosure arithmetic done
  here is exact rational arithmetic, so rigor is automatic; rounding only happens
  inside mpmath interval contexts, which round outward.
* Precision is measured in bits.  Operations that escalate precision loop over
  :func:`escalate` and fail loudly with :class:`PrecisionCapError` when they reach
  the cap (default 8192 bits, overridable via the ``NORMALIS_PRECISION_CAP``
  environment variable or :func:`set_precision_cap`).
"""

from __future__ import annotations

import os
from fractions import Fraction
from typing import Iterator, Optional, Union

from mpmath.ctx_iv import MPIntervalContext

from .errors import PrecisionCapError

DEFAULT_PRECISION_CAP = 8192
_ENV_VAR = "NORMALIS_PRECISION_CAP"

_override_cap: Optional[int] = None


def precision_cap() -> int:
    """Current hard cap (bits) for automatic precision escalation."""
    if _override_cap is not None:
        return _override_cap
    env = os.environ.get(_ENV_VAR)
    if env:
        try:
            return max(int(env), 8)
        except ValueError:
            pass
    return DEFAULT_PRECISION_CAP


def set_precision_cap(bits: Optional[int]) -> None:
    """Override the precision cap for this process (``None`` restores the default/env)."""
    global _override_cap
    _override_cap = None if bits is None else max(int(bits), 8)


def escalate(start: int = 64, factor: int = 2, cap: Optional[int] = None,
             what: str = "computation") -> Iterator[int]:
    """Yield increasing working precisions until the cap, then raise.

    Intended usage::

        for prec in escalate(128, what="theta enclosure"):
            ...compute at prec...
            if resolved:
                break
    """
    limit = precision_cap() if cap is None else cap
    prec = min(start, limit)
    while True:
        yield prec
        if prec >= limit:
            raise PrecisionCapError(
                f"{what}: precision cap {limit} bits reached", bits_used=prec)
        prec = min(prec * factor, limit)


RationalLike = Union[int, Fraction]


class Enclosure:
    """A closed interval [lo, hi] with exact rational endpoints.

    Immutable; supports the handful of interval operations the package needs
    (exact arithmetic, containment and separation tests).  Not a general interval
    library — widths here are typically tiny and correctness beats completeness.
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo: RationalLike, hi: RationalLike):
        lo = Fraction(lo)
        hi = Fraction(hi)
        if hi < lo:
            raise ValueError(f"empty enclosure: [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("Enclosure is immutable")

    # -- queries ---------------------------------------------------------

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def rad(self) -> Fraction:
        return (self.hi - self.lo) / 2

    def __contains__(self, x: RationalLike) -> bool:
        x = Fraction(x)
        return self.lo <= x <= self.hi

    def contains_enclosure(self, other: "Enclosure") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def strictly_above(self, x: RationalLike) -> bool:
        """Certified: the enclosed value is > x."""
        return self.lo > Fraction(x)

    def strictly_below(self, x: RationalLike) -> bool:
        """Certified: the enclosed value is < x."""
        return self.hi < Fraction(x)

    def strictly_inside(self, lo: RationalLike, hi: RationalLike) -> bool:
        """Certified: lo < value < hi."""
        return self.lo > Fraction(lo) and self.hi < Fraction(hi)

    def disjoint_from(self, other: "Enclosure") -> bool:
        return self.hi < other.lo or other.hi < self.lo

    # -- exact arithmetic ------------------------------------------------

    def __neg__(self) -> "Enclosure":
        return Enclosure(-self.hi, -self.lo)

    def __abs__(self) -> "Enclosure":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Enclosure(0, max(-self.lo, self.hi))

    def __add__(self, other) -> "Enclosure":
        other = _as_enclosure(other)
        return Enclosure(self.lo + other.lo, self.hi + other.hi)

    __radd__ = __add__

    def __sub__(self, other) -> "Enclosure":
        return self + (-_as_enclosure(other))

    def __rsub__(self, other) -> "Enclosure":
        return _as_enclosure(other) + (-self)

    def __mul__(self, other) -> "Enclosure":
        other = _as_enclosure(other)
        prods = (self.lo * other.lo, self.lo * other.hi,
                 self.hi * other.lo, self.hi * other.hi)
        return Enclosure(min(prods), max(prods))

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Enclosure":
        if not isinstance(n, int) or n < 0:
            raise ValueError("Enclosure powers are nonnegative integers only")
        out = Enclosure(1, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __repr__(self) -> str:
        return f"Enclosure({float(self.lo)!r}, {float(self.hi)!r}, width={float(self.width):.3g})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Enclosure) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def as_floats(self) -> tuple:
        return (float(self.lo), float(self.hi))


def _as_enclosure(x) -> Enclosure:
    if isinstance(x, Enclosure):
        return x
    if isinstance(x, (int, Fraction)):
        return Enclosure(x, x)
    raise TypeError(f"cannot interpret {type(x).__name__} as an Enclosure")


# ---------------------------------------------------------------------------
# mpmath interval-context bridge
# ---------------------------------------------------------------------------

def ivctx(bits: int) -> MPIntervalContext:
    """A fresh outward-rounding interval context at the given precision.

    Fresh instances keep concurrent computations (process pools, nested
    escalation loops) from fighting over a global context's precision.
    """
    ctx = MPIntervalContext()
    ctx.prec = int(bits) + 4  # a few guard bits over the caller's request
    return ctx


def mpf_tuple_to_fraction(t) -> Fraction:
    """Exact value of a raw mpf tuple (sign, man, exp, bc); mpf values are dyadic."""
    sign, man, exp, _bc = t
    man = int(man)
    if man == 0:
        if exp == 0:
            return Fraction(0)
        raise ValueError(f"non-finite mpf value {t!r} has no rational representation")
    val = Fraction(man) * (Fraction(2) ** int(exp))
    return -val if sign else val


def iv_to_enclosure(x) -> Enclosure:
    """Exact endpoints of an mpmath interval value."""
    a, b = x._mpi_
    return Enclosure(mpf_tuple_to_fraction(a), mpf_tuple_to_fraction(b))


def iv_from_fraction(ctx: MPIntervalContext, fr: RationalLike):
    """Interval enclosing a rational exactly (numerator/denominator both converted
    with outward rounding, then divided with outward rounding)."""
    fr = Fraction(fr)
    if fr.denominator == 1:
        return ctx.mpf(fr.numerator)
    return ctx.mpf(fr.numerator) / ctx.mpf(fr.denominator)


def iv_from_enclosure(ctx: MPIntervalContext, enc: Enclosure):
    """Interval (in ctx) containing the whole enclosure."""
    lo = iv_from_fraction(ctx, enc.lo)
    hi = iv_from_fraction(ctx, enc.hi)
    return ctx.mpf([lo.a, hi.b])
