"""Exact scalar arithmetic and algebraic-number machinery.

This module owns every number the rest of the package computes with: exact
rationals, and real algebraic numbers represented by an integer-coefficient
minimal polynomial together with an isolating rational interval.  On top of that
representation it provides

* certified enclosures at arbitrary precision (:meth:`ExactNumber.approx`),
* Pisot detection with rigorous conjugate-modulus enclosures (:func:`pisot_check`),
* exact integer power sums of polynomial roots (:func:`trace_power_sum`),
* the certified gap between a power sum and the dominant-root power
  (:func:`conjugate_defect`), and
* the rationality decision for theta = -log b / log lambda (:func:`theta_decide`),
  with machine-checkable irrationality witnesses where they exist.

Polynomials are integer coefficient lists, constant term first, throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import mpmath
import sympy

from .errors import (
    InputError,
    PrecisionCapError,
    ReduciblePolynomialError,
    UndecidableError,
)
from .precision import (
    Enclosure,
    escalate,
    iv_from_enclosure,
    iv_to_enclosure,
    ivctx,
    precision_cap,
)

_X = sympy.Symbol("x")


# ---------------------------------------------------------------------------
# integer/rational polynomial helpers (constant term first)
# ---------------------------------------------------------------------------

def normalize_poly(coeffs: Sequence[int]) -> Tuple[int, ...]:
    """Validate and trim an integer coefficient list (constant first)."""
    out = []
    for c in coeffs:
        try:
            f = Fraction(c)
        except (TypeError, ValueError) as exc:
            raise InputError(f"polynomial coefficients must be integers: {coeffs!r}") from exc
        if f.denominator != 1:
            raise InputError(f"polynomial coefficients must be integers, got {c!r}")
        out.append(int(f))
    while out and out[-1] == 0:
        out.pop()
    if len(out) < 2:
        raise InputError("polynomial must be nonconstant")
    return tuple(out)


def poly_degree(coeffs: Sequence[int]) -> int:
    return len(coeffs) - 1


def poly_eval(coeffs: Sequence, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def poly_eval_interval(coeffs: Sequence, lo: Fraction, hi: Fraction) -> Tuple[Fraction, Fraction]:
    """Exact interval Horner: bounds of p over [lo, hi] (not tight, but rigorous)."""
    alo = ahi = Fraction(0)
    for c in reversed(coeffs):
        prods = (alo * lo, alo * hi, ahi * lo, ahi * hi)
        alo, ahi = min(prods) + c, max(prods) + c
    return alo, ahi


def poly_derivative(coeffs: Sequence) -> Tuple:
    return tuple(i * c for i, c in enumerate(coeffs) if i > 0) or (0, 0)


def make_primitive(coeffs: Sequence[int]) -> Tuple[int, ...]:
    """Divide out the integer content and make the leading coefficient positive."""
    g = 0
    for c in coeffs:
        g = math.gcd(g, c)
    out = [c // g for c in coeffs]
    if out[-1] < 0:
        out = [-c for c in out]
    return tuple(out)


def _to_sympy(coeffs: Sequence[int]) -> sympy.Poly:
    return sympy.Poly(list(reversed(coeffs)), _X, domain="QQ")


def _from_sympy(poly: sympy.Poly) -> Tuple[int, ...]:
    coeffs = [sympy.Integer(c) for c in reversed(poly.all_coeffs())]
    return tuple(int(c) for c in coeffs)


def check_irreducible(coeffs: Sequence[int]) -> None:
    """Raise :class:`ReduciblePolynomialError` (naming a factor) unless irreducible over Q."""
    poly = _to_sympy(make_primitive(coeffs))
    _, factors = poly.factor_list()
    if len(factors) == 1 and factors[0][1] == 1:
        return
    fac, mult = factors[0]
    if len(factors) == 1 and mult > 1:
        witness = fac
    else:
        witness = min((f for f, _ in factors), key=lambda f: f.degree())
    witness_coeffs = _from_sympy(sympy.Poly(witness, _X))
    raise ReduciblePolynomialError(
        f"polynomial {list(coeffs)} is reducible over Q; factor: {list(witness_coeffs)}",
        factor=list(witness_coeffs))


def count_real_roots(coeffs: Sequence[int], lo: Fraction, hi: Fraction) -> int:
    return _to_sympy(coeffs).count_roots(sympy.Rational(lo), sympy.Rational(hi))


# ---------------------------------------------------------------------------
# the number field Q(alpha)
# ---------------------------------------------------------------------------

class NumberField:
    """Q(alpha) for alpha the unique real root of an irreducible integer polynomial
    inside a given isolating interval.

    Elements are coefficient tuples (length = degree) of Fractions, representing
    sum(c_j * alpha**j).  All arithmetic is exact; signs and enclosures are decided
    by refining the root interval with exact bisection.
    """

    def __init__(self, coeffs: Sequence[int], interval: Tuple[Fraction, Fraction]):
        coeffs = normalize_poly(coeffs)
        coeffs = make_primitive(coeffs)
        if poly_degree(coeffs) < 2:
            raise InputError("NumberField needs degree >= 2 (degree 1 is rational)")
        check_irreducible(coeffs)
        lo, hi = Fraction(interval[0]), Fraction(interval[1])
        if not lo < hi:
            raise InputError(f"empty isolating interval [{lo}, {hi}]")
        if count_real_roots(coeffs, lo, hi) != 1:
            raise InputError(
                f"interval [{lo}, {hi}] does not isolate exactly one real root of {list(coeffs)}")
        self.coeffs = coeffs
        self.degree = poly_degree(coeffs)
        self.interval = (lo, hi)  # as given; refinement happens on a working copy
        # irreducible of degree >= 2 has no rational roots, so endpoint values are nonzero
        self._lo, self._hi = lo, hi
        self._sign_lo = 1 if poly_eval(coeffs, lo) > 0 else -1

    def __repr__(self):
        return f"NumberField({list(self.coeffs)}, [{self._lo}, {self._hi}])"

    def __eq__(self, other):
        return (isinstance(other, NumberField) and self.coeffs == other.coeffs
                and self.same_root(other))

    def same_root(self, other: "NumberField") -> bool:
        if not isinstance(other, NumberField) or self.coeffs != other.coeffs:
            return False
        lo = max(self._lo, other._lo)
        hi = min(self._hi, other._hi)
        if lo >= hi:
            return False
        return count_real_roots(self.coeffs, lo, hi) == 1

    # -- root refinement -------------------------------------------------

    def _bisect(self) -> None:
        mid = (self._lo + self._hi) / 2
        val = poly_eval(self.coeffs, mid)
        # val == 0 impossible: no rational roots
        if (1 if val > 0 else -1) == self._sign_lo:
            self._lo = mid
        else:
            self._hi = mid

    def root_enclosure(self, bits: int) -> Enclosure:
        """Isolating interval refined to width <= 2**-bits."""
        target = Fraction(1, 1 << int(bits))
        while self._hi - self._lo > target:
            self._bisect()
        return Enclosure(self._lo, self._hi)

    # -- element arithmetic ----------------------------------------------

    def zero(self) -> Tuple[Fraction, ...]:
        return (Fraction(0),) * self.degree

    def lift(self, fr: Fraction) -> Tuple[Fraction, ...]:
        return (Fraction(fr),) + (Fraction(0),) * (self.degree - 1)

    def reduce(self, coeffs: Sequence[Fraction]) -> Tuple[Fraction, ...]:
        """Reduce a polynomial in alpha (any length) mod the minimal polynomial."""
        d = self.degree
        lead = Fraction(self.coeffs[-1])
        work = [Fraction(c) for c in coeffs]
        for k in range(len(work) - 1, d - 1, -1):
            c = work[k]
            if c:
                factor = c / lead
                for j in range(d + 1):
                    work[k - d + j] -= factor * self.coeffs[j]
            work.pop()
        work.extend([Fraction(0)] * (d - len(work)))
        return tuple(work)

    def add(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def neg(self, a):
        return tuple(-x for x in a)

    def mul(self, a, b) -> Tuple[Fraction, ...]:
        prod = [Fraction(0)] * (2 * self.degree - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    if y:
                        prod[i + j] += x * y
        return self.reduce(prod)

    def inverse(self, a) -> Tuple[Fraction, ...]:
        """Extended Euclid in Q[x] modulo the minimal polynomial."""
        if all(c == 0 for c in a):
            raise ZeroDivisionError("division by zero field element")
        r0 = [Fraction(c) for c in self.coeffs]
        r1 = list(a)
        while r1 and r1[-1] == 0:
            r1.pop()
        s0, s1 = [Fraction(0)], [Fraction(1)]
        while True:
            if not r1:
                raise ArithmeticError("gcd degenerated; minimal polynomial not irreducible?")
            if len(r1) == 1:
                inv = s1
                scale = 1 / r1[0]
                return self.reduce([c * scale for c in inv])
            q, r = _poly_divmod(r0, r1)
            r0, r1 = r1, r
            s0, s1 = s1, _poly_sub(s0, _poly_mul(q, s1))
            while r1 and r1[-1] == 0:
                r1.pop()

    def pow(self, a, n: int):
        if n < 0:
            return self.pow(self.inverse(a), -n)
        out = self.lift(Fraction(1))
        base = tuple(a)
        while n:
            if n & 1:
                out = self.mul(out, base)
            base = self.mul(base, base)
            n >>= 1
        return out

    # -- certified evaluation --------------------------------------------

    def element_enclosure(self, coeffs, bits: int) -> Enclosure:
        """Enclosure of sum(c_j alpha^j) of width <= 2**-bits (exact rational interval
        Horner over the refined root interval)."""
        target = Fraction(1, 1 << int(bits))
        root_bits = max(int(bits), 8)
        for _ in range(256):
            enc = self.root_enclosure(root_bits)
            lo, hi = poly_eval_interval(coeffs, enc.lo, enc.hi)
            if hi - lo <= target:
                return Enclosure(lo, hi)
            root_bits += max(16, int(bits) // 2)
            if root_bits > precision_cap() + 64:
                raise PrecisionCapError(
                    "element enclosure did not converge", bits_used=root_bits)
        raise PrecisionCapError("element enclosure did not converge", bits_used=root_bits)

    def sign_of(self, coeffs) -> int:
        """Exact sign of a field element (0 only for the exact zero element)."""
        if all(c == 0 for c in coeffs):
            return 0
        for bits in escalate(32, what="field element sign"):
            enc = self.root_enclosure(bits)
            lo, hi = poly_eval_interval(coeffs, enc.lo, enc.hi)
            if lo > 0:
                return 1
            if hi < 0:
                return -1
        raise AssertionError("unreachable")


def _poly_divmod(a: List[Fraction], b: List[Fraction]):
    a = list(a)
    q = [Fraction(0)] * max(1, len(a) - len(b) + 1)
    inv_lead = 1 / b[-1]
    for k in range(len(a) - len(b), -1, -1):
        c = a[k + len(b) - 1] * inv_lead
        q[k] = c
        if c:
            for j in range(len(b)):
                a[k + j] -= c * b[j]
    return q, a[:len(b) - 1]


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _poly_sub(a, b):
    n = max(len(a), len(b))
    a = list(a) + [Fraction(0)] * (n - len(a))
    return [x - (b[i] if i < len(b) else 0) for i, x in enumerate(a)]


def int_pow_mod(n: int, poly: Sequence[int]) -> Tuple[int, ...]:
    """x**n mod a monic integer polynomial — exact integer coefficients.

    This is how large powers of an algebraic integer are represented without any
    floating-point loss: beta**n = sum(a_j beta**j) with the returned integers a_j.
    """
    poly = normalize_poly(poly)
    if poly[-1] != 1:
        raise InputError("int_pow_mod requires a monic polynomial")
    d = poly_degree(poly)

    def reduce_int(work: List[int]) -> List[int]:
        for k in range(len(work) - 1, d - 1, -1):
            c = work[k]
            if c:
                for j in range(d + 1):
                    work[k - d + j] -= c * poly[j]
            work.pop()
        work.extend([0] * (d - len(work)))
        return work

    result = [1] + [0] * (d - 1)
    base = reduce_int([0, 1] + [0] * max(0, d - 2)) if d >= 2 else reduce_int([0, 1])
    n = int(n)
    while n:
        if n & 1:
            result = reduce_int(_int_poly_mul(result, base))
        base = reduce_int(_int_poly_mul(base, base))
        n >>= 1
    return tuple(result)


def _int_poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


# ---------------------------------------------------------------------------
# ExactNumber
# ---------------------------------------------------------------------------

Number = Union[int, Fraction, "ExactNumber"]


class ExactNumber:
    """An exact real scalar: a rational, or an element of a single real algebraic
    number field Q(alpha).

    Arithmetic between algebraic numbers is supported when they live in the same
    field (same minimal polynomial, same isolated root); mixing generators is
    rejected rather than silently approximated.
    """

    __slots__ = ("_frac", "_field", "_coeffs")

    def __init__(self, value: Union[int, str, Fraction, "ExactNumber"] = 0):
        if isinstance(value, ExactNumber):
            self._frac, self._field, self._coeffs = value._frac, value._field, value._coeffs
            return
        self._frac = Fraction(value)
        self._field = None
        self._coeffs = None

    # -- constructors ----------------------------------------------------

    @classmethod
    def rational(cls, value) -> "ExactNumber":
        return cls(Fraction(value))

    @classmethod
    def algebraic(cls, poly: Sequence[int], interval: Tuple) -> "ExactNumber":
        """The unique real root of ``poly`` in ``interval``.

        Degree-1 input collapses to the exact rational root.
        """
        coeffs = normalize_poly(poly)
        if poly_degree(coeffs) == 1:
            root = Fraction(-coeffs[0], coeffs[1])
            lo, hi = Fraction(interval[0]), Fraction(interval[1])
            if not lo <= root <= hi:
                raise InputError(f"root {root} of degree-1 polynomial not in [{lo}, {hi}]")
            return cls(root)
        fld = NumberField(coeffs, (Fraction(interval[0]), Fraction(interval[1])))
        gen = (Fraction(0), Fraction(1)) + (Fraction(0),) * (fld.degree - 2)
        return cls._make(fld, gen)

    @classmethod
    def _make(cls, fld: Optional[NumberField], coeffs) -> "ExactNumber":
        if fld is not None and all(c == 0 for c in coeffs[1:]):
            return cls(coeffs[0])
        return cls._raw(fld, coeffs)

    @classmethod
    def _raw(cls, fld: NumberField, coeffs) -> "ExactNumber":
        self = object.__new__(cls)
        self._frac = None
        self._field = fld
        self._coeffs = tuple(Fraction(c) for c in coeffs)
        return self

    # -- serialization (CLI/config exchange format) ----------------------

    @classmethod
    def from_json(cls, obj) -> "ExactNumber":
        """Parse {"rational": "num/den"} or
        {"algebraic": {"poly": [...], "interval": ["lo", "hi"]}} (or a bare
        rational string/int)."""
        if isinstance(obj, (int, str)):
            try:
                return cls(Fraction(obj))
            except (ValueError, ZeroDivisionError) as exc:
                raise InputError(f"cannot parse exact number from {obj!r}") from exc
        if isinstance(obj, dict):
            if set(obj) == {"rational"}:
                return cls.from_json(obj["rational"])
            if set(obj) == {"algebraic"}:
                spec_ = obj["algebraic"]
                try:
                    poly = spec_["poly"]
                    lo, hi = spec_["interval"]
                except (KeyError, TypeError, ValueError) as exc:
                    raise InputError(f"malformed algebraic number spec: {obj!r}") from exc
                return cls.algebraic(poly, (Fraction(str(lo)), Fraction(str(hi))))
        raise InputError(f"cannot parse exact number from {obj!r}")

    def to_json(self):
        if self.is_rational:
            return {"rational": f"{self._frac.numerator}/{self._frac.denominator}"}
        lo, hi = self._field.interval
        return {"algebraic": {
            "poly": [int(c) for c in self._field.coeffs],
            "interval": [str(lo), str(hi)],
            "coeffs": [f"{c.numerator}/{c.denominator}" for c in self._coeffs],
        }}

    # -- basic queries ---------------------------------------------------

    @property
    def is_rational(self) -> bool:
        return self._frac is not None

    @property
    def as_fraction(self) -> Fraction:
        if self._frac is None:
            raise InputError("not a rational number")
        return self._frac

    @property
    def field(self) -> Optional[NumberField]:
        return self._field

    @property
    def coeffs(self) -> Optional[Tuple[Fraction, ...]]:
        return self._coeffs

    def approx(self, precision_bits: int = 64) -> Enclosure:
        """Certified enclosure of width <= 2**-precision_bits (width 0 for rationals)."""
        if self.is_rational:
            return Enclosure(self._frac, self._frac)
        return self._field.element_enclosure(self._coeffs, precision_bits)

    def sign(self) -> int:
        if self.is_rational:
            return (self._frac > 0) - (self._frac < 0)
        return self._field.sign_of(self._coeffs)

    def __float__(self) -> float:
        return float(self.approx(64).mid)

    def __bool__(self) -> bool:
        return self.sign() != 0

    def __repr__(self) -> str:
        if self.is_rational:
            return f"ExactNumber({self._frac})"
        return f"ExactNumber(~{float(self):.12g}, deg {self._field.degree})"

    # -- arithmetic ------------------------------------------------------

    def _coerce(self, other) -> Tuple["ExactNumber", "ExactNumber"]:
        if not isinstance(other, ExactNumber):
            try:
                other = ExactNumber(Fraction(other))
            except (TypeError, ValueError):
                return NotImplemented, NotImplemented
        a, b = self, other
        if a.is_rational and b.is_rational:
            return a, b
        if a.is_rational:
            a = ExactNumber._raw(b._field, b._field.lift(a._frac))
        elif b.is_rational:
            b = ExactNumber._raw(a._field, a._field.lift(b._frac))
        elif not a._field.same_root(b._field):
            raise InputError(
                "arithmetic between algebraic numbers from different fields is not supported")
        return a, b

    def __add__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        if a.is_rational:
            return ExactNumber(a._frac + b._frac)
        return ExactNumber._make(a._field, a._field.add(a._coeffs, b._coeffs))

    __radd__ = __add__

    def __neg__(self):
        if self.is_rational:
            return ExactNumber(-self._frac)
        return ExactNumber._make(self._field, self._field.neg(self._coeffs))

    def __sub__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        return a + (-b)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        if a.is_rational:
            return ExactNumber(a._frac * b._frac)
        return ExactNumber._make(a._field, a._field.mul(a._coeffs, b._coeffs))

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        if a.is_rational:
            return ExactNumber(a._frac / b._frac)
        return ExactNumber._make(a._field, a._field.mul(a._coeffs, a._field.inverse(b._coeffs)))

    def __rtruediv__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        return b / a

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise InputError("ExactNumber powers must be integers")
        if self.is_rational:
            return ExactNumber(self._frac ** n)
        return ExactNumber._make(self._field, self._field.pow(self._coeffs, n))

    # -- comparisons (exact) ---------------------------------------------

    def _cmp(self, other) -> int:
        a, b = self._coerce(other)
        if a is NotImplemented:
            raise TypeError(f"cannot compare ExactNumber with {type(other).__name__}")
        return (a - b).sign()

    def __eq__(self, other):
        try:
            return self._cmp(other) == 0
        except TypeError:
            return NotImplemented

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __hash__(self):
        if self.is_rational:
            return hash(self._frac)
        return hash((self._field.coeffs, self._coeffs))


def as_exact(x) -> ExactNumber:
    return x if isinstance(x, ExactNumber) else ExactNumber(Fraction(x))


def minimal_polynomial_of(x: ExactNumber) -> Tuple[int, ...]:
    """Integer minimal polynomial (constant first, primitive, positive leading) of an
    exact number.  Field elements that are not the generator go through sympy."""
    x = as_exact(x)
    if x.is_rational:
        fr = x.as_fraction
        return make_primitive((-fr.numerator, fr.denominator))
    fld = x.field
    gen = (Fraction(0), Fraction(1)) + (Fraction(0),) * (fld.degree - 2)
    if x.coeffs == gen:
        return fld.coeffs
    # locate the generator among sympy's exact real roots, then take the minimal
    # polynomial of the element expressed in it
    roots = sympy.real_roots(_to_sympy(fld.coeffs))
    enc = fld.root_enclosure(32)
    match = None
    for r in roots:
        if sympy.Rational(enc.lo) <= r <= sympy.Rational(enc.hi):
            match = r
            break
    if match is None:  # pragma: no cover - isolation guarantees a match
        raise InputError("could not locate field generator among real roots")
    expr = sum(sympy.Rational(c) * match ** j for j, c in enumerate(x.coeffs))
    mp = sympy.minimal_polynomial(expr, _X, polys=True)
    return make_primitive(_from_sympy(mp))


# ---------------------------------------------------------------------------
# Pisot detection
# ---------------------------------------------------------------------------

@dataclass
class PisotReport:
    """Certified classification of the distinguished (largest-modulus) root."""
    is_algebraic_integer: bool
    degree: int
    conjugate_moduli: List[Enclosure]
    is_pisot: bool
    root_enclosure: Enclosure
    precision_bits: int = 0

    def as_dict(self):
        return {
            "is_algebraic_integer": self.is_algebraic_integer,
            "degree": self.degree,
            "conjugate_moduli": [[str(m.lo), str(m.hi)] for m in self.conjugate_moduli],
            "is_pisot": self.is_pisot,
            "root_enclosure": [str(self.root_enclosure.lo), str(self.root_enclosure.hi)],
            "precision_bits": self.precision_bits,
        }


def _civ_polyval(ctx, coeffs, zre, zim):
    """Complex interval Horner at a point with interval real/imag parts."""
    acc_re = ctx.mpf(0)
    acc_im = ctx.mpf(0)
    for c in reversed(coeffs):
        new_re = acc_re * zre - acc_im * zim + ctx.mpf(int(c))
        new_im = acc_re * zim + acc_im * zre
        acc_re, acc_im = new_re, new_im
    return acc_re, acc_im


def _civ_modulus(ctx, re, im) -> Enclosure:
    m2 = re * re + im * im
    mod = ctx.sqrt(m2)
    enc = iv_to_enclosure(mod)
    return Enclosure(max(Fraction(0), enc.lo), enc.hi)


def pisot_check(poly: Sequence[int]) -> PisotReport:
    """Certified Pisot verdict for the distinguished root of an irreducible polynomial.

    Roots are approximated numerically and then certified by disks of radius
    d*|p(z)/p'(z)| around each approximation (each such disk provably contains a
    root; pairwise-disjoint disks therefore contain exactly one root each).
    Precision escalates until every conjugate-modulus enclosure avoids 1, or the
    cap aborts with an Undecidable error.
    """
    coeffs = normalize_poly(poly)
    prim = make_primitive(coeffs)
    check_irreducible(coeffs)
    degree = poly_degree(prim)
    # the root is an algebraic integer iff the primitive minimal polynomial is monic
    monic = prim[-1] == 1

    if degree == 1:
        root = Fraction(-coeffs[0], coeffs[1])
        return PisotReport(
            is_algebraic_integer=monic,
            degree=1,
            conjugate_moduli=[],
            is_pisot=bool(monic and root > 1),
            root_enclosure=Enclosure(root, root),
            precision_bits=0,
        )

    dpoly = poly_derivative(prim)
    lead_first = list(reversed(prim))
    try:
        for bits in escalate(64, what="pisot root certification"):
            with mpmath.workprec(bits + 32):
                try:
                    roots = mpmath.polyroots([mpmath.mpf(c) for c in lead_first],
                                             maxsteps=200, extraprec=bits)
                except (mpmath.libmp.NoConvergence, ZeroDivisionError):
                    continue
            ctx = ivctx(bits)
            centers = []
            radii = []
            ok = True
            for z in roots:
                z = mpmath.mpc(z)
                zre = ctx.mpf(mpmath.mpf(z.real))
                zim = ctx.mpf(mpmath.mpf(z.imag))
                pre, pim = _civ_polyval(ctx, prim, zre, zim)
                dre, dim = _civ_polyval(ctx, dpoly, zre, zim)
                pmod = _civ_modulus(ctx, pre, pim)
                dmod = _civ_modulus(ctx, dre, dim)
                if dmod.lo <= 0:
                    ok = False
                    break
                radius = Fraction(degree) * pmod.hi / dmod.lo
                centers.append((iv_to_enclosure(zre).mid, iv_to_enclosure(zim).mid,
                                _civ_modulus(ctx, zre, zim)))
                radii.append(radius)
            if not ok:
                continue
            # pairwise disjoint disks => exactly one root per disk
            disjoint = True
            for i in range(degree):
                for j in range(i + 1, degree):
                    dx = centers[i][0] - centers[j][0]
                    dy = centers[i][1] - centers[j][1]
                    if dx * dx + dy * dy <= (radii[i] + radii[j]) ** 2:
                        disjoint = False
                        break
                if not disjoint:
                    break
            if not disjoint:
                continue
            moduli = []
            for (cx, cy, cmod), r in zip(centers, radii):
                moduli.append(Enclosure(max(Fraction(0), cmod.lo - r), cmod.hi + r))
            if any(Fraction(1) in m for m in moduli):
                continue  # some modulus enclosure straddles 1: escalate
            outside = [k for k, m in enumerate(moduli) if m.lo > 1]
            # distinguished root: largest modulus (the candidate dominant root)
            dist = max(range(degree), key=lambda k: moduli[k].hi)
            conj = [moduli[k] for k in range(degree) if k != dist]
            cx, cy, _ = centers[dist]
            if abs(cy) > radii[dist]:
                # dominant root certified non-real: report its modulus enclosure
                root_enc = moduli[dist]
            else:
                root_enc = Enclosure(cx - radii[dist], cx + radii[dist])
            # exactly one root outside the unit circle is necessarily real
            # (non-real roots pair with conjugates of equal modulus); Pisot
            # additionally requires it positive.
            is_pisot = bool(monic and len(outside) == 1 and outside[0] == dist
                            and root_enc.lo > 1)
            if len(outside) == 1 and outside[0] == dist and root_enc.lo <= 1:
                if cx - radii[dist] <= -1:
                    is_pisot = False  # real root < -1: resolved, not Pisot
                else:
                    continue  # real-part enclosure too loose: escalate
            return PisotReport(
                is_algebraic_integer=monic,
                degree=degree,
                conjugate_moduli=conj,
                is_pisot=is_pisot,
                root_enclosure=root_enc,
                precision_bits=bits,
            )
    except PrecisionCapError as exc:
        raise UndecidableError(
            f"pisot_check: could not certify root moduli of {list(coeffs)} below the "
            f"precision cap (roots too close to the unit circle?)",
            bits_used=exc.bits_used) from exc
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# power sums and the conjugate defect
# ---------------------------------------------------------------------------

def trace_power_sum(poly: Sequence[int], l: int, q: int) -> int:
    """Exact integer power sum s_{l*q} of all roots of a monic irreducible polynomial.

    Newton's identities / the companion-matrix linear recurrence, in pure integer
    arithmetic — no floats anywhere.
    """
    coeffs = normalize_poly(poly)
    if coeffs[-1] != 1:
        raise InputError("trace_power_sum requires a monic polynomial "
                         "(power sums of non-algebraic-integers need not be integral)")
    check_irreducible(coeffs)
    if l < 1 or q < 1:
        raise InputError("l and q must be positive integers")
    n = l * q
    d = poly_degree(coeffs)
    a = coeffs  # a[j] = coefficient of x^j, a[d] = 1
    s = [d]  # s_0 = number of roots
    for k in range(1, n + 1):
        if k <= d:
            val = -k * a[d - k]
            for j in range(1, k):
                val -= a[d - j] * s[k - j]
        else:
            val = 0
            for j in range(1, d + 1):
                val -= a[d - j] * s[k - j]
        s.append(val)
    return int(s[n])


def conjugate_defect(poly: Sequence[int], l: int, q: int,
                     precision_bits: int = 64) -> Enclosure:
    """Certified enclosure of |s_{lq} - beta**(lq)| = |sum of conjugate powers|.

    beta**(lq) is computed exactly in the number field (integer coefficients via
    x**n mod poly), then evaluated over the certified root interval; the result is
    an enclosure of the defect, which for a Pisot beta lies in (0, 1) for all large
    enough l.
    """
    coeffs = normalize_poly(poly)
    report = pisot_check(coeffs)
    if not report.is_pisot:
        raise InputError(f"conjugate_defect requires a Pisot polynomial; got {list(coeffs)}")
    n = int(l) * int(q)
    if n < 1:
        raise InputError("l and q must be positive integers")
    s_n = trace_power_sum(coeffs, l, q)
    if report.degree == 1:
        return Enclosure(0, 0)
    fld = NumberField(coeffs, (report.root_enclosure.lo, report.root_enclosure.hi))
    power = int_pow_mod(n, coeffs)
    elem = [Fraction(-c) for c in power]
    elem[0] += s_n  # s_n - beta^n as a field element
    enc = fld.element_enclosure(tuple(elem), precision_bits)
    return abs(enc)


# ---------------------------------------------------------------------------
# theta = -log b / log lambda
# ---------------------------------------------------------------------------

def theta_value(b: int, lam, precision_bits: int = 64) -> Enclosure:
    """Certified enclosure of theta = -log b / log lambda, width <= 2**-precision_bits."""
    lam = as_exact(lam)
    _require_unit_interval(b, lam)
    target = Fraction(1, 1 << int(precision_bits))
    for bits in escalate(max(64, precision_bits + 16), what="theta enclosure"):
        ctx = ivctx(bits)
        lam_iv = iv_from_enclosure(ctx, lam.approx(bits))
        theta_iv = -ctx.log(ctx.mpf(int(b))) / ctx.log(lam_iv)
        enc = iv_to_enclosure(theta_iv)
        if enc.width <= target:
            return enc
    raise AssertionError("unreachable")


def _require_unit_interval(b: int, lam: ExactNumber) -> None:
    if not isinstance(b, int) or b < 2:
        raise InputError(f"base must be an integer >= 2, got {b!r}")
    if not (lam > 0 and lam < 1):
        raise InputError("lambda must lie in (0, 1) (normalize the IFS first)")


@dataclass
class ThetaDecision:
    """Outcome of the rationality decision for theta = -log b / log lambda.

    verdict is one of "rational", "irrational-proven", "undecided".
    For "rational", theta = p/q in lowest terms, witnessed by the exact identity
    lambda**p * b**q == 1.  For "irrational-proven", ``witness`` is a
    machine-checkable certificate (unique factorization, or the Pisot
    trace-integrality argument).
    """
    verdict: str
    theta_enclosure: Enclosure
    p: Optional[int] = None
    q: Optional[int] = None
    witness: Optional[dict] = None
    search_bound: Optional[int] = None

    @property
    def is_rational(self) -> bool:
        return self.verdict == "rational"

    @property
    def is_irrational_proven(self) -> bool:
        return self.verdict == "irrational-proven"

    def as_dict(self):
        out = {
            "verdict": self.verdict,
            "theta_enclosure": [str(self.theta_enclosure.lo), str(self.theta_enclosure.hi)],
        }
        if self.is_rational:
            out["p"], out["q"] = self.p, self.q
        if self.witness is not None:
            out["witness"] = self.witness
        if self.search_bound is not None:
            out["search_bound"] = self.search_bound
        return out


def _rational_theta_decide(b: int, lam_frac: Fraction) -> Tuple[str, Optional[Tuple[int, int]], Optional[dict]]:
    """Fully decide rationality of theta for rational lambda = u/v by unique
    factorization: theta = p/q iff v**p == u**p * b**q, which forces u = 1 and
    proportional prime-exponent vectors for v and b."""
    u, v = lam_frac.numerator, lam_frac.denominator
    if u > 1:
        return ("irrational-proven", None, {
            "type": "unique-factorization",
            "reason": f"lambda = {u}/{v} with numerator > 1: lambda**p * b**q = 1 "
                      f"would force {u}**p to divide 1",
        })
    fv = sympy.factorint(v)
    fb = sympy.factorint(b)
    if set(fv) != set(fb):
        return ("irrational-proven", None, {
            "type": "unique-factorization",
            "reason": f"{v} and {b} have different prime supports "
                      f"({sorted(fv)} vs {sorted(fb)})",
        })
    ratios = {Fraction(fb[p], fv[p]) for p in fv}
    if len(ratios) != 1:
        return ("irrational-proven", None, {
            "type": "unique-factorization",
            "reason": f"prime-exponent vectors of {v} and {b} are not proportional",
        })
    ratio = ratios.pop()
    p, q = ratio.numerator, ratio.denominator
    assert v ** p == b ** q
    return ("rational", (p, q), None)


def _algebraic_rational_power(fld_coeffs: Sequence[int], b: int,
                              search_bound: int) -> Optional[Tuple[int, int]]:
    """Search p <= bound with lambda**p rational and equal to b**-q: exact reduction
    of x**p modulo the (possibly non-monic) minimal polynomial of lambda."""
    coeffs = [Fraction(c) for c in fld_coeffs]
    d = len(coeffs) - 1
    tmp_field_reduce = _make_reducer(coeffs, d)
    cur = [Fraction(0), Fraction(1)] + [Fraction(0)] * max(0, d - 2)
    cur = tmp_field_reduce(cur)
    gen = list(cur)
    for p in range(1, search_bound + 1):
        if p > 1:
            cur = tmp_field_reduce(_poly_mul(cur, gen))
        if all(c == 0 for c in cur[1:]):
            w = cur[0]
            if 0 < w < 1 and w.numerator == 1:
                den = w.denominator
                q = round(math.log(den, b))
                for qq in {q - 1, q, q + 1}:
                    if qq >= 1 and b ** qq == den:
                        g = math.gcd(p, qq)
                        return (p // g, qq // g)
    return None


def _make_reducer(coeffs: List[Fraction], d: int):
    def reduce_frac(work: List[Fraction]) -> List[Fraction]:
        work = list(work)
        lead = coeffs[-1]
        for k in range(len(work) - 1, d - 1, -1):
            c = work[k]
            if c:
                factor = c / lead
                for j in range(d + 1):
                    work[k - d + j] -= factor * coeffs[j]
            work.pop()
        work.extend([Fraction(0)] * (d - len(work)))
        return work
    return reduce_frac


def theta_decide(b: int, lam, search_bound: int = 64) -> ThetaDecision:
    """Decide (when possible) whether theta = -log b / log lambda is rational.

    * rational lambda: fully decidable via prime factorization (the search bound
      plays no role there);
    * algebraic lambda: exact search for lambda**p in Q (p <= search_bound) decides
      the rational case; the reciprocal-Pisot trace argument proves irrationality
      when it applies; otherwise Undecided.
    """
    lam = as_exact(lam)
    _require_unit_interval(b, lam)
    theta_enc = theta_value(b, lam, 64)

    if lam.is_rational:
        verdict, pq, witness = _rational_theta_decide(b, lam.as_fraction)
        if verdict == "rational":
            p, q = pq
            return ThetaDecision("rational", theta_enc, p=p, q=q,
                                 witness={"type": "exact-power",
                                          "identity": f"lambda**{p} * {b}**{q} == 1"})
        return ThetaDecision("irrational-proven", theta_enc, witness=witness)

    min_poly = minimal_polynomial_of(lam)
    pq = _algebraic_rational_power(min_poly, b, search_bound)
    if pq is not None:
        p, q = pq
        return ThetaDecision("rational", theta_enc, p=p, q=q,
                             witness={"type": "exact-power",
                                      "identity": f"lambda**{p} * {b}**{q} == 1"})

    # reciprocal-Pisot witness: if 1/lambda is a Pisot number, rational theta would
    # make some lambda**-m a positive integer, but the trace identity pins
    # lambda**-m within distance <1 of an integer without reaching it.
    recip = make_primitive(tuple(reversed(min_poly)))
    if recip[-1] == 1:
        try:
            report = pisot_check(recip)
        except (UndecidableError, ReduciblePolynomialError):
            report = None
        if report is not None and report.is_pisot and report.degree >= 2:
            total = Fraction(0)
            l0 = None
            for l in range(1, 10_001):
                total = sum((m.hi ** l for m in report.conjugate_moduli), Fraction(0))
                if total < 1:
                    l0 = l
                    break
            if l0 is not None:
                witness = {
                    "type": "pisot-trace",
                    "pisot_poly": [int(c) for c in recip],
                    "l0": l0,
                    "conjugate_power_sum_bound": f"{total.numerator}/{total.denominator}",
                    "note": ("for every l >= l0 the power sum of 1/lambda's roots is an "
                             "integer whose distance to lambda**-l lies strictly in (0,1) "
                             "(smallness from the certified modulus bound; nonzero because "
                             "lambda**-l, of degree >= 2, cannot be an integer); for l < l0 "
                             "the same degree argument applies directly; hence lambda**-l "
                             "is never an integer power of the base and theta is irrational"),
                }
                try:
                    inst = conjugate_defect(recip, l0, 1, 64)
                    if inst.strictly_inside(0, 1):
                        witness["defect_instance"] = [str(inst.lo), str(inst.hi)]
                except PrecisionCapError:
                    pass
                return ThetaDecision("irrational-proven", theta_enc, witness=witness)

    return ThetaDecision("undecided", theta_enc, search_bound=search_bound)
