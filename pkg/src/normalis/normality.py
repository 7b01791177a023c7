"""Certified digit extraction and equidistribution statistics.

Everything downstream of sampling happens here: base-b digit streams whose
every digit is provably correct for the exact sampled point, Weyl averages
computed by digit shift (never by repeated floating multiplication of b^n x),
star discrepancy, overlapping k-gram chi-square tests, the rotation orbit of
theta = log b / -log lambda, and the partition selector that maps a point to
its depth-floor(theta*m) cylinder cell.

Digit extraction does one big high-precision evaluation per point (about
N*log2(b) + guard bits) and then reads all digits out of the resulting rational
enclosure; refinement is requested only while some digit's cell boundary is
straddled.  b-adic rationals take the terminating expansion, and a boundary
flag records both that policy and the refinement-stall case (a point provably
within b^-(N+guard) of a cell boundary).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats as _scipy_stats

from .algebra import ExactNumber, as_exact, theta_decide, theta_value
from .errors import InputError
from .ifs_core import CertifiedPoint, EquicontractiveIFS, attractor_hull
from .precision import Enclosure, escalate

PointLike = Union[int, Fraction, ExactNumber, CertifiedPoint]


# ---------------------------------------------------------------------------
# exact floors
# ---------------------------------------------------------------------------

def _exact_floor(x: ExactNumber) -> int:
    if x.is_rational:
        fr = x.as_fraction
        return fr.numerator // fr.denominator
    for bits in escalate(64, what="floor of an algebraic number"):
        enc = x.approx(bits)
        lo = math.floor(enc.lo)
        hi = math.floor(enc.hi)
        if lo == hi:
            return lo
        if x == hi:  # exactly an integer: enclosure will straddle forever
            return hi
    raise AssertionError("unreachable")


def _is_b_adic(x: Fraction, base: int) -> bool:
    q = x.denominator
    while q > 1:
        g = math.gcd(q, base)
        if g == 1:
            return False
        q //= g
    return True


# ---------------------------------------------------------------------------
# digit streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DigitStream:
    """Certified base-b digits d_1 d_2 ... of a point in [0,1).

    ``boundary`` marks streams where the terminating-representative policy was
    exercised (b-adic rational input) or where refinement stalled provably next
    to a cell boundary; statistics may exclude flagged streams.  ``tail`` is
    the exact value of frac(b^N x) when the input was exact, enabling exact
    fractional parts at every shift.
    """

    base: int
    digits: Tuple[int, ...]
    boundary: bool = False
    tail: Optional[Fraction] = None

    def __post_init__(self):
        if self.base < 2:
            raise InputError("base must be >= 2")
        if any(not 0 <= d < self.base for d in self.digits):
            raise InputError("digit out of range for base")

    def __len__(self):
        return len(self.digits)

    def as_array(self) -> np.ndarray:
        return np.array(self.digits, dtype=np.int64)

    def value_interval(self) -> Tuple[Fraction, Fraction]:
        """The half-open cell [sum d_j b^-j, sum + b^-N) certified by the stream."""
        acc = Fraction(0)
        for d in self.digits:
            acc = acc * self.base + d
        lo = Fraction(acc, self.base ** len(self.digits))
        return lo, lo + Fraction(1, self.base ** len(self.digits))


def _int_to_digits(value: int, base: int, n: int) -> Tuple[int, ...]:
    out = []
    for _ in range(n):
        value, d = divmod(value, base)
        out.append(d)
    return tuple(reversed(out))


def _rational_digit_stream(x: Fraction, base: int, n: int) -> DigitStream:
    if not 0 <= x < 1:
        raise InputError("digit extraction expects a point in [0,1)")
    scaled = x * base ** n
    head = scaled.numerator // scaled.denominator
    tail = scaled - head
    return DigitStream(base, _int_to_digits(head, base, n),
                       boundary=_is_b_adic(x, base), tail=tail)


def _enclosure_digit_split(lo: Fraction, hi: Fraction, base: int,
                           n: int) -> Tuple[Tuple[int, ...], int]:
    """Digits certified by the rational enclosure [lo, hi]: the common prefix of
    the two endpoint expansions, up to n digits."""
    a = (lo * base ** n).numerator // (lo * base ** n).denominator
    b = (hi * base ** n).numerator // (hi * base ** n).denominator
    da = _int_to_digits(a, base, n)
    if a == b:
        return da, n
    db = _int_to_digits(b, base, n)
    common = 0
    while common < n and da[common] == db[common]:
        common += 1
    return da[:common], common


def extract_digits(x: PointLike, base: int, n: int,
                   refine: Optional[Callable[[int], CertifiedPoint]] = None,
                   guard_digits: int = 8,
                   ifs: Optional[EquicontractiveIFS] = None,
                   embedding: Optional[Tuple[int, int]] = None) -> DigitStream:
    """N certified base-b digits of x.

    Exact inputs (rationals, algebraic numbers) are handled by exact
    arithmetic; a CertifiedPoint is read through its enclosure, and ``refine``
    is called with increasing depths whenever the enclosure straddles a cell
    boundary.  If the enclosure shrinks below b^-(n+guard) while still
    straddling, the point is provably that close to a boundary: the certified
    prefix is returned with the boundary flag set.

    Passing the generating ``ifs`` (plus the ``(k, j)`` unit embedding, if one
    was applied to the point) switches the enclosure computation to interval
    Horner over the digit word, which is far cheaper at depths in the
    thousands than reducing exact endpoints to canonical form.
    """
    if base < 2:
        raise InputError("base must be >= 2")
    if n < 1:
        raise InputError("need at least one digit")
    if isinstance(x, int):
        x = Fraction(x)
    if isinstance(x, ExactNumber) and x.is_rational:
        x = x.as_fraction
    if isinstance(x, Fraction):
        return _rational_digit_stream(x, base, n)

    bits = max(64, math.ceil((n + guard_digits) * math.log2(base)) + 32)
    if isinstance(x, ExactNumber):
        if x < 0 or x >= 1:
            raise InputError("digit extraction expects a point in [0,1)")
        # algebraic irrational: never exactly on a boundary, so this terminates
        for wbits in escalate(bits, what="digit extraction"):
            enc = x.approx(wbits)
            digits, count = _enclosure_digit_split(max(enc.lo, Fraction(0)),
                                                  min(enc.hi, Fraction(1)),
                                                  base, n)
            if count >= n:
                return DigitStream(base, digits)
        raise AssertionError("unreachable")

    if ifs is not None:
        from .ifs_core import cylinder_enclosure

        def as_word(obj) -> Tuple[int, ...]:
            return tuple(obj.word) if isinstance(obj, CertifiedPoint) else tuple(obj)

        def word_enclosure(word: Tuple[int, ...]) -> Enclosure:
            enc = cylinder_enclosure(ifs, word, bits)
            if embedding is not None:
                k, j = embedding
                scale = Fraction(1, base ** j)
                enc = Enclosure((enc.lo + k) * scale, (enc.hi + k) * scale)
            return enc

        word = as_word(x)
        first = word_enclosure(word)
        if first.hi < 0 or first.lo > 1:
            raise InputError("digit extraction expects a point in [0,1); "
                             "re-map the system into the unit interval first")
        stall = Fraction(1, base ** (n + guard_digits))
        for _ in range(256):
            enc = word_enclosure(word)
            lo = max(Fraction(0), enc.lo)
            hi = min(Fraction(1), enc.hi)
            digits, count = _enclosure_digit_split(lo, hi, base, n)
            if count >= n:
                return DigitStream(base, digits)
            if hi - lo < stall:
                return DigitStream(base, digits, boundary=True)
            if refine is None:
                raise InputError(
                    f"enclosure certifies only {count} of {n} digits at depth "
                    f"{len(word)}; provide a refinement callback or a deeper sample")
            deeper = as_word(refine(len(word) + max(len(word), 16)))
            if len(deeper) <= len(word):
                raise InputError("refinement callback did not deepen the point")
            word = deeper
        raise InputError("refinement made no progress after 256 rounds")

    if not isinstance(x, CertifiedPoint):
        raise InputError(f"cannot extract digits from {type(x).__name__}")

    point = x
    if point.lo < 0 or point.hi > 1:
        raise InputError("digit extraction expects a point in [0,1); "
                         "re-map the system into the unit interval first")
    stall = Fraction(1, base ** (n + guard_digits))
    for _ in range(256):
        lo = max(Fraction(0), point.lo.approx(bits).lo)
        hi = min(Fraction(1), point.hi.approx(bits).hi)
        digits, count = _enclosure_digit_split(lo, hi, base, n)
        if count >= n:
            return DigitStream(base, digits)
        if hi - lo < stall:
            return DigitStream(base, digits, boundary=True)
        if refine is None:
            raise InputError(
                f"enclosure certifies only {count} of {n} digits at depth "
                f"{point.depth}; provide a refinement callback or a deeper sample")
        deeper = refine(point.depth + max(point.depth, 16))
        if deeper.depth <= point.depth:
            raise InputError("refinement callback did not deepen the point")
        point = deeper
    raise InputError("refinement made no progress after 256 rounds")


def digit_budget(base: int, lam, n: int) -> int:
    """Sampling depth sufficient to certify n base-b digits: the cylinder width
    lam^D * diam must drop below b^-(n+guard)."""
    lam_f = float(as_exact(lam))
    return math.ceil((n + 8) * math.log(base) / -math.log(lam_f)) + 8


# ---------------------------------------------------------------------------
# digit-compatible embedding into [0,1)
# ---------------------------------------------------------------------------

def unit_embedding(ifs: EquicontractiveIFS, base: int) -> Tuple[int, int]:
    """(k, j) with psi(x) = (x + k) / b^j mapping the attractor into [0,1].

    Unlike a generic affine rescaling, psi only prepends digits and shifts the
    expansion, so base-b digit statistics of psi(x) and x agree up to a fixed
    prefix: the digit pipeline may use it freely.
    """
    lo, hi = attractor_hull(ifs)
    k = -_exact_floor(lo)
    j = 0
    while not (hi + k < base ** j or hi + k == base ** j):
        j += 1
    if hi + k == base ** j:  # closed upper endpoint: give it one more level
        j += 1
    return k, j


def embed_point(point: CertifiedPoint, k: int, j: int, base: int) -> CertifiedPoint:
    """Apply psi(x) = (x + k)/b^j to a certified point (exact endpoints)."""
    scale = Fraction(1, base ** j)
    return CertifiedPoint(word=point.word,
                          lo=(point.lo + k) * scale,
                          hi=(point.hi + k) * scale)


# ---------------------------------------------------------------------------
# Weyl averages by digit shift
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeylSeries:
    """Partial averages A_N = (1/N) sum_{n=1}^{N} e(l * frac(b^n x))."""

    l: int
    entries: Tuple[Tuple[int, complex], ...]

    def __post_init__(self):
        for _, a in self.entries:
            if abs(a) > 1 + 1e-9:
                raise InputError("Weyl average left the unit disk")

    def final(self) -> complex:
        return self.entries[-1][1]


def _weyl_guard(base: int, l: int) -> int:
    return math.ceil((60 + math.log2(max(abs(l), 1))) / math.log2(base))


def fractional_parts(stream: DigitStream, count: int) -> List[Fraction]:
    """Exact frac(b^n x) for n = 1..count, by digit shift plus the exact tail."""
    if stream.tail is None:
        raise InputError("exact fractional parts need a stream with an exact tail")
    if count > len(stream):
        raise InputError(f"stream has {len(stream)} digits, need {count}")
    out = []
    b = stream.base
    nd = len(stream)
    for n in range(1, count + 1):
        acc = Fraction(0)
        for d in stream.digits[n:]:
            acc = acc * b + d
        out.append((acc + stream.tail) / b ** (nd - n))
    return out


def weyl_sums(x: Union[DigitStream, int, Fraction, ExactNumber], l: int,
              n_grid: Sequence[int], base: Optional[int] = None) -> WeylSeries:
    """Averages of e(l * frac(b^n x)) on a reporting grid.

    Fractional parts come from the digit tail (streams) or exact rational
    orbit arithmetic (rational points, which then need an explicit ``base``) —
    never from floating b^n x, which would be garbage long before the
    interesting N.
    """
    if l == 0:
        raise InputError("l must be a nonzero integer")
    grid = sorted(set(int(n) for n in n_grid))
    if not grid or grid[0] < 1:
        raise InputError("reporting grid must contain positive integers")
    top = grid[-1]

    if not isinstance(x, DigitStream):
        if isinstance(x, ExactNumber):
            if not x.is_rational:
                raise InputError("extract a digit stream first for algebraic points")
            x = x.as_fraction
        if base is None:
            raise InputError("a bare point needs an explicit base")
        return weyl_sums_rational(Fraction(x), base, l, grid)

    guard = _weyl_guard(x.base, l)
    if x.tail is None and len(x) < top + guard:
        raise InputError(
            f"need at least {top + guard} digits ({top} requested + "
            f"{guard} guard) but the stream has {len(x)}")
    if x.tail is not None and len(x) < top:
        raise InputError(f"need at least {top} digits, stream has {len(x)}")
    nd = len(x)
    rs = np.empty(nd + 1)
    rs[nd] = float(x.tail) if x.tail is not None else 0.0
    inv_b = 1.0 / x.base
    digits = x.digits
    for i in range(nd - 1, -1, -1):
        rs[i] = (digits[i] + rs[i + 1]) * inv_b
    fracs = rs[1:top + 1]
    phases = np.exp(2j * np.pi * l * fracs)
    sums = np.cumsum(phases)
    entries = tuple((n, complex(sums[n - 1] / n)) for n in grid)
    return WeylSeries(l, entries)


def weyl_sums_rational(x: Fraction, base: int, l: int,
                       n_grid: Sequence[int]) -> WeylSeries:
    """Weyl averages for an exact rational point: the orbit frac(b^n x) is
    computed in exact arithmetic (the denominator never grows)."""
    if l == 0:
        raise InputError("l must be a nonzero integer")
    x = Fraction(x)
    if not 0 <= x < 1:
        raise InputError("point must lie in [0,1)")
    grid = sorted(set(int(n) for n in n_grid))
    if not grid or grid[0] < 1:
        raise InputError("reporting grid must contain positive integers")
    top = grid[-1]
    fracs = np.empty(top)
    r = x
    for i in range(top):
        r = (r * base) % 1
        fracs[i] = float(r)
    phases = np.exp(2j * np.pi * l * fracs)
    sums = np.cumsum(phases)
    entries = tuple((n, complex(sums[n - 1] / n)) for n in grid)
    return WeylSeries(l, entries)


# ---------------------------------------------------------------------------
# discrepancy and digit statistics
# ---------------------------------------------------------------------------

def star_discrepancy(points: Sequence) -> Union[Fraction, float]:
    """Exact one-dimensional star discrepancy by the sorted-points formula
    D*_N = max_i max(i/N - x_(i), x_(i) - (i-1)/N).

    Exact (Fraction) inputs give an exact Fraction; floats give a float.
    """
    pts = list(points)
    if not pts:
        raise InputError("discrepancy needs at least one point")
    exact = all(isinstance(p, (int, Fraction)) and not isinstance(p, bool)
                for p in pts)
    if exact:
        xs = sorted(Fraction(p) for p in pts)
        if xs[0] < 0 or xs[-1] >= 1:
            raise InputError("points must lie in [0,1)")
        n = len(xs)
        best = Fraction(0)
        for i, x in enumerate(xs, start=1):
            best = max(best, Fraction(i, n) - x, x - Fraction(i - 1, n))
        return best
    xs = np.sort(np.asarray(pts, dtype=np.float64))
    if xs[0] < 0 or xs[-1] >= 1:
        raise InputError("points must lie in [0,1)")
    n = len(xs)
    i = np.arange(1, n + 1)
    return float(max((i / n - xs).max(), (xs - (i - 1) / n).max()))


@dataclass(frozen=True)
class ChiSquareReport:
    statistic: float
    dof: int
    pvalue: float
    alpha: float
    counts: Tuple[int, ...]
    windows: int

    @property
    def passed(self) -> bool:
        return self.pvalue > self.alpha

    def as_dict(self):
        return {"statistic": self.statistic, "dof": self.dof,
                "pvalue": self.pvalue, "alpha": self.alpha,
                "windows": self.windows, "pass": self.passed}


def kgram_test(stream: DigitStream, k: int, alpha: float = 0.001) -> ChiSquareReport:
    """Chi-square of overlapping k-gram counts against the uniform b^-k law."""
    if k < 1:
        raise InputError("k must be >= 1")
    b = stream.base
    cells = b ** k
    if cells > 2 ** 24:
        raise InputError("b^k too large to tabulate")
    n = len(stream)
    if n < 10 * cells:
        raise InputError(
            f"underpowered: need at least {10 * cells} digits for k={k} "
            f"in base {b}, have {n}")
    arr = stream.as_array()
    if k == 1:
        codes = arr
    else:
        windows = np.lib.stride_tricks.sliding_window_view(arr, k)
        weights = b ** np.arange(k - 1, -1, -1, dtype=np.int64)
        codes = windows @ weights
    counts = np.bincount(codes, minlength=cells)
    m = n - k + 1
    expected = m / cells
    statistic = float(((counts - expected) ** 2 / expected).sum())
    dof = cells - 1
    pvalue = float(_scipy_stats.chi2.sf(statistic, dof))
    return ChiSquareReport(statistic, dof, pvalue, alpha,
                           tuple(int(c) for c in counts), m)


@dataclass(frozen=True)
class MonobitReport:
    z: float
    ones: int
    zeros: int

    @property
    def passed(self) -> bool:
        return abs(self.z) <= 4.0


def monobit_test(stream: DigitStream) -> MonobitReport:
    """Binary balance statistic z = (ones - zeros)/sqrt(N), passing at |z| <= 4."""
    if stream.base != 2:
        raise InputError("monobit is defined for base 2 streams")
    n = len(stream)
    if n < 100:
        raise InputError("underpowered: need at least 100 bits")
    ones = int(sum(stream.digits))
    z = (2 * ones - n) / math.sqrt(n)
    return MonobitReport(float(z), ones, n - ones)


# ---------------------------------------------------------------------------
# rotation orbits of theta
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotationOrbit:
    """The orbit frac(n*theta) with exact floor sequence n' = floor(theta n)."""

    theta: Enclosure
    fracs: Tuple[Enclosure, ...]
    nprimes: Tuple[int, ...]
    periodic: bool
    period: Optional[int]
    discrepancy: float


@functools.lru_cache(maxsize=64)
def _theta_decision(base: int, lam: ExactNumber):
    return theta_decide(base, lam)


def rotation_orbit(base: int, lam, n: int) -> RotationOrbit:
    """First n points of the rotation by theta = log b / -log lam, with exact
    floors.  Rational theta yields the finite orbit (one period) and a
    periodicity flag; irrational theta escalates precision until every floor
    over the range is certified."""
    lam = as_exact(lam)
    if not (lam > 0 and lam < 1):
        raise InputError("lam must lie in (0,1)")
    if n < 1:
        raise InputError("n must be >= 1")
    decision = _theta_decision(base, lam)
    if decision.is_rational:
        p, q = decision.p, decision.q
        length = min(n, q)
        fracs = []
        nprimes = []
        for m in range(1, length + 1):
            tm = Fraction(p * m, q)
            k = tm.numerator // tm.denominator
            fr = tm - k
            fracs.append(Enclosure(fr, fr))
            nprimes.append(k)
        disc = star_discrepancy([f.lo for f in fracs])
        theta_enc = Enclosure(Fraction(p, q), Fraction(p, q))
        return RotationOrbit(theta_enc, tuple(fracs), tuple(nprimes),
                             periodic=True, period=q, discrepancy=float(disc))
    start = 96 + max(0, n.bit_length())
    for bits in escalate(start, what="rotation orbit floors"):
        enc = theta_value(base, lam, bits)
        fracs = []
        nprimes = []
        ok = True
        for m in range(1, n + 1):
            lo = enc.lo * m
            hi = enc.hi * m
            fl = lo.numerator // lo.denominator
            fh = hi.numerator // hi.denominator
            if fl != fh:
                ok = False
                break
            fracs.append(Enclosure(lo - fl, hi - fl))
            nprimes.append(fl)
        if ok:
            disc = star_discrepancy([float(f.mid) for f in fracs])
            return RotationOrbit(enc, tuple(fracs), tuple(nprimes),
                                 periodic=False, period=None,
                                 discrepancy=float(disc))
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# the partition selector
# ---------------------------------------------------------------------------

def partition_cell(x: CertifiedPoint, m: int,
                   theta: Union[Fraction, int, Enclosure]) -> Tuple[int, ...]:
    """The cell of x in the depth-floor(theta*m) cylinder partition: the
    length-floor(theta*m) prefix of its digit word."""
    if m < 0:
        raise InputError("m must be >= 0")
    if isinstance(theta, Enclosure):
        lo = theta.lo * m
        hi = theta.hi * m
        fl = lo.numerator // lo.denominator
        fh = hi.numerator // hi.denominator
        if fl != fh:
            raise InputError(
                "theta enclosure too wide to determine floor(theta*m); "
                "recompute theta at higher precision")
        length = fl
    else:
        tm = Fraction(theta) * m
        length = tm.numerator // tm.denominator
    if length < 0:
        raise InputError("theta must be positive")
    if len(x.word) < length:
        raise InputError(
            f"cell needs a digit word of length {length}, point has "
            f"{len(x.word)}; sample deeper")
    return tuple(x.word[:length])
