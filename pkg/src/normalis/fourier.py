"""Fourier transforms of self-similar and model measures with certified tails.

The transform of an equicontractive self-similar measure is an infinite product
of trigonometric factors; this module evaluates truncations of that product in
interval arithmetic, bounds the discarded tail rigorously, and cross-validates
against Monte Carlo estimates.  It also houses three specialised checks: the
Dirac-convolution modulus identity, the scale-averaged second-moment inequality
for atomic measures (quadrature left side against an exact correlation right
side), and the non-decay scan of Bernoulli-convolution transforms along the
frequency sequence 1/lambda**n — the computation where exact algebraic powering
is indispensable, since floating powers of 1/lambda lose every digit that
matters by n around 40.  Blow-up scale factors b**n * lambda**n' complete the
toolkit.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .algebra import ExactNumber, as_exact, theta_decide, theta_value
from .disintegration import ModelAlphabet, ModelWord
from .errors import InputError, PrecisionCapError, QuadratureError
from .ifs_core import EquicontractiveIFS, ProbVector, validate_pair
from .precision import Enclosure, escalate, iv_from_enclosure, iv_to_enclosure, ivctx

Frequency = Union[int, float, Fraction, ExactNumber]


def _as_exact_frequency(xi: Frequency) -> ExactNumber:
    if isinstance(xi, float):
        return ExactNumber(Fraction(xi))
    return as_exact(xi)


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FourierValue:
    """A certified transform value: enclosures for the truncated product plus a
    rigorous bound on the modulus error committed by truncation."""

    real: Enclosure
    imag: Enclosure
    truncation_terms: int
    tail_bound: Fraction

    @property
    def value(self) -> complex:
        return complex(float(self.real.mid), float(self.imag.mid))

    def modulus(self) -> Enclosure:
        """Enclosure of |F| including the truncation tail."""
        m2 = self.real * self.real + self.imag * self.imag
        ctx = ivctx(96)
        mod = ctx.sqrt(iv_from_enclosure(ctx, Enclosure(max(Fraction(0), m2.lo), m2.hi)))
        enc = iv_to_enclosure(mod)
        return Enclosure(max(Fraction(0), enc.lo - self.tail_bound),
                         enc.hi + self.tail_bound)

    def agrees_with(self, other: "FourierValue") -> bool:
        """Do the two total enclosures (value +/- tail) intersect componentwise?"""
        def widen(e: Enclosure, t: Fraction) -> Enclosure:
            return Enclosure(e.lo - t, e.hi + t)
        t1, t2 = self.tail_bound, other.tail_bound
        return (not widen(self.real, t1).disjoint_from(widen(other.real, t2))
                and not widen(self.imag, t1).disjoint_from(widen(other.imag, t2)))


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely many atoms (position, weight) with exactly normalized weights."""

    atoms: Tuple[Tuple[Fraction, Fraction], ...]

    def __post_init__(self):
        atoms = tuple((Fraction(x), Fraction(w)) for x, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise InputError("atomic measure needs at least one atom")
        if any(w <= 0 for _, w in atoms):
            raise InputError("atom weights must be positive")
        if sum(w for _, w in atoms) != 1:
            raise InputError("atom weights must sum to 1 exactly")

    def shifted(self, y) -> "AtomicMeasure":
        y = Fraction(y)
        return AtomicMeasure(tuple((x + y, w) for x, w in self.atoms))

    def positions(self) -> np.ndarray:
        return np.array([float(x) for x, _ in self.atoms])

    def weights(self) -> np.ndarray:
        return np.array([float(w) for _, w in self.atoms])


@dataclass(frozen=True)
class ScaleOp:
    """S_t(x) = t*x acting on measures by push-forward; on transforms this is the
    frequency rescaling F_xi(S_t mu) = F_{t*xi}(mu)."""

    factor: Fraction

    def __call__(self, mu: AtomicMeasure) -> AtomicMeasure:
        t = Fraction(self.factor)
        return AtomicMeasure(tuple((t * x, w) for x, w in mu.atoms))


# ---------------------------------------------------------------------------
# complex interval helpers
# ---------------------------------------------------------------------------

def _cx_mul(a, b):
    ar, ai = a
    br, bi = b
    return ar * br - ai * bi, ar * bi + ai * br

def _cx_exp2pi(ctx, x):
    """(cos, sin) of 2*pi*x for an interval x."""
    arg = 2 * ctx.pi * x
    return ctx.cos(arg), ctx.sin(arg)


def _enclosures(pair) -> Tuple[Enclosure, Enclosure]:
    return iv_to_enclosure(pair[0]), iv_to_enclosure(pair[1])


# ---------------------------------------------------------------------------
# atomic transforms and the Dirac identity
# ---------------------------------------------------------------------------

def fourier_atomic(mu: AtomicMeasure, xi: Frequency, bits: int = 96) -> FourierValue:
    """Exact finite sum sum_j w_j e(xi x_j) as a certified enclosure (no tail)."""
    xi = _as_exact_frequency(xi)
    ctx = ivctx(bits)
    xi_iv = iv_from_enclosure(ctx, xi.approx(bits))
    acc = (ctx.mpf(0), ctx.mpf(0))
    for x, w in mu.atoms:
        term = _cx_exp2pi(ctx, xi_iv * iv_from_enclosure(ctx, Enclosure(x, x)))
        w_iv = iv_from_enclosure(ctx, Enclosure(w, w))
        acc = (acc[0] + w_iv * term[0], acc[1] + w_iv * term[1])
    re, im = _enclosures(acc)
    return FourierValue(re, im, len(mu.atoms), Fraction(0))


@dataclass(frozen=True)
class DiracReport:
    lhs_modulus: Enclosure
    rhs_modulus: Enclosure
    consistent: bool

    def as_dict(self):
        return {"lhs": [str(self.lhs_modulus.lo), str(self.lhs_modulus.hi)],
                "rhs": [str(self.rhs_modulus.lo), str(self.rhs_modulus.hi)],
                "consistent": self.consistent}


def dirac_modulus_check(mu: AtomicMeasure, y, l: int, bits: int = 96) -> DiracReport:
    """|F_l(delta_y * mu)| = |F_l(mu)|: convolving with a point mass only rotates
    the transform.  Both sides are computed independently and compared."""
    shifted = mu.shifted(y)
    lhs = fourier_atomic(shifted, l, bits).modulus()
    rhs = fourier_atomic(mu, l, bits).modulus()
    return DiracReport(lhs, rhs, not lhs.disjoint_from(rhs))


# ---------------------------------------------------------------------------
# infinite products
# ---------------------------------------------------------------------------

def _abs_exact(x: ExactNumber) -> ExactNumber:
    return x if x.sign() >= 0 else -x

def _pick_truncation(xi_mag: float, tmax: float, lam: float, target: float,
                     max_factors: int) -> int:
    """Smallest m with exp(2 pi xi tmax lam^(m+1)/(1-lam)) - 1 <= target (float
    estimate; verified rigorously afterwards)."""
    if xi_mag == 0 or tmax == 0:
        return 0
    goal = math.log1p(min(target, 1.0))
    base = 2 * math.pi * xi_mag * tmax / (1 - lam)
    if base <= goal:
        return 1
    m = int(math.ceil(math.log(goal / base) / math.log(lam))) + 1
    if m > max_factors:
        raise InputError(
            f"frequency needs {m} product factors (> cap {max_factors}); "
            "raise max_factors or loosen target_error")
    return max(m, 1)


def _verified_tail(ctx, xi_abs, tmax, lam_iv, m: int) -> Fraction:
    """Upper bound of exp(2 pi xi tmax lam^(m+1)/(1-lam)) - 1 from interval arithmetic."""
    x = 2 * ctx.pi * xi_abs * tmax * lam_iv ** (m + 1) / (1 - lam_iv)
    tail = ctx.exp(x) - 1
    return iv_to_enclosure(tail).hi


def _product_transform(factor_weights: Callable[[int], Sequence[Tuple[Fraction, ExactNumber]]],
                       ifs: EquicontractiveIFS, xi: ExactNumber,
                       target_error: float, max_factors: int,
                       center: ExactNumber) -> FourierValue:
    """Shared driver: product over positions n of sum_i w_i e(xi (t_i - c) lam^n),
    times the phase e(xi c/(1-lam)) restoring the re-centering."""
    lam = ifs.ratio
    if xi == 0:
        return FourierValue(Enclosure(1, 1), Enclosure(0, 0), 0, Fraction(0))
    xi_abs = _abs_exact(xi)
    tmax = ExactNumber(0)
    for t in ifs.translations:
        a = _abs_exact(t - center)
        if a > tmax:
            tmax = a
    m = _pick_truncation(abs(float(xi)), float(tmax), float(lam),
                         float(target_error), max_factors)
    target = Fraction(target_error)
    for bits in escalate(96, what="product transform"):
        ctx = ivctx(bits)
        lam_iv = iv_from_enclosure(ctx, lam.approx(bits))
        xi_iv = iv_from_enclosure(ctx, xi.approx(bits))
        xi_abs_iv = iv_from_enclosure(ctx, xi_abs.approx(bits))
        tmax_iv = iv_from_enclosure(ctx, tmax.approx(bits))
        while True:
            tail = _verified_tail(ctx, xi_abs_iv, tmax_iv, lam_iv, m - 1 if m else 0)
            if m == 0 or tail <= target:
                break
            m += 1
            if m > max_factors:
                raise InputError(
                    f"frequency needs more than {max_factors} product factors; "
                    "raise max_factors or loosen target_error")
        shifted = [iv_from_enclosure(ctx, (t - center).approx(bits))
                   for t in ifs.translations]
        acc = (ctx.mpf(1), ctx.mpf(0))
        lam_pow = ctx.mpf(1)
        for n in range(m):
            fr = ctx.mpf(0)
            fi = ctx.mpf(0)
            for i, w in factor_weights(n):
                c, s = _cx_exp2pi(ctx, xi_iv * shifted[i] * lam_pow)
                w_iv = iv_from_enclosure(ctx, Enclosure(w, w))
                fr += w_iv * c
                fi += w_iv * s
            acc = _cx_mul(acc, (fr, fi))
            lam_pow = lam_pow * lam_iv
        if center != 0:
            phase_arg = xi * center / (1 - lam)
            phase = _cx_exp2pi(ctx, iv_from_enclosure(ctx, phase_arg.approx(bits)))
            acc = _cx_mul(acc, phase)
        re, im = _enclosures(acc)
        if max(re.width, im.width) <= target:
            return FourierValue(re, im, m, tail if m else Fraction(0))
    raise AssertionError("unreachable")


def fourier_product(ifs: EquicontractiveIFS, p: ProbVector, xi: Frequency,
                    target_error: float = 1e-9,
                    max_factors: int = 4096) -> FourierValue:
    """Transform of the self-similar measure: product over scales n of the factor
    sum_i p_i e(xi t_i lam^n), truncated with a certified tail bound <= target_error.

    Translations are re-centered at the weighted mean before bounding (tightens
    the tail constant); the discarded phase is restored exactly afterwards.
    """
    validate_pair(ifs, p)
    if not ifs.is_positive:
        raise InputError("transform needs ratio in (0,1): square the system first")
    xi = _as_exact_frequency(xi)
    center = ExactNumber(0)
    for w, t in zip(p, ifs.translations):
        center = center + t * w
    weights = [(i, p[i]) for i in range(ifs.nmaps)]
    return _product_transform(lambda n: weights, ifs, xi, target_error,
                              max_factors, center)


def fourier_model(omega: ModelWord, ifs: EquicontractiveIFS, p: ProbVector,
                  alphabet: ModelAlphabet, xi: Frequency,
                  target_error: float = 1e-9,
                  max_factors: int = 4096) -> FourierValue:
    """Transform of the model measure for a fixed block word: the factor at
    position n runs over the block omega_n with conditional weights p_i/q."""
    validate_pair(ifs, p)
    if not ifs.is_positive:
        raise InputError("transform needs ratio in (0,1): square the system first")
    xi = _as_exact_frequency(xi)
    center = ExactNumber(0)
    for w, t in zip(p, ifs.translations):
        center = center + t * w

    def factor_weights(n: int):
        b = omega.block_index_at(n)
        return [(i, w) for i, w in alphabet.conditional_weights(b, p)]

    return _product_transform(factor_weights, ifs, xi, target_error,
                              max_factors, center)


# ---------------------------------------------------------------------------
# Monte Carlo cross-check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MCEstimate:
    value: complex
    stderr_re: float
    stderr_im: float

    def consistent_with(self, certified: FourierValue, nsigma: float = 4.0) -> bool:
        slack_re = nsigma * self.stderr_re + float(certified.tail_bound) \
            + float(certified.real.width)
        slack_im = nsigma * self.stderr_im + float(certified.tail_bound) \
            + float(certified.imag.width)
        return (abs(self.value.real - float(certified.real.mid)) <= slack_re
                and abs(self.value.imag - float(certified.imag.mid)) <= slack_im)


def fourier_mc(sampler: Callable[[int, int], np.ndarray], xi: Frequency,
               n: int, seed: int) -> MCEstimate:
    """Monte Carlo estimate (1/n) sum e(xi x_j) over samples from ``sampler(n, seed)``.

    The sampler owns determinism: it must return the same n values for the same
    (n, seed).
    """
    if n < 1000:
        raise InputError("n < 1000: Monte Carlo transform estimate is underpowered")
    xs = np.asarray(sampler(n, seed), dtype=np.float64)
    if xs.shape != (n,):
        raise InputError(f"sampler returned shape {xs.shape}, expected ({n},)")
    phases = np.exp(2j * np.pi * float(xi) * xs)
    est = phases.mean()
    se_re = phases.real.std(ddof=1) / math.sqrt(n)
    se_im = phases.imag.std(ddof=1) / math.sqrt(n)
    return MCEstimate(complex(est), float(se_re), float(se_im))


# ---------------------------------------------------------------------------
# the scale-averaged second-moment inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lemma32Report:
    lhs: float
    rhs: float
    correlation: Fraction
    quad_error: float
    holds: bool

    def as_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs,
                "correlation": f"{self.correlation.numerator}/{self.correlation.denominator}",
                "quad_error": self.quad_error, "holds": self.holds}


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                      tol: float, max_evals: int) -> Tuple[float, float]:
    """Adaptive Simpson with Richardson extrapolation; returns (integral, error
    estimate) or raises when the evaluation budget runs out."""
    evals = [0]

    def ff(x):
        evals[0] += 1
        if evals[0] > max_evals:
            raise QuadratureError(
                f"quadrature exceeded {max_evals} evaluations",
                achieved_error=float("inf"))
        return f(x)

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6 * (f0 + 4 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, tol, depth):
        xm = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x2)
        fl = ff(xl)
        fr = ff(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        delta = left + right - whole
        if depth <= 0:
            raise QuadratureError("quadrature recursion too deep",
                                  achieved_error=abs(delta))
        if abs(delta) <= 15 * tol:
            return left + right + delta / 15, abs(delta) / 15
        lval, lerr = recurse(x0, xm, f0, fl, f1, left, tol / 2, depth - 1)
        rval, rerr = recurse(xm, x2, f1, fr, f2, right, tol / 2, depth - 1)
        return lval + rval, lerr + rerr

    f0, f1, f2 = ff(a), ff(0.5 * (a + b)), ff(b)
    whole = simpson(a, b, f0, f1, f2)
    return recurse(a, b, f0, f1, f2, whole, tol, depth=48)


def lemma32_check(nu: AtomicMeasure, lam, l: int, r,
                  tol: float = 1e-6, max_evals: int = 200_000) -> Lemma32Report:
    """Average of |F_l(S_{lam^-t} nu)|^2 over t in [0,1] against the exact bound
    1/(r |l| log(1/lam)) + nu x nu {(y,z): |y - z| < r}.

    The left side is adaptive quadrature (loud failure on non-convergence); the
    correlation term on the right is computed exactly from the atoms with open
    balls; a true violation beyond quadrature error would be an implementation
    bug, not a discovery.
    """
    lam = Fraction(lam)
    if not 0 < lam < 1:
        raise InputError("lam must lie in (0,1)")
    if l == 0:
        raise InputError("l must be a nonzero integer")
    r = Fraction(r)
    if r <= 0:
        raise InputError("r must be positive")
    xs = nu.positions()
    ws = nu.weights()
    loglam_inv = -math.log(float(lam))
    two_pi_l = 2 * math.pi * l

    def integrand(t: float) -> float:
        scale = math.exp(t * loglam_inv)
        z = np.dot(ws, np.exp(1j * two_pi_l * scale * xs))
        return float(z.real * z.real + z.imag * z.imag)

    lhs, quad_err = _adaptive_simpson(integrand, 0.0, 1.0, tol, max_evals)
    correlation = Fraction(0)
    for xj, wj in nu.atoms:
        for xk, wk in nu.atoms:
            if abs(xj - xk) < r:
                correlation += wj * wk
    rhs = 1 / (float(r) * abs(l) * loglam_inv) + float(correlation)
    holds = lhs <= rhs + quad_err + 1e-12
    return Lemma32Report(float(lhs), float(rhs), correlation, float(quad_err), holds)


# ---------------------------------------------------------------------------
# the non-decay scan along 1/lambda**n
# ---------------------------------------------------------------------------

def bernoulli_fourier(lam: ExactNumber, xi: ExactNumber,
                      target_error: float = 1e-6,
                      max_factors: int = 4096) -> FourierValue:
    """Transform of the symmetric Bernoulli convolution sum +/- lam^k:
    the real product over k of cos(2 pi xi lam^k), with certified tail
    exp(2 pi^2 xi^2 lam^(2(m+1)) / (1 - lam^2)) - 1."""
    lam = as_exact(lam)
    xi = _as_exact_frequency(xi)
    if not (lam > 0 and lam < 1):
        raise InputError("lam must lie in (0,1)")
    if xi == 0:
        return FourierValue(Enclosure(1, 1), Enclosure(0, 0), 0, Fraction(0))
    target = Fraction(target_error)
    xi_f = abs(float(xi))
    lam_f = float(lam)
    # tail factors need 2 pi^2 (xi lam^(m+1))^2/(1-lam^2) <= log(1+target)
    goal = math.log1p(float(target))
    need = math.sqrt(goal * (1 - lam_f ** 2) / (2 * math.pi ** 2))
    m = 1 if xi_f * lam_f <= need else \
        int(math.ceil(math.log(need / xi_f) / math.log(lam_f))) + 1
    if m > max_factors:
        raise InputError(f"frequency needs {m} factors (> cap {max_factors})")
    powers: List[ExactNumber] = []
    cur = xi
    for _ in range(m):
        powers.append(cur)
        cur = cur * lam
    for bits in escalate(256, what="bernoulli transform"):
        ctx = ivctx(bits)
        lam_iv = iv_from_enclosure(ctx, lam.approx(bits))
        xi_abs = iv_from_enclosure(ctx, _abs_exact(xi).approx(bits))
        tail_arg = 2 * ctx.pi ** 2 * (xi_abs * lam_iv ** m) ** 2 / (1 - lam_iv ** 2)
        tail = iv_to_enclosure(ctx.exp(tail_arg) - 1).hi
        if tail > target:
            m += 1
            powers.append(powers[-1] * lam)
            continue
        acc = ctx.mpf(1)
        for x in powers:
            arg = 2 * ctx.pi * iv_from_enclosure(ctx, x.approx(bits + 32))
            acc = acc * ctx.cos(arg)
        re = iv_to_enclosure(acc)
        if re.width <= target:
            return FourierValue(re, Enclosure(0, 0), m, tail)
    raise AssertionError("unreachable")


def erdos_scan(lam, n_max: int, target_error: float = 1e-6,
               require_pisot: bool = True) -> List[Enclosure]:
    """Moduli |F(1/lam**n)| of the Bernoulli convolution for n = 0..n_max.

    Frequencies are exact powers in the number field (or exact rationals), never
    floats: the phenomenon under test lives in 1/lam**n modulo 1, which floating
    arithmetic destroys entirely near n = 40.  With ``require_pisot`` the
    reciprocal of lam must certify as a Pisot number (the non-decay case);
    disable it to run the same scan on control ratios expected to decay.
    """
    from .algebra import make_primitive, minimal_polynomial_of, pisot_check
    lam = as_exact(lam)
    if not (lam > Fraction(1, 2) and lam < 1):
        raise InputError("scan expects lam in (1/2, 1)")
    if n_max < 0:
        raise InputError("n_max must be >= 0")
    if require_pisot:
        recip = make_primitive(tuple(reversed(minimal_polynomial_of(lam))))
        report = pisot_check(recip)
        if not report.is_pisot:
            raise InputError(
                "1/lam is not a certified Pisot number; pass require_pisot=False "
                "to scan a control ratio")
    beta = 1 / lam
    out: List[Enclosure] = []
    xi = ExactNumber(1)
    for _ in range(n_max + 1):
        fv = bernoulli_fourier(lam, xi, target_error)
        out.append(fv.modulus())
        xi = xi * beta
    return out


# ---------------------------------------------------------------------------
# blow-up factors
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _cached_theta(b: int, lam: ExactNumber):
    return theta_decide(b, lam)


def blowup_factor(b: int, lam, n: int) -> Tuple[int, ExactNumber]:
    """n' = floor(theta * n) and the exact scale b**n * lam**n'.

    The scale equals lam**(-frac(theta n)), so it always lies in [1, 1/lam), and
    equals 1 exactly when theta*n is an integer (possible only for rational
    theta).  For irrational theta the floor is resolved by escalating the
    precision of the theta enclosure; rational theta is handled exactly.
    """
    lam = as_exact(lam)
    if not isinstance(n, int) or n < 0:
        raise InputError("n must be a nonnegative integer")
    if n == 0:
        return 0, ExactNumber(1)
    decision = _cached_theta(b, lam)
    if decision.is_rational:
        nprime = (decision.p * n) // decision.q
    else:
        nprime = None
        for bits in escalate(64, what="blow-up floor"):
            enc = theta_value(b, lam, bits)
            lo = math.floor(enc.lo * n)
            hi = math.floor(enc.hi * n)
            if lo == hi:
                nprime = lo
                break
        assert nprime is not None
    scale = ExactNumber(b) ** n * lam ** nprime
    if not (scale >= 1 and scale * lam < 1):
        raise AssertionError(
            f"blow-up scale identity violated: b={b} lam={lam} n={n} n'={nprime}")
    return int(nprime), scale
