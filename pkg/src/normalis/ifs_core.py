"""Equicontractive iterated function systems and their self-similar measures.

A system is a finite family of maps x -> ratio*x + t_i sharing one contraction
ratio, together with a probability vector.  This module provides the exact
normalizations that later analysis relies on (dropping zero-weight maps, squaring
away a negative ratio, rescaling the attractor into [0,1)), exact attractor and
cylinder geometry, the search for a separated pair of cylinders, and deterministic
sampling of the self-similar measure with certified truncation enclosures.

All geometry is exact: endpoints are ExactNumbers, comparisons are true sign
computations, and touching cylinders are classified as touching, never "almost".
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .algebra import ExactNumber, as_exact
from .errors import DegenerateMeasureError, InputError
from .precision import Enclosure
from .rng import CounterRNG, digits_from_uniforms

DigitWord = Tuple[int, ...]


# ---------------------------------------------------------------------------
# core types
# ---------------------------------------------------------------------------

class ProbVector:
    """Exact rational weights, nonnegative, summing to one.

    Zeros are allowed at construction; :func:`trim_support` removes them together
    with their maps.
    """

    __slots__ = ("weights",)

    def __init__(self, weights: Iterable):
        ws = tuple(Fraction(w) for w in weights)
        if not ws:
            raise InputError("probability vector must be non-empty")
        if any(w < 0 for w in ws):
            raise InputError(f"negative probability in {ws}")
        if sum(ws) != 1:
            raise InputError(f"probabilities must sum to 1 exactly, got {sum(ws)}")
        self.weights = ws

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, i):
        return self.weights[i]

    def __iter__(self):
        return iter(self.weights)

    def __eq__(self, other):
        return isinstance(other, ProbVector) and self.weights == other.weights

    def __repr__(self):
        return f"ProbVector({[str(w) for w in self.weights]})"

    def as_floats(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights], dtype=np.float64)


@dataclass(frozen=True)
class EquicontractiveIFS:
    """Maps x -> ratio*x + translations[i], all sharing one ratio with 0 < |ratio| < 1.

    ``provenance`` records normalization steps applied so far, in order; rescale
    entries carry the exact affine conjugacy (scale, offset) so callers can move
    statistics between the original and normalized frames.
    """

    ratio: ExactNumber
    translations: Tuple[ExactNumber, ...]
    provenance: Tuple[dict, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ratio", as_exact(self.ratio))
        object.__setattr__(self, "translations",
                           tuple(as_exact(t) for t in self.translations))
        if not self.translations:
            raise InputError("IFS needs at least one map")
        r = self.ratio
        if not (r != 0 and r > -1 and r < 1):
            raise InputError("contraction ratio must satisfy 0 < |ratio| < 1")

    @property
    def nmaps(self) -> int:
        return len(self.translations)

    @property
    def is_positive(self) -> bool:
        return self.ratio > 0

    def distinct_translation_count(self) -> int:
        seen: List[ExactNumber] = []
        for t in self.translations:
            if not any(t == s for s in seen):
                seen.append(t)
        return len(seen)

    def with_provenance(self, entry: dict) -> "EquicontractiveIFS":
        return EquicontractiveIFS(self.ratio, self.translations,
                                  self.provenance + (entry,))

    def translations_as_floats(self) -> np.ndarray:
        return np.array([float(t) for t in self.translations], dtype=np.float64)


class SeparatedPair(NamedTuple):
    level: int
    word1: DigitWord
    word2: DigitWord


@dataclass(frozen=True)
class CertifiedPoint:
    """A truncated sample of the self-similar measure with an exact enclosure.

    ``word`` holds digits (i_0, ..., i_m); the true point of any admissible
    continuation lies in [lo, hi] = sum(t_{i_n} ratio^n) + ratio^(m+1) * Conv(X),
    held exactly.
    """

    word: DigitWord
    lo: ExactNumber
    hi: ExactNumber

    @property
    def depth(self) -> int:
        return len(self.word) - 1

    def enclosure(self, bits: int = 64) -> Enclosure:
        lo = self.lo.approx(bits)
        hi = self.hi.approx(bits)
        return Enclosure(lo.lo, hi.hi)

    def midpoint(self) -> float:
        return float(self.enclosure(64).mid)


# ---------------------------------------------------------------------------
# normalizations
# ---------------------------------------------------------------------------

def validate_pair(ifs: EquicontractiveIFS, p: ProbVector) -> None:
    if len(p) != ifs.nmaps:
        raise InputError(
            f"probability vector length {len(p)} != number of maps {ifs.nmaps}")


def trim_support(ifs: EquicontractiveIFS, p: ProbVector
                 ) -> Tuple[EquicontractiveIFS, ProbVector]:
    """Drop maps with zero weight.  The self-similar measure is unchanged.

    Raises a degenerate-measure error if fewer than two distinct translations
    survive — the measure would be a Dirac mass.
    """
    validate_pair(ifs, p)
    keep = [i for i, w in enumerate(p) if w > 0]
    removed = tuple(i for i in range(ifs.nmaps) if i not in keep)
    new_ifs = EquicontractiveIFS(
        ifs.ratio, tuple(ifs.translations[i] for i in keep),
        ifs.provenance + ({"step": "trim", "removed": removed},))
    new_p = ProbVector([p[i] for i in keep])
    if new_ifs.distinct_translation_count() < 2:
        raise DegenerateMeasureError(
            "fewer than two distinct maps carry weight: the measure is a point mass")
    return new_ifs, new_p


def square_if_negative(ifs: EquicontractiveIFS, p: ProbVector
                       ) -> Tuple[EquicontractiveIFS, ProbVector]:
    """Replace a negative-ratio system by its two-step composition.

    phi_i o phi_j has ratio ratio**2 > 0 and translation t_i + ratio*t_j; digit
    pairs (i, j) are enumerated lexicographically and weighted p_i * p_j.  The
    self-similar measure is invariant under this replacement.
    """
    validate_pair(ifs, p)
    if ifs.is_positive:
        return ifs, p
    r = ifs.ratio
    ts = []
    ws = []
    for i, ti in enumerate(ifs.translations):
        for j, tj in enumerate(ifs.translations):
            ts.append(ti + r * tj)
            ws.append(p[i] * p[j])
    new_ifs = EquicontractiveIFS(r * r, tuple(ts),
                                 ifs.provenance + ({"step": "square"},))
    return new_ifs, ProbVector(ws)


def attractor_hull(ifs: EquicontractiveIFS) -> Tuple[ExactNumber, ExactNumber]:
    """Exact convex hull [a, b] of the attractor: a = min t/(1-ratio), b = max."""
    _require_positive(ifs)
    one_minus = 1 - ifs.ratio
    lo = min(ifs.translations)
    hi = max(ifs.translations)
    return lo / one_minus, hi / one_minus


MARGIN = 2  # hull is scaled into [0, 1/MARGIN], strictly inside [0, 1)


def normalize_to_unit(ifs: EquicontractiveIFS) -> EquicontractiveIFS:
    """Affinely conjugate so the attractor hull sits inside [0, 1/2] ⊆ [0,1).

    The conjugacy g(x) = scale*x + offset is recorded in provenance.  A system
    whose hull already fits gets an identity conjugacy entry and is otherwise
    unchanged.  Base-b digit statistics are only meaningful in a frame reached by
    the digit-preserving conjugacies (integer shifts, 1/b scalings); this general
    affine rescale is recorded exactly so callers can translate between frames.
    """
    _require_positive(ifs)
    a, b = attractor_hull(ifs)
    if a == b:
        raise DegenerateMeasureError("attractor is a single point; nothing to normalize")
    if a >= 0 and b <= Fraction(1, MARGIN):
        return ifs.with_provenance(
            {"step": "rescale", "scale": ExactNumber(1), "offset": ExactNumber(0)})
    scale = 1 / (MARGIN * (b - a))
    offset = -a * scale
    one_minus = 1 - ifs.ratio
    new_ts = tuple(scale * t + offset * one_minus for t in ifs.translations)
    return EquicontractiveIFS(
        ifs.ratio, new_ts,
        ifs.provenance + ({"step": "rescale", "scale": scale, "offset": offset},))


def recorded_conjugacy(ifs: EquicontractiveIFS) -> Tuple[ExactNumber, ExactNumber]:
    """Compose all recorded rescale steps into one affine map (scale, offset)."""
    scale, offset = ExactNumber(1), ExactNumber(0)
    for entry in ifs.provenance:
        if entry.get("step") == "rescale":
            s, o = entry["scale"], entry["offset"]
            scale, offset = s * scale, s * offset + o
    return scale, offset


def _require_positive(ifs: EquicontractiveIFS) -> None:
    if not ifs.is_positive:
        raise InputError("operation requires ratio in (0,1): square the system first")


# ---------------------------------------------------------------------------
# cylinders
# ---------------------------------------------------------------------------

def validate_word(ifs: EquicontractiveIFS, word: Sequence[int]) -> DigitWord:
    w = tuple(int(i) for i in word)
    for i in w:
        if not 0 <= i < ifs.nmaps:
            raise InputError(f"digit {i} out of range for {ifs.nmaps} maps")
    return w


def cylinder_interval(ifs: EquicontractiveIFS, word: Sequence[int]
                      ) -> Tuple[ExactNumber, ExactNumber]:
    """Exact image of Conv(X) under phi_{w_0} o phi_{w_1} o ... (empty word: Conv(X))."""
    _require_positive(ifs)
    word = validate_word(ifs, word)
    a, b = attractor_hull(ifs)
    coeff = ExactNumber(1)
    shift = ExactNumber(0)
    for i in word:
        shift = shift + coeff * ifs.translations[i]
        coeff = coeff * ifs.ratio
    return coeff * a + shift, coeff * b + shift


def cylinder_enclosure(ifs: EquicontractiveIFS, word: Sequence[int],
                       precision_bits: int = 64) -> Enclosure:
    """Certified enclosure of the cylinder interval, evaluated from the word in
    interval arithmetic.

    At large depth the exact endpoints from cylinder_interval have canonical
    field coordinates with enormous cancelling coefficients, and enclosing them
    costs precision proportional to that coefficient size.  Horner evaluation
    of the word is contractive (every step multiplies by lam < 1), so it never
    cancels: the cost stays proportional to the requested output precision.
    """
    from .precision import iv_from_enclosure, iv_to_enclosure, ivctx
    _require_positive(ifs)
    word = validate_word(ifs, word)
    a, b = attractor_hull(ifs)
    bits = precision_bits + 32 + max(0, len(word)).bit_length()
    ctx = ivctx(bits)
    lam = iv_from_enclosure(ctx, ifs.ratio.approx(bits))
    ts = [iv_from_enclosure(ctx, t.approx(bits)) for t in ifs.translations]
    hull = ctx.mpf([iv_from_enclosure(ctx, a.approx(bits)).a,
                    iv_from_enclosure(ctx, b.approx(bits)).b])
    acc = ctx.mpf(0)
    coeff = ctx.mpf(1)
    for i in word:
        acc = acc + coeff * ts[i]
        coeff = coeff * lam
    return iv_to_enclosure(acc + coeff * hull)


def cylinder_measure(p: ProbVector, word: Sequence[int]) -> Fraction:
    """Product of digit weights: the symbolic mass of the cylinder (equals the
    geometric mass whenever first-level images are disjoint)."""
    out = Fraction(1)
    for i in word:
        if not 0 <= i < len(p):
            raise InputError(f"digit {i} out of range for {len(p)} weights")
        out *= p[i]
    return out


def find_separated_pair(ifs: EquicontractiveIFS, max_level: int
                        ) -> Optional[SeparatedPair]:
    """Smallest level M <= max_level and lexicographically first pair of length-M
    words whose cylinder hulls are disjoint (strictly: touching endpoints do not
    count).  Returns None when no pair separates up to max_level.
    """
    _require_positive(ifs)
    if ifs.distinct_translation_count() < 2:
        return None
    m = ifs.nmaps
    for level in range(1, max_level + 1):
        words = _words_of_length(m, level)
        intervals = [cylinder_interval(ifs, w) for w in words]
        for idx1 in range(len(words)):
            lo1, hi1 = intervals[idx1]
            for idx2 in range(idx1 + 1, len(words)):
                lo2, hi2 = intervals[idx2]
                # disjoint iff one hull ends strictly before the other begins
                if hi1 < lo2 or hi2 < lo1:
                    return SeparatedPair(level, words[idx1], words[idx2])
    return None


def _words_of_length(m: int, level: int) -> List[DigitWord]:
    words: List[DigitWord] = [()]
    for _ in range(level):
        words = [w + (i,) for w in words for i in range(m)]
    return words


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

_SAMPLE_TAG = "ifs-sample"


def sample_digit_matrix(p: ProbVector, n: int, depth: int, seed: int,
                        tag: str = _SAMPLE_TAG, start: int = 0) -> np.ndarray:
    """(n, depth+1) i.i.d. digit matrix, deterministic per (seed, row index).

    ``start`` offsets the row indices: rows are keyed by absolute index, so
    concatenating chunked calls reproduces one big call bit-for-bit (useful to
    bound peak memory on large n).
    """
    if depth < 0:
        raise InputError("depth must be >= 0")
    rng = CounterRNG(seed, tag)
    u = rng.uniform_matrix(np.arange(start, start + n, dtype=np.uint64),
                           depth + 1)
    return digits_from_uniforms(u, [float(w) for w in p])


def values_from_digits(ifs: EquicontractiveIFS, digits: np.ndarray) -> np.ndarray:
    """Float evaluation sum_n t_{d_n} ratio^n by Horner (works for either ratio sign)."""
    t = ifs.translations_as_floats()
    r = float(ifs.ratio)
    vals = np.zeros(digits.shape[0], dtype=np.float64)
    for k in range(digits.shape[1] - 1, -1, -1):
        vals = vals * r + t[digits[:, k]]
    return vals


def sample_values(ifs: EquicontractiveIFS, p: ProbVector, n: int, depth: int,
                  seed: int, start: int = 0) -> np.ndarray:
    """n float samples of the self-similar measure, truncated at ``depth``.

    This is the statistical path (float64); certified enclosures come from
    :func:`sample_point`, which replays the identical digit stream.  ``start``
    shifts the sample indices (see :func:`sample_digit_matrix`).
    """
    validate_pair(ifs, p)
    return values_from_digits(ifs, sample_digit_matrix(p, n, depth, seed,
                                                       start=start))


def sample_word(ifs: EquicontractiveIFS, p: ProbVector, depth: int, seed: int,
                index: int = 0) -> Tuple[int, ...]:
    """The digit word of the lazy sample path at (seed, index): the same word
    sample_point certifies, without the exact endpoint computation (which gets
    expensive at depths in the thousands)."""
    validate_pair(ifs, p)
    _require_positive(ifs)
    if depth < 0:
        raise InputError("depth must be >= 0")
    rng = CounterRNG(seed, _SAMPLE_TAG)
    u = rng.uniform_at(index, range(depth + 1))
    return tuple(int(d) for d in
                 digits_from_uniforms(u[None, :], [float(w) for w in p])[0])


def sample_point(ifs: EquicontractiveIFS, p: ProbVector, depth: int, seed: int,
                 index: int = 0) -> CertifiedPoint:
    """One certified sample: the digit word drawn at (seed, index) and the exact
    interval sum(t ratio^n) + ratio^(depth+1) * Conv(X) containing every
    continuation of it."""
    word = sample_word(ifs, p, depth, seed, index)
    lo, hi = cylinder_interval(ifs, word)
    return CertifiedPoint(word, lo, hi)


def measure_mean(ifs: EquicontractiveIFS, p: ProbVector) -> ExactNumber:
    """Exact mean of the self-similar measure: E[t]/(1 - ratio)."""
    validate_pair(ifs, p)
    et = ExactNumber(0)
    for w, t in zip(p, ifs.translations):
        et = et + t * w
    return et / (1 - ifs.ratio)


# ---------------------------------------------------------------------------
# canonical fixtures (shared by tests and command-line examples)
# ---------------------------------------------------------------------------

def cantor_system() -> Tuple[EquicontractiveIFS, ProbVector]:
    """Middle-thirds system: ratio 1/3, translations 0 and 2/3, fair weights."""
    return (EquicontractiveIFS(Fraction(1, 3), (Fraction(0), Fraction(2, 3))),
            ProbVector([Fraction(1, 2), Fraction(1, 2)]))


def golden_bernoulli_system() -> Tuple[EquicontractiveIFS, ProbVector]:
    """Bernoulli convolution at the golden ratio inverse: ratio (sqrt5-1)/2,
    translations -1 and 1, fair weights."""
    lam = ExactNumber.algebraic((-1, 1, 1), (Fraction(1, 2), Fraction(7, 10)))
    return (EquicontractiveIFS(lam, (ExactNumber(-1), ExactNumber(1))),
            ProbVector([Fraction(1, 2), Fraction(1, 2)]))
