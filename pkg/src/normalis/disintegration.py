"""Disintegration of a self-similar measure over a random model alphabet.

Given a fully supported weight vector p and a distinguished pair of digits
(i1, i2), the digit alphabet is coarsened into blocks: the pair {i1, i2} plus a
singleton for every other digit.  A random block word omega (i.i.d. with the
block weights q) selects a "model measure": at position n the digit is drawn
from block omega_n with the conditional weights p_i / q_{omega_n}.  Averaging the
model measures over omega recovers the original self-similar measure exactly;
this module builds the alphabet, samples block words and model points, computes
exact cylinder masses and the per-cylinder atom bound, and verifies the
averaging identity and the cylinder restriction identity statistically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import ks_2samp

from .algebra import ExactNumber
from .errors import InputError
from .ifs_core import (
    CertifiedPoint,
    DigitWord,
    EquicontractiveIFS,
    ProbVector,
    cylinder_interval,
    sample_values,
    validate_pair,
    validate_word,
)
from .rng import CounterRNG, digits_from_uniforms

_BLOCK_TAG = "disint-blocks"
_DIGIT_TAG = "disint-digits"


# ---------------------------------------------------------------------------
# alphabet
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelAlphabet:
    """Blocks partitioning the digit set: one pair {i1, i2} plus singletons.

    ``blocks[0]`` is always the pair; singletons follow in digit order.  Weights
    are q_pair = p_i1 + p_i2 and q_{singleton i} = p_i, summing to one exactly.
    """

    blocks: Tuple[FrozenSet[int], ...]
    weights: Tuple[Fraction, ...]
    pair: Tuple[int, int]

    @property
    def pair_block_index(self) -> int:
        return 0

    @property
    def nblocks(self) -> int:
        return len(self.blocks)

    def block_containing(self, digit: int) -> int:
        for k, blk in enumerate(self.blocks):
            if digit in blk:
                return k
        raise InputError(f"digit {digit} not covered by alphabet {self.blocks}")

    def conditional_weights(self, block_index: int, p: ProbVector) -> List[Tuple[int, Fraction]]:
        blk = sorted(self.blocks[block_index])
        q = self.weights[block_index]
        return [(i, p[i] / q) for i in blk]

    def weights_as_floats(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights], dtype=np.float64)


def build_alphabet(p: ProbVector, i1: int, i2: int) -> ModelAlphabet:
    """Coarsen the digit set {0..m-1} into {{i1,i2}} plus singletons."""
    m = len(p)
    if i1 == i2:
        raise InputError("the distinguished pair needs two distinct digits")
    for i in (i1, i2):
        if not 0 <= i < m:
            raise InputError(f"pair digit {i} out of range for {m} weights")
    if any(w == 0 for w in p):
        raise InputError("alphabet requires a fully supported weight vector; trim first")
    i1, i2 = sorted((i1, i2))
    blocks: List[FrozenSet[int]] = [frozenset({i1, i2})]
    weights: List[Fraction] = [p[i1] + p[i2]]
    for i in range(m):
        if i not in (i1, i2):
            blocks.append(frozenset({i}))
            weights.append(p[i])
    assert sum(weights) == 1
    return ModelAlphabet(tuple(blocks), tuple(weights), (i1, i2))


# ---------------------------------------------------------------------------
# block words
# ---------------------------------------------------------------------------

class ModelWord:
    """A block word with a fixed prefix and deterministic lazy extension.

    The block at position n is a pure function of (seed, index, n); a prefix can
    be supplied explicitly (for conditioning on particular blocks), in which case
    only positions beyond it are drawn.  ``offset`` shifts the position key, which
    is how the shifted word sigma^k(omega) is represented without re-drawing.
    """

    def __init__(self, alphabet: ModelAlphabet, seed: int, index: int = 0,
                 prefix: Sequence[int] = (), offset: int = 0):
        for b in prefix:
            if not 0 <= b < alphabet.nblocks:
                raise InputError(f"block index {b} out of range")
        self.alphabet = alphabet
        self.seed = int(seed)
        self.index = int(index)
        self.offset = int(offset)
        self._cache: List[int] = list(int(b) for b in prefix)
        self._rng = CounterRNG(self.seed, _BLOCK_TAG)

    def block_index_at(self, n: int) -> int:
        if n < 0:
            raise InputError("position must be >= 0")
        if n >= len(self._cache):
            positions = range(self.offset + len(self._cache), self.offset + n + 1)
            u = self._rng.uniform_at(self.index, positions)
            drawn = digits_from_uniforms(u[None, :], self.alphabet.weights_as_floats())[0]
            self._cache.extend(int(b) for b in drawn)
        return self._cache[n]

    def block_at(self, n: int) -> FrozenSet[int]:
        return self.alphabet.blocks[self.block_index_at(n)]

    def prefix(self, length: int) -> Tuple[int, ...]:
        self.block_index_at(length - 1)
        return tuple(self._cache[:length])

    def blocks_prefix(self, length: int) -> Tuple[FrozenSet[int], ...]:
        return tuple(self.alphabet.blocks[b] for b in self.prefix(length))

    def shifted(self, k: int) -> "ModelWord":
        """The word sigma^k(omega): position n reads this word's position n+k."""
        return ModelWord(self.alphabet, self.seed, self.index,
                         prefix=self._cache[k:], offset=self.offset + k)


def sample_omega(alphabet: ModelAlphabet, length: int, seed: int,
                 index: int = 0) -> ModelWord:
    """An i.i.d. block word with law q, materialized to ``length`` blocks."""
    if length < 1:
        raise InputError("length must be >= 1")
    w = ModelWord(alphabet, seed, index)
    w.block_index_at(length - 1)
    return w


def sample_block_matrix(alphabet: ModelAlphabet, n: int, depth: int,
                        seed: int) -> np.ndarray:
    """(n, depth+1) block-index matrix: row i is the prefix of omega_i under P."""
    rng = CounterRNG(seed, _BLOCK_TAG)
    u = rng.uniform_matrix(np.arange(n, dtype=np.uint64), depth + 1)
    return digits_from_uniforms(u, [float(w) for w in alphabet.weights])


# ---------------------------------------------------------------------------
# cylinders: exact mass and the atom bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelCylinder:
    """A digit word read against the blocks of a model word."""

    omega: ModelWord
    word: DigitWord

    def __post_init__(self):
        for n, digit in enumerate(self.word):
            if digit not in self.omega.block_at(n):
                raise InputError(
                    f"digit {digit} at position {n} incompatible with block "
                    f"{sorted(self.omega.block_at(n))}")


def model_cylinder_measure(cyl: ModelCylinder, p: ProbVector,
                           alphabet: ModelAlphabet) -> Fraction:
    """Exact model-measure mass of the cylinder: product of p_i / q_block."""
    out = Fraction(1)
    for n, digit in enumerate(cyl.word):
        b = cyl.omega.block_index_at(n)
        out *= p[digit] / alphabet.weights[b]
    return out


def atom_bound(omega_prefix, p: ProbVector, i1: int, i2: int) -> Fraction:
    """Largest possible mass of any cylinder compatible with the prefix:
    (max(p_i1, p_i2) / (p_i1 + p_i2)) ** (number of pair blocks in the prefix)."""
    pair = frozenset({i1, i2})
    if isinstance(omega_prefix, ModelWord):
        omega_prefix = omega_prefix.blocks_prefix(len(omega_prefix._cache))
    count = sum(1 for blk in omega_prefix if frozenset(blk) == pair)
    ratio = max(p[i1], p[i2]) / (p[i1] + p[i2])
    return ratio ** count


# ---------------------------------------------------------------------------
# model sampling
# ---------------------------------------------------------------------------

def _conditional_tables(alphabet: ModelAlphabet, p: ProbVector
                        ) -> Tuple[np.ndarray, np.ndarray, int, int, float]:
    """Per-block lookup tables for vectorized digit draws.

    Returns (is_pair mask, singleton digit per block, pair digits i1/i2, and the
    conditional threshold p_i1/(p_i1+p_i2))."""
    nb = alphabet.nblocks
    is_pair = np.zeros(nb, dtype=bool)
    single = np.zeros(nb, dtype=np.int64)
    i1, i2 = alphabet.pair
    for k, blk in enumerate(alphabet.blocks):
        if len(blk) == 2:
            is_pair[k] = True
        else:
            (single[k],) = blk
    thr = float(p[i1] / (p[i1] + p[i2]))
    return is_pair, single, i1, i2, thr


def _digits_for_blocks(block_idx: np.ndarray, u: np.ndarray,
                       alphabet: ModelAlphabet, p: ProbVector) -> np.ndarray:
    is_pair, single, i1, i2, thr = _conditional_tables(alphabet, p)
    pair_digit = np.where(u < thr, i1, i2)
    return np.where(is_pair[block_idx], pair_digit, single[block_idx]).astype(np.uint8)


def sample_model_values(ifs: EquicontractiveIFS, p: ProbVector,
                        alphabet: ModelAlphabet, n: int, depth: int, seed: int,
                        corrupt_pair_weight: bool = False) -> np.ndarray:
    """n float samples of the averaged model construction: omega ~ P per row, then
    digits from the conditional block laws.

    ``corrupt_pair_weight`` is a self-test control: it deliberately replaces the
    pair-block weight q_pair = p_i1 + p_i2 by p_i1 alone (renormalized) when
    drawing blocks, which shifts digit frequencies and must make the averaging
    verification fail.  Never enable it outside power checks.
    """
    validate_pair(ifs, p)
    if corrupt_pair_weight:
        i1, _ = alphabet.pair
        wrong = [p[i1]] + [alphabet.weights[k] for k in range(1, alphabet.nblocks)]
        total = sum(wrong)
        block_weights = [float(w / total) for w in wrong]
        rng = CounterRNG(seed, _BLOCK_TAG)
        u = rng.uniform_matrix(np.arange(n, dtype=np.uint64), depth + 1)
        block_idx = digits_from_uniforms(u, block_weights)
    else:
        block_idx = sample_block_matrix(alphabet, n, depth, seed)
    rng_d = CounterRNG(seed, _DIGIT_TAG)
    u_d = rng_d.uniform_matrix(np.arange(n, dtype=np.uint64), depth + 1)
    digits = _digits_for_blocks(block_idx, u_d, alphabet, p)
    t = ifs.translations_as_floats()
    r = float(ifs.ratio)
    vals = np.zeros(n, dtype=np.float64)
    for k in range(depth, -1, -1):
        vals = vals * r + t[digits[:, k]]
    return vals


def values_for_fixed_omega(omega: ModelWord, ifs: EquicontractiveIFS,
                           p: ProbVector, n: int, depth: int, seed: int,
                           index_offset: int = 0) -> np.ndarray:
    """n float samples of the single model measure for this fixed omega."""
    validate_pair(ifs, p)
    blocks = np.array([omega.block_index_at(k) for k in range(depth + 1)])
    rng = CounterRNG(seed, _DIGIT_TAG)
    idx = np.arange(index_offset, index_offset + n, dtype=np.uint64)
    u = rng.uniform_matrix(idx, depth + 1)
    digits = _digits_for_blocks(np.broadcast_to(blocks, (n, depth + 1)), u,
                                omega.alphabet, p)
    t = ifs.translations_as_floats()
    r = float(ifs.ratio)
    vals = np.zeros(n, dtype=np.float64)
    for k in range(depth, -1, -1):
        vals = vals * r + t[digits[:, k]]
    return vals


def sample_model_point(omega: ModelWord, ifs: EquicontractiveIFS, p: ProbVector,
                       depth: int, seed: int, index: int = 0) -> CertifiedPoint:
    """One certified sample of the model measure for this omega: singleton blocks
    force their digit, the pair block draws with the conditional law."""
    validate_pair(ifs, p)
    if depth < 0:
        raise InputError("depth must be >= 0")
    is_pair, single, i1, i2, thr = _conditional_tables(omega.alphabet, p)
    rng = CounterRNG(seed, _DIGIT_TAG)
    u = rng.uniform_at(index, range(depth + 1))
    word = []
    for nn in range(depth + 1):
        b = omega.block_index_at(nn)
        if is_pair[b]:
            word.append(i1 if u[nn] < thr else i2)
        else:
            word.append(int(single[b]))
    word = validate_word(ifs, word)
    lo, hi = cylinder_interval(ifs, word)
    return CertifiedPoint(word, lo, hi)


def model_mean(omega: ModelWord, ifs: EquicontractiveIFS, p: ProbVector,
               depth: int) -> float:
    """Truncated mean of the model measure for fixed omega:
    sum over n of (conditional mean of t over block omega_n) * ratio**n."""
    total = 0.0
    r = float(ifs.ratio)
    power = 1.0
    for n in range(depth + 1):
        b = omega.block_index_at(n)
        cond = omega.alphabet.conditional_weights(b, p)
        total += power * sum(float(w) * float(ifs.translations[i]) for i, w in cond)
        power *= r
    return total


# ---------------------------------------------------------------------------
# statistical verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KSReport:
    """Two-sample Kolmogorov-Smirnov comparison with the asymptotic critical value."""

    statistic: float
    critical: float
    alpha: float
    n1: int
    n2: int
    pvalue: float

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical

    def as_dict(self):
        return {"statistic": self.statistic, "critical": self.critical,
                "alpha": self.alpha, "n1": self.n1, "n2": self.n2,
                "pvalue": self.pvalue, "pass": self.passed}


def ks_compare(a: np.ndarray, b: np.ndarray, alpha: float = 0.01) -> KSReport:
    stat = ks_2samp(a, b)
    c = math.sqrt(-math.log(alpha / 2) / 2)
    critical = c * math.sqrt((len(a) + len(b)) / (len(a) * len(b)))
    return KSReport(float(stat.statistic), critical, alpha, len(a), len(b),
                    float(stat.pvalue))


def verify_disintegration(ifs: EquicontractiveIFS, p: ProbVector,
                          alphabet: ModelAlphabet, n: int, depth: int, seed: int,
                          alpha: float = 0.01,
                          corrupt_pair_weight: bool = False) -> KSReport:
    """Compare n samples of the averaged model construction against n direct
    samples of the self-similar measure (two independent routes to the same law)."""
    if n < 100:
        raise InputError("n < 100: the two-sample comparison is underpowered")
    model_vals = sample_model_values(ifs, p, alphabet, n, depth, seed,
                                     corrupt_pair_weight=corrupt_pair_weight)
    direct_vals = sample_values(ifs, p, n, depth, seed)
    return ks_compare(model_vals, direct_vals, alpha)


def verify_restriction_identity(omega: ModelWord, word: Sequence[int],
                                ifs: EquicontractiveIFS, p: ProbVector,
                                n: int, seed: int, depth: int = 30,
                                alpha: float = 0.01) -> KSReport:
    """Conditioning the model measure on a cylinder versus pushing the shifted
    model measure through the cylinder map: two routes, one law.

    Route (a) rejection-samples the model measure, keeping points inside the
    geometric cylinder interval (valid under separation).  Route (b) samples the
    shifted word's model measure and applies the composed affine map.  The two
    empirical distributions are KS-compared.
    """
    word = validate_word(ifs, word)
    cyl = ModelCylinder(omega, word)  # validates compatibility
    mass = model_cylinder_measure(cyl, p, omega.alphabet)
    if mass < Fraction(1, 10 ** 6):
        raise InputError(
            f"cylinder mass {mass} below 1e-6: rejection sampling infeasible")
    m1 = len(word)
    lo, hi = cylinder_interval(ifs, word)
    flo, fhi = float(lo.approx(64).lo), float(hi.approx(64).hi)

    accepted: List[np.ndarray] = []
    got = 0
    offset = 0
    batch = max(4 * n, 10_000)
    max_draws = int(20 * n / float(mass)) + batch
    while got < n and offset < max_draws:
        vals = values_for_fixed_omega(omega, ifs, p, batch, depth + m1, seed,
                                      index_offset=offset)
        keep = vals[(vals >= flo) & (vals <= fhi)]
        accepted.append(keep)
        got += len(keep)
        offset += batch
    sample_a = np.concatenate(accepted)[:n]
    if len(sample_a) < n:
        raise InputError("rejection sampling starved; cylinder thinner than its mass suggests")

    shifted = omega.shifted(m1)
    tail_vals = values_for_fixed_omega(shifted, ifs, p, n, depth, seed + 1)
    coeff = ifs.ratio ** m1
    shift = ExactNumber(0)
    c = ExactNumber(1)
    for i in word:
        shift = shift + c * ifs.translations[i]
        c = c * ifs.ratio
    sample_b = float(coeff) * tail_vals + float(shift)
    return ks_compare(sample_a, sample_b, alpha)
