"""Counter-based splittable randomness: vectorized Philox4x32-10.

Every random quantity in this package is a pure function of
``(seed, stream tag, point index, position)``.  That makes sampling independent of
evaluation order, chunking, thread/process count, and lazy-refinement depth: a digit
drawn while extending an existing sample equals the digit that a deeper initial
sample would have produced.

The generator is the standard Philox4x32 with 10 rounds.  The implementation is
vectorized over numpy uint32 arrays; the known-answer vectors in the test suite pin
it to the reference constants.

Stream layout
-------------
key     = 64-bit seed XOR blake2s(tag)        (two 32-bit words)
counter = (position block, point index)        (two 64-bit halves)

Each 4x32 output block yields two 53-bit doubles, so a "position block" covers two
positions on the fast path (:meth:`CounterRNG.uniform_matrix`), or one position with
two independent lanes on the paired path (:meth:`CounterRNG.uniform_pair_matrix`).
The two paths are distinct derived streams; each is individually deterministic.
"""

from __future__ import annotations

import hashlib

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_BUMP0 = np.uint32(0x9E3779B9)
_BUMP1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_INV53 = 1.0 / float(1 << 53)


def philox4x32(counter: np.ndarray, key: np.ndarray) -> np.ndarray:
    """One Philox4x32-10 block per row.

    counter: uint32 array of shape (n, 4); key: uint32 array of shape (n, 2) or (2,).
    Returns a uint32 array of shape (n, 4).  Pure function.
    """
    counter = np.atleast_2d(np.asarray(counter, dtype=np.uint32))
    key = np.asarray(key, dtype=np.uint32)
    if key.ndim == 1:
        key = np.broadcast_to(key, (counter.shape[0], 2))
    c0 = counter[:, 0].copy()
    c1 = counter[:, 1].copy()
    c2 = counter[:, 2].copy()
    c3 = counter[:, 3].copy()
    k0 = key[:, 0].copy()
    k1 = key[:, 1].copy()
    for rnd in range(10):
        if rnd:
            k0 += _BUMP0
            k1 += _BUMP1
        p0 = c0.astype(np.uint64) * _M0
        p1 = c2.astype(np.uint64) * _M1
        lo0 = (p0 & _MASK32).astype(np.uint32)
        hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
        lo1 = (p1 & _MASK32).astype(np.uint32)
        hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=1)


def _doubles(w_hi: np.ndarray, w_lo: np.ndarray) -> np.ndarray:
    """Map two uint32 words to one uniform double in [0, 1) using 53 bits."""
    u = ((w_hi >> np.uint32(5)).astype(np.uint64) << np.uint64(26)) \
        | (w_lo >> np.uint32(6)).astype(np.uint64)
    return u.astype(np.float64) * _INV53


def _split64(x: np.ndarray) -> tuple:
    x = np.asarray(x, dtype=np.uint64)
    return (x & _MASK32).astype(np.uint32), (x >> np.uint64(32)).astype(np.uint32)


class CounterRNG:
    """A named, seeded stream of uniforms indexed by (point index, position)."""

    def __init__(self, seed: int, tag: str):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.tag = tag
        th = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
        t0 = int.from_bytes(th[:4], "little")
        t1 = int.from_bytes(th[4:], "little")
        self._key = np.array([(self.seed & 0xFFFFFFFF) ^ t0,
                              (self.seed >> 32) ^ t1], dtype=np.uint32)

    def __repr__(self):
        return f"CounterRNG(seed={self.seed}, tag={self.tag!r})"

    # -- fast path: 2 positions per Philox block -------------------------

    def _block_words(self, indices: np.ndarray, blocks: np.ndarray) -> np.ndarray:
        i_lo, i_hi = _split64(indices)
        b_lo, b_hi = _split64(blocks)
        counter = np.stack([b_lo, b_hi, i_lo, i_hi], axis=1)
        return philox4x32(counter, self._key)

    def uniform_matrix(self, indices, npos: int) -> np.ndarray:
        """Uniforms of shape (len(indices), npos); entry [i, p] depends only on
        (seed, tag, indices[i], p)."""
        indices = np.asarray(indices, dtype=np.uint64).ravel()
        nblocks = (npos + 1) // 2
        idx_grid = np.repeat(indices, nblocks)
        blk_grid = np.tile(np.arange(nblocks, dtype=np.uint64), len(indices))
        w = self._block_words(idx_grid, blk_grid)
        even = _doubles(w[:, 0], w[:, 1]).reshape(len(indices), nblocks)
        odd = _doubles(w[:, 2], w[:, 3]).reshape(len(indices), nblocks)
        out = np.empty((len(indices), 2 * nblocks), dtype=np.float64)
        out[:, 0::2] = even
        out[:, 1::2] = odd
        return out[:, :npos]

    def uniform_at(self, index: int, positions) -> np.ndarray:
        """Lazy-refinement path: same values as the corresponding
        ``uniform_matrix`` row, for an arbitrary set of positions."""
        positions = np.asarray(positions, dtype=np.uint64).ravel()
        idx = np.full(len(positions), index, dtype=np.uint64)
        w = self._block_words(idx, positions // np.uint64(2))
        even_lane = (positions % np.uint64(2) == 0)
        out = np.where(even_lane,
                       _doubles(w[:, 0], w[:, 1]),
                       _doubles(w[:, 2], w[:, 3]))
        return out

    # -- paired path: 2 independent lanes per position -------------------

    def uniform_pair_matrix(self, indices, npos: int) -> np.ndarray:
        """Shape (len(indices), npos, 2): two independent uniforms per position
        (used where each position needs a block draw plus a conditional draw)."""
        indices = np.asarray(indices, dtype=np.uint64).ravel()
        idx_grid = np.repeat(indices, npos)
        # offset so the paired stream never reuses fast-path counters: positions
        # are tagged in the high bit of the block index
        pos_grid = np.tile(np.arange(npos, dtype=np.uint64), len(indices))
        pos_grid = pos_grid | np.uint64(1 << 63)
        w = self._block_words(idx_grid, pos_grid)
        lane0 = _doubles(w[:, 0], w[:, 1]).reshape(len(indices), npos)
        lane1 = _doubles(w[:, 2], w[:, 3]).reshape(len(indices), npos)
        return np.stack([lane0, lane1], axis=2)

    def pair_at(self, index: int, positions) -> np.ndarray:
        """Lazy counterpart of :meth:`uniform_pair_matrix`; shape (len(positions), 2)."""
        positions = np.asarray(positions, dtype=np.uint64).ravel()
        idx = np.full(len(positions), index, dtype=np.uint64)
        w = self._block_words(idx, positions | np.uint64(1 << 63))
        return np.stack([_doubles(w[:, 0], w[:, 1]),
                         _doubles(w[:, 2], w[:, 3])], axis=1)


def digits_from_uniforms(u: np.ndarray, probs) -> np.ndarray:
    """Map uniforms to categorical digits with the given probability vector.

    Thresholds are the floating cumulative sums of ``probs`` (exact rationals are
    converted once; the same floats are used everywhere, so draws are reproducible).
    """
    p = np.array([float(x) for x in probs], dtype=np.float64)
    thresholds = np.cumsum(p)[:-1]
    return np.searchsorted(thresholds, u, side="right").astype(np.uint8)
