"""Constant-composition distribution matching (CCDM).

A composition fixes how many times each amplitude level appears in a block
of ``n`` symbols. The matcher maps an integer rank (read from ``k`` input
bits) to the rank-th lexicographic arrangement of that multiset, and back.
Ranks are handled with exact Python integers, so there is no interval
rounding to worry about.

QAM blocks are shaped per quadrature: the Maxwell-Boltzmann law factorises
into identical one-dimensional laws for x and p, each of which is matched
over the positive amplitude levels while the signs are carried by raw bits.
"""

from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np

from ._validation import as_rng, check_int
from .constellation import amplitude_levels, quadrature_distribution
from .exceptions import (
    CapacityError,
    InvalidParameterError,
    InvalidSequenceError,
    LengthMismatchError,
    RankOutOfRangeError,
)

__all__ = [
    "Composition",
    "composition_for",
    "multinomial",
    "ccdm_capacity",
    "ccdm_encode",
    "ccdm_decode",
    "shape_block",
    "shaped_bits_required",
]


def multinomial(counts):
    """Number of distinct sequences with the given symbol counts."""
    total = factorial(sum(counts))
    for c in counts:
        total //= factorial(c)
    return total


@dataclass(frozen=True)
class Composition:
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts or any(c < 0 for c in counts):
            raise InvalidParameterError(f"counts must be non-negative, got {self.counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self):
        return sum(self.counts)

    @property
    def n_levels(self):
        return len(self.counts)

    @cached_property
    def n_sequences(self):
        return multinomial(self.counts)

    @cached_property
    def n_bits(self):
        """Input bits per block, ``floor(log2(n_sequences))``."""
        return self.n_sequences.bit_length() - 1

    def empirical(self):
        return np.asarray(self.counts, dtype=float) / self.n


def composition_for(distribution, n):
    """Round ``n * distribution`` to integer counts by largest remainder.

    Leftover units go to the largest fractional parts; ties go to the
    lower level index (the lower amplitude), which keeps the realised
    modulation variance from creeping upward.
    """
    n = check_int(n, "n")
    if n < 1:
        raise LengthMismatchError(f"block length must be >= 1, got {n}")
    p = np.asarray(distribution, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
        raise InvalidParameterError("distribution must be a non-negative vector summing to 1")
    scaled = n * p
    counts = np.floor(scaled).astype(np.int64)
    short = n - int(counts.sum())
    frac = scaled - counts
    order = sorted(range(p.size), key=lambda i: (-frac[i], i))
    for i in order[:short]:
        counts[i] += 1
    return Composition(tuple(int(c) for c in counts))


def ccdm_capacity(comp):
    return comp.n_bits


def _bits_to_int(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        return 0
    pad = (-bits.size) % 8
    packed = np.packbits(np.concatenate([np.zeros(pad, np.uint8), bits]))
    return int.from_bytes(packed.tobytes(), "big")


def _int_to_bits(value, k):
    if k == 0:
        return np.zeros(0, dtype=np.uint8)
    nbytes = (k + 7) // 8
    raw = np.frombuffer(value.to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw)[8 * nbytes - k:]


def _check_bits(bits):
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise LengthMismatchError("bits must be one-dimensional")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise InvalidParameterError("bits must contain only 0 and 1")
    return bits.astype(np.uint8)


def ccdm_encode(bits, comp):
    """Map ``comp.n_bits`` bits to a sequence with exactly composition ``comp``.

    The bits are read most-significant first as a rank, and the sequence is
    the rank-th arrangement of the multiset in lexicographic order of the
    level indices.
    """
    bits = _check_bits(bits)
    k = comp.n_bits
    if bits.size != k:
        if k == 0:
            raise CapacityError("composition admits a single sequence and carries no bits")
        raise LengthMismatchError(f"expected {k} bits, got {bits.size}")
    rank = _bits_to_int(bits)

    remaining = list(comp.counts)
    n = comp.n
    total = comp.n_sequences
    out = np.empty(n, dtype=np.int64)
    for pos in range(n):
        left = n - pos
        for level, c in enumerate(remaining):
            if c == 0:
                continue
            # sequences that put `level` at this position
            branch = total * c // left
            if rank < branch:
                out[pos] = level
                remaining[level] -= 1
                total = branch
                break
            rank -= branch
    return out


def ccdm_decode(symbols, comp):
    """Inverse of :func:`ccdm_encode`."""
    symbols = np.asarray(symbols)
    if symbols.ndim != 1 or symbols.size != comp.n:
        raise InvalidSequenceError(f"expected {comp.n} symbols, got shape {symbols.shape}")
    if symbols.size and (symbols.min() < 0 or symbols.max() >= comp.n_levels):
        raise InvalidSequenceError("symbol index outside the composition alphabet")
    counts = np.bincount(symbols.astype(np.int64), minlength=comp.n_levels)
    if tuple(int(c) for c in counts) != comp.counts:
        raise InvalidSequenceError(f"sequence composition {tuple(counts)} != {comp.counts}")

    remaining = list(comp.counts)
    n = comp.n
    total = comp.n_sequences
    rank = 0
    for pos, s in enumerate(symbols.tolist()):
        left = n - pos
        for level in range(s):
            c = remaining[level]
            if c:
                rank += total * c // left
        total = total * remaining[s] // left
        remaining[s] -= 1
    k = comp.n_bits
    if rank >> k:
        raise RankOutOfRangeError(f"sequence rank {rank} is not reachable from {k} bits")
    return _int_to_bits(rank, k)


def _block_lengths(n, ccdm_length):
    if ccdm_length is None or ccdm_length >= n:
        return [n]
    ccdm_length = check_int(ccdm_length, "ccdm_length", low=1)
    full, rest = divmod(n, ccdm_length)
    return [ccdm_length] * full + ([rest] if rest else [])


def shaped_bits_required(c, n, ccdm_length=None):
    """Bits consumed by :func:`shape_block` for the same arguments."""
    _, probs = quadrature_distribution(c)
    total = 0
    comps = {}
    for m in _block_lengths(check_int(n, "n", low=1), ccdm_length):
        if m not in comps:
            comps[m] = composition_for(probs, m)
        total += 2 * comps[m].n_bits + 2 * m
    return total


def shape_block(c, n, bits, ccdm_length=None):
    """Shaped symbol block drawn from constellation ``c``.

    Each quadrature's amplitude sequence comes from its own CCDM over the
    positive amplitude levels; signs are uniform raw bits. When
    ``ccdm_length`` is given the block is split into consecutive matcher
    blocks of that length (the last one may be shorter).

    Parameters
    ----------
    c : Constellation
    n : int
        Number of symbols.
    bits : array of {0, 1} or numpy Generator or int seed
        Exactly ``shaped_bits_required(c, n, ccdm_length)`` bits, or a
        random source to draw them from.

    Returns
    -------
    ndarray of complex
        ``n`` constellation points.
    """
    n = check_int(n, "n")
    if n < 1:
        raise LengthMismatchError(f"block length must be >= 1, got {n}")
    needed = shaped_bits_required(c, n, ccdm_length)
    if isinstance(bits, (np.random.Generator, int, np.random.SeedSequence)) or bits is None:
        bits = as_rng(bits).integers(0, 2, size=needed, dtype=np.uint8)
    else:
        bits = _check_bits(bits)
        if bits.size != needed:
            raise LengthMismatchError(f"shape_block needs {needed} bits, got {bits.size}")

    levels = amplitude_levels(c.order) * c.gain
    _, probs = quadrature_distribution(c)
    x = np.empty(n)
    p = np.empty(n)
    cursor = 0
    start = 0
    comps = {}
    for m in _block_lengths(n, ccdm_length):
        if m not in comps:
            comps[m] = composition_for(probs, m)
        comp = comps[m]
        k = comp.n_bits
        for quad in (x, p):
            idx = ccdm_encode(bits[cursor:cursor + k], comp)
            cursor += k
            quad[start:start + m] = levels[idx]
        for quad in (x, p):
            signs = 1.0 - 2.0 * bits[cursor:cursor + m]
            cursor += m
            quad[start:start + m] *= signs
        start += m
    return x + 1j * p
