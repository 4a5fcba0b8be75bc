"""On-the-fly Hamming parity-check matrix, syndrome computation and
single-error decoding for power-of-two blocks.

The matrix column for position j (1-indexed) is the binary expansion of j,
so no matrix is ever materialized: element (i, j) is bit i-1 of j. A block
of length n = 2^r maps its first n - 1 bits onto columns 1..2^r - 1; the
final bit is excluded from the syndrome and recovered through the
sigma = 0 case (a parity mismatch with a clean syndrome locates the error
there).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HammingParams:
    """Code geometry for one block length n = 2^r."""

    r: int

    def __post_init__(self):
        if self.r < 2:
            raise ValueError("need at least 2 parity rows")

    @property
    def codeword_span(self) -> int:
        return (1 << self.r) - 1

    @property
    def block_length(self) -> int:
        return 1 << self.r

    @classmethod
    def for_block_length(cls, n: int) -> "HammingParams":
        r = n.bit_length() - 1
        if n < 4 or (1 << r) != n:
            raise ValueError(f"block length {n} is not a power of two >= 4")
        return cls(r)


def matrix_element(i: int, j: int, params: HammingParams) -> int:
    """Element (i, j) of the r x (2^r - 1) parity-check matrix, 1-indexed."""
    if not 1 <= i <= params.r:
        raise ValueError(f"row {i} outside [1, {params.r}]")
    if not 1 <= j <= params.codeword_span:
        raise ValueError(f"column {j} outside [1, {params.codeword_span}]")
    return (j >> (i - 1)) & 1


def syndrome(block, params: HammingParams) -> int:
    """r-bit syndrome of a length-n block: XOR of the positions (1-indexed)
    of the set bits among the first n - 1 bits."""
    bits = np.asarray(block, dtype=np.uint8)
    if bits.size != params.block_length:
        raise ValueError(
            f"block length {bits.size} does not match n = {params.block_length}"
        )
    positions = np.nonzero(bits[: params.codeword_span])[0] + 1
    if positions.size == 0:
        return 0
    return int(np.bitwise_xor.reduce(positions))


def decode_flip(sigma_diff: int, params: HammingParams) -> int:
    """Block-local 0-based index to flip given the syndrome difference.

    Valid only when the two parties' block parities differ (odd error
    count). A zero difference places the error on the excluded final bit.
    """
    if not 0 <= sigma_diff <= params.codeword_span:
        raise ValueError("syndrome difference out of range")
    if sigma_diff == 0:
        return params.block_length - 1
    return sigma_diff - 1


def block_syndromes(bits: np.ndarray, n: int) -> np.ndarray:
    """Syndromes of all full length-n blocks of an unpacked bit array.

    Vectorized across blocks: bit t of each syndrome is the parity of the
    block bits whose column index has bit t set.
    """
    params = HammingParams.for_block_length(n)
    nfull = bits.size // n
    blocks = bits[: nfull * n].reshape(nfull, n)[:, : n - 1]
    weights = _column_weights(n, params.r)
    counts = blocks.astype(np.int64) @ weights
    return ((counts & 1) << np.arange(params.r)).sum(axis=1)


_WEIGHT_CACHE: dict = {}


def _column_weights(n: int, r: int) -> np.ndarray:
    """(n-1) x r matrix whose column t holds bit t of each column index."""
    cached = _WEIGHT_CACHE.get(n)
    if cached is None:
        j = np.arange(1, n)
        cached = ((j[:, None] >> np.arange(r)) & 1).astype(np.int64)
        _WEIGHT_CACHE[n] = cached
    return cached
