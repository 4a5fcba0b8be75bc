"""LFSR position streams, the two pair-swap permutation schemes, and the
block-separation quality metric.

A width-w register with primitive feedback taps cycles through all 2^w - 1
nonzero states, so a full-period window of states visits every position in
[1, 2^w) exactly once. Position 0 is prepended to obtain exact coverage of
[0, 2^w).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

TAP_TABLE_VERSION = 1

# One known maximal-length feedback tap set per register width
# (Fibonacci form, polynomial exponents). Widths below 8 only serve
# short test keys.
PRIMITIVE_TAPS = {
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 6, 2, 1),
    20: (20, 17),
    21: (21, 19),
    22: (22, 21),
    23: (23, 18),
    24: (24, 23, 22, 17),
}


@njit(cache=True)
def _cycle_kernel(width: int, tap_mask: int) -> np.ndarray:
    period = (1 << width) - 1
    out = np.empty(period, dtype=np.int64)
    state = 1
    for k in range(period):
        out[k] = state
        feedback = 0
        v = state & tap_mask
        while v:
            feedback ^= 1
            v &= v - 1
        state = (state >> 1) | (feedback << (width - 1))
    return out


@njit(cache=True)
def _compose_swaps(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    gather = np.arange(n)
    for i in range(a.shape[0]):
        ai = a[i]
        bi = b[i]
        t = gather[ai]
        gather[ai] = gather[bi]
        gather[bi] = t
    return gather


@njit(cache=True)
def _compose_pair_swaps(c: np.ndarray, n: int) -> np.ndarray:
    gather = np.arange(n)
    for q in range(c.shape[0] // 2):
        i = c[2 * q]
        j = c[2 * q + 1]
        t = gather[i]
        gather[i] = gather[j]
        gather[j] = t
    return gather


@dataclass(frozen=True)
class LfsrSpec:
    """Width, feedback taps and nonzero seed of one shift register."""

    width: int
    taps: tuple
    seed: int

    def __post_init__(self):
        if self.width < 2:
            raise ValueError("register width must be at least 2")
        if not 0 < self.seed < (1 << self.width):
            raise ValueError(
                f"seed must lie in [1, 2^{self.width}); the all-zero state "
                "is a fixed point of the feedback"
            )
        if not self.taps or any(not 1 <= t <= self.width for t in self.taps):
            raise ValueError("tap positions must lie in [1, width]")
        if self.width not in self.taps:
            raise ValueError("tap set must include the register width")

    @property
    def tap_mask(self) -> int:
        mask = 0
        for t in self.taps:
            mask |= 1 << (self.width - t)
        return mask

    @property
    def period(self) -> int:
        return (1 << self.width) - 1


def default_spec(width: int, seed: int) -> LfsrSpec:
    if width not in PRIMITIVE_TAPS:
        raise ValueError(f"no shipped tap set for width {width}")
    return LfsrSpec(width, PRIMITIVE_TAPS[width], seed)


# Full state cycle per (width, taps), shared by all seeds: the stream from
# any seed is a rotation of the same cycle.
_CYCLE_CACHE: dict = {}
# States below a given block length, in cycle order, per (width, taps, n).
_BELOW_CACHE: dict = {}


def _cycle(width: int, taps: tuple):
    key = (width, taps)
    cached = _CYCLE_CACHE.get(key)
    if cached is not None:
        return cached
    mask = 0
    for t in taps:
        mask |= 1 << (width - t)
    cycle = _cycle_kernel(width, mask)
    if np.unique(cycle).size != cycle.size:
        raise ValueError(
            f"taps {taps} are not primitive for width {width}: "
            "period falls short of 2^w - 1"
        )
    index_of = np.empty(1 << width, dtype=np.int64)
    index_of[cycle] = np.arange(cycle.size)
    _CYCLE_CACHE[key] = (cycle, index_of)
    return cycle, index_of


def lfsr_stream(spec: LfsrSpec, count: int) -> np.ndarray:
    """First `count` register states starting at the seed; all distinct."""
    if not 0 <= count <= spec.period:
        raise ValueError(f"count must lie in [0, {spec.period}]")
    cycle, index_of = _cycle(spec.width, spec.taps)
    start = int(index_of[spec.seed])
    idx = (start + np.arange(count)) % spec.period
    return cycle[idx]


def position_sequence(spec: LfsrSpec, n: int) -> np.ndarray:
    """N distinct positions covering [0, N) exactly once, N = 2^width.

    Position 0 first, then the 2^w - 1 successive states from the seed,
    interpreted directly as positions.
    """
    if n != (1 << spec.width):
        raise ValueError(f"N must equal 2^{spec.width} = {1 << spec.width}")
    out = np.empty(n, dtype=np.int64)
    out[0] = 0
    out[1:] = lfsr_stream(spec, n - 1)
    return out


class PermutationPlan:
    """Bijection on [0, N) built from an ordered list of transpositions.

    `gather` maps output slot -> input index (out[j] = in[gather[j]]);
    `forward` is its inverse (output slot of input index i).
    """

    __slots__ = ("length", "gather", "_forward")

    def __init__(self, gather: np.ndarray):
        gather = np.asarray(gather, dtype=np.int64)
        self.length = gather.size
        self.gather = gather
        self._forward = None

    @property
    def forward(self) -> np.ndarray:
        if self._forward is None:
            forward = np.empty(self.length, dtype=np.int64)
            forward[self.gather] = np.arange(self.length)
            self._forward = forward
        return self._forward

    @classmethod
    def identity(cls, n: int) -> "PermutationPlan":
        return cls(np.arange(n, dtype=np.int64))

    def inverse(self) -> "PermutationPlan":
        return PermutationPlan(self.forward.copy())

    def is_bijection(self) -> bool:
        seen = np.zeros(self.length, dtype=bool)
        seen[self.gather] = True
        return bool(seen.all())

    def apply_bits(self, bits: np.ndarray) -> np.ndarray:
        if bits.size != self.length:
            raise ValueError("bit-array length does not match plan length")
        return bits[self.gather]


class LfsrPositionSource:
    """Stream of position sequences from one register, continuous across
    reconciliation passes.

    Each request consumes N pseudo-random numbers; since the period is
    N - 1 the window advances by one state per request, so successive
    requests yield distinct sequences from the same seed.
    """

    def __init__(self, spec: LfsrSpec):
        self.spec = spec
        cycle, index_of = _cycle(spec.width, spec.taps)
        self._cycle = cycle
        self._offset = int(index_of[spec.seed])

    def _states_below(self, n: int):
        """Cycle indices and values of the n - 1 states below n, in cycle
        order; cached since sweeps revisit the same block lengths."""
        key = (self.spec.width, self.spec.taps, n)
        cached = _BELOW_CACHE.get(key)
        if cached is None:
            idx = np.nonzero(self._cycle < n)[0]
            cached = (idx, self._cycle[idx])
            _BELOW_CACHE[key] = cached
        return cached

    def next_positions(self, n: int) -> np.ndarray:
        """Next permutation-ready position sequence covering [0, n).

        n may be smaller than 2^width; states >= n are skipped.
        """
        if n > (1 << self.spec.width):
            raise ValueError("n exceeds the register's position range")
        period = self.spec.period
        out = np.empty(n, dtype=np.int64)
        out[0] = 0
        if n == period + 1:
            head = period - self._offset
            out[1 : 1 + head] = self._cycle[self._offset :]
            out[1 + head :] = self._cycle[: self._offset]
        else:
            idx, values = self._states_below(n)
            k = int(np.searchsorted(idx, self._offset))
            head = values.size - k
            out[1 : 1 + head] = values[k:]
            out[1 + head :] = values[:k]
        self._offset = (self._offset + n) % period
        return out


def _width_for(n: int) -> int:
    width = n.bit_length() - 1
    if n <= 0 or (1 << width) != n:
        raise ValueError(f"N = {n} is not a power of two")
    return width


def two_lfsr_permutation(
    seed1: int, seed2: int, n: int, taps: Optional[tuple] = None
) -> PermutationPlan:
    """Permutation from two independent registers: transposition (a_i, b_i)
    applied for i = 0..N-1 in order."""
    width = _width_for(n)
    taps = taps or PRIMITIVE_TAPS[width]
    if seed1 == seed2:
        warnings.warn(
            "identical seeds: every transposition is the identity",
            stacklevel=2,
        )
    a = position_sequence(LfsrSpec(width, taps, seed1), n)
    b = position_sequence(LfsrSpec(width, taps, seed2), n)
    return PermutationPlan(_compose_swaps(a, b, n))


def one_lfsr_permutation(
    seed: int, n: int, taps: Optional[tuple] = None
) -> PermutationPlan:
    """Permutation from a single register: exchange c_{2q} with c_{2q+1}."""
    width = _width_for(n)
    taps = taps or PRIMITIVE_TAPS[width]
    c = position_sequence(LfsrSpec(width, taps, seed), n)
    return PermutationPlan(_compose_pair_swaps(c, n))


def apply_permutation(key, plan: PermutationPlan):
    """Scatter the key through the plan: output bit forward[i] holds input
    bit i."""
    from .bitcore import KeyString

    if plan.length != key.length:
        raise ValueError("plan length does not match key length")
    return KeyString.from_bits(plan.apply_bits(key.to_bits()))


@dataclass
class SeparationReport:
    """How well a permutation splits former block-mates apart."""

    d_tot: float
    n_pre: int
    n_post: int
    per_bit: Optional[np.ndarray] = None


def separation_score(
    plan: PermutationPlan,
    n_pre: int,
    n_post: int,
    keep_per_bit: bool = False,
) -> SeparationReport:
    """Per-bit separation degree averaged over the key.

    For bit p, the score is the fraction of its n_pre - 1 pre-permutation
    block-mates whose images land in a different post-permutation block.
    Computed in O(N) by counting post-block occupancy per pre-block.
    """
    if n_pre < 2:
        raise ValueError("pre-permutation block length must be at least 2")
    if n_post < 1:
        raise ValueError("post-permutation block length must be at least 1")
    n = plan.length
    pre = np.arange(n) // n_pre
    post = plan.forward // n_post
    n_post_blocks = -(-n // n_post)
    cell = pre * n_post_blocks + post
    occupancy = np.bincount(cell)[cell]
    # partners: block-mates of each bit; a trailing partial pre-block has
    # fewer than n_pre - 1 of them
    partners = np.bincount(pre)[pre] - 1
    partners = np.maximum(partners, 1)
    per_bit = (partners - (occupancy - 1)) / partners
    report = SeparationReport(
        d_tot=float(per_bit.mean()), n_pre=n_pre, n_post=n_post
    )
    if keep_per_bit:
        report.per_bit = per_bit
    return report
