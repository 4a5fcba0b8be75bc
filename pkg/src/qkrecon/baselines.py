"""BINARY bisection and the Cascade protocol with cross-pass backtracking.

Used for efficiency comparisons against the Hamming-based protocol and as
the partial-block fallback there. Alice holds the reference string and
serves parities; Bob locates and flips errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transport
from .bitcore import KeyString, crc64
from .protocol import (
    AbandonSignal,
    LeakLedger,
    ReconOutcome,
    ROLE_ALICE,
    ROLE_BOB,
    _expect,
    efficiency,
)
from .transport import (
    Abort,
    BinaryRequest,
    CascadeParities,
    ChannelError,
    CrcDigest,
    HalfParity,
    PassDone,
    Verdict,
)

import time

# First-pass block lengths reported optimal for Cascade at these error
# rates; other rates fall back to the ~0.73/p rule they follow.
_OPTIMAL_K1 = {0.01: 73, 0.05: 14, 0.10: 7, 0.15: 5}


def cascade_block_length(p: float) -> int:
    if not 0 < p < 0.5:
        raise ValueError("error rate must lie in (0, 0.5)")
    for known, k1 in _OPTIMAL_K1.items():
        if abs(p - known) < 1e-12:
            return k1
    return max(2, round(0.73 / p))


@dataclass
class CascadeConfig:
    k1: int
    shuffle_seed: int
    pass_count: int = 4

    def __post_init__(self):
        if self.k1 < 1:
            raise ValueError("first-pass block length must be positive")
        if self.pass_count < 1:
            raise ValueError("need at least one pass")

    @classmethod
    def for_error_rate(cls, p: float, shuffle_seed: int, pass_count: int = 4):
        return cls(cascade_block_length(p), shuffle_seed, pass_count)

    def block_size(self, pass_index: int, key_length: int) -> int:
        return min(self.k1 * (1 << pass_index), key_length)


def binary_respond(positions, bits, channel, ledger: LeakLedger) -> int:
    """Reference side of BINARY: disclose half parities while the peer
    narrows in on its erroneous bit. One ledger bit per disclosed parity."""
    lo, hi = 0, len(positions)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        par = int(bits[positions[lo:mid]].sum()) & 1
        channel.send(HalfParity(par, lo, mid))
        ledger.parity_bits += 1
        reply = _expect(channel.recv(), HalfParity, channel)
        if reply.bit:
            hi = mid
        else:
            lo = mid
    return int(positions[lo])


def binary_locate(positions, bits, channel, ledger: LeakLedger) -> int:
    """Correcting side of BINARY over a block with an odd number of errors:
    bisect by parity comparison until one bit is left. Returns the global
    position of the erroneous bit (caller flips it)."""
    lo, hi = 0, len(positions)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        msg = _expect(channel.recv(), HalfParity, channel)
        mine = int(bits[positions[lo:mid]].sum()) & 1
        first_half_odd = 1 if mine != msg.bit else 0
        channel.send(HalfParity(first_half_odd, lo, mid))
        ledger.parity_bits += 1
        if first_half_odd:
            hi = mid
        else:
            lo = mid
    return int(positions[lo])


class _PassLayout:
    """Block assignment of one Cascade pass, shared by both parties."""

    def __init__(self, pass_index: int, key_length: int, config: CascadeConfig):
        if pass_index == 0:
            order = np.arange(key_length)
        else:
            rng = np.random.default_rng((config.shuffle_seed, pass_index))
            order = rng.permutation(key_length)
        k = config.block_size(pass_index, key_length)
        self.k = k
        self.order = order
        self.block_count = -(-key_length // k)
        self.offsets = np.arange(0, key_length, k)
        self.block_of = np.empty(key_length, dtype=np.int64)
        self.block_of[order] = np.arange(key_length) // k

    def members(self, block_id: int) -> np.ndarray:
        return self.order[block_id * self.k : (block_id + 1) * self.k]

    def parities(self, bits: np.ndarray) -> np.ndarray:
        return (np.add.reduceat(bits[self.order], self.offsets) & 1).astype(np.uint8)


def _cascade_alice(key: KeyString, config: CascadeConfig, channel, ledger: LeakLedger):
    bits = key.to_bits()
    layouts = []
    for i in range(config.pass_count):
        layout = _PassLayout(i, key.length, config)
        layouts.append(layout)
        channel.send(CascadeParities(i, layout.block_count, layout.parities(bits)))
        ledger.parity_bits += layout.block_count
        while True:
            msg = channel.recv()
            if isinstance(msg, PassDone):
                if msg.pass_index != i:
                    channel.send(Abort(transport.ABORT_PROTOCOL, "pass desync"))
                    raise AbandonSignal("protocol", "pass desync")
                break
            req = _expect(msg, BinaryRequest, channel)
            if req.pass_index > i:
                channel.send(Abort(transport.ABORT_PROTOCOL, "future pass"))
                raise AbandonSignal("protocol", "future pass")
            binary_respond(layouts[req.pass_index].members(req.block_id), bits, channel, ledger)
    channel.send(CrcDigest(crc64(key)))
    ledger.crc_bits += 64
    verdict = _expect(channel.recv(), Verdict, channel)
    return verdict.success, key


def _cascade_bob(key: KeyString, config: CascadeConfig, channel, ledger: LeakLedger):
    bits = key.to_bits()
    layouts = []
    corrections = 0
    for i in range(config.pass_count):
        layout = _PassLayout(i, key.length, config)
        layouts.append(layout)
        msg = _expect(channel.recv(), CascadeParities, channel)
        if msg.pass_index != i:
            channel.send(Abort(transport.ABORT_PROTOCOL, "pass desync"))
            raise AbandonSignal("protocol", "pass desync")
        ledger.parity_bits += layout.block_count
        mine = layout.parities(bits)
        odd = {
            (i, int(b)) for b in np.nonzero(mine ^ msg.bits)[0]
        }
        while odd:
            # smallest block first; ties broken by pass then block id
            u, b = min(odd, key=lambda ub: (len(layouts[ub[0]].members(ub[1])), ub))
            members = layouts[u].members(b)
            if len(members) == 1:
                pos = int(members[0])
            else:
                channel.send(BinaryRequest(u, b))
                pos = binary_locate(members, bits, channel, ledger)
            bits[pos] ^= 1
            corrections += 1
            for v in range(i + 1):
                cell = (v, int(layouts[v].block_of[pos]))
                odd.symmetric_difference_update({cell})
        channel.send(PassDone(i))
    key = KeyString.from_bits(bits)
    digest = _expect(channel.recv(), CrcDigest, channel)
    ledger.crc_bits += 64
    verdict = crc64(key) == digest.value
    channel.send(Verdict(verdict))
    return verdict, key, corrections


def cascade_reconcile(
    local_key: KeyString,
    config: CascadeConfig,
    channel,
    role: str,
    error_rate: float = 0.0,
) -> ReconOutcome:
    """Full Cascade session; both parties call this with their own role.
    error_rate only feeds the efficiency figure of the outcome."""
    start = time.perf_counter()
    ledger = LeakLedger()
    corrections = 0
    try:
        if role == ROLE_ALICE:
            verdict, key = _cascade_alice(local_key, config, channel, ledger)
        elif role == ROLE_BOB:
            verdict, key, corrections = _cascade_bob(local_key, config, channel, ledger)
        else:
            raise ValueError(f"role must be '{ROLE_ALICE}' or '{ROLE_BOB}'")
    except AbandonSignal as sig:
        return ReconOutcome(
            "abandoned", sig.reason, None, ledger, config.pass_count,
            corrections,
            efficiency(ledger, local_key.length, error_rate) if error_rate else None,
            time.perf_counter() - start,
        )
    except ChannelError:
        return ReconOutcome(
            "abandoned", "channel", None, ledger, config.pass_count,
            corrections,
            efficiency(ledger, local_key.length, error_rate) if error_rate else None,
            time.perf_counter() - start,
        )
    f = efficiency(ledger, local_key.length, error_rate) if error_rate else None
    status = "success" if verdict else "abandoned"
    return ReconOutcome(
        status, "" if verdict else "crc-mismatch",
        key if verdict else None, ledger, config.pass_count, corrections,
        f, time.perf_counter() - start,
    )
