"""Five-step reconciliation protocol as a deterministic two-party state
machine.

Each pass: Bob sends his block parities, Alice replies with the mismatched
block indices and her syndromes, Bob flips one bit per mismatched block.
The block length then doubles and both sides permute their keys with the
shared two-LFSR scheme, until all parities match or the block length
reaches ceil(N/2). A CRC-64 exchange settles the verdict. Alice's string
is the reference; Bob's converges to it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import transport
from .bitcore import CRC64_VARIANT, KeyString, block_parities, crc64
from .hamming import HammingParams, block_syndromes
from .lfsr import (
    PRIMITIVE_TAPS,
    TAP_TABLE_VERSION,
    LfsrPositionSource,
    LfsrSpec,
    PermutationPlan,
)
from .lfsr import _compose_swaps
from .transport import (
    Abort,
    ChannelError,
    CrcDigest,
    Hello,
    Mismatches,
    Parities,
    ProtocolViolation,
    SampleBits,
    SampleReply,
    Verdict,
)

PROTOCOL_VERSION = 1

ROLE_ALICE = "alice"
ROLE_BOB = "bob"


class AbandonSignal(Exception):
    """Internal: unwind a session into an Abandoned outcome."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(detail or reason)
        self.reason = reason


def initial_block_length(p: float) -> int:
    """Largest power of two n0 with n0 * p <= 0.8, floored at 8."""
    if not 0 < p < 0.5:
        raise ValueError("error rate must lie in (0, 0.5)")
    n0 = 1 << int(math.floor(math.log2(0.8 / p)))
    return max(8, n0)


def shannon_h(p: float) -> float:
    """Binary entropy in bits; endpoints return 0 by continuity."""
    if not 0 <= p <= 1:
        raise ValueError("probability must lie in [0, 1]")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


@dataclass
class LeakLedger:
    """Key-derived bits disclosed on the public channel, by category."""

    parity_bits: int = 0
    syndrome_bits: int = 0
    crc_bits: int = 0
    estimation_bits: int = 0

    @property
    def total(self) -> int:
        return (
            self.parity_bits
            + self.syndrome_bits
            + self.crc_bits
            + self.estimation_bits
        )


def efficiency(ledger: LeakLedger, n: int, p: float) -> Optional[float]:
    """Leaked bits relative to the Shannon limit N*h(p); 1.0 is optimal."""
    if n <= 0:
        raise ValueError("key length must be positive")
    if p <= 0:
        return None
    return ledger.total / (n * shannon_h(p))


@dataclass
class SessionConfig:
    key_length: int
    error_rate: float
    seed1: int
    seed2: int
    role: str
    crc_variant: str = CRC64_VARIANT
    segment_size: int = 65536
    parallel_sessions: int = 8
    # fresh-permutation restarts after a CRC mismatch; both parties must
    # configure the same limit (0 disables and abandons on first mismatch)
    crc_retries: int = 3
    truncate_leaked: bool = False
    sample_seed: int = 0

    def __post_init__(self):
        if self.key_length <= 0:
            raise ValueError("key length must be positive")
        if not 0 < self.error_rate < 0.5:
            raise ValueError("error rate must lie in (0, 0.5)")
        if self.role not in (ROLE_ALICE, ROLE_BOB):
            raise ValueError(f"role must be '{ROLE_ALICE}' or '{ROLE_BOB}'")
        if self.segment_size & (self.segment_size - 1):
            raise ValueError("segment size must be a power of two")

    @property
    def n0(self) -> int:
        return initial_block_length(self.error_rate)

    @property
    def max_block_cap(self) -> int:
        return -(-self.key_length // 2)

    def hello(self) -> Hello:
        return Hello(
            version=PROTOCOL_VERSION,
            key_length=self.key_length,
            error_rate=self.error_rate,
            n0=self.n0,
            seed1=self.seed1,
            seed2=self.seed2,
            crc_variant=self.crc_variant,
            tap_table_version=TAP_TABLE_VERSION,
        )


@dataclass
class PassState:
    pass_index: int
    block_length: int
    mismatched_blocks: set = field(default_factory=set)
    corrections_made: int = 0


@dataclass
class ReconOutcome:
    status: str  # "success" | "abandoned"
    reason: str
    final_key: Optional[KeyString]
    ledger: LeakLedger
    passes_run: int
    corrections: int
    efficiency_f: Optional[float]
    wall_time: float

    @property
    def success(self) -> bool:
        return self.status == "success"


def _expect(msg, kind, channel):
    if isinstance(msg, Abort):
        reason = {
            transport.ABORT_NEGOTIATION: "negotiation",
            transport.ABORT_CHANNEL: "channel",
        }.get(msg.reason, "protocol")
        raise AbandonSignal(reason, msg.detail)
    if not isinstance(msg, kind):
        channel.send(Abort(transport.ABORT_PROTOCOL, f"expected {kind.__name__}"))
        raise AbandonSignal("protocol", f"unexpected {type(msg).__name__}")
    return msg


def run_pass(key: KeyString, state: PassState, channel, ledger: LeakLedger, role: str) -> tuple:
    """One parity-compare / syndrome-correct pass; returns (key, state,
    ledger) updated. Bob's key is mutated toward Alice's."""
    from .baselines import binary_locate, binary_respond

    n = state.block_length
    length = key.length
    nfull = length // n
    nblocks = -(-length // n)
    has_partial = nblocks > nfull
    params = HammingParams.for_block_length(n) if nfull else None

    if role == ROLE_BOB:
        mine = block_parities(key, n)
        channel.send(Parities(state.pass_index, nblocks, mine))
        ledger.parity_bits += nblocks
        msg = _expect(channel.recv(), Mismatches, channel)
        if msg.pass_index != state.pass_index:
            channel.send(Abort(transport.ABORT_PROTOCOL, "pass index desync"))
            raise AbandonSignal("protocol", "pass index desync")
        bits = key.to_bits()
        if msg.blocks:
            sigma_mine = block_syndromes(bits, n)
            blocks_arr = np.asarray(msg.blocks, dtype=np.int64)
            diff = np.asarray(msg.syndromes, dtype=np.int64) ^ sigma_mine[blocks_arr]
            if diff.size and (int(diff.max()) > n - 1 or int(diff.min()) < 0):
                channel.send(Abort(transport.ABORT_PROTOCOL, "syndrome out of range"))
                raise AbandonSignal("protocol", "syndrome out of range")
            # vectorized decode_flip: zero difference names the excluded bit
            local = np.where(diff == 0, n - 1, diff - 1)
            bits[blocks_arr * n + local] ^= 1
            state.corrections_made += len(msg.blocks)
            ledger.syndrome_bits += params.r * len(msg.blocks)
        state.mismatched_blocks = set(msg.blocks)
        if msg.partial_block:
            positions = np.arange(nfull * n, length)
            pos = binary_locate(positions, bits, channel, ledger)
            bits[pos] ^= 1
            state.corrections_made += 1
            state.mismatched_blocks.add(nfull)
        key = KeyString.from_bits(bits)
        return key, state, ledger

    # Alice: reference side
    msg = _expect(channel.recv(), Parities, channel)
    if msg.pass_index != state.pass_index:
        channel.send(Abort(transport.ABORT_PROTOCOL, "pass index desync"))
        raise AbandonSignal("protocol", "pass index desync")
    mine = block_parities(key, n)
    if msg.block_count != mine.size:
        channel.send(Abort(transport.ABORT_PROTOCOL, "block count mismatch"))
        raise AbandonSignal("protocol", "block count mismatch")
    ledger.parity_bits += nblocks
    diff = np.nonzero(mine ^ msg.bits)[0]
    full_arr = diff[diff < nfull]
    full_mism = full_arr.tolist()
    partial_mism = has_partial and nfull in diff
    bits = key.to_bits()
    syndromes = []
    if full_mism:
        sigma_mine = block_syndromes(bits, n)
        syndromes = sigma_mine[full_arr].tolist()
        ledger.syndrome_bits += params.r * len(full_mism)
    channel.send(
        Mismatches(
            state.pass_index,
            params.r if params else 0,
            full_mism,
            syndromes,
            partial_mism,
        )
    )
    if partial_mism:
        positions = np.arange(nfull * n, length)
        binary_respond(positions, bits, channel, ledger)
    state.mismatched_blocks = set(full_mism)
    if partial_mism:
        state.mismatched_blocks.add(nfull)
    return key, state, ledger


def _permutation_width(n: int) -> int:
    width = max((n - 1).bit_length(), min(PRIMITIVE_TAPS))
    if width not in PRIMITIVE_TAPS:
        raise ValueError(f"no shipped tap set covers key length {n}")
    return width


def _next_plan(src1: LfsrPositionSource, src2: LfsrPositionSource, n: int) -> PermutationPlan:
    a = src1.next_positions(n)
    b = src2.next_positions(n)
    return PermutationPlan(_compose_swaps(a, b, n))


def _negotiate(config: SessionConfig, channel) -> None:
    channel.send(config.hello())
    peer = _expect(channel.recv(), Hello, channel)
    mine = config.hello()
    if peer != mine:
        channel.send(Abort(transport.ABORT_NEGOTIATION, "session parameters differ"))
        raise AbandonSignal("negotiation", "session parameters differ")


def reconcile(local_key: KeyString, config: SessionConfig, channel) -> ReconOutcome:
    """Full session over an open channel; both parties call this with
    their own role."""
    start = time.perf_counter()
    ledger = LeakLedger()
    passes_run = 0
    corrections = 0
    try:
        if local_key.length != config.key_length:
            raise ValueError("key length does not match session config")
        _negotiate(config, channel)
        key = local_key.copy()
        n_key = key.length
        width = _permutation_width(n_key)
        src1 = LfsrPositionSource(LfsrSpec(width, PRIMITIVE_TAPS[width], config.seed1))
        src2 = LfsrPositionSource(LfsrSpec(width, PRIMITIVE_TAPS[width], config.seed2))
        cap = config.max_block_cap
        attempts_left = 1 + config.crc_retries
        verdict = False
        while attempts_left:
            attempts_left -= 1
            n = config.n0
            pass_index = passes_run
            while True:
                state = PassState(pass_index, n)
                key, state, ledger = run_pass(key, state, channel, ledger, config.role)
                corrections += state.corrections_made
                passes_run += 1
                pass_index += 1
                if not state.mismatched_blocks or n >= cap:
                    break
                n *= 2
                plan = _next_plan(src1, src2, n_key)
                key = KeyString.from_bits(plan.apply_bits(key.to_bits()))
            # CRC verdict
            ledger.crc_bits += 64
            if config.role == ROLE_ALICE:
                channel.send(CrcDigest(crc64(key)))
                verdict = _expect(channel.recv(), Verdict, channel).success
            else:
                digest = _expect(channel.recv(), CrcDigest, channel)
                verdict = crc64(key) == digest.value
                channel.send(Verdict(verdict))
            if verdict or not attempts_left:
                break
            # retry mode: fresh permutation, start over from n0
            plan = _next_plan(src1, src2, n_key)
            key = KeyString.from_bits(plan.apply_bits(key.to_bits()))
    except AbandonSignal as sig:
        return ReconOutcome(
            "abandoned", sig.reason, None, ledger, passes_run, corrections,
            efficiency(ledger, config.key_length, config.error_rate),
            time.perf_counter() - start,
        )
    except ChannelError:
        return ReconOutcome(
            "abandoned", "channel", None, ledger, passes_run, corrections,
            efficiency(ledger, config.key_length, config.error_rate),
            time.perf_counter() - start,
        )
    wall = time.perf_counter() - start
    f = efficiency(ledger, config.key_length, config.error_rate)
    if not verdict:
        return ReconOutcome(
            "abandoned", "crc-mismatch", None, ledger, passes_run,
            corrections, f, wall,
        )
    if config.truncate_leaked:
        keep = max(1, key.length - ledger.total)
        key = KeyString.from_bits(key.to_bits()[:keep])
    return ReconOutcome(
        "success", "", key, ledger, passes_run, corrections, f, wall
    )


def estimate_error_rate(
    local_key: KeyString,
    sample_count: int,
    channel,
    ledger: LeakLedger,
    role: str,
    sample_seed: int,
) -> tuple:
    """Disclose and compare m seeded sample positions; returns the mismatch
    fraction and the key with the disclosed bits removed."""
    n = local_key.length
    if not 0 < sample_count < n:
        raise ValueError("sample count must lie in (0, N)")
    rng = np.random.default_rng(sample_seed)
    positions = np.sort(rng.choice(n, size=sample_count, replace=False))
    bits = local_key.to_bits()
    sampled = bits[positions]
    if role == ROLE_BOB:
        channel.send(SampleBits(sample_count, sampled))
        reply = _expect(channel.recv(), SampleReply, channel)
        mismatches = reply.mismatches
    else:
        msg = _expect(channel.recv(), SampleBits, channel)
        if msg.count != sample_count:
            channel.send(Abort(transport.ABORT_PROTOCOL, "sample count mismatch"))
            raise AbandonSignal("protocol", "sample count mismatch")
        mismatches = int((sampled != msg.bits).sum())
        channel.send(SampleReply(mismatches))
    ledger.estimation_bits += sample_count
    shortened = KeyString.from_bits(np.delete(bits, positions))
    return mismatches / sample_count, shortened
