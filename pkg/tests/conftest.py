"""Shared test helpers: transcript walking and an independent accountant
for key-derived bits on the wire."""

import struct

from qkrecon import transport
from qkrecon.transport import (
    CrcDigest,
    HalfParity,
    Mismatches,
    Parities,
    SampleBits,
    decode,
)


def iter_frames(transcript: bytes):
    """Yield decoded messages from one endpoint's sent-byte transcript."""
    view = memoryview(transcript)
    off = 0
    while off < len(view):
        length, tag = struct.unpack_from(">IB", view, off)
        payload = bytes(view[off + 5 : off + 5 + length])
        yield decode(tag, payload)
        off += 5 + length


def transcript_tap(alice_sent: bytes, bob_sent: bytes) -> int:
    """Recount disclosed key-derived bits straight from the wire bytes.

    Counts Bob's block parities, Alice's syndromes, reference-side
    half-parities, CRC digests and estimation samples — the same
    categories as the session ledger, but derived independently from the
    decoded transcript.
    """
    bits = 0
    for msg in iter_frames(bob_sent):
        if isinstance(msg, Parities):
            bits += msg.block_count
        elif isinstance(msg, SampleBits):
            bits += msg.count
    for msg in iter_frames(alice_sent):
        if isinstance(msg, Mismatches):
            bits += msg.r * len(msg.blocks)
        elif isinstance(msg, HalfParity):
            bits += 1
        elif isinstance(msg, CrcDigest):
            bits += 64
    return bits
