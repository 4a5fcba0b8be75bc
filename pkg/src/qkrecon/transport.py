"""Framed, ordered, reliable channel between the two parties.

Wire format: 4-byte big-endian payload length, 1-byte message tag, payload.
Parity bit-vectors are packed 8 per octet (lowest index least significant),
indices are 4-byte big-endian. The same framing runs over an in-process
queue pair (simulation) and over TCP (real two-process runs), so the byte
transcript is identical for both.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MAX_PAYLOAD = 16 * 1024 * 1024

TAG_HELLO = 1
TAG_PARITIES = 2
TAG_MISMATCHES = 3
TAG_HALF_PARITY = 4
TAG_CRC = 5
TAG_VERDICT = 6
TAG_ABORT = 7
TAG_SAMPLE_BITS = 8
TAG_SAMPLE_REPLY = 9
TAG_PARITIES_CASCADE = 10
TAG_BINARY_REQUEST = 11
TAG_PASS_DONE = 12

ABORT_NEGOTIATION = 1
ABORT_PROTOCOL = 2
ABORT_CHANNEL = 3


class ProtocolViolation(Exception):
    """Malformed frame, unknown tag or out-of-order message."""


class ChannelError(Exception):
    """Broken or refused connection."""


@dataclass
class Hello:
    version: int
    key_length: int
    error_rate: float
    n0: int
    seed1: int
    seed2: int
    crc_variant: str
    tap_table_version: int


@dataclass
class Parities:
    pass_index: int
    block_count: int
    bits: np.ndarray  # uint8 0/1, one per block

    def __eq__(self, other):
        return (
            isinstance(other, Parities)
            and self.pass_index == other.pass_index
            and self.block_count == other.block_count
            and np.array_equal(self.bits, other.bits)
        )


@dataclass
class Mismatches:
    pass_index: int
    r: int
    blocks: list
    syndromes: list
    partial_block: bool = False


@dataclass
class HalfParity:
    bit: int
    lo: int
    hi: int


@dataclass
class CrcDigest:
    value: int


@dataclass
class Verdict:
    success: bool


@dataclass
class Abort:
    reason: int
    detail: str = ""


@dataclass
class SampleBits:
    count: int
    bits: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, SampleBits)
            and self.count == other.count
            and np.array_equal(self.bits, other.bits)
        )


@dataclass
class SampleReply:
    mismatches: int


@dataclass
class CascadeParities:
    pass_index: int
    block_count: int
    bits: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, CascadeParities)
            and self.pass_index == other.pass_index
            and self.block_count == other.block_count
            and np.array_equal(self.bits, other.bits)
        )


@dataclass
class BinaryRequest:
    pass_index: int
    block_id: int


@dataclass
class PassDone:
    pass_index: int


def _pack_bitvec(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def _unpack_bitvec(raw: bytes, count: int) -> np.ndarray:
    return np.unpackbits(
        np.frombuffer(raw, dtype=np.uint8), bitorder="little", count=count
    )


def encode(msg) -> tuple:
    """Serialize a message to (tag, payload bytes)."""
    if isinstance(msg, Hello):
        crc_id = msg.crc_variant.encode()
        payload = struct.pack(
            ">HIdIIIHH",
            msg.version,
            msg.key_length,
            msg.error_rate,
            msg.n0,
            msg.seed1,
            msg.seed2,
            msg.tap_table_version,
            len(crc_id),
        ) + crc_id
        return TAG_HELLO, payload
    if isinstance(msg, Parities):
        return TAG_PARITIES, struct.pack(
            ">HI", msg.pass_index, msg.block_count
        ) + _pack_bitvec(msg.bits)
    if isinstance(msg, Mismatches):
        head = struct.pack(
            ">HBBI",
            msg.pass_index,
            msg.r,
            1 if msg.partial_block else 0,
            len(msg.blocks),
        )
        body = (
            np.asarray(msg.blocks, dtype=">u4").tobytes()
            + np.asarray(msg.syndromes, dtype=">u4").tobytes()
        )
        return TAG_MISMATCHES, head + body
    if isinstance(msg, HalfParity):
        return TAG_HALF_PARITY, struct.pack(">BII", msg.bit, msg.lo, msg.hi)
    if isinstance(msg, CrcDigest):
        return TAG_CRC, struct.pack(">Q", msg.value)
    if isinstance(msg, Verdict):
        return TAG_VERDICT, struct.pack(">B", 1 if msg.success else 0)
    if isinstance(msg, Abort):
        detail = msg.detail.encode()
        return TAG_ABORT, struct.pack(">BH", msg.reason, len(detail)) + detail
    if isinstance(msg, SampleBits):
        return TAG_SAMPLE_BITS, struct.pack(">I", msg.count) + _pack_bitvec(
            msg.bits
        )
    if isinstance(msg, SampleReply):
        return TAG_SAMPLE_REPLY, struct.pack(">I", msg.mismatches)
    if isinstance(msg, CascadeParities):
        return TAG_PARITIES_CASCADE, struct.pack(
            ">HI", msg.pass_index, msg.block_count
        ) + _pack_bitvec(msg.bits)
    if isinstance(msg, BinaryRequest):
        return TAG_BINARY_REQUEST, struct.pack(
            ">HI", msg.pass_index, msg.block_id
        )
    if isinstance(msg, PassDone):
        return TAG_PASS_DONE, struct.pack(">H", msg.pass_index)
    raise TypeError(f"unknown message type {type(msg).__name__}")


def decode(tag: int, payload: bytes):
    """Parse a frame payload back into its message."""
    try:
        if tag == TAG_HELLO:
            (version, n, p, n0, s1, s2, tapver, idlen) = struct.unpack_from(
                ">HIdIIIHH", payload
            )
            off = struct.calcsize(">HIdIIIHH")
            crc_id = payload[off : off + idlen].decode()
            return Hello(version, n, p, n0, s1, s2, crc_id, tapver)
        if tag == TAG_PARITIES:
            pi, count = struct.unpack_from(">HI", payload)
            return Parities(pi, count, _unpack_bitvec(payload[6:], count))
        if tag == TAG_MISMATCHES:
            pi, r, partial, count = struct.unpack_from(">HBBI", payload)
            if len(payload) != 8 + 8 * count:
                raise ProtocolViolation("truncated mismatch list")
            blocks = np.frombuffer(payload, dtype=">u4", count=count, offset=8)
            syndromes = np.frombuffer(
                payload, dtype=">u4", count=count, offset=8 + 4 * count
            )
            return Mismatches(
                pi, r, blocks.tolist(), syndromes.tolist(), bool(partial)
            )
        if tag == TAG_HALF_PARITY:
            bit, lo, hi = struct.unpack(">BII", payload)
            return HalfParity(bit, lo, hi)
        if tag == TAG_CRC:
            return CrcDigest(struct.unpack(">Q", payload)[0])
        if tag == TAG_VERDICT:
            return Verdict(bool(struct.unpack(">B", payload)[0]))
        if tag == TAG_ABORT:
            reason, dlen = struct.unpack_from(">BH", payload)
            return Abort(reason, payload[3 : 3 + dlen].decode())
        if tag == TAG_SAMPLE_BITS:
            count = struct.unpack_from(">I", payload)[0]
            return SampleBits(count, _unpack_bitvec(payload[4:], count))
        if tag == TAG_SAMPLE_REPLY:
            return SampleReply(struct.unpack(">I", payload)[0])
        if tag == TAG_PARITIES_CASCADE:
            pi, count = struct.unpack_from(">HI", payload)
            return CascadeParities(pi, count, _unpack_bitvec(payload[6:], count))
        if tag == TAG_BINARY_REQUEST:
            pi, b = struct.unpack(">HI", payload)
            return BinaryRequest(pi, b)
        if tag == TAG_PASS_DONE:
            return PassDone(struct.unpack(">H", payload)[0])
    except (struct.error, UnicodeDecodeError) as exc:
        raise ProtocolViolation(f"truncated or malformed frame: {exc}") from exc
    raise ProtocolViolation(f"unknown message tag {tag}")


@dataclass
class ChannelStats:
    """Per-endpoint traffic counters."""

    frames_sent: int = 0
    frames_received: int = 0
    payload_bits_sent: int = 0
    payload_bits_received: int = 0
    round_trips: int = 0
    injected_latency: float = 0.0
    _last_event: str = field(default="", repr=False)


class Endpoint:
    """One side of a channel; send/recv whole messages.

    A round trip is counted each time a send directly follows a receive.
    The byte-level transcript of everything sent is recorded for
    determinism and substitution checks.
    """

    def __init__(self, name: str = "", latency: float = 0.0):
        self.name = name
        self.latency = latency
        self.stats = ChannelStats(injected_latency=latency)
        self.transcript = bytearray()

    # subclasses provide raw frame IO
    def _send_frame(self, frame: bytes) -> None:
        raise NotImplementedError

    def _recv_frame(self) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def send(self, msg) -> None:
        tag, payload = encode(msg)
        if len(payload) > MAX_PAYLOAD:
            raise ProtocolViolation("payload exceeds 16 MiB cap")
        frame = struct.pack(">IB", len(payload), tag) + payload
        if self.latency:
            time.sleep(self.latency)
        self._send_frame(frame)
        self.transcript += frame
        self.stats.frames_sent += 1
        self.stats.payload_bits_sent += len(payload) * 8
        if self.stats._last_event == "recv":
            self.stats.round_trips += 1
        self.stats._last_event = "send"

    def recv(self):
        frame = self._recv_frame()
        if len(frame) < 5:
            raise ProtocolViolation("short frame")
        length, tag = struct.unpack_from(">IB", frame)
        payload = frame[5:]
        if length != len(payload):
            raise ProtocolViolation("frame length mismatch")
        if length > MAX_PAYLOAD:
            raise ProtocolViolation("payload exceeds 16 MiB cap")
        self.stats.frames_received += 1
        self.stats.payload_bits_received += length * 8
        self.stats._last_event = "recv"
        return decode(tag, payload)


class MemoryEndpoint(Endpoint):
    """In-process endpoint over a bounded queue pair (backpressure when
    full)."""

    def __init__(self, outgoing, incoming, name="", latency=0.0, timeout=30.0):
        super().__init__(name, latency)
        self._out = outgoing
        self._in = incoming
        self._timeout = timeout

    def _send_frame(self, frame: bytes) -> None:
        # the semaphore models the bounded buffer; it blocks when full
        if not self._out.slots.acquire(timeout=self._timeout):
            raise ChannelError("peer stopped draining the channel")
        self._out.frames.put(frame)

    def _recv_frame(self) -> bytes:
        try:
            frame = self._in.frames.get(timeout=self._timeout)
        except queue.Empty as exc:
            raise ChannelError("timed out waiting for peer") from exc
        self._in.slots.release()
        if frame is None:
            raise ChannelError("peer closed the channel")
        return frame

    def close(self) -> None:
        if self._out.slots.acquire(timeout=0.0):
            self._out.frames.put(None)


class _BoundedBuffer:
    """SimpleQueue plus a slot semaphore: fast C-level handoff with
    backpressure when the buffer fills."""

    __slots__ = ("frames", "slots")

    def __init__(self, maxsize: int):
        self.frames: queue.SimpleQueue = queue.SimpleQueue()
        self.slots = threading.Semaphore(maxsize)


def memory_pair(latency: float = 0.0, maxsize: int = 1024, timeout: float = 30.0):
    """Two connected in-process endpoints."""
    ab = _BoundedBuffer(maxsize)
    ba = _BoundedBuffer(maxsize)
    return (
        MemoryEndpoint(ab, ba, name="A", latency=latency, timeout=timeout),
        MemoryEndpoint(ba, ab, name="B", latency=latency, timeout=timeout),
    )


class TcpEndpoint(Endpoint):
    """Endpoint over a connected TCP socket; same framing as in-process."""

    def __init__(self, sock: socket.socket, name="", latency=0.0):
        super().__init__(name, latency)
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _send_frame(self, frame: bytes) -> None:
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            raise ChannelError(f"send failed: {exc}") from exc

    def _recv_exact(self, count: int) -> bytes:
        buf = bytearray()
        while len(buf) < count:
            try:
                chunk = self._sock.recv(count - len(buf))
            except OSError as exc:
                raise ChannelError(f"recv failed: {exc}") from exc
            if not chunk:
                raise ChannelError("connection closed by peer")
            buf += chunk
        return bytes(buf)

    def _recv_frame(self) -> bytes:
        header = self._recv_exact(5)
        length = struct.unpack_from(">I", header)[0]
        if length > MAX_PAYLOAD:
            raise ProtocolViolation("payload exceeds 16 MiB cap")
        return header + self._recv_exact(length)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def connect(host: str, port: int, latency: float = 0.0, timeout: float = 30.0) -> TcpEndpoint:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise ChannelError(f"connect to {host}:{port} failed: {exc}") from exc
    sock.settimeout(timeout)
    return TcpEndpoint(sock, name="connect", latency=latency)


def listen(host: str, port: int, latency: float = 0.0, timeout: float = 30.0):
    """Bind and return (server socket, bound port); accept with `accept`."""
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        srv.bind((host, port))
    except OSError as exc:
        srv.close()
        raise ChannelError(f"bind {host}:{port} failed: {exc}") from exc
    srv.listen(1)
    srv.settimeout(timeout)
    return srv, srv.getsockname()[1]


def accept(srv: socket.socket, latency: float = 0.0, timeout: float = 30.0) -> TcpEndpoint:
    try:
        sock, _ = srv.accept()
    except OSError as exc:
        raise ChannelError(f"accept failed: {exc}") from exc
    sock.settimeout(timeout)
    return TcpEndpoint(sock, name="listen", latency=latency)
