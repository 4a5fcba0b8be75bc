"""Packed bit-string primitives shared by every reconciliation engine.

A key is stored packed, 8 bits per octet, with the lowest bit index in the
least significant position of each octet. All parity / CRC / distance
operations consume bits in ascending index order.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# CRC-64/XZ (ECMA-182 polynomial, reflected, init and xorout all-ones).
# The reflected form consumes the lowest bit index of each octet first,
# matching the packing order above.
CRC64_VARIANT = "CRC-64/XZ"
_CRC64_POLY = 0xC96C5795D7870F42
_CRC64_MASK = 0xFFFFFFFFFFFFFFFF


def _build_crc_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint64)
    for byte in range(256):
        crc = byte
        for _ in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ _CRC64_POLY
            else:
                crc >>= 1
        table[byte] = crc
    return table


_CRC_TABLE = _build_crc_table()


class KeyString:
    """Packed bit vector of positive length N.

    Storage beyond bit N-1 is kept zero so equal keys compare equal on
    their raw bytes.
    """

    __slots__ = ("data", "length")

    def __init__(self, data: np.ndarray, length: int):
        if length <= 0:
            raise ValueError("key length must be positive")
        nbytes = (length + 7) // 8
        data = np.asarray(data, dtype=np.uint8)
        if data.shape != (nbytes,):
            raise ValueError(f"expected {nbytes} octets for {length} bits")
        self.data = data
        self.length = length
        self._canonicalize()

    def _canonicalize(self) -> None:
        tail = self.length % 8
        if tail:
            self.data[-1] &= (1 << tail) - 1

    @classmethod
    def zeros(cls, length: int) -> "KeyString":
        return cls(np.zeros((length + 7) // 8, dtype=np.uint8), length)

    @classmethod
    def from_bits(cls, bits) -> "KeyString":
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("need a non-empty 1-d bit sequence")
        if np.any(bits > 1):
            raise ValueError("bits must be 0 or 1")
        return cls(np.packbits(bits, bitorder="little"), bits.size)

    @classmethod
    def from_bytes(cls, raw: bytes, length: int) -> "KeyString":
        return cls(np.frombuffer(raw, dtype=np.uint8).copy(), length)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "KeyString":
        return cls.from_bits(rng.integers(0, 2, size=length, dtype=np.uint8))

    def to_bits(self) -> np.ndarray:
        """Unpacked copy, one uint8 per bit."""
        return np.unpackbits(self.data, bitorder="little", count=self.length)

    def to_bytes(self) -> bytes:
        return self.data.tobytes()

    def copy(self) -> "KeyString":
        return KeyString(self.data.copy(), self.length)

    def get(self, index: int) -> int:
        self._check_index(index)
        return (self.data[index >> 3] >> (index & 7)) & 1

    __getitem__ = get

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other) -> bool:
        if not isinstance(other, KeyString):
            return NotImplemented
        return self.length == other.length and bool(
            np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"KeyString(length={self.length})"

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.length:
            raise ValueError(f"bit index {index} out of range [0, {self.length})")

    def flip_in_place(self, index: int) -> None:
        self._check_index(index)
        self.data[index >> 3] ^= 1 << (index & 7)


def parity(segment) -> int:
    """XOR of all bits: 1 iff the count of ones is odd."""
    if isinstance(segment, KeyString):
        bits = segment.to_bits()
    else:
        bits = np.asarray(segment, dtype=np.uint8)
    if bits.size == 0:
        raise ValueError("parity of an empty segment is undefined")
    return int(bits.sum()) & 1


def block_parities(key: KeyString, n: int) -> np.ndarray:
    """Parity of each length-n block; a trailing partial block is included."""
    if not 1 <= n <= key.length:
        raise ValueError(f"block length {n} outside [1, {key.length}]")
    bits = key.to_bits()
    nblocks = -(-key.length // n)
    padded = np.zeros(nblocks * n, dtype=np.uint8)
    padded[: key.length] = bits
    return (padded.reshape(nblocks, n).sum(axis=1) & 1).astype(np.uint8)


@njit(cache=True)
def _crc64_kernel(data: np.ndarray, table: np.ndarray) -> np.uint64:
    crc = np.uint64(0xFFFFFFFFFFFFFFFF)
    for i in range(data.size):
        idx = (crc ^ np.uint64(data[i])) & np.uint64(0xFF)
        crc = table[idx] ^ (crc >> np.uint64(8))
    return crc


def crc64(key: KeyString) -> int:
    """64-bit digest over the packed bits in ascending index order."""
    return int(_crc64_kernel(key.data, _CRC_TABLE)) ^ _CRC64_MASK


def flip(key: KeyString, index: int) -> KeyString:
    """Copy of key with the bit at index inverted."""
    out = key.copy()
    out.flip_in_place(index)
    return out


def hamming_distance(a: KeyString, b: KeyString) -> int:
    if a.length != b.length:
        raise ValueError("keys must have equal length")
    diff = np.bitwise_xor(a.data, b.data)
    return int(np.unpackbits(diff).sum())
