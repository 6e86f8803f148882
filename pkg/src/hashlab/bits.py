"""Fixed-length packed binary codes and the bit operations everything else builds on.

Bit i of a code lives in byte i // 8, most-significant-bit first within the
byte.  Packed storage is canonical: padding bits beyond the code length are
always zero, so byte-wise equality and XOR-popcount distances are exact.
"""

from __future__ import annotations

import numpy as np

MAX_LENGTH = 512

ZERO_ONE = "zero_one"
PLUS_MINUS_ONE = "plus_minus_one"
_MAPPINGS = (ZERO_ONE, PLUS_MINUS_ONE)


def _check_length(length: int) -> int:
    length = int(length)
    if not 1 <= length <= MAX_LENGTH:
        raise ValueError(f"code length must be in [1, {MAX_LENGTH}], got {length}")
    return length


def _check_mapping(mapping: str) -> str:
    if mapping not in _MAPPINGS:
        raise ValueError(f"unknown bit mapping {mapping!r}, expected one of {_MAPPINGS}")
    return mapping


def _tail_mask(length: int) -> int:
    # Mask for the last byte: keep the high (length % 8) bits, all 8 if aligned.
    rem = length % 8
    return 0xFF if rem == 0 else (0xFF << (8 - rem)) & 0xFF


class BinaryCode:
    """Immutable bit string of 1..512 bits in packed byte storage."""

    __slots__ = ("_packed", "_length")

    def __init__(self, packed, length: int):
        length = _check_length(length)
        arr = np.array(packed, dtype=np.uint8, copy=True).ravel()
        nbytes = (length + 7) // 8
        if arr.size != nbytes:
            raise ValueError(f"expected {nbytes} bytes for {length} bits, got {arr.size}")
        arr[-1] &= _tail_mask(length)
        arr.flags.writeable = False
        self._packed = arr
        self._length = length

    @classmethod
    def from_bits(cls, bits) -> "BinaryCode":
        """Build a code from an iterable of 0/1 values, bit 0 first."""
        b = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("bits must be a non-empty 1-D sequence")
        _check_length(b.size)
        if not np.isin(b, (0, 1)).all():
            raise ValueError("bits must contain only 0 and 1")
        return cls(np.packbits(b.astype(np.uint8)), b.size)

    @classmethod
    def zeros(cls, length: int) -> "BinaryCode":
        length = _check_length(length)
        return cls(np.zeros((length + 7) // 8, dtype=np.uint8), length)

    @property
    def length(self) -> int:
        return self._length

    @property
    def packed(self) -> np.ndarray:
        """Read-only packed byte view."""
        return self._packed

    def bit(self, i: int) -> int:
        if not 0 <= i < self._length:
            raise IndexError(f"bit index {i} out of range for length {self._length}")
        return (int(self._packed[i // 8]) >> (7 - i % 8)) & 1

    def complement(self) -> "BinaryCode":
        return BinaryCode(np.bitwise_not(self._packed), self._length)

    def hex(self) -> str:
        return self._packed.tobytes().hex()

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryCode):
            return NotImplemented
        return self._length == other._length and bool(
            np.array_equal(self._packed, other._packed)
        )

    def __hash__(self) -> int:
        return hash((self._length, self._packed.tobytes()))

    def __len__(self) -> int:
        return self._length

    def __repr__(self) -> str:
        return f"BinaryCode({self._length} bits, 0x{self.hex()})"


def pack(bits) -> BinaryCode:
    """Pack a 0/1 sequence into a BinaryCode; inverse of unpack."""
    return BinaryCode.from_bits(bits)


def unpack(code: BinaryCode) -> np.ndarray:
    """Unpack a code into a (length,) uint8 array of 0/1 values."""
    return np.unpackbits(code.packed)[: code.length].copy()


def hamming(a: BinaryCode, b: BinaryCode) -> int:
    """Number of differing bits between two codes of equal length.

    Raises:
        ValueError: if the lengths differ.
    """
    if a.length != b.length:
        raise ValueError(f"length mismatch: {a.length} vs {b.length}")
    return int(np.bitwise_count(a.packed ^ b.packed).sum())


def truncate(code: BinaryCode, k: int) -> BinaryCode:
    """First k bits of a code as a new code.

    Raises:
        ValueError: unless 1 <= k <= code.length.
    """
    k = int(k)
    if not 1 <= k <= code.length:
        raise ValueError(f"truncation length {k} not in [1, {code.length}]")
    nbytes = (k + 7) // 8
    return BinaryCode(code.packed[:nbytes], k)


def to_real(code: BinaryCode, mapping: str = ZERO_ONE) -> np.ndarray:
    """Map a code to a float64 vector: b -> b, or b -> 2b - 1."""
    return to_real_rows(unpack(code)[None, :], mapping)[0]


# Row-wise helpers over (n, nbytes) packed matrices; the per-code functions
# above stay the reference semantics.


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack an (n, length) 0/1 matrix into (n, ceil(length/8)) bytes."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 2:
        raise ValueError("expected a 2-D bit matrix")
    _check_length(bits.shape[1])
    return np.packbits(bits, axis=1)


def unpack_rows(packed: np.ndarray, length: int) -> np.ndarray:
    """Unpack an (n, nbytes) byte matrix back to (n, length) 0/1 values."""
    length = _check_length(length)
    packed = np.asarray(packed, dtype=np.uint8)
    return np.unpackbits(packed, axis=1)[:, :length]


def truncate_rows(packed: np.ndarray, length: int, k: int) -> np.ndarray:
    """Row-wise prefix truncation on packed storage, padding kept canonical."""
    if not 1 <= k <= length:
        raise ValueError(f"truncation length {k} not in [1, {length}]")
    out = np.asarray(packed, dtype=np.uint8)[:, : (k + 7) // 8].copy()
    out[:, -1] &= _tail_mask(k)
    return out


def to_real_rows(bits: np.ndarray, mapping: str = ZERO_ONE) -> np.ndarray:
    """Map an (n, length) 0/1 matrix to float64 features."""
    _check_mapping(mapping)
    x = np.asarray(bits, dtype=np.float64)
    if mapping == PLUS_MINUS_ONE:
        x = 2.0 * x - 1.0
    return x


def hamming_to_all(query: np.ndarray, packed: np.ndarray) -> np.ndarray:
    """Hamming distances from one packed row to every row of a packed matrix."""
    return np.bitwise_count(packed ^ query[None, :]).sum(axis=1, dtype=np.uint32)
