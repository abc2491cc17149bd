"""GF(2) polynomial arithmetic, BLE CRC-24, data whitening and the split encoder.

Bit sequences are ``numpy.uint8`` arrays holding 0/1 values in on-air order.
Byte strings are expanded least-significant-bit first, as on the air.

The CRC register is held as an int whose bit ``i`` is LFSR position ``i``.
Input bits enter at position 23 (XOR with the feedback) and the checksum is
transmitted from position 23 down to position 0, so the value returned by
:func:`crc24` is the checksum read most-significant-bit first.  With this
convention ``crc24(m, init) == (init * x^len(m) + m(x) * x^24) mod g(x)``
where ``m(x)`` takes its first transmitted bit as the highest coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

CRC_BITS = 24
CRC_MASK = (1 << CRC_BITS) - 1
#: x^24 + x^10 + x^9 + x^6 + x^4 + x^3 + x + 1
CRC_POLY = 0x100065B
_CRC_TAPS = CRC_POLY & CRC_MASK

ADV_CRC_INIT = 0x555555
NUM_CHANNELS = 40
WHITEN_PERIOD = 127

BitsLike = Union[np.ndarray, Sequence[int], bytes, bytearray]


# -- bit helpers -------------------------------------------------------------

def bytes_to_bits(data: bytes) -> np.ndarray:
    """Expand bytes to bits, least significant bit of each byte first."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8), bitorder="little")


def bits_to_bytes(bits: BitsLike) -> bytes:
    bits = as_bits(bits)
    if len(bits) % 8:
        raise ValueError(f"bit count {len(bits)} is not a multiple of 8")
    return np.packbits(bits, bitorder="little").tobytes()


def as_bits(data: BitsLike) -> np.ndarray:
    """Coerce bytes or a 0/1 sequence to a uint8 bit array."""
    if isinstance(data, (bytes, bytearray)):
        return bytes_to_bits(data)
    arr = np.asarray(data, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("bit sequence must be one-dimensional")
    if arr.size and arr.max() > 1:
        raise ValueError("bit sequence may only contain 0 and 1")
    return arr


def int_to_bits_msb(value: int, width: int) -> np.ndarray:
    """``width`` bits of ``value``, most significant first."""
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def bits_msb_to_int(bits: BitsLike) -> int:
    out = 0
    for b in as_bits(bits).tolist():
        out = (out << 1) | b
    return out


# -- polynomials -------------------------------------------------------------

class Gf2Poly:
    """Polynomial over GF(2) stored as an int (bit ``i`` = coefficient of x^i).

    The zero polynomial has degree -1.
    """

    __slots__ = ("value",)

    def __init__(self, value: int = 0):
        if value < 0:
            raise ValueError("polynomial value must be non-negative")
        self.value = int(value)

    @classmethod
    def from_coefficients(cls, coefficients: Iterable[int]) -> "Gf2Poly":
        """Build from coefficients ordered x^0 first."""
        value = 0
        for i, c in enumerate(coefficients):
            if c not in (0, 1):
                raise ValueError("coefficients must be 0 or 1")
            value |= c << i
        return cls(value)

    @classmethod
    def from_bits_msb(cls, bits: BitsLike) -> "Gf2Poly":
        """Build from a transmitted bit stream; the first bit is the top coefficient."""
        return cls(bits_msb_to_int(bits))

    @classmethod
    def monomial(cls, degree: int) -> "Gf2Poly":
        return cls(1 << degree)

    @property
    def degree(self) -> int:
        return self.value.bit_length() - 1

    @property
    def coefficients(self) -> tuple:
        return tuple((self.value >> i) & 1 for i in range(self.degree + 1))

    def __add__(self, other: "Gf2Poly") -> "Gf2Poly":
        return Gf2Poly(self.value ^ other.value)

    __xor__ = __add__
    __sub__ = __add__

    def __mul__(self, other: "Gf2Poly") -> "Gf2Poly":
        a, b, out = self.value, other.value, 0
        while b:
            if b & 1:
                out ^= a
            a <<= 1
            b >>= 1
        return Gf2Poly(out)

    def __mod__(self, other: "Gf2Poly") -> "Gf2Poly":
        return poly_mod(self, other)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Gf2Poly) and other.value == self.value

    def __hash__(self) -> int:
        return hash(self.value)

    def __bool__(self) -> bool:
        return self.value != 0

    def __repr__(self) -> str:
        if not self.value:
            return "Gf2Poly(0)"
        terms = []
        for i in range(self.degree, -1, -1):
            if (self.value >> i) & 1:
                terms.append("1" if i == 0 else ("x" if i == 1 else f"x^{i}"))
        return f"Gf2Poly({' + '.join(terms)})"


CRC_GENERATOR = Gf2Poly(CRC_POLY)


def poly_mod(a: Gf2Poly, g: Gf2Poly) -> Gf2Poly:
    """Remainder of ``a`` divided by ``g`` by repeated subtraction of shifted ``g``."""
    if not g:
        raise ZeroDivisionError("division by zero polynomial")
    r, gv = a.value, g.value
    dg = g.degree
    while r and r.bit_length() - 1 >= dg:
        r ^= gv << (r.bit_length() - 1 - dg)
    return Gf2Poly(r)


# -- CRC-24 ------------------------------------------------------------------

@dataclass
class CrcState:
    """Running BLE CRC-24 LFSR."""

    init: int
    register: int = field(init=False)

    def __post_init__(self):
        if not 0 <= self.init <= CRC_MASK:
            raise ValueError("CRC init must fit in 24 bits")
        self.register = self.init

    def update(self, bits: BitsLike) -> "CrcState":
        reg = self.register
        for b in as_bits(bits).tolist():
            fb = (reg >> 23) ^ b
            reg = (reg << 1) & CRC_MASK
            if fb:
                reg ^= _CRC_TAPS
        self.register = reg
        return self

    def checksum_bits(self) -> np.ndarray:
        return int_to_bits_msb(self.register, CRC_BITS)


def crc24(message: BitsLike, init: int) -> int:
    """Bit-serial BLE CRC-24 of ``message`` starting from ``init``."""
    return CrcState(init).update(message).register


def _advance_zeros(reg: int, n: int) -> int:
    for _ in range(n):
        fb = reg >> 23
        reg = (reg << 1) & CRC_MASK
        if fb:
            reg ^= _CRC_TAPS
    return reg


@lru_cache(maxsize=None)
def _byte_table() -> tuple:
    # Entry v: zero-input advance by 8 steps of a register whose top byte is v.
    return tuple(_advance_zeros(v << 16, 8) for v in range(256))


_REV8 = tuple(int(f"{v:08b}"[::-1], 2) for v in range(256))


def crc24_bytes(data: bytes, init: int) -> int:
    """Table-driven CRC-24 over whole bytes; equal to ``crc24(bytes_to_bits(data), init)``."""
    table = _byte_table()
    reg = init
    for byte in bytes(data):
        # the byte's first bit (its LSB) meets register position 23
        reg = ((reg & 0xFFFF) << 8) ^ table[(reg >> 16) ^ _REV8[byte]]
    return reg


def _mulmod(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> CRC_BITS:
            a ^= CRC_POLY
    return out


@lru_cache(maxsize=4096)
def _x_pow_mod(n: int) -> int:
    result, base = 1, 2  # 1 and x
    while n:
        if n & 1:
            result = _mulmod(result, base)
        base = _mulmod(base, base)
        n >>= 1
    return result


def crc24_of_zeros(n_bits: int, init: int) -> int:
    """CRC of ``n_bits`` zero bits from ``init`` (the init-only contribution).

    Clocking zeros multiplies the register polynomial by x, so this is
    ``init * x^n_bits mod g``.
    """
    if n_bits < 0:
        raise ValueError("n_bits must be non-negative")
    return _mulmod(init, _x_pow_mod(n_bits))


def crc24_split(message: BitsLike, init: int) -> tuple:
    """Split the checksum into a part known to the tag and a part known to the source.

    Returns ``(tag_part, source_part)`` with ``tag_part ^ source_part ==
    crc24(message, init)``; ``tag_part`` does not depend on ``init``.
    """
    bits = as_bits(message)
    return crc24(bits, 0), crc24_of_zeros(len(bits), init)


# -- whitening ---------------------------------------------------------------

def _check_channel(channel_index: int) -> None:
    if not 0 <= channel_index < NUM_CHANNELS:
        raise ValueError(f"channel index {channel_index} outside 0..{NUM_CHANNELS - 1}")


@dataclass
class WhitenState:
    """7-bit whitening LFSR, polynomial x^7 + x^4 + 1.

    Bit ``i`` of ``register`` is LFSR position ``i``.  Position 0 is preset to 1
    and positions 1..6 hold the channel index, most significant bit in position 1.
    """

    register: int
    channel_index: int

    @classmethod
    def for_channel(cls, channel_index: int) -> "WhitenState":
        _check_channel(channel_index)
        reg = 1
        for pos in range(1, 7):
            reg |= ((channel_index >> (6 - pos)) & 1) << pos
        return cls(reg, channel_index)

    def next_bit(self) -> int:
        out = (self.register >> 6) & 1
        reg = (self.register << 1) & 0x7F
        reg |= out
        if out:
            reg ^= 1 << 4
        self.register = reg
        return out


@lru_cache(maxsize=NUM_CHANNELS)
def _whiten_period(channel_index: int) -> np.ndarray:
    state = WhitenState.for_channel(channel_index)
    seq = np.array([state.next_bit() for _ in range(WHITEN_PERIOD)], dtype=np.uint8)
    seq.setflags(write=False)
    return seq


def whiten_seq(channel_index: int, n_bits: int) -> np.ndarray:
    """First ``n_bits`` of the whitening sequence for ``channel_index``."""
    _check_channel(channel_index)
    if n_bits < 0:
        raise ValueError("n_bits must be non-negative")
    return np.resize(_whiten_period(channel_index), n_bits).astype(np.uint8)


def whiten(bits: BitsLike, channel_index: int) -> np.ndarray:
    """XOR ``bits`` with the channel's whitening sequence (its own inverse)."""
    bits = as_bits(bits)
    return bits ^ whiten_seq(channel_index, len(bits))


# -- distributed encoding ----------------------------------------------------

@dataclass(frozen=True)
class PremodSequence:
    """Excitation-side bits over the PDU region (header + payload + CRC)."""

    bits: np.ndarray
    region_len_bits: int

    def __post_init__(self):
        if len(self.bits) != self.region_len_bits:
            raise ValueError("premod sequence length does not match its region")


#: Largest message the tag encodes (the LE 1M inner payload capacity).
MAX_TAG_MESSAGE_BYTES = 241


def _message_bits(message: BitsLike) -> np.ndarray:
    bits = as_bits(message)
    if len(bits) > 8 * MAX_TAG_MESSAGE_BYTES:
        raise ValueError(
            f"message of {len(bits) // 8} bytes exceeds inner capacity "
            f"({MAX_TAG_MESSAGE_BYTES} bytes)"
        )
    return bits


def source_premod(
    init: int,
    channel_index: int,
    payload_len_bits: int,
    header_len_bits: int = 0,
    *,
    header: BitsLike | None = None,
    whitening: bool = True,
) -> PremodSequence:
    """Excitation-side sequence holding every dynamic-parameter contribution.

    The CRC field carries the checksum of the non-tag bits (``header`` or zeros)
    followed by zeros over the payload, computed from ``init``; the whole region
    is then XORed with the whitening sequence.  Passing ``header`` lets the
    source own a header the tag never touches.
    """
    if payload_len_bits < 0 or header_len_bits < 0:
        raise ValueError("lengths must be non-negative")
    if header is None:
        head = np.zeros(header_len_bits, dtype=np.uint8)
        crc = crc24_of_zeros(header_len_bits + payload_len_bits, init)
    else:
        head = as_bits(header)
        if len(head) != header_len_bits:
            raise ValueError("header length does not match header_len_bits")
        crc = crc24_of_zeros(payload_len_bits, crc24(head, init))
    region = np.concatenate(
        [head, np.zeros(payload_len_bits, dtype=np.uint8), int_to_bits_msb(crc, CRC_BITS)]
    )
    if whitening:
        region = region ^ whiten_seq(channel_index, len(region))
    else:
        _check_channel(channel_index)
    return PremodSequence(region, len(region))


def tag_baseband(message: BitsLike) -> np.ndarray:
    """Tag-side bits: the message followed by its CRC from a zero register."""
    bits = _message_bits(message)
    if isinstance(message, (bytes, bytearray)):
        crc = crc24_bytes(bytes(message), 0)
    else:
        crc = crc24(bits, 0)
    return np.concatenate([bits, int_to_bits_msb(crc, CRC_BITS)])


def combine_on_air(tag_bits: BitsLike, premod: PremodSequence, offset: int = 0) -> np.ndarray:
    """XOR the tag bits into the premodulated region starting at ``offset``."""
    tag_bits = as_bits(tag_bits)
    out = premod.bits.copy()
    if offset + len(tag_bits) != len(out):
        raise ValueError("tag bits do not cover the end of the premod region")
    out[offset:] ^= tag_bits
    return out


def encode_monolithic(message: BitsLike, init: int, channel_index: int, *, whitening: bool = True) -> np.ndarray:
    """Standard transmitter path: message, CRC from ``init``, then whitening."""
    bits = _message_bits(message)
    region = np.concatenate([bits, CrcState(init).update(bits).checksum_bits()])
    if not whitening:
        _check_channel(channel_index)
        return region
    return whiten(region, channel_index)


def decode_pdu_region(on_air: BitsLike, init: int, channel_index: int) -> tuple:
    """Receiver path: de-whiten and check the CRC.  Returns ``(message_bits, crc_ok)``."""
    plain = whiten(on_air, channel_index)
    if len(plain) < CRC_BITS:
        return plain[:0], False
    msg = plain[:-CRC_BITS]
    return msg, crc24(msg, init) == bits_msb_to_int(plain[-CRC_BITS:])
