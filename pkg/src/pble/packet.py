"""BLE packet structures, the carrier-packet embedding and tag address coding.

A carrier packet is an ordinary BLE packet sent by the excitation source whose
payload starts with the preamble, access address and header of a second
(inner) packet.  The tag shifts the whole packet to the target channel; over
the leading ``inner_offset`` bytes it leaves the phase alone, and over the
rest it XORs in its payload and tag-side CRC.  A commodity receiver on the
target channel then sees a standard packet.

Byte fields are stored in memory order.  On the air every byte goes out
least-significant bit first; the CRC bytes are stored so that this expansion
yields the checksum most-significant bit first.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from . import gf2codec as gc

MAX_PAYLOAD = 251
HEADER_LEN = 2
CRC_LEN = 3
AA_LEN = 4

#: Access address used on the advertising channels.
ADV_ACCESS_ADDRESS = (0x8E89BED6).to_bytes(4, "little")


class PhyMode(enum.Enum):
    LE1M = "LE1M"
    LE2M = "LE2M"

    @property
    def preamble_len_bytes(self) -> int:
        return 1 if self is PhyMode.LE1M else 2

    @property
    def symbol_rate(self) -> float:
        return 1e6 if self is PhyMode.LE1M else 2e6

    @property
    def freq_deviation(self) -> float:
        """Peak deviation (half the tone spacing) in Hz for modulation index 0.5."""
        return self.symbol_rate / 4

    @property
    def inner_offset(self) -> int:
        """Bytes of outer payload holding the inner preamble, access address and header."""
        return self.preamble_len_bytes + AA_LEN + HEADER_LEN

    @property
    def max_inner_payload(self) -> int:
        """Largest inner payload that leaves room for the inner CRC (241 / 240)."""
        return MAX_PAYLOAD - self.inner_offset - CRC_LEN

    @classmethod
    def parse(cls, value: "PhyMode | str") -> "PhyMode":
        if isinstance(value, PhyMode):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown PHY mode {value!r}; expected LE1M or LE2M") from None


def preamble_for(mode: PhyMode, access_address: bytes) -> bytes:
    """Alternating preamble whose last bit differs from the first access-address bit."""
    byte = 0xAA if (access_address[0] & 1) == 0 else 0x55
    return bytes([byte]) * mode.preamble_len_bytes


def data_header(llid: int = 2, nesn: int = 0, sn: int = 0, md: int = 0) -> int:
    """First header byte of a data-channel PDU."""
    if not 1 <= llid <= 3:
        raise ValueError("LLID must be 1, 2 or 3")
    return llid | (nesn & 1) << 2 | (sn & 1) << 3 | (md & 1) << 4


def adv_header(pdu_type: int, tx_add: int = 0, rx_add: int = 0, ch_sel: int = 0) -> int:
    """First header byte of an advertising-channel PDU."""
    if not 0 <= pdu_type <= 0xF:
        raise ValueError("PDU type must fit in 4 bits")
    return pdu_type | (ch_sel & 1) << 5 | (tx_add & 1) << 6 | (rx_add & 1) << 7


ADV_IND = 0x0
CONNECT_IND = 0x5
LL_TERMINATE_IND = 0x02  # control opcode


def crc_to_bytes(value: int) -> bytes:
    """Store a checksum so that LSB-first expansion sends it MSB first."""
    return gc.bits_to_bytes(gc.int_to_bits_msb(value, gc.CRC_BITS))


def crc_from_bytes(data: bytes) -> int:
    return gc.bits_msb_to_int(gc.bytes_to_bits(data))


def _hex(data: bytes) -> str:
    return " ".join(f"{b:02X}" for b in data)


@dataclass(frozen=True)
class BlePacket:
    """One BLE packet.  ``header`` is the 2-byte PDU header; the length byte
    must agree with ``payload``."""

    mode: PhyMode
    access_address: bytes
    header: bytes
    payload: bytes = b""
    crc: bytes = bytes(CRC_LEN)

    def __post_init__(self):
        if len(self.access_address) != AA_LEN:
            raise ValueError("access address must be 4 bytes")
        if len(self.header) != HEADER_LEN:
            raise ValueError("header must be 2 bytes")
        if len(self.crc) != CRC_LEN:
            raise ValueError("CRC field must be 3 bytes")
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")
        if self.header[1] != len(self.payload):
            raise ValueError("header length byte does not match payload length")

    @property
    def preamble(self) -> bytes:
        return preamble_for(self.mode, self.access_address)

    @property
    def pdu(self) -> bytes:
        return self.header + self.payload

    @property
    def on_air_len(self) -> int:
        return len(self.preamble) + AA_LEN + len(self.pdu) + CRC_LEN

    def with_crc(self, init: int) -> "BlePacket":
        return replace(self, crc=crc_to_bytes(gc.crc24_bytes(self.pdu, init)))

    def crc_ok(self, init: int) -> bool:
        return crc_from_bytes(self.crc) == gc.crc24_bytes(self.pdu, init)

    def serialize(self) -> bytes:
        """Bytes in air order: preamble, access address, header, payload, CRC."""
        return self.preamble + self.access_address + self.pdu + self.crc

    def on_air_bits(self, channel_index: Optional[int] = None) -> np.ndarray:
        """Transmitted bits.  The PDU and CRC are whitened when a channel is given."""
        head = gc.bytes_to_bits(self.preamble + self.access_address)
        body = gc.bytes_to_bits(self.pdu + self.crc)
        if channel_index is not None:
            body = gc.whiten(body, channel_index)
        return np.concatenate([head, body])

    @classmethod
    def parse(cls, mode: PhyMode, data: bytes) -> "BlePacket":
        mode = PhyMode.parse(mode)
        pre = mode.preamble_len_bytes
        if len(data) < pre + AA_LEN + HEADER_LEN + CRC_LEN:
            raise ValueError("buffer too short for a BLE packet")
        aa = bytes(data[pre:pre + AA_LEN])
        if bytes(data[:pre]) != preamble_for(mode, aa):
            raise ValueError("preamble does not match access address")
        body = bytes(data[pre + AA_LEN:])
        length = body[1]
        if len(body) != HEADER_LEN + length + CRC_LEN:
            raise ValueError("buffer length disagrees with header length byte")
        return cls(mode, aa, body[:2], body[2:2 + length], body[2 + length:])

    def dump(self) -> dict:
        return {
            "mode": self.mode.value,
            "preamble": _hex(self.preamble),
            "access_address": _hex(self.access_address),
            "header": _hex(self.header),
            "payload": _hex(self.payload),
            "crc": _hex(self.crc),
            "on_air_bytes": self.on_air_len,
        }


def build_packet(
    mode: PhyMode | str,
    aa: bytes,
    pdu_type_fields: int | Mapping = 0x02,
    payload: bytes = b"",
    *,
    crc_init: Optional[int] = None,
) -> BlePacket:
    """Assemble a packet.  ``pdu_type_fields`` is the first header byte or a
    mapping of :func:`data_header` keyword arguments.  The CRC is left zero
    unless ``crc_init`` is given."""
    mode = PhyMode.parse(mode)
    payload = bytes(payload)
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    byte0 = data_header(**pdu_type_fields) if isinstance(pdu_type_fields, Mapping) else int(pdu_type_fields)
    if not 0 <= byte0 <= 0xFF:
        raise ValueError("header byte out of range")
    pkt = BlePacket(mode, bytes(aa), bytes([byte0, len(payload)]), payload)
    return pkt.with_crc(crc_init) if crc_init is not None else pkt


def empty_pdu(mode: PhyMode, aa: bytes, crc_init: int, *, nesn: int = 0, sn: int = 0) -> BlePacket:
    """Empty data PDU used as an acknowledgement."""
    return build_packet(mode, aa, data_header(llid=1, nesn=nesn, sn=sn), b"", crc_init=crc_init)


def receive_pdu(bits: np.ndarray, init: int, channel_index: int) -> tuple:
    """Decode the whitened PDU that follows the access address.

    Returns ``(header, payload, crc_ok)``; ``header`` is None if too few bits
    arrived.
    """
    bits = gc.as_bits(bits)
    if len(bits) < 8 * (HEADER_LEN + CRC_LEN):
        return None, b"", False
    plain = gc.whiten(bits, channel_index)
    header = gc.bits_to_bytes(plain[:16])
    length = header[1]
    end = 8 * (HEADER_LEN + length + CRC_LEN)
    if len(plain) < end:
        return header, b"", False
    pdu = plain[:end - 24]
    ok = gc.crc24(pdu, init) == gc.bits_msb_to_int(plain[end - 24:end])
    return header, gc.bits_to_bytes(pdu[16:]), ok


# -- carrier packets ---------------------------------------------------------------

@dataclass(frozen=True)
class InnerSpec:
    aa: bytes
    header: int = 0x02
    payload_len: int = 0


@dataclass(frozen=True)
class Region:
    start: int
    end: int
    kind: str  # "shift-only" or "xor"

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "kind": self.kind}


@dataclass(frozen=True)
class CarrierPacket:
    """Outer excitation packet hosting an inner packet in its payload."""

    outer: BlePacket
    inner: BlePacket
    inner_offset_bytes: int

    def __post_init__(self):
        mode = self.outer.mode
        if self.inner_offset_bytes != mode.inner_offset:
            raise ValueError("inner offset does not match PHY mode")
        if len(self.inner.payload) > mode.max_inner_payload:
            raise ValueError("inner capacity exceeded")
        if len(self.outer.payload) != self.inner_offset_bytes + len(self.inner.payload) + CRC_LEN:
            raise ValueError("outer payload does not match inner packet length")

    @property
    def mode(self) -> PhyMode:
        return self.outer.mode

    @property
    def xor_len_bytes(self) -> int:
        return len(self.inner.payload) + CRC_LEN

    def regions(self) -> list:
        """Byte ranges over the outer payload; together they cover it exactly."""
        split = self.inner_offset_bytes
        return [Region(0, split, "shift-only"), Region(split, len(self.outer.payload), "xor")]

    @property
    def outer_payload_start_bits(self) -> int:
        """Bit offset of the outer payload from the start of the outer packet."""
        return 8 * (self.mode.preamble_len_bytes + AA_LEN + HEADER_LEN)

    @property
    def inner_start_bits(self) -> int:
        return self.outer_payload_start_bits

    @property
    def xor_start_bits(self) -> int:
        return self.outer_payload_start_bits + 8 * self.inner_offset_bytes

    @property
    def xor_end_bits(self) -> int:
        return self.xor_start_bits + 8 * self.xor_len_bytes

    def on_air_bits(self) -> np.ndarray:
        """Outer packet as sent by the source; it is not whitened on the air."""
        return gc.bytes_to_bits(self.outer.serialize())

    def dump(self) -> dict:
        return {
            "mode": self.mode.value,
            "outer": self.outer.dump(),
            "inner": self.inner.dump(),
            "inner_offset": self.inner_offset_bytes,
            "region_map": [r.to_dict() for r in self.regions()],
        }


def build_carrier(
    mode: PhyMode | str,
    outer_aa: bytes,
    inner_spec: InnerSpec | Mapping,
    *,
    crc_init: int = 0,
    channel_index: Optional[int] = None,
) -> CarrierPacket:
    """Build the outer packet for a tag transmission.

    With ``channel_index`` the outer payload is filled with the premodulated
    sequence for that channel and ``crc_init``; without it the XOR region is
    zero (useful for layout inspection).
    """
    mode = PhyMode.parse(mode)
    if isinstance(inner_spec, Mapping):
        inner_spec = InnerSpec(**inner_spec)
    if inner_spec.payload_len < 0:
        raise ValueError("inner payload length must be non-negative")
    if inner_spec.payload_len > mode.max_inner_payload:
        raise ValueError("inner capacity exceeded")
    p = inner_spec.payload_len
    inner = BlePacket(mode, bytes(inner_spec.aa), bytes([inner_spec.header, p]), bytes(p))
    head = gc.bytes_to_bits(inner.preamble + inner.access_address)
    if channel_index is None:
        body = np.concatenate([gc.bytes_to_bits(inner.header), np.zeros(8 * (p + CRC_LEN), dtype=np.uint8)])
    else:
        body = gc.source_premod(
            crc_init, channel_index, 8 * p, 16, header=gc.bytes_to_bits(inner.header)
        ).bits
    outer_payload = gc.bits_to_bytes(np.concatenate([head, body]))
    # Outer header: data PDU, LLID 2; its first on-air bit is 0, which the
    # address code relies on.
    outer = BlePacket(mode, bytes(outer_aa), bytes([0x02, len(outer_payload)]), outer_payload)
    return CarrierPacket(outer, inner, mode.inner_offset)


# -- tag address coding ---------------------------------------------------------------

VALID_N = (1, 2, 4, 8, 16, 32)


def _check_n(n: int) -> int:
    if n not in VALID_N:
        raise ValueError(f"n={n} does not divide 32")
    return 32 // n


def address_capacity(n: int) -> int:
    return 1 << _check_n(n)


def _one_group(n: int) -> list:
    if n == 1:
        return [1]
    return [0, 1] + [0] * (n - 2)


def encode_tag_address(tag_id: int, n: int) -> bytes:
    """Access address whose symbol groups spell ``tag_id`` (MSB first).

    A 0 bit is ``n`` zero symbols, a 1 bit is ``0 1 0 ... 0`` (``01`` for n=2,
    ``1`` for n=1).
    """
    k = _check_n(n)
    if not 0 <= tag_id < (1 << k):
        raise ValueError(f"tag id {tag_id} out of range for n={n} (capacity {1 << k})")
    symbols = []
    for j in range(k):
        bit = (tag_id >> (k - 1 - j)) & 1
        symbols += _one_group(n) if bit else [0] * n
    return gc.bits_to_bytes(symbols)


def address_pulses(aa: bytes, next_symbol: int = 0) -> np.ndarray:
    """Transition pulses over the 32 address slots.

    Slot ``k`` fires when symbol ``k`` differs from symbol ``k+1``; the symbol
    after the address is the first header bit (``next_symbol``).
    """
    s = np.append(gc.bytes_to_bits(aa), np.uint8(next_symbol))
    return (s[:-1] ^ s[1:]).astype(np.uint8)


def decode_activation(
    transition_pulses: Sequence[int], n: int, allocated: Optional[set] = None
) -> Optional[int]:
    """Map 32 pulse slots back to a tag id, or None for no match."""
    k = _check_n(n)
    pulses = gc.as_bits(transition_pulses)
    if len(pulses) != 32:
        raise ValueError("expected 32 pulse slots")
    if n == 1:
        # Rebuild symbols backwards from the known header bit (0).
        sym = np.bitwise_xor.accumulate(pulses[::-1])[::-1]
        bits = sym
    else:
        bits = pulses.reshape(k, n).any(axis=1).astype(np.uint8)
    tag_id = gc.bits_msb_to_int(bits)
    if allocated is not None and tag_id not in allocated:
        return None
    return tag_id


@dataclass(frozen=True)
class TagAddressCode:
    tag_id: int
    n: int
    encoded_aa: bytes = field(default=b"")

    def __post_init__(self):
        aa = encode_tag_address(self.tag_id, self.n)
        if self.encoded_aa and self.encoded_aa != aa:
            raise ValueError("encoded access address does not match tag id")
        object.__setattr__(self, "encoded_aa", aa)

    def matches(self, pulses: Sequence[int]) -> bool:
        return decode_activation(pulses, self.n) == self.tag_id
