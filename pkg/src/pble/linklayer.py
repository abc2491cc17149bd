"""Connection scheduling for backscatter tags riding on commodity BLE links.

Three actors share a simulated timeline.  The excitation source owns every
dynamic link parameter and emits carrier packets on ``target - f_shift``; the
tag recognises its coded access address, picks the next message and XORs its
chips into the carrier; the commodity device follows the hop sequence it was
given in CONNECT_IND and decodes the packet that lands on its channel.

Hopping uses Channel Selection Algorithm #1.  Data channel indices 0..36 map
to RF channels 1..11 and 13..38; the advertising channels 37, 38 and 39 sit
on RF channels 0, 12 and 39.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import gf2codec as gc
from . import phy
from .channel import ChannelModel, add_awgn, flip_bits, receiver_ber
from .packet import (
    ADV_ACCESS_ADDRESS,
    ADV_IND,
    AA_LEN,
    CONNECT_IND,
    CRC_LEN,
    HEADER_LEN,
    LL_TERMINATE_IND,
    BlePacket,
    CarrierPacket,
    InnerSpec,
    PhyMode,
    TagAddressCode,
    adv_header,
    address_capacity,
    build_carrier,
    build_packet,
    data_header,
    decode_activation,
    preamble_for,
    receive_pdu,
)

NUM_DATA_CHANNELS = 37
FULL_CHANNEL_MAP = (1 << NUM_DATA_CHANNELS) - 1
SUPERVISION_EVENTS = 6
ESTABLISH_EVENTS = 6
CHANNEL_SPACING = 2e6
DEFAULT_F_SHIFT = 8e6
DEFAULT_INTERVAL = 50e-3
DEFAULT_IFS = 150e-6
DEFAULT_GUARD = 500e-6
CLOSE_AFTER_FAILURES = 2
_MASK64 = (1 << 64) - 1
#: Excitation tuning range (RF channel indices for 2360..2500 MHz).
MIN_RF = -21
MAX_RF = 49


# -- channel plan ------------------------------------------------------------------

def data_to_rf(channel_index: int) -> int:
    """RF channel index (0..39) of a BLE channel index."""
    if 0 <= channel_index <= 10:
        return channel_index + 1
    if 11 <= channel_index <= 36:
        return channel_index + 2
    adv = {37: 0, 38: 12, 39: 39}
    if channel_index in adv:
        return adv[channel_index]
    raise ValueError(f"channel index {channel_index} out of range")


def rf_to_data(rf_index: int) -> int:
    for ch in range(40):
        if data_to_rf(ch) == rf_index:
            return ch
    raise ValueError(f"RF channel {rf_index} is not a BLE channel")


def used_channels(channel_map: int) -> list:
    return [c for c in range(NUM_DATA_CHANNELS) if (channel_map >> c) & 1]


def _check_map(channel_map: int) -> list:
    if not 0 <= channel_map <= FULL_CHANNEL_MAP:
        raise ValueError("channel map must be a 37-bit mask")
    used = used_channels(channel_map)
    if len(used) < 2:
        raise ValueError("degenerate channel map: at least 2 channels must be used")
    return used


def csa_next_channel(last_unmapped: int, hop_increment: int, channel_map: int) -> tuple:
    """One step of Channel Selection Algorithm #1.  Returns ``(unmapped, mapped)``."""
    used = _check_map(channel_map)
    if not 0 <= last_unmapped < NUM_DATA_CHANNELS:
        raise ValueError("last unmapped channel must be in 0..36")
    unmapped = (last_unmapped + hop_increment) % NUM_DATA_CHANNELS
    if (channel_map >> unmapped) & 1:
        return unmapped, unmapped
    return unmapped, used[unmapped % len(used)]


def carrier_channel(target_channel: int, f_shift: float = DEFAULT_F_SHIFT) -> int:
    """RF channel the source transmits on so the tag's shift lands on ``target_channel`` (RF)."""
    steps = f_shift / CHANNEL_SPACING
    if f_shift <= 0 or steps != int(steps):
        raise ValueError("f_shift must be a positive multiple of 2 MHz")
    out = target_channel - int(steps)
    if not MIN_RF <= out <= MAX_RF:
        raise ValueError(f"carrier channel {out} is outside the tuning range")
    return out


def landing_channel(carrier_rf: int, f_shift: float) -> int:
    """RF channel on which a carrier at ``carrier_rf`` appears after the tag's shift."""
    f = phy.rf_channel_freq(carrier_rf) + f_shift
    k = (f - phy.BASE_FREQ) / CHANNEL_SPACING
    if abs(k - round(k)) > 1e-9:
        raise ValueError("shifted carrier is off the channel grid")
    return int(round(k))


# -- connection parameters -------------------------------------------------------------

@dataclass(frozen=True)
class ConnectionParams:
    access_address: bytes
    crc_init: int
    channel_map: int = FULL_CHANNEL_MAP
    hop_increment: int = 7
    conn_interval: float = DEFAULT_INTERVAL
    phy_mode: PhyMode = PhyMode.LE1M

    def __post_init__(self):
        if len(self.access_address) != AA_LEN:
            raise ValueError("access address must be 4 bytes")
        if not 0 <= self.crc_init <= gc.CRC_MASK:
            raise ValueError("crc_init must be 24-bit")
        if not 5 <= self.hop_increment <= 16:
            raise ValueError("hop increment must be within 5..16")
        if self.conn_interval <= 0:
            raise ValueError("connection interval must be positive")
        _check_map(self.channel_map)
        object.__setattr__(self, "phy_mode", PhyMode.parse(self.phy_mode))

    @property
    def used(self) -> list:
        return used_channels(self.channel_map)

    @classmethod
    def random(cls, rng: np.random.Generator, mode: PhyMode = PhyMode.LE1M, **kw) -> "ConnectionParams":
        while True:
            aa = rng.bytes(AA_LEN)
            if aa != ADV_ACCESS_ADDRESS:
                break
        return cls(aa, int(rng.integers(0, 1 << 24)), hop_increment=int(rng.integers(5, 17)),
                   phy_mode=mode, **kw)

    def to_dict(self) -> dict:
        return {
            "access_address": self.access_address.hex(),
            "crc_init": self.crc_init,
            "channel_map": self.channel_map,
            "hop_increment": self.hop_increment,
            "conn_interval": self.conn_interval,
            "phy_mode": self.phy_mode.value,
        }


def connect_ind_payload(params: ConnectionParams, init_addr: bytes = bytes(6),
                        adv_addr: bytes = bytes(6)) -> bytes:
    """InitA, AdvA and LLData of a CONNECT_IND PDU (34 bytes)."""
    interval_units = int(round(params.conn_interval / 1.25e-3))
    lldata = (
        params.access_address
        + params.crc_init.to_bytes(3, "little")
        + bytes([1])  # window size
        + (0).to_bytes(2, "little")  # window offset
        + interval_units.to_bytes(2, "little")
        + (0).to_bytes(2, "little")  # latency
        + (100).to_bytes(2, "little")  # supervision timeout, 10 ms units
        + params.channel_map.to_bytes(5, "little")
        + bytes([params.hop_increment & 0x1F])
    )
    return bytes(init_addr) + bytes(adv_addr) + lldata


def parse_connect_ind(payload: bytes, mode: PhyMode = PhyMode.LE1M) -> ConnectionParams:
    if len(payload) != 34:
        raise ValueError("CONNECT_IND payload must be 34 bytes")
    ll = payload[12:]
    return ConnectionParams(
        access_address=bytes(ll[0:4]),
        crc_init=int.from_bytes(ll[4:7], "little"),
        channel_map=int.from_bytes(ll[16:21], "little"),
        hop_increment=ll[21] & 0x1F,
        conn_interval=int.from_bytes(ll[10:12], "little") * 1.25e-3,
        phy_mode=mode,
    )


# -- state machine and trace -----------------------------------------------------------

class ConnState(enum.Enum):
    ADVERTISING = "Advertising"
    INITIATING = "Initiating"
    CONNECTION = "Connection"
    STANDBY = "Standby"


ALLOWED_TRANSITIONS = frozenset(
    {
        (ConnState.ADVERTISING, ConnState.INITIATING),
        (ConnState.INITIATING, ConnState.CONNECTION),
        (ConnState.CONNECTION, ConnState.CONNECTION),
        (ConnState.ADVERTISING, ConnState.STANDBY),
        (ConnState.INITIATING, ConnState.STANDBY),
        (ConnState.CONNECTION, ConnState.STANDBY),
    }
)


class TraceLog:
    """JSON-lines trace of transitions and connection events."""

    def __init__(self) -> None:
        self.records: list = []

    def append(self, record: dict) -> None:
        self.records.append(record)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())


class ConnectionFsm:
    def __init__(self, tag_id: int, trace: Optional[TraceLog] = None) -> None:
        self.tag_id = tag_id
        self.state = ConnState.ADVERTISING
        self.trace = trace
        self._log({"type": "start", "tag": tag_id, "state": self.state.value})

    def _log(self, record: dict) -> None:
        if self.trace is not None:
            self.trace.append(record)

    def transition(self, to: ConnState, t: float = 0.0, **extra) -> None:
        if (self.state, to) not in ALLOWED_TRANSITIONS:
            raise ValueError(f"invalid transition {self.state.value} -> {to.value}")
        if to is not ConnState.CONNECTION or self.state is not ConnState.CONNECTION:
            self._log({"type": "transition", "tag": self.tag_id, "from": self.state.value,
                       "to": to.value, "t": round(t, 9), **extra})
        self.state = to


@dataclass(frozen=True)
class EventRecord:
    event_index: int
    channel_used: int
    packets_exchanged: int
    bytes_delivered: int
    outcome: str  # "ok" or "lost"
    tag_id: int = 0
    carrier_rf: Optional[int] = None
    listen_rf: Optional[int] = None
    crc_failures: int = 0
    undetected_errors: int = 0
    bit_errors: int = 0  # raw channel errors over the inner packet, genie-aligned
    bits_checked: int = 0

    def __post_init__(self):
        if self.outcome not in ("ok", "lost"):
            raise ValueError("outcome must be 'ok' or 'lost'")

    def to_dict(self) -> dict:
        return {"type": "event", **asdict(self)}


def validate_trace(records: Iterable) -> list:
    """Check a trace (dicts or JSON lines); returns a list of violation messages."""
    allowed = {(a.value, b.value) for a, b in ALLOWED_TRANSITIONS}
    state: dict = {}
    maps: dict = {}
    problems = []
    for i, rec in enumerate(records):
        if isinstance(rec, str):
            if not rec.strip():
                continue
            rec = json.loads(rec)
        kind = rec.get("type")
        tag = rec.get("tag", rec.get("tag_id"))
        if kind == "start":
            if tag in state and state[tag] != ConnState.STANDBY.value:
                problems.append(f"line {i}: tag {tag} restarted while {state[tag]}")
            state[tag] = rec["state"]
        elif kind == "transition":
            cur = state.get(tag)
            if cur != rec["from"]:
                problems.append(f"line {i}: tag {tag} transition from {rec['from']} but state is {cur}")
            if (rec["from"], rec["to"]) not in allowed:
                problems.append(f"line {i}: illegal transition {rec['from']} -> {rec['to']}")
            state[tag] = rec["to"]
            if "channel_map" in rec:
                maps[tag] = int(rec["channel_map"])
        elif kind == "event":
            if state.get(tag) != ConnState.CONNECTION.value:
                problems.append(f"line {i}: event for tag {tag} outside Connection")
            cmap = maps.get(tag)
            if cmap is not None and not (cmap >> rec["channel_used"]) & 1:
                problems.append(f"line {i}: channel {rec['channel_used']} not in channel map")
            if rec.get("carrier_rf") is not None and rec.get("listen_rf") is not None and "f_shift" in rec:
                if rec["carrier_rf"] + int(rec["f_shift"] / CHANNEL_SPACING) != rec["listen_rf"]:
                    problems.append(f"line {i}: carrier offset does not land on the listening channel")
        else:
            problems.append(f"line {i}: unknown record type {kind!r}")
    return problems


# -- registry ---------------------------------------------------------------------------

@dataclass
class TagEntry:
    code: TagAddressCode
    params: Optional[ConnectionParams] = None


class TagRegistry:
    """Source-side table of tag access addresses and their connections."""

    def __init__(self, n: int = 8) -> None:
        self.n = n
        self.capacity = address_capacity(n)
        self._entries: dict = {}

    def register(self, tag_id: int) -> TagAddressCode:
        if tag_id in self._entries:
            raise ValueError(f"tag {tag_id} already registered")
        if len(self._entries) >= self.capacity:
            raise ValueError(f"registry full: n={self.n} allows {self.capacity} tags")
        code = TagAddressCode(tag_id, self.n)
        if any(e.code.encoded_aa == code.encoded_aa for e in self._entries.values()):
            raise ValueError("duplicate access address")
        self._entries[tag_id] = TagEntry(code)
        return code

    def attach(self, tag_id: int, params: Optional[ConnectionParams]) -> None:
        self._entries[tag_id].params = params

    def __getitem__(self, tag_id: int) -> TagEntry:
        return self._entries[tag_id]

    def __contains__(self, tag_id: int) -> bool:
        return tag_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def ids(self) -> list:
        return sorted(self._entries)


# -- timing -----------------------------------------------------------------------------

def packet_airtime(mode: PhyMode | str, payload_bytes: int) -> float:
    """Airtime of a standard packet carrying ``payload_bytes`` of PDU payload."""
    mode = PhyMode.parse(mode)
    if payload_bytes < 0:
        raise ValueError("payload length must be non-negative")
    n = mode.preamble_len_bytes + AA_LEN + HEADER_LEN + payload_bytes + CRC_LEN
    return 8 * n / mode.symbol_rate


def carrier_airtime(mode: PhyMode | str, inner_payload_bytes: int) -> float:
    """Airtime of the outer packet hosting an inner payload of the given size."""
    mode = PhyMode.parse(mode)
    return packet_airtime(mode, mode.inner_offset + inner_payload_bytes + CRC_LEN)


@dataclass(frozen=True)
class EventTiming:
    mode: PhyMode
    inner_payload: int
    conn_interval: float = DEFAULT_INTERVAL
    ifs: float = DEFAULT_IFS
    ack_bytes: Optional[int] = None  # on-air ACK size; None: empty PDU
    guard: float = DEFAULT_GUARD
    packet_cap: Optional[int] = None

    @property
    def ack_airtime(self) -> float:
        if self.ack_bytes is None:
            return packet_airtime(self.mode, 0)
        return 8 * self.ack_bytes / self.mode.symbol_rate

    @property
    def round_trip(self) -> float:
        return carrier_airtime(self.mode, self.inner_payload) + self.ifs + self.ack_airtime + self.ifs

    @property
    def usable(self) -> float:
        return self.conn_interval - self.guard

    @property
    def packets_per_event(self) -> int:
        n = int(math.floor(self.usable / self.round_trip + 1e-12)) if self.usable > 0 else 0
        if self.packet_cap is not None:
            n = min(n, self.packet_cap)
        return n


def goodput_model(
    mode: PhyMode | str,
    inner_payload_bytes: int,
    conn_interval: float = DEFAULT_INTERVAL,
    ifs: float = DEFAULT_IFS,
    ack_bytes: Optional[int] = None,
    per_event_overhead: float = DEFAULT_GUARD,
    packet_cap: Optional[int] = None,
) -> float:
    """Closed-form goodput in kbps: packets per event times payload bits per interval."""
    if inner_payload_bytes <= 0 or conn_interval <= 0 or ifs < 0 or per_event_overhead < 0:
        raise ValueError("parameters must be positive")
    t = EventTiming(PhyMode.parse(mode), inner_payload_bytes, conn_interval, ifs, ack_bytes,
                    per_event_overhead, packet_cap)
    n = t.packets_per_event
    if n == 0:
        raise ValueError("zero capacity: no packet fits in a connection event")
    return n * 8 * inner_payload_bytes / conn_interval / 1e3


# -- actors -----------------------------------------------------------------------------

def tag_message(tag_id: int, seq: int, length: int, seed: int = 0) -> bytes:
    """Deterministic tag payload ``seq`` (the tag's sensor reading stand-in)."""
    key = (seed & _MASK64) | ((tag_id & _MASK64) << 64)
    g = np.random.Generator(np.random.Philox(key=key, counter=[0, seq, 0, 0]))
    return g.bytes(length)


@dataclass(frozen=True)
class FrontEnd:
    """Tag-side waveform settings: the wideband discriminator front end."""

    sample_rate: float = phy.DEFAULT_SAMPLE_RATE
    discriminator: phy.DiscriminatorConfig = field(default_factory=phy.DiscriminatorConfig)
    lead_samples: int = 257


class Tag:
    """Passive tag.  Its behaviour depends only on its message source, its
    address code and what it hears; it never sees CRC_Init or the hop plan."""

    def __init__(self, tag_id: int, n: int, message_len: int, *, seed: int = 0,
                 messages: Optional[Callable[[int], bytes]] = None,
                 front_end: FrontEnd = FrontEnd()) -> None:
        self.code = TagAddressCode(tag_id, n)
        self.message_len = message_len
        self.seed = seed
        self._messages = messages or (lambda s: tag_message(tag_id, s, message_len, seed))
        self.front_end = front_end
        self.seq = 0
        self.trace: list = []

    @property
    def tag_id(self) -> int:
        return self.code.tag_id

    def hear_bits(self, outer_aa: bytes) -> bool:
        """Bit-level activation: decode the address pulses of an ideal detector."""
        s = np.append(gc.bytes_to_bits(outer_aa), np.uint8(0))
        pulses = s[:-1] ^ s[1:]
        return self._activate(decode_activation(pulses, self.code.n) == self.tag_id, 0.0)

    def hear_waveform(self, head: phy.IqWaveform, mode: PhyMode) -> tuple:
        """Run the discriminator front end.  Returns ``(activated, symbol_epoch)``."""
        cfg = self.front_end.discriminator
        disc = phy.delay_discriminator(head, cfg)
        levels = phy.comparator(disc, mode, cfg)
        sync = phy.detect_sync(disc, mode, cfg, aa_lsb=self.code.encoded_aa[0] & 1, levels=levels)
        if not sync.detected:
            self._activate(False, None)
            return False, None
        pulses = phy.activation_pulses(disc, sync, mode, cfg, levels=levels)
        hit = decode_activation(pulses, self.code.n) == self.tag_id
        self._activate(hit, sync.symbol_epoch)
        return hit, sync.symbol_epoch

    def _activate(self, hit: bool, epoch: Optional[float]) -> bool:
        self.trace.append({"seq": self.seq, "activated": bool(hit),
                           "epoch": None if epoch is None else round(epoch, 12)})
        return hit

    def next_chips(self) -> tuple:
        """Message for this activation and its tag-side baseband bits."""
        msg = self._messages(self.seq)
        if len(msg) != self.message_len:
            raise ValueError("message length differs from the configured payload size")
        self.trace[-1]["message"] = msg.hex()
        self.seq += 1
        return msg, gc.tag_baseband(msg)


@dataclass
class Connection:
    tag_id: int
    params: ConnectionParams
    fsm: ConnectionFsm
    last_unmapped: int = 0
    event_counter: int = 0

    def next_channel(self) -> int:
        self.last_unmapped, mapped = csa_next_channel(self.last_unmapped, self.params.hop_increment,
                                                      self.params.channel_map)
        return mapped


class ExcitationSource:
    """Active transmitter: owns the registry, every connection and the carrier plan."""

    def __init__(self, mode: PhyMode = PhyMode.LE1M, n: int = 8, f_shift: float = DEFAULT_F_SHIFT,
                 trace: Optional[TraceLog] = None) -> None:
        self.mode = PhyMode.parse(mode)
        self.registry = TagRegistry(n)
        self.f_shift = f_shift
        carrier_channel(20, f_shift)  # validate the shift
        self.trace = trace
        self.connections: dict = {}

    def register(self, tag_id: int) -> TagAddressCode:
        return self.registry.register(tag_id)

    def advertising_packets(self, tag_id: int, params: ConnectionParams) -> list:
        """ADV_IND and CONNECT_IND of the handshake the source runs on the tag's behalf."""
        adv_a = bytes([tag_id & 0xFF]) + bytes(5)
        adv = build_packet(PhyMode.LE1M, ADV_ACCESS_ADDRESS, adv_header(ADV_IND), adv_a + b"\x02\x01\x06",
                           crc_init=gc.ADV_CRC_INIT)
        conn = build_packet(PhyMode.LE1M, ADV_ACCESS_ADDRESS, adv_header(CONNECT_IND),
                            connect_ind_payload(params, bytes(6), adv_a), crc_init=gc.ADV_CRC_INIT)
        return [adv, conn]

    def open(self, tag_id: int, params: ConnectionParams) -> Connection:
        if tag_id not in self.registry:
            raise ValueError(f"tag {tag_id} is not registered")
        fsm = ConnectionFsm(tag_id, self.trace)
        conn = Connection(tag_id, params, fsm)
        self.registry.attach(tag_id, params)
        self.connections[tag_id] = conn
        return conn

    def connect(self, conn: Connection, t: float = 0.0) -> None:
        conn.fsm.transition(ConnState.INITIATING, t)
        conn.fsm.transition(ConnState.CONNECTION, t, channel_map=conn.params.channel_map,
                            f_shift=self.f_shift)

    def carrier(self, tag_id: int, channel_index: int, payload_len: int) -> CarrierPacket:
        entry = self.registry[tag_id]
        p = entry.params
        return build_carrier(self.mode, entry.code.encoded_aa,
                             InnerSpec(p.access_address, data_header(llid=2), payload_len),
                             crc_init=p.crc_init, channel_index=channel_index)

    def terminate(self, tag_id: int, t: float = 0.0) -> BlePacket:
        conn = self.connections.get(tag_id)
        if conn is None or conn.fsm.state is not ConnState.CONNECTION:
            raise ValueError("invalid transition: terminate requires an open connection")
        p = conn.params
        pkt = build_packet(self.mode, p.access_address, data_header(llid=3),
                           bytes([LL_TERMINATE_IND, 0x13]), crc_init=p.crc_init)
        conn.fsm.transition(ConnState.STANDBY, t, reason="terminate")
        self.registry.attach(tag_id, None)
        return pkt


class CommodityDevice:
    """Unmodified BLE receiver following the hop plan from CONNECT_IND."""

    def __init__(self, params: ConnectionParams, *, sample_rate: float = 32e6,
                 sync_min_score: float = 0.5) -> None:
        self.params = params
        self.sample_rate = sample_rate
        self.sync_min_score = sync_min_score

    @classmethod
    def from_connect_ind(cls, pkt: BlePacket, mode: PhyMode, **kw) -> "CommodityDevice":
        return cls(parse_connect_ind(pkt.payload, mode), **kw)

    def _sync_bits(self) -> np.ndarray:
        aa = self.params.access_address
        return gc.bytes_to_bits(preamble_for(self.params.phy_mode, aa) + aa)

    def receive_bits(self, bits: np.ndarray, channel_index: int) -> tuple:
        """Decode bits starting at the inner preamble.  Returns ``(payload, crc_ok)``; payload None if no sync."""
        sync = self._sync_bits()
        if len(bits) < len(sync) or not np.array_equal(bits[: len(sync)], sync):
            return None, False
        _, payload, ok = receive_pdu(bits[len(sync):], self.params.crc_init, channel_index)
        return payload, ok

    def receive_waveform(self, wave: phy.IqWaveform, channel_index: int, expected_start: int,
                         pdu_bits: int, reference: Optional[np.ndarray] = None) -> tuple:
        """Filter, find the sync word near ``expected_start`` and decode.

        Returns ``(payload, crc_ok, raw_errors)``.  With ``reference`` (the
        transmitted bits from the inner preamble on) the raw error count comes
        from a demodulation at the true start, whether or not sync succeeded.
        """
        mode = self.params.phy_mode
        sps = phy.samples_per_symbol(mode, wave.sample_rate)
        rx = phy.receive_filter(wave, mode)
        sync = self._sync_bits()
        raw = None
        if reference is not None:
            genie = phy.demodulate(rx, mode, offset=expected_start, n_symbols=len(reference))
            raw = int(np.count_nonzero(genie != reference))
        off, score = phy.find_sync_word(rx, mode, sync, search=(expected_start - 4 * sps, expected_start + 4 * sps))
        if score < self.sync_min_score:
            return None, False, raw
        got = phy.demodulate(rx, mode, offset=off, n_symbols=len(sync) + pdu_bits)
        if not np.array_equal(got[: len(sync)], sync):
            return None, False, raw
        _, payload, ok = receive_pdu(got[len(sync):], self.params.crc_init, channel_index)
        return payload, ok, raw


# -- establishment and supervision ------------------------------------------------------

@dataclass(frozen=True)
class EstablishResult:
    success: bool
    events_used: int


def establish(per_event_loss_p: float, uniforms: Sequence[float] | np.random.Generator,
              fsm: Optional[ConnectionFsm] = None, interval: float = DEFAULT_INTERVAL) -> EstablishResult:
    """Advertising handshake: the first completed event connects; six failures give up.

    ``uniforms`` supplies one draw per attempt (event ``e`` fails when
    ``u[e] < p``); a generator is accepted as well.
    """
    if not 0 <= per_event_loss_p <= 1:
        raise ValueError("loss probability must be in [0, 1]")
    if isinstance(uniforms, np.random.Generator):
        uniforms = uniforms.random(ESTABLISH_EVENTS)
    for e in range(ESTABLISH_EVENTS):
        if not uniforms[e] < per_event_loss_p:
            if fsm is not None:
                fsm.transition(ConnState.INITIATING, e * interval)
                fsm.transition(ConnState.CONNECTION, e * interval)
            return EstablishResult(True, e + 1)
    if fsm is not None:
        fsm.transition(ConnState.STANDBY, ESTABLISH_EVENTS * interval, reason="establish-failed")
    return EstablishResult(False, ESTABLISH_EVENTS)


def first_failure_run(lost: Sequence[bool], run: int = SUPERVISION_EVENTS) -> Optional[int]:
    """Index of the event that completes the first run of ``run`` losses, or None."""
    count = 0
    for i, x in enumerate(lost):
        count = count + 1 if x else 0
        if count >= run:
            return i
    return None


@dataclass(frozen=True)
class MaintainResult:
    survived: bool
    events: list
    n_events: int


def maintain(duration: float, conn_interval: float, per_event_loss_p: float,
             uniforms: Sequence[float] | np.random.Generator, *,
             params: Optional[ConnectionParams] = None, records: bool = True) -> MaintainResult:
    """Run ``floor(duration / interval)`` events; six consecutive losses end the link."""
    if conn_interval <= 0 or duration < conn_interval:
        raise ValueError("duration must cover at least one connection interval")
    if not 0 <= per_event_loss_p <= 1:
        raise ValueError("loss probability must be in [0, 1]")
    n = int(math.floor(duration / conn_interval + 1e-9))
    if isinstance(uniforms, np.random.Generator):
        uniforms = uniforms.random(n)
    lost = np.asarray(uniforms[:n]) < per_event_loss_p
    stop = first_failure_run(lost)
    last = n if stop is None else stop + 1
    events = []
    if records:
        if params is None:
            params = ConnectionParams(b"\x71\x76\x4b\x50", 0x123456, conn_interval=conn_interval)
        unmapped = 0
        for e in range(last):
            unmapped, ch = csa_next_channel(unmapped, params.hop_increment, params.channel_map)
            events.append(EventRecord(e, ch, 0 if lost[e] else 1, 0, "lost" if lost[e] else "ok"))
    return MaintainResult(stop is None, events, last)


# -- connection events -----------------------------------------------------------------

@dataclass(frozen=True)
class LinkSettings:
    fidelity: str = "bits"  # "bits" or "waveform"
    link_sample_rate: float = 32e6
    front_end: FrontEnd = field(default_factory=FrontEnd)
    close_after_failures: int = CLOSE_AFTER_FAILURES

    def __post_init__(self):
        if self.fidelity not in ("bits", "waveform"):
            raise ValueError("fidelity must be 'bits' or 'waveform'")


def _head_bits(carrier: CarrierPacket) -> np.ndarray:
    """Outer preamble, access address, header and one byte: what the tag front end needs."""
    n = carrier.mode.preamble_len_bytes + AA_LEN + HEADER_LEN + 1
    return carrier.on_air_bits()[: 8 * n]


def _tag_hears(tag: Tag, carrier: CarrierPacket, settings: LinkSettings, channel: ChannelModel,
               rng: Optional[np.random.Generator]) -> tuple:
    if settings.fidelity == "bits":
        return tag.hear_bits(carrier.outer.access_address), 0.0
    fe = settings.front_end
    mode = carrier.mode
    body = phy.gfsk_modulate(_head_bits(carrier), mode, fe.sample_rate).samples * channel.amplitude
    x = np.concatenate([np.zeros(fe.lead_samples, complex), body, np.zeros(64, complex)])
    head = phy.IqWaveform(fe.sample_rate, x)
    if channel.tag_snr_db is not None:
        head = add_awgn(head, channel.tag_snr_db, rng, signal_power=channel.amplitude ** 2)
    hit, epoch = tag.hear_waveform(head, mode)
    err = 0.0 if epoch is None else epoch - fe.lead_samples / fe.sample_rate
    return hit, err


def run_connection_event(
    conn: Connection,
    source: ExcitationSource,
    tag: Tag,
    device: CommodityDevice,
    channel: ChannelModel,
    timing: EventTiming,
    *,
    rng: Optional[np.random.Generator] = None,
    erasure: Optional[Sequence[float]] = None,
    settings: LinkSettings = LinkSettings(),
    delivered: Optional[list] = None,
) -> EventRecord:
    """One connection event: hop, carrier on ``target - f_shift``, tag XOR, receiver decode.

    ``erasure[k]`` is the uniform draw for packet ``k``; the excitation packet
    is lost when it falls below ``channel.erasure_p``.  The event ends when the
    usable window is full, the packet cap is reached, or
    ``close_after_failures`` consecutive packets fail.  ACKs are assumed to
    arrive.
    """
    if conn.fsm.state is not ConnState.CONNECTION:
        raise ValueError("connection events require the Connection state")
    mode = source.mode
    index = conn.event_counter
    conn.event_counter += 1
    ch = conn.next_channel()
    target_rf = data_to_rf(ch)
    carrier_rf = carrier_channel(target_rf, source.f_shift)
    listen_rf = landing_channel(carrier_rf, source.f_shift)
    n_packets = timing.packets_per_event
    if erasure is None:
        erasure = np.ones(n_packets)
    elif len(erasure) < n_packets:
        raise ValueError("one erasure draw per packet is required")

    p = timing.inner_payload
    carrier = source.carrier(conn.tag_id, ch, p)
    outer_bits = carrier.on_air_bits()
    xs, xe = carrier.xor_start_bits, carrier.xor_end_bits
    inner_lo = carrier.inner_start_bits
    if settings.fidelity == "waveform":
        fs = settings.link_sample_rate
        sps = phy.samples_per_symbol(mode, fs)
        lead = 8 * sps
        outer_wave = phy.gfsk_modulate(outer_bits, mode, fs, center_channel=carrier_rf)
        pad = np.zeros(lead, complex)
        outer_wave = outer_wave.with_samples(np.concatenate([pad, outer_wave.samples, pad]) * channel.amplitude)
        snr = channel.per_sample_snr(channel.snr_for(ch), fs, mode.symbol_rate)
    else:
        snr_sym = channel.snr_for(ch)
        if snr_sym is not None and channel.noise_bandwidth != "symbol":
            # refer the configured SNR to the symbol-rate bandwidth
            ps = channel.per_sample_snr(snr_sym, settings.link_sample_rate, mode.symbol_rate)
            snr_sym = ps + 10 * math.log10(settings.link_sample_rate / mode.symbol_rate)
        ber = receiver_ber(mode, snr_sym)

    sent = ok_count = fails = consecutive = undetected = 0
    bit_errors = bits_checked = 0
    pdu_bits = xe - inner_lo - 8 * (mode.preamble_len_bytes + AA_LEN)
    bytes_ok = 0
    for k in range(n_packets):
        sent += 1
        payload, ok = None, False
        msg = None
        if erasure[k] < channel.erasure_p:
            hit = False  # the excitation packet never reached the tag
        else:
            hit, epoch_err = _tag_hears(tag, carrier, settings, channel, rng)
        if hit:
            msg, chips = tag.next_chips()
            if settings.fidelity == "bits":
                on_air = outer_bits.copy()
                on_air[xs:xe] ^= chips
                rx_bits = flip_bits(on_air[inner_lo:xe], ber, rng) if ber > 0 else on_air[inner_lo:xe]
                bit_errors += int(np.count_nonzero(rx_bits != on_air[inner_lo:xe]))
                bits_checked += xe - inner_lo
                payload, ok = device.receive_bits(rx_bits, ch)
            else:
                shift = int(round(epoch_err * fs))
                plan = phy.BackscatterPlan(xor=(xs, xe), packet_offset=lead + shift)
                bs = phy.backscatter_apply(outer_wave, chips, source.f_shift, plan, mode)
                rx = phy.retune(bs, listen_rf)
                rx = add_awgn(rx, snr, rng, signal_power=channel.amplitude ** 2)
                on_air = outer_bits.copy()
                on_air[xs:xe] ^= chips
                payload, ok, raw = device.receive_waveform(rx, ch, lead + inner_lo * sps, pdu_bits,
                                                           reference=on_air[inner_lo:xe])
                bit_errors += raw
                bits_checked += xe - inner_lo
        elif settings.fidelity == "waveform" and snr is not None:
            # nothing is reflected onto the target channel; the receiver sees noise only
            n = len(outer_wave)
            quiet = phy.IqWaveform(fs, np.zeros(n, complex), center_channel=listen_rf)
            rx = add_awgn(quiet, snr, rng, signal_power=channel.amplitude ** 2)
            payload, ok, _ = device.receive_waveform(rx, ch, lead + inner_lo * sps, pdu_bits)
        if ok:
            ok_count += 1
            consecutive = 0
            bytes_ok += len(payload)
            if msg is None or payload != msg:
                undetected += 1
            if delivered is not None:
                delivered.append(payload)
        else:
            fails += 1
            consecutive += 1
            if consecutive >= settings.close_after_failures:
                break
    rec = EventRecord(index, ch, sent, bytes_ok, "ok" if ok_count else "lost", conn.tag_id,
                      carrier_rf, listen_rf, fails, undetected, bit_errors, bits_checked)
    return _log_event(source, rec)


def _log_event(source: ExcitationSource, rec: EventRecord) -> EventRecord:
    if source.trace is not None:
        source.trace.append({**rec.to_dict(), "tag": rec.tag_id, "f_shift": source.f_shift})
    return rec


# -- multi-tag scheduling ------------------------------------------------------------------

def tdd_schedule(tags: Sequence[int], conn_interval: float, horizon: float) -> list:
    """Round-robin slot plan: ``[(slot_index, tag_id), ...]`` over ``floor(horizon / interval)`` slots."""
    if not tags:
        raise ValueError("at least one tag is required")
    if conn_interval <= 0:
        raise ValueError("connection interval must be positive")
    n_slots = int(math.floor(horizon / conn_interval + 1e-9))
    return [(s, tags[s % len(tags)]) for s in range(n_slots)]


class Scheduler:
    """Time-division manager: one connection event per slot, round-robin over live tags."""

    def __init__(self, tags: Sequence[int], conn_interval: float) -> None:
        if not tags:
            raise ValueError("at least one tag is required")
        self.active = list(tags)
        self.conn_interval = conn_interval
        self.slot = 0
        self._turn = 0

    def next_slot(self) -> tuple:
        """``(slot_index, tag_id)`` for the next slot; tag is None once all are gone."""
        s = self.slot
        self.slot += 1
        if not self.active:
            return s, None
        tag = self.active[self._turn % len(self.active)]
        self._turn += 1
        return s, tag

    def remove(self, tag_id: int) -> None:
        i = self.active.index(tag_id)
        self.active.pop(i)
        if self.active:
            # keep the rotation pointing at the tag that would have gone next
            nxt = self._turn % (len(self.active) + 1)
            if i < nxt:
                self._turn -= 1
            self._turn %= len(self.active)

    def timeline(self, n_slots: int) -> list:
        return [self.next_slot() for _ in range(n_slots)]


def terminate(source: ExcitationSource, tag_id: int, scheduler: Optional[Scheduler] = None,
              t: float = 0.0) -> ConnState:
    """Send LL_TERMINATE_IND and drop the tag from the schedule."""
    source.terminate(tag_id, t)
    if scheduler is not None:
        scheduler.remove(tag_id)
    return ConnState.STANDBY


# -- a whole link ---------------------------------------------------------------------------

@dataclass
class LinkRun:
    events: list
    delivered: list
    trace: TraceLog
    tags: dict

    def goodput_kbps(self, conn_interval: float, tag_id: Optional[int] = None) -> float:
        ev = [e for e in self.events if tag_id is None or e.tag_id == tag_id]
        n_slots = len(self.events)
        if n_slots == 0:
            return 0.0
        return sum(e.bytes_delivered for e in ev) * 8 / (n_slots * conn_interval) / 1e3


def simulate_link(
    *,
    mode: PhyMode | str = PhyMode.LE1M,
    tag_ids: Sequence[int] = (0,),
    n: int = 8,
    n_slots: int = 20,
    timing: Optional[EventTiming] = None,
    channel: ChannelModel = ChannelModel(),
    settings: LinkSettings = LinkSettings(),
    f_shift: float = DEFAULT_F_SHIFT,
    params_rng: Optional[np.random.Generator] = None,
    event_rng: Optional[Callable[[int], np.random.Generator]] = None,
    erasure_rng: Optional[Callable[[int], np.random.Generator]] = None,
    channel_map: int = FULL_CHANNEL_MAP,
    terminate_at: Optional[dict] = None,
    message_seed: int = 0,
    hop_increment: Optional[int] = None,
) -> LinkRun:
    """Connect every tag, then run ``n_slots`` TDD slots of connection events.

    ``erasure_rng(slot)`` supplies one uniform per packet for erasure against
    ``channel.erasure_p``; ``event_rng(slot)`` supplies noise for that slot.
    ``terminate_at`` maps a tag id to the slot at which it is disconnected.
    """
    mode = PhyMode.parse(mode)
    if timing is None:
        timing = EventTiming(mode, mode.max_inner_payload)
    params_rng = params_rng or np.random.default_rng(0)
    trace = TraceLog()
    source = ExcitationSource(mode, n, f_shift, trace)
    tags, devices = {}, {}
    for tid in tag_ids:
        source.register(tid)
        params = ConnectionParams.random(params_rng, mode, channel_map=channel_map,
                                         conn_interval=timing.conn_interval)
        if hop_increment is not None:
            params = replace(params, hop_increment=hop_increment)
        conn = source.open(tid, params)
        _, conn_ind = source.advertising_packets(tid, params)
        devices[tid] = CommodityDevice.from_connect_ind(conn_ind, mode, sample_rate=settings.link_sample_rate)
        source.connect(conn)
        tags[tid] = Tag(tid, n, timing.inner_payload, seed=message_seed, front_end=settings.front_end)
    sched = Scheduler(list(tag_ids), timing.conn_interval)
    terminate_at = dict(terminate_at or {})
    events, delivered = [], []
    for _ in range(n_slots):
        for tid, slot_at in list(terminate_at.items()):
            if slot_at == sched.slot:
                terminate(source, tid, sched, sched.slot * timing.conn_interval)
                del terminate_at[tid]
        slot, tid = sched.next_slot()
        if tid is None:
            continue
        erasure = None
        if channel.erasure_p > 0:
            g = erasure_rng(slot) if erasure_rng else np.random.default_rng([message_seed, slot, 1])
            erasure = g.random(timing.packets_per_event)
        rng = event_rng(slot) if event_rng else np.random.default_rng([message_seed, slot])
        rec = run_connection_event(source.connections[tid], source, tags[tid], devices[tid], channel, timing,
                                   rng=rng, erasure=erasure, settings=settings, delivered=delivered)
        events.append(rec)
    return LinkRun(events, delivered, trace, tags)
