"""Impairments between the PHY and the link layer, and the random-stream contract.

Randomness is counter-based: every (seed, scenario, trial, event) tuple owns a
disjoint Philox stream, so results do not depend on the order in which trials
or events are simulated.

SNR values are referred to a noise bandwidth.  ``"symbol"`` (the default)
counts noise in a bandwidth equal to the symbol rate, which suits the
receiver; ``"sample"`` counts it over the whole simulated band, which suits
the wideband tag front end.  Distance is not modelled; sweeps over distance
become sweeps over SNR or erasure probability.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import phy
from .packet import PhyMode
from .phy import IqWaveform

NUM_CHANNELS = 40
MASK64 = (1 << 64) - 1


# -- random streams --------------------------------------------------------------

def scenario_tag(name: str) -> int:
    """Stable 64-bit tag for a scenario name."""
    return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")


def _philox(seed: int, scenario: str, trial: int, slot: int) -> np.random.Generator:
    key = (seed & MASK64) | (scenario_tag(scenario) << 64)
    counter = [0, slot & MASK64, trial & MASK64, 0]
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def trial_rng(seed: int, scenario: str, trial: int) -> np.random.Generator:
    """Stream for per-trial draws (event ``e`` uses the ``e``-th uniform)."""
    return _philox(seed, scenario, trial, 0)


def event_rng(seed: int, scenario: str, trial: int, event: int) -> np.random.Generator:
    """Independent stream for the bulk draws (noise samples) of one event."""
    if event < 0:
        raise ValueError("event index must be non-negative")
    return _philox(seed, scenario, trial, event + 1)


def erasure_rng(seed: int, scenario: str, trial: int, event: int) -> np.random.Generator:
    """Stream for the per-packet erasure draws of one event, apart from its noise."""
    if event < 0:
        raise ValueError("event index must be non-negative")
    return _philox(seed, scenario, trial, (1 << 63) | event)


def event_uniforms(seed: int, scenario: str, trial: int, n_events: int) -> np.ndarray:
    """One uniform per event: entry ``e`` is the same whatever ``n_events`` is."""
    return trial_rng(seed, scenario, trial).random(n_events)


# -- impairments ---------------------------------------------------------------

def add_awgn(
    waveform: IqWaveform,
    snr_db: Optional[float],
    rng: Optional[np.random.Generator] = None,
    *,
    bypass: bool = False,
    signal_power: Optional[float] = None,
) -> IqWaveform:
    """Add complex white Gaussian noise at ``signal_power / 10^(snr/10)`` per sample.

    ``signal_power`` defaults to the mean power of the waveform.  ``None`` or
    infinite SNR, or ``bypass``, returns an unchanged copy.
    """
    if bypass or snr_db is None or math.isinf(snr_db):
        return waveform.with_samples(waveform.samples.copy())
    if rng is None:
        raise ValueError("an RNG is required unless the channel is bypassed")
    p_sig = waveform.power() if signal_power is None else signal_power
    p_noise = p_sig / 10 ** (snr_db / 10)
    n = len(waveform)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(p_noise / 2)
    return waveform.with_samples(waveform.samples + noise)


def erase_packet(p: float, rng: np.random.Generator | float) -> bool:
    """True with probability ``p``.  ``rng`` may be a pre-drawn uniform in [0, 1)."""
    if not 0 <= p <= 1:
        raise ValueError("erasure probability must be in [0, 1]")
    u = rng if isinstance(rng, float) else rng.random()
    return u < p


def gfsk_ber(snr_db: Optional[float]) -> float:
    """Approximate bit error rate of the phase-accumulation receiver.

    Noncoherent binary FSK form ``0.5 exp(-snr/2)`` with SNR in the symbol-rate
    bandwidth; used by the fast bit-level fidelity only.
    """
    if snr_db is None or math.isinf(snr_db):
        return 0.0
    return 0.5 * math.exp(-(10 ** (snr_db / 10)) / 2)


@lru_cache(maxsize=None)
def _ber_table(mode: PhyMode) -> tuple:
    data = json.loads(resources.files("pble").joinpath("data/ber_curve.json").read_text())
    c = data["curves"][mode.value]
    return np.asarray(c["snr_db"], float), np.log10(np.asarray(c["ber"], float))


def receiver_ber(mode: PhyMode | str, snr_db: Optional[float]) -> float:
    """Bit error rate of the waveform receiver, from its measured curve.

    Interpolates log10(BER) linearly in SNR (symbol-rate bandwidth); beyond
    the measured range the end slopes are extended.  Used by the bit-level
    fidelity so that it tracks the waveform path.
    """
    if snr_db is None or math.isinf(snr_db):
        return 0.0
    snr, logb = _ber_table(PhyMode.parse(mode))
    if snr_db <= snr[0]:
        slope = (logb[1] - logb[0]) / (snr[1] - snr[0])
        return float(min(0.5, 10 ** (logb[0] + slope * (snr_db - snr[0]))))
    if snr_db >= snr[-1]:
        slope = (logb[-1] - logb[-2]) / (snr[-1] - snr[-2])
        return float(10 ** (logb[-1] + slope * (snr_db - snr[-1])))
    return float(10 ** np.interp(snr_db, snr, logb))


def measure_receiver_ber(mode: PhyMode | str, snr_db: float, n_bits: int, rng: np.random.Generator,
                         sample_rate: float = 32e6, block: int = 50_000) -> tuple:
    """Count demodulation errors on random GFSK at ``snr_db`` (symbol-rate bandwidth).

    Returns ``(errors, bits)``; the two edge symbols of each block are skipped.
    """
    mode = PhyMode.parse(mode)
    ps = snr_db - 10 * math.log10(sample_rate / mode.symbol_rate)
    errors = counted = 0
    while counted < n_bits:
        bits = rng.integers(0, 2, min(block, n_bits - counted + 4)).astype(np.uint8)
        w = phy.gfsk_modulate(bits, mode, sample_rate)
        rx = phy.receive_filter(add_awgn(w, ps, rng, signal_power=1.0), mode)
        got = phy.demodulate(rx, mode)
        errors += int(np.sum(got[2:-2] != bits[2:-2]))
        counted += len(bits) - 4
    return errors, counted


def flip_bits(bits: np.ndarray, ber: float, rng: np.random.Generator) -> np.ndarray:
    if ber <= 0:
        return bits.copy()
    return bits ^ (rng.random(len(bits)) < ber).astype(np.uint8)


# -- channel model ----------------------------------------------------------------

SnrSpec = Union[None, float, Sequence[float]]


@dataclass(frozen=True)
class ChannelModel:
    """Per-link impairments.

    ``snr_db`` is a single value, a 40-entry sequence indexed by BLE channel
    index (data 0..36, advertising 37..39), or None for a noiseless link.
    """

    snr_db: SnrSpec = None
    erasure_p: float = 0.0
    amplitude: float = 1.0
    seed: int = 0
    noise_bandwidth: Union[str, float] = "symbol"
    tag_snr_db: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.erasure_p <= 1:
            raise ValueError("erasure_p must be in [0, 1]")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if isinstance(self.snr_db, (list, tuple, np.ndarray)):
            vals = tuple(float(v) for v in self.snr_db)
            if len(vals) != NUM_CHANNELS:
                raise ValueError(f"per-channel SNR needs {NUM_CHANNELS} entries, got {len(vals)}")
            object.__setattr__(self, "snr_db", vals)
        elif self.snr_db is not None:
            object.__setattr__(self, "snr_db", float(self.snr_db))
        if isinstance(self.noise_bandwidth, str) and self.noise_bandwidth not in ("symbol", "sample"):
            raise ValueError("noise_bandwidth must be 'symbol', 'sample' or a number of Hz")

    @property
    def per_channel(self) -> bool:
        return isinstance(self.snr_db, tuple)

    def snr_for(self, channel_index: int) -> Optional[float]:
        if self.snr_db is None:
            return None
        if self.per_channel:
            if not 0 <= channel_index < NUM_CHANNELS:
                raise ValueError("channel index out of range")
            return self.snr_db[channel_index]
        return self.snr_db

    def per_sample_snr(self, snr_db: Optional[float], sample_rate: float, symbol_rate: float) -> Optional[float]:
        """Convert an SNR in the reference bandwidth to an SNR per complex sample."""
        if snr_db is None or math.isinf(snr_db):
            return None
        bw = self.noise_bandwidth
        if bw == "sample":
            return snr_db
        ref = symbol_rate if bw == "symbol" else float(bw)
        return snr_db - 10 * math.log10(sample_rate / ref)

    def to_dict(self) -> dict:
        return {
            "snr_db": list(self.snr_db) if self.per_channel else self.snr_db,
            "erasure_p": self.erasure_p,
            "amplitude": self.amplitude,
            "seed": self.seed,
            "noise_bandwidth": self.noise_bandwidth,
            "tag_snr_db": self.tag_snr_db,
        }


# -- profiles ----------------------------------------------------------------------

def _rf_index(channel_index: int) -> int:
    if channel_index <= 10:
        return channel_index + 1
    if channel_index <= 36:
        return channel_index + 2
    return {37: 0, 38: 12, 39: 39}[channel_index]


def wifi_profile(base_db: float = 25.0, dip_db: float = 10.0) -> tuple:
    """Channels strictly inside the 20 MHz masks of Wi-Fi channels 1, 6 and 11 lose ``dip_db``."""
    wifi = (2412e6, 2437e6, 2462e6)
    out = []
    for ch in range(NUM_CHANNELS):
        f = 2402e6 + 2e6 * _rf_index(ch)
        out.append(base_db - dip_db if any(abs(f - w) < 10e6 for w in wifi) else base_db)
    return tuple(out)


PROFILES = {
    "flat": lambda: (20.0,) * NUM_CHANNELS,
    "wifi": wifi_profile,
}


def load_profile(source: Union[str, Path, dict, list, tuple, float, int]) -> tuple:
    """Resolve a profile to 40 SNR values.

    Accepts a number (flat), a 40-element list, ``{"flat": snr}``, a preset
    name, or a path to a JSON file holding one of those forms.
    """
    if isinstance(source, (int, float)):
        return (float(source),) * NUM_CHANNELS
    if isinstance(source, dict):
        if set(source) != {"flat"}:
            raise ValueError('profile object must be {"flat": snr_db}')
        return (float(source["flat"]),) * NUM_CHANNELS
    if isinstance(source, (list, tuple, np.ndarray)):
        vals = tuple(float(v) for v in source)
        if len(vals) != NUM_CHANNELS:
            raise ValueError(f"profile needs {NUM_CHANNELS} entries, got {len(vals)}")
        return vals
    if isinstance(source, (str, Path)):
        if str(source) in PROFILES:
            return PROFILES[str(source)]()
        path = Path(source)
        if not path.exists():
            raise ValueError(f"unknown profile {source!r}")
        return load_profile(json.loads(path.read_text()))
    raise ValueError(f"unsupported profile {source!r}")


def per_channel_snr(profile, **kwargs) -> ChannelModel:
    """Channel model whose SNR varies by channel index."""
    return ChannelModel(snr_db=load_profile(profile), **kwargs)
