"""Complex-baseband PHY: GFSK, backscatter phase-XOR, delay discriminator, sync.

Waveforms are complex baseband relative to ``center_channel`` on the 2 MHz
BLE grid (RF channel ``k`` sits at 2402 + 2k MHz).  Symbol boundaries fall on
integer sample indices, so every rate used here must be an integer multiple
of the symbol rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps_signal

from . import gf2codec as gc
from .packet import PhyMode

DEFAULT_SAMPLE_RATE = 100e6
MIN_OVERSAMPLING = 8
GAUSSIAN_BT = 0.5
GAUSSIAN_SPAN = 3  # symbols
DEMOD_WINDOW = 0.8  # central fraction of each symbol used for the phase decision
CHANNEL_SPACING = 2e6
BASE_FREQ = 2402e6


def rf_channel_freq(rf_index: int) -> float:
    """Centre frequency of RF channel ``rf_index`` (may lie outside 0..39)."""
    return BASE_FREQ + CHANNEL_SPACING * rf_index


@dataclass
class IqWaveform:
    """Complex baseband samples around ``center_channel`` (RF index, None = plain baseband)."""

    sample_rate: float
    samples: np.ndarray
    center_channel: Optional[int] = None
    symbol_rate: Optional[float] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        if self.symbol_rate is not None and self.sample_rate < MIN_OVERSAMPLING * self.symbol_rate:
            raise ValueError(
                f"sample rate {self.sample_rate:g} is below {MIN_OVERSAMPLING}x the symbol rate"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def time(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate

    def with_samples(self, samples: np.ndarray, **changes) -> "IqWaveform":
        return replace(self, samples=samples, **changes)

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2)) if len(self.samples) else 0.0


def samples_per_symbol(mode: PhyMode, sample_rate: float) -> int:
    ratio = sample_rate / mode.symbol_rate
    sps = int(round(ratio))
    if abs(ratio - sps) > 1e-9:
        raise ValueError("sample rate must be an integer multiple of the symbol rate")
    if sps < MIN_OVERSAMPLING:
        raise ValueError(
            f"sample rate {sample_rate:g} is below {MIN_OVERSAMPLING}x the symbol rate {mode.symbol_rate:g}"
        )
    return sps


# -- GFSK ------------------------------------------------------------------------

def gaussian_taps(sps: int, bt: float = GAUSSIAN_BT, span: int = GAUSSIAN_SPAN) -> np.ndarray:
    """Gaussian frequency pulse sampled at ``sps`` per symbol, unit DC gain."""
    t = (np.arange(span * sps + 1) - span * sps / 2) / sps  # in symbols
    h = np.exp(-2 * (np.pi * bt * t) ** 2 / np.log(2))
    return h / h.sum()


def frequency_pulse_train(bits: gc.BitsLike, sps: int, bt: float = GAUSSIAN_BT) -> np.ndarray:
    """Gaussian-filtered NRZ (+1 for bit 1), one value per sample, edges replicated."""
    bits = gc.as_bits(bits)
    if len(bits) == 0:
        return np.zeros(0)
    nrz = np.repeat(2.0 * bits - 1.0, sps)
    taps = gaussian_taps(sps, bt)
    half = len(taps) // 2
    padded = np.concatenate([np.full(half, nrz[0]), nrz, np.full(half, nrz[-1])])
    return np.convolve(padded, taps, mode="valid")


def gfsk_phase(bits: gc.BitsLike, mode: PhyMode, sample_rate: float = DEFAULT_SAMPLE_RATE,
               bt: float = GAUSSIAN_BT) -> np.ndarray:
    """Unwrapped phase at sample instants ``0 .. n*sps`` (one more than the waveform)."""
    mode = PhyMode.parse(mode)
    sps = samples_per_symbol(mode, sample_rate)
    freq = mode.freq_deviation * frequency_pulse_train(bits, sps, bt)
    return np.concatenate([[0.0], np.cumsum(2 * np.pi * freq / sample_rate)])


def gfsk_modulate(
    bits: gc.BitsLike,
    mode: PhyMode | str,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    *,
    center_channel: Optional[int] = None,
    bt: float = GAUSSIAN_BT,
) -> IqWaveform:
    """Constant-envelope GFSK; bit 1 deviates up, each long-run symbol adds +-pi/2."""
    mode = PhyMode.parse(mode)
    phase = gfsk_phase(bits, mode, sample_rate, bt)[:-1]
    return IqWaveform(sample_rate, np.exp(1j * phase), center_channel, mode.symbol_rate)


def symbol_phase_accumulation(
    waveform: IqWaveform, mode: PhyMode, n_symbols: int, offset: int = 0, window: float = 1.0
) -> np.ndarray:
    """Wrapped phase change across the central ``window`` fraction of each symbol."""
    mode = PhyMode.parse(mode)
    sps = samples_per_symbol(mode, waveform.sample_rate)
    i0, i1 = _window_indices(sps, window)
    starts = offset + sps * np.arange(n_symbols)
    x = waveform.samples
    if n_symbols and starts[-1] + i1 >= len(x):
        raise ValueError("waveform too short for the requested symbols")
    return np.angle(x[starts + i1] * np.conj(x[starts + i0]))


def _window_indices(sps: int, window: float) -> tuple:
    if not 0 < window <= 1:
        raise ValueError("window must be in (0, 1]")
    margin = (1 - window) / 2
    i0 = int(round(margin * sps))
    i1 = int(round((1 - margin) * sps))
    if window == 1.0:
        i1 = sps - 1  # stay inside the symbol
    return i0, i1


# -- demodulation ------------------------------------------------------------------

@dataclass
class DemodResult:
    bits: np.ndarray
    phases: np.ndarray
    ties: int


def demodulate(
    waveform: IqWaveform,
    mode: PhyMode | str,
    *,
    offset: int = 0,
    n_symbols: Optional[int] = None,
    window: float = DEMOD_WINDOW,
    diagnostics: bool = False,
):
    """Phase-accumulation decision per symbol: positive -> 1, otherwise 0.

    ``offset`` is the sample index of the first symbol boundary.  Exact zero
    phase changes decide 0 and are counted in the diagnostics.
    """
    mode = PhyMode.parse(mode)
    sps = samples_per_symbol(mode, waveform.sample_rate)
    i0, i1 = _window_indices(sps, window)
    if n_symbols is None:
        n_symbols = max(0, (len(waveform) - offset - i1 - 1) // sps + 1)
    phases = symbol_phase_accumulation(waveform, mode, n_symbols, offset, window)
    bits = (phases > 0).astype(np.uint8)
    if diagnostics:
        return DemodResult(bits, phases, int(np.count_nonzero(phases == 0)))
    return bits


# -- backscatter ---------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolPhases:
    """Per-symbol phase accumulations: {+pi/2, -pi/2} for a source, {0, pi} for tag chips."""

    values: np.ndarray
    kind: str = "tag"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        allowed = (0.0, np.pi) if self.kind == "tag" else (np.pi / 2, -np.pi / 2)
        if self.kind not in ("tag", "source"):
            raise ValueError("kind must be 'tag' or 'source'")
        if vals.size and not np.all(np.isclose(vals[:, None], np.array(allowed)[None, :]).any(axis=1)):
            raise ValueError(f"{self.kind} phases must be in {allowed}")

    @classmethod
    def from_bits(cls, bits: gc.BitsLike, kind: str = "tag") -> "SymbolPhases":
        b = gc.as_bits(bits).astype(float)
        if kind == "tag":
            return cls(np.pi * b, "tag")
        return cls(np.pi * (b - 0.5), "source")

    def bits(self) -> np.ndarray:
        if self.kind == "tag":
            return np.isclose(self.values, np.pi).astype(np.uint8)
        return (self.values > 0).astype(np.uint8)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class BackscatterPlan:
    """Where the tag acts, in symbols counted from ``packet_offset`` (samples).

    ``xor`` is the chip region; ``reflect`` is the span during which the tag
    reflects at all (None: the whole waveform).
    """

    xor: tuple
    reflect: Optional[tuple] = None
    packet_offset: int = 0

    @property
    def n_chips(self) -> int:
        return self.xor[1] - self.xor[0]


def backscatter_apply(
    carrier: IqWaveform,
    chips: SymbolPhases | Sequence[int],
    f_shift: float,
    region: BackscatterPlan | tuple,
    mode: PhyMode | str = PhyMode.LE1M,
    *,
    loss_db: float = 0.0,
) -> IqWaveform:
    """Frequency-shift the carrier by ``f_shift`` and add chip phases in the XOR region.

    Chip ``k`` contributes its phase as a step at the midpoint of symbol ``k``;
    the steps accumulate, so a chip of pi changes the phase accumulated across
    that symbol by pi and leaves its neighbours untouched.  Outside the
    reflect span the output is zero.
    """
    mode = PhyMode.parse(mode)
    plan = region if isinstance(region, BackscatterPlan) else BackscatterPlan(tuple(region))
    if not isinstance(chips, SymbolPhases):
        chips = SymbolPhases.from_bits(chips, "tag")
    if chips.kind != "tag":
        raise ValueError("backscatter chips must be tag phases")
    if len(chips) != plan.n_chips:
        raise ValueError(f"{len(chips)} chips for an XOR region of {plan.n_chips} symbols")
    sps = samples_per_symbol(mode, carrier.sample_rate)
    n = len(carrier)
    theta_steps = np.zeros(n + 1)
    mids = plan.packet_offset + sps * (plan.xor[0] + np.arange(len(chips))) + sps // 2
    if len(mids) and mids[-1] >= n:
        raise ValueError("XOR region extends past the carrier")
    np.add.at(theta_steps, mids, chips.values)
    theta = np.cumsum(theta_steps[:-1])
    tone = np.exp(2j * np.pi * f_shift * carrier.time())
    out = carrier.samples * tone * np.exp(1j * theta) * 10 ** (-loss_db / 20)
    if plan.reflect is not None:
        a = plan.packet_offset + sps * plan.reflect[0]
        b = plan.packet_offset + sps * plan.reflect[1]
        gate = np.zeros(n)
        gate[max(a, 0):min(b, n)] = 1.0
        out = out * gate
    # The reference frequency is unchanged; the signal now sits f_shift above it.
    return carrier.with_samples(out)


def retune(waveform: IqWaveform, to_channel: int) -> IqWaveform:
    """Re-express the waveform as baseband around RF channel ``to_channel``."""
    if waveform.center_channel is None:
        raise ValueError("waveform has no centre channel to retune from")
    df = rf_channel_freq(waveform.center_channel) - rf_channel_freq(to_channel)
    rot = np.exp(2j * np.pi * df * waveform.time())
    return waveform.with_samples(waveform.samples * rot, center_channel=to_channel)


def add_frequency_offset(waveform: IqWaveform, ppm_offset: float, fc: Optional[float] = None) -> IqWaveform:
    """Apply a crystal error of ``ppm_offset`` at carrier ``fc`` (default: the centre channel, else 2.44 GHz)."""
    if abs(ppm_offset) > 100:
        raise ValueError("ppm offset must be within +-100")
    if fc is None:
        fc = rf_channel_freq(waveform.center_channel) if waveform.center_channel is not None else 2.44e9
    df = fc * ppm_offset * 1e-6
    if df == 0:
        return waveform.with_samples(waveform.samples.copy())
    return waveform.with_samples(waveform.samples * np.exp(2j * np.pi * df * waveform.time()))


# -- receiver front end ---------------------------------------------------------------

def channel_filter(waveform: IqWaveform, cutoff: float, transition_symbols: float = 4.0,
                   symbol_rate: float = 1e6) -> IqWaveform:
    """Linear-phase low-pass with its group delay removed (output aligned to input)."""
    fs = waveform.sample_rate
    ntaps = int(round(transition_symbols * fs / symbol_rate)) | 1
    taps = sps_signal.firwin(ntaps, cutoff, fs=fs)
    full = np.convolve(waveform.samples, taps)
    d = (ntaps - 1) // 2
    return waveform.with_samples(full[d:d + len(waveform)])


def receive_filter(waveform: IqWaveform, mode: PhyMode) -> IqWaveform:
    """Default receiver channel filter for ``mode``."""
    return channel_filter(waveform, 1.0 * mode.symbol_rate, 4.0, mode.symbol_rate)


def find_sync_word(waveform: IqWaveform, mode: PhyMode, sync_bits: gc.BitsLike,
                   search: Optional[tuple] = None) -> tuple:
    """Locate known leading bits by correlating against their GFSK reference.

    Returns ``(offset_samples, normalized_peak)``; the offset is the sample of
    the first symbol boundary of ``sync_bits``.
    """
    mode = PhyMode.parse(mode)
    ref = gfsk_modulate(sync_bits, mode, waveform.sample_rate).samples
    x = waveform.samples
    lo, hi = (0, len(x)) if search is None else (max(0, search[0]), min(len(x), search[1] + len(ref)))
    seg = x[lo:hi]
    if len(seg) < len(ref):
        return 0, 0.0
    # Correlate in short blocks so a phase ramp from frequency error hurts less.
    corr = np.abs(sps_signal.correlate(seg, ref, mode="valid", method="fft"))
    energy = np.sqrt(np.convolve(np.abs(seg) ** 2, np.ones(len(ref)), mode="valid") * len(ref))
    score = corr / np.maximum(energy, 1e-30)
    k = int(np.argmax(score))
    return lo + k, float(score[k])


# -- delay discriminator ------------------------------------------------------------

@dataclass(frozen=True)
class DiscriminatorConfig:
    """Delay-and-multiply front end followed by a low-pass filter and a comparator.

    ``hysteresis`` is a fraction of the nominal steady-state swing for a
    signal of ``reference_power``; ``sync_threshold`` is the normalized
    preamble correlation needed to declare detection.
    """

    delay: float = 46e-9
    insertion_loss_db: float = 3.3
    lpf_cutoff: float = 10e6
    lpf_order: int = 4
    comparator_threshold: float = 0.0
    hysteresis: float = 0.1
    reference_power: float = 1.0
    sync_threshold: float = 0.75
    fir_half_len: int = 16

    def validate(self, sample_rate: float) -> None:
        if self.delay <= 0:
            raise ValueError("delay must be positive")
        if not 0 < self.lpf_cutoff < sample_rate / 2:
            raise ValueError("LPF cutoff must lie below half the sample rate")
        if self.hysteresis < 0:
            raise ValueError("hysteresis must be non-negative")
        if not 0 < self.sync_threshold <= 1:
            raise ValueError("sync threshold must be in (0, 1]")

    def delay_samples(self, sample_rate: float) -> float:
        return self.delay * sample_rate

    def nominal_swing(self, mode: PhyMode) -> float:
        """Peak-to-peak discriminator level between long runs of 1s and 0s."""
        gain = 10 ** (-self.insertion_loss_db / 20) * self.reference_power
        return 2 * gain * math.sin(2 * math.pi * PhyMode.parse(mode).freq_deviation * self.delay)


def fractional_delay(x: np.ndarray, delay: float, half_len: int = 16) -> np.ndarray:
    """Delay by a possibly fractional number of samples (Hann-windowed sinc), zero history."""
    d_int = int(math.floor(delay))
    frac = delay - d_int
    if frac == 0:
        y = np.zeros_like(x)
        if d_int < len(x):
            y[d_int:] = x[:len(x) - d_int]
        return y
    k = np.arange(-half_len + 1, half_len + 1)
    taps = np.sinc(k - frac) * np.hanning(2 * half_len + 2)[1:-1]
    taps /= taps.sum()
    # taps[i] multiplies x[n - d_int - k[i]]
    full = np.convolve(x, taps)
    start = -k[0]  # index in ``full`` aligned with n - d_int
    y = np.zeros_like(x)
    src = full[start:start + len(x)]
    if d_int < len(x):
        y[d_int:] = src[:len(x) - d_int]
    return y


@dataclass
class RealSignal:
    sample_rate: float
    values: np.ndarray
    latency: float  # seconds from an input event to its centre in ``values``


def _lpf_sos(cfg: DiscriminatorConfig, sample_rate: float) -> np.ndarray:
    return sps_signal.butter(cfg.lpf_order, cfg.lpf_cutoff, fs=sample_rate, output="sos")


def lpf_group_delay(cfg: DiscriminatorConfig, sample_rate: float, freq: float = 2e5) -> float:
    """Group delay of the discriminator LPF at ``freq`` in seconds."""
    b, a = sps_signal.sos2tf(_lpf_sos(cfg, sample_rate))
    _, gd = sps_signal.group_delay((b, a), w=[freq], fs=sample_rate)
    return float(gd[0]) / sample_rate


def delay_discriminator(waveform: IqWaveform, cfg: DiscriminatorConfig = DiscriminatorConfig()) -> RealSignal:
    """Self-mix the input with a delayed, attenuated copy and low-pass filter.

    The mixer is modelled at its quadrature operating point, so the product
    is ``Im{x[k] conj(x[k-D])}``: positive while the frequency sits above the
    channel centre (bit 1), negative below.
    """
    fs = waveform.sample_rate
    cfg.validate(fs)
    d = cfg.delay_samples(fs)
    if d >= len(waveform):
        raise ValueError("delay is not shorter than the waveform")
    x = waveform.samples
    delayed = fractional_delay(x, d, cfg.fir_half_len) * 10 ** (-cfg.insertion_loss_db / 20)
    mixed = np.imag(x * np.conj(delayed))
    out = sps_signal.sosfilt(_lpf_sos(cfg, fs), mixed)
    latency = cfg.delay / 2 + lpf_group_delay(cfg, fs)
    return RealSignal(fs, out, latency)


def comparator(disc: RealSignal, mode: PhyMode, cfg: DiscriminatorConfig = DiscriminatorConfig()) -> np.ndarray:
    """Hysteresis comparator: +1 / -1 after the first crossing, 0 before it."""
    half = cfg.hysteresis * cfg.nominal_swing(mode) / 2
    v = disc.values
    events = np.zeros(len(v), dtype=np.int8)
    events[v > cfg.comparator_threshold + half] = 1
    events[v < cfg.comparator_threshold - half] = -1
    if half == 0:
        return events
    idx = np.where(events != 0, np.arange(len(v)), -1)
    idx = np.maximum.accumulate(idx)
    out = np.where(idx >= 0, events[np.maximum(idx, 0)], 0).astype(np.int8)
    return out


@dataclass
class SyncResult:
    detected: bool
    detect_time: float = float("nan")
    symbol_epoch: float = float("nan")
    score: float = 0.0


def preamble_bits(mode: PhyMode, aa_lsb: int = 0) -> np.ndarray:
    byte = 0xAA if aa_lsb == 0 else 0x55
    return gc.bytes_to_bits(bytes([byte]) * PhyMode.parse(mode).preamble_len_bytes)


def detect_sync(
    disc: RealSignal,
    mode: PhyMode | str,
    cfg: DiscriminatorConfig = DiscriminatorConfig(),
    *,
    aa_lsb: int = 0,
    levels: Optional[np.ndarray] = None,
) -> SyncResult:
    """Find the preamble in the comparator output.

    The comparator stream is correlated with the preamble's expected level
    pattern.  An alternating template also matches at even symbol shifts, so
    after the first lag that reaches ``sync_threshold`` the search looks one
    preamble length plus two symbols ahead and takes the earliest lag within
    ``1/n`` of the best score there (``n`` preamble symbols).  Early aliases
    match at most ``n - 2`` of ``n`` symbols and fall below that margin; later
    aliases tie at best and lose to the earlier true peak.

    ``symbol_epoch`` is the estimated preamble start, refined by a matched
    filter against the noiseless discriminator response; ``detect_time`` is
    the estimated end of the preamble.
    """
    mode = PhyMode.parse(mode)
    fs = disc.sample_rate
    sps = samples_per_symbol(mode, fs)
    pre = preamble_bits(mode, aa_lsb)
    template = np.repeat(2.0 * pre - 1.0, sps)
    L = len(template)
    if levels is None:
        levels = comparator(disc, mode, cfg)
    if len(levels) < L:
        return SyncResult(False)
    corr = sps_signal.correlate(levels.astype(float), template, mode="valid", method="fft") / L
    above = np.flatnonzero(corr >= cfg.sync_threshold)
    if above.size == 0:
        return SyncResult(False, score=float(corr.max(initial=0.0)))
    first = int(above[0])
    stop = min(len(corr), first + (len(pre) + 2) * sps + 1)
    win = corr[first:stop]
    best = win.max()
    pick = first + int(np.flatnonzero(win >= best - 1.0 / len(pre))[0])
    # climb to the local maximum from the chosen lag
    while pick + 1 < len(corr) and corr[pick + 1] > corr[pick]:
        pick += 1
    lat = int(round(disc.latency * fs))
    coarse_epoch = pick - lat
    epoch = _refine_epoch(disc, coarse_epoch, mode, cfg, pre)
    symbol_epoch = epoch / fs
    return SyncResult(True, symbol_epoch + len(pre) / mode.symbol_rate, symbol_epoch, float(corr[pick]))


_REFERENCE_CACHE: dict = {}


def _preamble_reference(mode: PhyMode, cfg: DiscriminatorConfig, fs: float, pre: np.ndarray) -> np.ndarray:
    """Noiseless discriminator response to the preamble starting at sample 0."""
    key = (mode, cfg, fs, pre.tobytes())
    ref = _REFERENCE_CACHE.get(key)
    if ref is None:
        sps = samples_per_symbol(mode, fs)
        wave = gfsk_modulate(pre, mode, fs)
        ref = delay_discriminator(wave, cfg).values[: len(pre) * sps].copy()
        ref.setflags(write=False)
        _REFERENCE_CACHE[key] = ref
    return ref


def _refine_epoch(disc: RealSignal, coarse: int, mode: PhyMode, cfg: DiscriminatorConfig,
                  pre: np.ndarray) -> float:
    """Sub-sample preamble start: matched filter against the noiseless response
    over +-half a symbol around ``coarse``, with parabolic peak interpolation."""
    fs = disc.sample_rate
    sps = samples_per_symbol(mode, fs)
    ref = _preamble_reference(mode, cfg, fs, pre)
    v = disc.values
    half = sps // 2
    lags = np.arange(coarse - half, coarse + half + 1)
    lags = lags[(lags >= 0) & (lags + len(ref) <= len(v))]
    if lags.size == 0:
        return float(coarse)
    seg = v[lags[0]: lags[-1] + len(ref)]
    score = sps_signal.correlate(seg, ref, mode="valid")
    k = int(np.argmax(score))
    frac = 0.0
    if 0 < k < len(score) - 1:
        a, b, c = score[k - 1], score[k], score[k + 1]
        den = a - 2 * b + c
        if den < 0:
            frac = 0.5 * (a - c) / den
    return float(lags[k] + frac)


def sample_levels(levels: np.ndarray, epoch: float, fs: float, latency: float, mode: PhyMode,
                  first_symbol: int, n_symbols: int) -> np.ndarray:
    """Comparator state at the centre of symbols ``first_symbol ..`` after ``epoch``."""
    sps = samples_per_symbol(mode, fs)
    centres = (epoch + latency) * fs + sps * (first_symbol + np.arange(n_symbols) + 0.5)
    idx = np.clip(np.round(centres).astype(int), 0, len(levels) - 1)
    return levels[idx]


def activation_pulses(disc: RealSignal, sync: SyncResult, mode: PhyMode | str,
                      cfg: DiscriminatorConfig = DiscriminatorConfig(),
                      levels: Optional[np.ndarray] = None) -> np.ndarray:
    """32 address transition slots read after a detected preamble.

    Symbol levels are read at the centres of the 32 address symbols and the
    first header symbol; slot ``k`` fires when symbols ``k`` and ``k+1`` differ.
    """
    mode = PhyMode.parse(mode)
    if levels is None:
        levels = comparator(disc, mode, cfg)
    n_pre = 8 * mode.preamble_len_bytes
    lv = sample_levels(levels, sync.symbol_epoch, disc.sample_rate, disc.latency, mode, n_pre, 33)
    sym = (lv > 0).astype(np.uint8)
    return (sym[:-1] ^ sym[1:]).astype(np.uint8)


# -- fixtures ------------------------------------------------------------------------

def write_fixture(path: str | Path, waveform: IqWaveform, mode: PhyMode | str) -> Path:
    """Write float32 little-endian interleaved I/Q plus a ``.json`` sidecar."""
    path = Path(path)
    inter = np.empty(2 * len(waveform), dtype="<f4")
    inter[0::2] = waveform.samples.real
    inter[1::2] = waveform.samples.imag
    path.write_bytes(inter.tobytes())
    meta = {"sample_rate": waveform.sample_rate, "mode": PhyMode.parse(mode).value,
            "channel": waveform.center_channel}
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return sidecar


def read_fixture(path: str | Path) -> tuple:
    """Inverse of :func:`write_fixture`; returns ``(waveform, mode)``."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size % 2:
        raise ValueError("fixture holds an odd number of floats")
    samples = raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64)
    mode = PhyMode.parse(meta["mode"])
    return IqWaveform(float(meta["sample_rate"]), samples, meta.get("channel")), mode
