"""Scenario configuration: JSON in, validated dataclasses out.

Every section rejects unknown keys.  Fields left as None are resolved to
scenario-specific defaults by :meth:`ScenarioConfig.resolved`, and the
resolved form is what reports echo.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from .. import linklayer as ll
from ..channel import NUM_CHANNELS, ChannelModel, load_profile
from ..packet import VALID_N, PhyMode, address_capacity
from ..phy import MIN_OVERSAMPLING, DiscriminatorConfig

SCENARIOS = (
    "codec-selftest",
    "phase-xor",
    "sync-jitter",
    "wakeup-rate",
    "activation-rate",
    "goodput-vs-snr",
    "goodput-vs-loss",
    "fhss-per-channel",
    "fhss-hopping",
    "establishment",
    "maintenance",
    "multi-tag",
)

#: Scenarios that exercise the tag's front end rather than the link.
FRONTEND_SCENARIOS = ("sync-jitter", "wakeup-rate", "activation-rate")
LINK_SCENARIOS = ("goodput-vs-snr", "goodput-vs-loss", "fhss-per-channel", "multi-tag")

DEFAULT_TRIALS = {
    "codec-selftest": 2000,
    "phase-xor": 10_000,
    "sync-jitter": 2000,
    "wakeup-rate": 2000,
    "activation-rate": 2000,
    "goodput-vs-snr": 200,
    "goodput-vs-loss": 200,
    "fhss-per-channel": 370,
    "fhss-hopping": 100_000,
    "establishment": 100_000,
    "maintenance": 10_000,
    "multi-tag": 200,
}

U64_MAX = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field

    def to_json(self) -> str:
        return json.dumps({"error": "config", "message": str(self), "field": self.field}, sort_keys=True)


def calibration() -> dict:
    return json.loads(resources.files("pble").joinpath("data/calibration.json").read_text())


def _num(value: Any, name: str, *, integer: bool = False, allow_none: bool = False) -> Any:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number", name)
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{name} must be an integer", name)
        return int(value)
    if math.isnan(value):
        raise ConfigError(f"{name} must not be NaN", name)
    return float(value)


def _snr(value: Any, name: str) -> Any:
    """SNR: None or "inf" for noiseless, a number, or a 40-entry list."""
    if value is None:
        return None
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity", "+inf"):
            return None
        raise ConfigError(f"{name} must be a number, a list or \"inf\"", name)
    if isinstance(value, (list, tuple)):
        if len(value) != NUM_CHANNELS:
            raise ConfigError(f"{name} needs {NUM_CHANNELS} entries, got {len(value)}", name)
        return [_num(v, name) for v in value]
    v = _num(value, name)
    return None if math.isinf(v) and v > 0 else v


@dataclass
class ChannelConfig:
    snr_db: Optional[Union[float, list]] = None
    profile: Optional[Union[str, list, dict, float]] = None
    erasure_p: float = 0.0
    amplitude: float = 1.0
    noise_bandwidth: Optional[Union[str, float]] = None
    tag_snr_db: Optional[float] = None

    def validate(self) -> None:
        self.snr_db = _snr(self.snr_db, "channel.snr_db")
        t = _snr(self.tag_snr_db, "channel.tag_snr_db")
        if isinstance(t, list):
            raise ConfigError("channel.tag_snr_db must be a single value", "channel.tag_snr_db")
        self.tag_snr_db = t
        self.erasure_p = _num(self.erasure_p, "channel.erasure_p")
        if not 0 <= self.erasure_p <= 1:
            raise ConfigError("channel.erasure_p must be in [0, 1]", "channel.erasure_p")
        self.amplitude = _num(self.amplitude, "channel.amplitude")
        if self.amplitude <= 0:
            raise ConfigError("channel.amplitude must be positive", "channel.amplitude")
        if self.profile is not None:
            if self.snr_db is not None:
                raise ConfigError("give either channel.snr_db or channel.profile, not both", "channel.profile")
            try:
                load_profile(self.profile)
            except ValueError as exc:
                raise ConfigError(str(exc), "channel.profile") from None
        bw = self.noise_bandwidth
        if bw is not None and bw not in ("symbol", "sample"):
            if _num(bw, "channel.noise_bandwidth") <= 0:
                raise ConfigError("channel.noise_bandwidth must be positive", "channel.noise_bandwidth")

    def snr_spec(self):
        if self.profile is not None:
            return list(load_profile(self.profile))
        return self.snr_db


@dataclass
class LinkConfig:
    payload_bytes: Optional[int] = None
    conn_interval: float = ll.DEFAULT_INTERVAL
    ifs: float = ll.DEFAULT_IFS
    guard: Optional[float] = None
    packet_cap: Optional[int] = None
    calibrated: bool = False
    f_shift: float = ll.DEFAULT_F_SHIFT
    address_n: int = 8
    tags: Optional[int] = None
    duration: float = 10.0
    loss_p: float = 0.0
    fidelity: str = "bits"
    sample_rate: float = 32e6
    channel_map: int = ll.FULL_CHANNEL_MAP
    hop_increment: Optional[int] = None

    def validate(self, mode: PhyMode) -> None:
        self.conn_interval = _num(self.conn_interval, "link.conn_interval")
        self.ifs = _num(self.ifs, "link.ifs")
        self.guard = _num(self.guard, "link.guard", allow_none=True)
        self.packet_cap = _num(self.packet_cap, "link.packet_cap", integer=True, allow_none=True)
        self.payload_bytes = _num(self.payload_bytes, "link.payload_bytes", integer=True, allow_none=True)
        self.f_shift = _num(self.f_shift, "link.f_shift")
        self.address_n = _num(self.address_n, "link.address_n", integer=True)
        self.tags = _num(self.tags, "link.tags", integer=True, allow_none=True)
        self.duration = _num(self.duration, "link.duration")
        self.loss_p = _num(self.loss_p, "link.loss_p")
        self.sample_rate = _num(self.sample_rate, "link.sample_rate")
        self.channel_map = _num(self.channel_map, "link.channel_map", integer=True)
        self.hop_increment = _num(self.hop_increment, "link.hop_increment", integer=True, allow_none=True)
        if not isinstance(self.calibrated, bool):
            raise ConfigError("link.calibrated must be true or false", "link.calibrated")
        if self.conn_interval <= 0:
            raise ConfigError("link.conn_interval must be positive", "link.conn_interval")
        if self.ifs < 0:
            raise ConfigError("link.ifs must be non-negative", "link.ifs")
        if self.guard is not None and not 0 <= self.guard < self.conn_interval:
            raise ConfigError("link.guard must be within the connection interval", "link.guard")
        if self.packet_cap is not None and self.packet_cap < 1:
            raise ConfigError("link.packet_cap must be at least 1", "link.packet_cap")
        if self.calibrated:
            cal = calibration()
            cap = cal["modes"][mode.value]["packet_cap"]
            if self.packet_cap not in (None, cap) or self.guard not in (None, cal["guard"]):
                raise ConfigError("link.calibrated fixes guard and packet_cap; do not override them",
                                  "link.calibrated")
        if self.payload_bytes is not None and not 1 <= self.payload_bytes <= mode.max_inner_payload:
            raise ConfigError(f"link.payload_bytes must be in 1..{mode.max_inner_payload} for {mode.value}",
                              "link.payload_bytes")
        steps = self.f_shift / ll.CHANNEL_SPACING
        if self.f_shift <= 0 or steps != int(steps):
            raise ConfigError("link.f_shift must be a positive multiple of 2 MHz", "link.f_shift")
        try:
            for ch in range(ll.NUM_DATA_CHANNELS):
                ll.carrier_channel(ll.data_to_rf(ch), self.f_shift)
        except ValueError as exc:
            raise ConfigError(str(exc), "link.f_shift") from None
        if self.address_n not in VALID_N:
            raise ConfigError(f"link.address_n must be one of {list(VALID_N)}", "link.address_n")
        if self.tags is not None and not 1 <= self.tags <= address_capacity(self.address_n):
            raise ConfigError(f"link.tags must be in 1..{address_capacity(self.address_n)}", "link.tags")
        if self.duration < self.conn_interval:
            raise ConfigError("link.duration must cover at least one interval", "link.duration")
        if not 0 <= self.loss_p <= 1:
            raise ConfigError("link.loss_p must be in [0, 1]", "link.loss_p")
        if self.fidelity not in ("bits", "waveform"):
            raise ConfigError("link.fidelity must be \"bits\" or \"waveform\"", "link.fidelity")
        if self.sample_rate < MIN_OVERSAMPLING * mode.symbol_rate or (self.sample_rate / mode.symbol_rate) % 1:
            raise ConfigError("link.sample_rate must be an integer multiple (>= 8) of the symbol rate",
                              "link.sample_rate")
        try:
            ll._check_map(self.channel_map)
        except ValueError as exc:
            raise ConfigError(str(exc), "link.channel_map") from None
        if self.hop_increment is not None and not 5 <= self.hop_increment <= 16:
            raise ConfigError("link.hop_increment must be within 5..16", "link.hop_increment")


@dataclass
class PhyConfig:
    sample_rate: float = 100e6
    delay: float = 46e-9
    insertion_loss_db: float = 3.3
    lpf_cutoff: float = 10e6
    lpf_order: int = 4
    hysteresis: float = 0.1
    sync_threshold: float = 0.75

    def validate(self, mode: PhyMode) -> None:
        for f in fields(self):
            integer = f.name == "lpf_order"
            setattr(self, f.name, _num(getattr(self, f.name), f"phy.{f.name}", integer=integer))
        if self.sample_rate < MIN_OVERSAMPLING * mode.symbol_rate or (self.sample_rate / mode.symbol_rate) % 1:
            raise ConfigError("phy.sample_rate must be an integer multiple (>= 8) of the symbol rate",
                              "phy.sample_rate")
        if self.lpf_order < 1:
            raise ConfigError("phy.lpf_order must be at least 1", "phy.lpf_order")
        try:
            self.discriminator().validate(self.sample_rate)
        except ValueError as exc:
            raise ConfigError(str(exc), "phy") from None

    def discriminator(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(
            delay=self.delay,
            insertion_loss_db=self.insertion_loss_db,
            lpf_cutoff=self.lpf_cutoff,
            lpf_order=self.lpf_order,
            hysteresis=self.hysteresis,
            sync_threshold=self.sync_threshold,
        )


@dataclass
class OutputConfig:
    path: Optional[str] = None
    format: str = "json"

    def validate(self) -> None:
        if self.format not in ("json", "csv"):
            raise ConfigError("output.format must be \"json\" or \"csv\"", "output.format")


_SECTIONS = {"channel": ChannelConfig, "link": LinkConfig, "phy": PhyConfig, "output": OutputConfig}


@dataclass
class ScenarioConfig:
    scenario: str
    phy_mode: str = "LE1M"
    trials: Optional[int] = None
    seed: int = 0
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    phy: PhyConfig = field(default_factory=PhyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def mode(self) -> PhyMode:
        return PhyMode.parse(self.phy_mode)

    def validate(self) -> "ScenarioConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}", "scenario")
        try:
            mode = PhyMode.parse(self.phy_mode)
        except ValueError as exc:
            raise ConfigError(str(exc), "phy_mode") from None
        self.phy_mode = mode.value
        self.trials = _num(self.trials, "trials", integer=True, allow_none=True)
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be at least 1", "trials")
        self.seed = _num(self.seed, "seed", integer=True)
        if not 0 <= self.seed <= U64_MAX:
            raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
        self.channel.validate()
        self.link.validate(mode)
        self.phy.validate(mode)
        self.output.validate()
        if self.scenario in FRONTEND_SCENARIOS and isinstance(self.channel.snr_spec(), list):
            raise ConfigError("tag front-end scenarios take a single SNR", "channel.snr_db")
        if self.scenario == "goodput-vs-loss" and self.channel.erasure_p:
            raise ConfigError("goodput-vs-loss sweeps link.loss_p; leave channel.erasure_p at 0",
                              "channel.erasure_p")
        return self

    def resolved(self) -> "ScenarioConfig":
        """Copy with scenario defaults filled in."""
        cfg = from_dict(self.to_dict(include_output=True))
        mode = cfg.mode
        cal = calibration()
        if cfg.trials is None:
            cfg.trials = DEFAULT_TRIALS[cfg.scenario]
        if cfg.link.payload_bytes is None:
            cfg.link.payload_bytes = cal["modes"][mode.value]["payload_bytes"] if cfg.link.calibrated \
                else mode.max_inner_payload
        if cfg.link.calibrated:
            cfg.link.guard = cal["guard"]
            cfg.link.packet_cap = cal["modes"][mode.value]["packet_cap"]
        if cfg.link.guard is None:
            cfg.link.guard = ll.DEFAULT_GUARD
        if cfg.link.tags is None:
            cfg.link.tags = 4 if cfg.scenario == "multi-tag" else 1
        if cfg.channel.noise_bandwidth is None:
            cfg.channel.noise_bandwidth = "sample" if cfg.scenario in FRONTEND_SCENARIOS else "symbol"
        if cfg.scenario == "fhss-per-channel" and cfg.channel.snr_db is None and cfg.channel.profile is None:
            cfg.channel.profile = "wifi"
        return cfg.validate()

    def channel_model(self) -> ChannelModel:
        c = self.channel
        return ChannelModel(snr_db=c.snr_spec(), erasure_p=c.erasure_p, amplitude=c.amplitude, seed=self.seed,
                            noise_bandwidth=c.noise_bandwidth or "symbol", tag_snr_db=c.tag_snr_db)

    def timing(self) -> ll.EventTiming:
        lk = self.link
        return ll.EventTiming(self.mode, lk.payload_bytes, lk.conn_interval, lk.ifs, None,
                              lk.guard if lk.guard is not None else ll.DEFAULT_GUARD, lk.packet_cap)

    def to_dict(self, include_output: bool = False) -> dict:
        d = {
            "scenario": self.scenario,
            "phy_mode": self.phy_mode,
            "trials": self.trials,
            "seed": self.seed,
            "channel": asdict(self.channel),
            "link": asdict(self.link),
            "phy": asdict(self.phy),
        }
        if include_output:
            d["output"] = asdict(self.output)
        return d


def from_dict(data: dict, **overrides) -> ScenarioConfig:
    """Build and validate a config; a saved report (with ``config``) is accepted too."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "schema" in data and "config" in data:
        data = data["config"]
    data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    top = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", unknown[0])
    if "scenario" not in data:
        raise ConfigError("missing key 'scenario'", "scenario")
    kw = {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be an object", key)
            names = {f.name for f in fields(cls)}
            bad = sorted(set(value) - names)
            if bad:
                raise ConfigError(f"unknown key {key}.{bad[0]!r}", f"{key}.{bad[0]}")
            kw[key] = cls(**value)
        else:
            kw[key] = value
    return ScenarioConfig(**kw).validate()


def load_config(path: Union[str, Path], **overrides) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", "config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg} (line {exc.lineno})", "config") from None
    return from_dict(data, **overrides)


#: Sweep axis aliases.
AXIS_ALIASES = {
    "snr": "channel.snr_db",
    "tag_snr": "channel.tag_snr_db",
    "erasure": "channel.erasure_p",
    "loss": "link.loss_p",
}

_SWEEPABLE = {
    "channel.snr_db", "channel.tag_snr_db", "channel.erasure_p", "channel.amplitude",
    "link.loss_p", "link.conn_interval", "link.payload_bytes", "link.packet_cap", "link.guard",
    "link.tags", "link.duration", "link.ifs", "phy.sync_threshold", "phy.hysteresis", "phy.delay",
    "phy.insertion_loss_db",
}


def resolve_axis(axis: str) -> str:
    path = AXIS_ALIASES.get(axis, axis)
    if path not in _SWEEPABLE:
        raise ConfigError(f"unknown axis {axis!r}", "axis")
    return path


def with_value(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """Copy of ``cfg`` with one numeric parameter replaced, re-validated."""
    section, name = resolve_axis(axis).split(".")
    d = cfg.to_dict(include_output=True)
    if name in ("payload_bytes", "packet_cap", "tags"):
        if float(value) != int(value):
            raise ConfigError(f"{section}.{name} takes integer values", "axis")
        value = int(value)
    d[section][name] = value
    if section == "channel" and name == "snr_db":
        d["channel"]["profile"] = None
    return from_dict(d)
