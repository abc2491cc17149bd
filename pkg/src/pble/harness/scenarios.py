"""The twelve named experiments.

Each scenario maps a resolved :class:`ScenarioConfig` to a
:class:`MetricsReport`.  Random draws come from counter-based streams keyed by
(seed, scenario, trial, event), so a sweep over SNR or loss reuses the same
draws at every point.

In the tag front-end scenarios ``channel.snr_db`` is the SNR at the tag,
referred to the sampled bandwidth by default.  In the link scenarios it is the
SNR at the commodity receiver in the symbol-rate bandwidth.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace
from typing import Callable

import numpy as np
from scipy import stats

from .. import gf2codec as gc
from .. import linklayer as ll
from .. import phy
from ..channel import add_awgn, erasure_rng, event_rng, event_uniforms, trial_rng
from ..packet import (
    AA_LEN,
    CRC_LEN,
    HEADER_LEN,
    MAX_PAYLOAD,
    InnerSpec,
    PhyMode,
    address_capacity,
    build_carrier,
    decode_activation,
    encode_tag_address,
)
from .config import ScenarioConfig, calibration, resolve_axis, with_value
from .metrics import (
    MetricsReport,
    check,
    jitter_stats,
    no_run_probability,
    rounded,
    within_sigma,
)

GOODPUT_TOLERANCE = 0.02
CALIBRATION_TOLERANCE = 0.10


def _report(cfg: ScenarioConfig, **kw) -> MetricsReport:
    return MetricsReport(cfg.scenario, cfg.phy_mode, cfg.seed, cfg.trials, cfg.to_dict(), **kw)


# -- codec -----------------------------------------------------------------------------

def codec_selftest(cfg: ScenarioConfig) -> MetricsReport:
    """Distributed encoding against the monolithic encoder, CRC linearity and
    polynomial identities, over random cases."""
    counts = {k: [0, 0] for k in ("distributed", "crc_linearity", "crc_table", "crc_polynomial", "whitening")}

    def tally(name, ok):
        counts[name][0] += 1
        counts[name][1] += 0 if ok else 1

    for t in range(cfg.trials):
        rng = trial_rng(cfg.seed, cfg.scenario, t)
        n_bytes = int(rng.integers(0, gc.MAX_TAG_MESSAGE_BYTES + 1))
        msg = rng.bytes(n_bytes)
        init = int(rng.integers(0, 1 << 24))
        ch = int(rng.integers(0, gc.NUM_CHANNELS))
        bits = gc.bytes_to_bits(msg)
        premod = gc.source_premod(init, ch, len(bits))
        tally("distributed", np.array_equal(gc.combine_on_air(gc.tag_baseband(msg), premod),
                                            gc.encode_monolithic(bits, init, ch)))
        tally("crc_linearity", gc.crc24(bits, init) == gc.crc24(bits, 0) ^ gc.crc24_of_zeros(len(bits), init))
        tally("crc_table", gc.crc24_bytes(msg, init) == gc.crc24(bits, init))
        short = bits[: int(rng.integers(0, 65))]
        poly = (gc.Gf2Poly(init) * gc.Gf2Poly.monomial(len(short))
                + gc.Gf2Poly.from_bits_msb(short) * gc.Gf2Poly.monomial(24)) % gc.CRC_GENERATOR
        tally("crc_polynomial", poly.value == gc.crc24(short, init))
        tally("whitening", np.array_equal(gc.whiten(gc.whiten(bits, ch), ch), bits))
    checks = [check(f"{k}-zero-mismatch", m == 0, m, 0) for k, (n, m) in counts.items()]
    extra = {k: {"cases": n, "mismatches": m} for k, (n, m) in counts.items()}
    return _report(cfg, checks=checks, extra=extra)


# -- phase XOR -------------------------------------------------------------------------

_XOR_GUARD = np.array([0, 1], np.uint8)


def _xor_link(src: np.ndarray, chips: np.ndarray, mode: PhyMode, fs: float, shift: float,
              snr_ps, rng) -> np.ndarray:
    """Source GFSK, tag chips on every symbol, shifted back to baseband and demodulated.

    Two guard symbols on each side keep the Gaussian edges out of the result.
    """
    g = len(_XOR_GUARD)
    bits = np.concatenate([_XOR_GUARD, src, _XOR_GUARD])
    w = phy.gfsk_modulate(bits, mode, fs, center_channel=10)
    out = phy.backscatter_apply(w, chips, shift, (g, g + len(src)), mode)
    rx = phy.retune(out, 10 + int(round(shift / ll.CHANNEL_SPACING)))
    if snr_ps is not None:
        rx = add_awgn(rx, snr_ps, rng, signal_power=1.0)
    return phy.demodulate(phy.receive_filter(rx, mode), mode)[g: g + len(src)]


def phase_xor(cfg: ScenarioConfig) -> MetricsReport:
    """Truth table of source bit against tag chip, then a random stream."""
    mode, fs, shift = cfg.mode, cfg.phy.sample_rate, cfg.link.f_shift
    table = []
    for s in (0, 1):
        for c in (0, 1):
            got = _xor_link(np.full(5, s, np.uint8), np.full(5, c, np.uint8), mode, fs, shift, None, None)[2]
            table.append({"source": s, "chip": c, "decoded": int(got), "xor": s ^ c})
    rng = trial_rng(cfg.seed, cfg.scenario, 0)
    src = rng.integers(0, 2, cfg.trials).astype(np.uint8)
    chips = rng.integers(0, 2, cfg.trials).astype(np.uint8)
    model = cfg.channel_model()
    snr = model.per_sample_snr(model.snr_for(0), fs, mode.symbol_rate)
    got = _xor_link(src, chips, mode, fs, shift, snr, event_rng(cfg.seed, cfg.scenario, 0, 0))
    errors = int(np.count_nonzero(got != (src ^ chips)))
    right = sum(r["decoded"] == r["xor"] for r in table)
    checks = [check("truth-table", right == 4, right, 4)]
    if snr is None:
        checks.append(check("noiseless-ber-zero", errors == 0, errors, 0))
    return _report(cfg, ber=errors / cfg.trials, checks=checks,
                   extra={"truth_table": table, "bit_errors": errors})


# -- tag front end -----------------------------------------------------------------------

_HEAD_CACHE: dict = {}


def _head_bits(mode: PhyMode, tag_id: int, n: int) -> np.ndarray:
    key = (mode, tag_id, n)
    if key not in _HEAD_CACHE:
        c = build_carrier(mode, encode_tag_address(tag_id, n), InnerSpec(bytes(AA_LEN), 0x02, mode.max_inner_payload))
        nbytes = mode.preamble_len_bytes + AA_LEN + HEADER_LEN + 1
        _HEAD_CACHE[key] = c.on_air_bits()[: 8 * nbytes]
    return _HEAD_CACHE[key]


def frontend_trials(cfg: ScenarioConfig) -> dict:
    """Run the discriminator front end on ``trials`` truncated carrier heads.

    Each trial draws a tag id, a start offset and a carrier phase, then the
    noise.  Returns per-trial arrays of detection, epoch error and decoded id.
    """
    mode, fs = cfg.mode, cfg.phy.sample_rate
    disc_cfg = cfg.phy.discriminator()
    n = cfg.link.address_n
    cap = address_capacity(n)
    model = cfg.channel_model()
    snr = model.per_sample_snr(model.snr_for(0), fs, mode.symbol_rate)
    amp = cfg.channel.amplitude
    detected = np.zeros(cfg.trials, bool)
    err = np.full(cfg.trials, np.nan)
    ids = np.zeros(cfg.trials, np.int64)
    decoded = np.full(cfg.trials, -1, np.int64)
    for t in range(cfg.trials):
        rng = trial_rng(cfg.seed, cfg.scenario, t)
        tag = int(rng.integers(0, cap))
        lead = int(rng.integers(100, 400))
        theta = float(rng.uniform(-np.pi, np.pi))
        body = phy.gfsk_modulate(_head_bits(mode, tag, n), mode, fs).samples * (amp * np.exp(1j * theta))
        x = np.concatenate([np.zeros(lead, complex), body, np.zeros(64, complex)])
        wave = phy.IqWaveform(fs, x)
        if snr is not None:
            wave = add_awgn(wave, snr, rng, signal_power=amp ** 2)
        disc = phy.delay_discriminator(wave, disc_cfg)
        levels = phy.comparator(disc, mode, disc_cfg)
        aa = encode_tag_address(tag, n)
        sync = phy.detect_sync(disc, mode, disc_cfg, aa_lsb=aa[0] & 1, levels=levels)
        ids[t] = tag
        if sync.detected:
            detected[t] = True
            err[t] = sync.symbol_epoch - lead / fs
            got = decode_activation(phy.activation_pulses(disc, sync, mode, disc_cfg, levels), n)
            decoded[t] = -1 if got is None else got
    return {"detected": detected, "error": err, "ids": ids, "decoded": decoded, "snr_per_sample": snr}


def frontend(cfg: ScenarioConfig) -> MetricsReport:
    """Shared body of sync-jitter, wakeup-rate and activation-rate.

    Jitter covers every detection; a wake-up is a detection within half a
    symbol of the true epoch; an activation is a wake-up that also decodes
    the right tag id.
    """
    r = frontend_trials(cfg)
    half = 0.5 / cfg.mode.symbol_rate
    det = r["detected"]
    errs = r["error"][det]
    woke = det & (np.abs(np.nan_to_num(r["error"], nan=np.inf)) < half)
    active = woke & (r["decoded"] == r["ids"])
    trials = cfg.trials
    checks = []
    if r["snr_per_sample"] is None:
        sample = 1.0 / cfg.phy.sample_rate
        worst = float(np.max(np.abs(errs))) if errs.size else math.inf
        checks.append(check("noiseless-epoch-error", bool(det.all()) and worst <= sample,
                            rounded(worst * 1e9), rounded(sample * 1e9), "1 sample (ns)"))
        checks.append(check("noiseless-activation", bool(active.all()), int(active.sum()), trials))
    extra = {
        "detections": int(det.sum()),
        "false_detections": int((det & ~woke).sum()),
        "snr_per_sample_db": rounded(r["snr_per_sample"]),
        "max_abs_error_ns": rounded(float(np.max(np.abs(errs))) * 1e9) if errs.size else None,
    }
    return _report(cfg, wakeup_rate=woke.mean(), activation_rate=active.mean(),
                   jitter_ns=jitter_stats(errs), checks=checks, extra=extra)


# -- link ----------------------------------------------------------------------------------

def _settings(cfg: ScenarioConfig) -> ll.LinkSettings:
    fe = ll.FrontEnd(sample_rate=cfg.phy.sample_rate, discriminator=cfg.phy.discriminator())
    return ll.LinkSettings(fidelity=cfg.link.fidelity, link_sample_rate=cfg.link.sample_rate, front_end=fe)


def _run_link(cfg: ScenarioConfig, *, tag_ids=(0,), n_slots=None, erasure_p=None, channel_map=None,
              stream: str = None) -> ll.LinkRun:
    model = cfg.channel_model()
    if erasure_p is not None:
        model = replace(model, erasure_p=erasure_p)
    name = stream or cfg.scenario
    return ll.simulate_link(
        mode=cfg.mode,
        tag_ids=tuple(tag_ids),
        n=cfg.link.address_n,
        n_slots=cfg.trials if n_slots is None else n_slots,
        timing=cfg.timing(),
        channel=model,
        settings=_settings(cfg),
        f_shift=cfg.link.f_shift,
        params_rng=trial_rng(cfg.seed, name, 0),
        event_rng=lambda slot: event_rng(cfg.seed, name, 0, slot),
        erasure_rng=lambda slot: erasure_rng(cfg.seed, name, 0, slot),
        channel_map=cfg.link.channel_map if channel_map is None else channel_map,
        message_seed=cfg.seed,
        hop_increment=cfg.link.hop_increment,
    )


def _link_summary(events: list) -> dict:
    packets = sum(e.packets_exchanged for e in events)
    fails = sum(e.crc_failures for e in events)
    checked = sum(e.bits_checked for e in events)
    return {
        "events": len(events),
        "events_ok": sum(e.outcome == "ok" for e in events),
        "packets": packets,
        "crc_failures": fails,
        "bytes_delivered": sum(e.bytes_delivered for e in events),
        "undetected_errors": sum(e.undetected_errors for e in events),
        "bit_errors": sum(e.bit_errors for e in events),
        "bits_checked": checked,
    }


def _legality_checks(run: ll.LinkRun, cfg: ScenarioConfig) -> list:
    bad_map = sum(not (cfg.link.channel_map >> e.channel_used) & 1 for e in run.events)
    steps = int(cfg.link.f_shift / ll.CHANNEL_SPACING)
    bad_offset = sum(e.carrier_rf + steps != e.listen_rf or e.listen_rf != ll.data_to_rf(e.channel_used)
                     for e in run.events)
    problems = ll.validate_trace(run.trace.records)
    return [
        check("trace-valid", not problems, len(problems), 0),
        check("channels-in-map", bad_map == 0, bad_map, 0),
        check("carrier-offset", bad_offset == 0, bad_offset, 0),
    ]


def _noiseless(cfg: ScenarioConfig) -> bool:
    c = cfg.channel
    return c.snr_spec() is None and c.tag_snr_db is None and c.erasure_p == 0


def _link_report(cfg: ScenarioConfig, run: ll.LinkRun, *, loss_p: float = 0.0, **kw) -> MetricsReport:
    s = _link_summary(run.events)
    timing = cfg.timing()
    model = ll.goodput_model(cfg.mode, timing.inner_payload, timing.conn_interval, timing.ifs, None,
                             timing.guard, timing.packet_cap)
    goodput = run.goodput_kbps(timing.conn_interval)
    s.update(
        model_kbps=rounded(model),
        model_deviation=rounded(goodput / model - 1),
        packets_per_event=timing.packets_per_event,
        round_trip_us=rounded(timing.round_trip * 1e6),
    )
    checks = _legality_checks(run, cfg)
    if _noiseless(cfg) and loss_p == 0:
        checks.append(check("goodput-matches-model", abs(goodput / model - 1) <= GOODPUT_TOLERANCE,
                            rounded(goodput), rounded(model), GOODPUT_TOLERANCE))
    if cfg.link.calibrated:
        ref = calibration()["modes"][cfg.mode.value]["reference_kbps"]
        s["reference_kbps"] = ref
        s["reference_deviation"] = rounded(goodput / ref - 1)
        if _noiseless(cfg) and loss_p == 0:
            checks.append(check("calibrated-goodput", abs(goodput / ref - 1) <= CALIBRATION_TOLERANCE,
                                rounded(goodput), ref, CALIBRATION_TOLERANCE))
    per = s["crc_failures"] / s["packets"] if s["packets"] else None
    ber = s["bit_errors"] / s["bits_checked"] if s["bits_checked"] else None
    return _report(cfg, goodput_kbps=goodput, per=per, ber=ber, checks=checks + kw.pop("checks", []),
                   extra={**s, **kw.pop("extra", {})}, trace=run.trace, **kw)


def goodput_vs_snr(cfg: ScenarioConfig) -> MetricsReport:
    return _link_report(cfg, _run_link(cfg))


def goodput_vs_loss(cfg: ScenarioConfig) -> MetricsReport:
    """Excitation packets are erased with probability ``link.loss_p``."""
    p = cfg.link.loss_p
    return _link_report(cfg, _run_link(cfg, erasure_p=p), loss_p=p)


def _per_channel(events: list, interval: float) -> list:
    rows = []
    for ch in range(ll.NUM_DATA_CHANNELS):
        ev = [e for e in events if e.channel_used == ch]
        if not ev:
            continue
        s = _link_summary(ev)
        rows.append({
            "channel": ch,
            "events": s["events"],
            "packets": s["packets"],
            "crc_failures": s["crc_failures"],
            "per": rounded(s["crc_failures"] / s["packets"]) if s["packets"] else None,
            "ber": rounded(s["bit_errors"] / s["bits_checked"]) if s["bits_checked"] else None,
            "goodput_kbps": rounded(s["bytes_delivered"] * 8 / (len(ev) * interval) / 1e3),
        })
    return rows


def fhss_per_channel(cfg: ScenarioConfig) -> MetricsReport:
    run = _run_link(cfg)
    rows = _per_channel(run.events, cfg.link.conn_interval)
    snr = cfg.channel.snr_spec()
    if isinstance(snr, list):
        for row in rows:
            row["snr_db"] = snr[row["channel"]]
    return _link_report(cfg, run, per_channel=rows)


def multi_tag(cfg: ScenarioConfig) -> MetricsReport:
    n_tags = cfg.link.tags
    tags = list(range(n_tags))
    run = _run_link(cfg, tag_ids=tags)
    interval = cfg.link.conn_interval
    single = _run_link(cfg, tag_ids=(0,), stream=cfg.scenario + "/single").goodput_kbps(interval)
    per_tag = []
    checks = []
    for t in tags:
        g = run.goodput_kbps(interval, t)
        per_tag.append({"tag": t, "events": sum(e.tag_id == t for e in run.events), "goodput_kbps": rounded(g)})
    if _noiseless(cfg):
        worst = max(abs(r["goodput_kbps"] / (single / n_tags) - 1) for r in per_tag)
        checks.append(check("per-tag-share", worst <= GOODPUT_TOLERANCE, rounded(worst), 0.0, GOODPUT_TOLERANCE))
    return _link_report(cfg, run, per_tag=per_tag, checks=checks,
                        extra={"single_tag_kbps": rounded(single)})


# -- hopping ---------------------------------------------------------------------------------

def fhss_hopping(cfg: ScenarioConfig) -> MetricsReport:
    """Hop ``trials`` events and audit every channel and carrier choice."""
    rng = trial_rng(cfg.seed, cfg.scenario, 0)
    params = ll.ConnectionParams.random(rng, cfg.mode, channel_map=cfg.link.channel_map)
    hop = cfg.link.hop_increment or params.hop_increment
    used = set(ll.used_channels(cfg.link.channel_map))
    counts = np.zeros(ll.NUM_DATA_CHANNELS, np.int64)
    bad_map = bad_land = 0
    last = 0
    shift = cfg.link.f_shift
    for _ in range(cfg.trials):
        last, ch = ll.csa_next_channel(last, hop, cfg.link.channel_map)
        counts[ch] += 1
        bad_map += ch not in used
        target = ll.data_to_rf(ch)
        carrier = ll.carrier_channel(target, shift)
        bad_land += ll.landing_channel(carrier, shift) != target
    freq = counts[sorted(used)] / cfg.trials
    uniform = 1 / len(used)
    max_dev = float(np.max(np.abs(freq / uniform - 1)))
    checks = [
        check("channels-in-map", bad_map == 0, bad_map, 0),
        check("carrier-offset", bad_land == 0, bad_land, 0),
    ]
    # Remapping folds unused channels onto a subset, so only the full map is uniform.
    if cfg.link.channel_map == ll.FULL_CHANNEL_MAP:
        checks.append(check("uniform-coverage", max_dev <= 0.02, rounded(max_dev), 0.0, 0.02))
    extra = {
        "hop_increment": hop,
        "used_channels": len(used),
        "max_relative_deviation": rounded(max_dev),
        "chi2_pvalue": rounded(float(stats.chisquare(counts[sorted(used)]).pvalue)),
        "counts": counts.tolist(),
    }
    return _report(cfg, checks=checks, extra=extra)


# -- establishment and supervision ---------------------------------------------------------

def establishment(cfg: ScenarioConfig) -> MetricsReport:
    p = cfg.link.loss_p
    wins = used = 0
    for t in range(cfg.trials):
        r = ll.establish(p, event_uniforms(cfg.seed, cfg.scenario, t, ll.ESTABLISH_EVENTS))
        wins += r.success
        used += r.events_used
    rate = wins / cfg.trials
    oracle = 1 - p ** ll.ESTABLISH_EVENTS
    checks = [check("closed-form-3sigma", within_sigma(rate, oracle, cfg.trials), rounded(rate), rounded(oracle),
                    "3 sigma")]
    if p <= 0.3:
        checks.append(check("above-99.9pct", rate > 0.999, rounded(rate), 0.999))
    return _report(cfg, establishment_success=rate, checks=checks,
                   extra={"oracle": rounded(oracle), "mean_events_used": rounded(used / cfg.trials)})


def maintenance(cfg: ScenarioConfig) -> MetricsReport:
    p = cfg.link.loss_p
    interval = cfg.link.conn_interval
    n = int(math.floor(cfg.link.duration / interval + 1e-9))
    alive = 0
    for t in range(cfg.trials):
        u = event_uniforms(cfg.seed, cfg.scenario, t, n)
        alive += ll.maintain(cfg.link.duration, interval, p, u, records=False).survived
    rate = alive / cfg.trials
    oracle = no_run_probability(p, n, ll.SUPERVISION_EVENTS)
    checks = [check("dp-oracle-3sigma", within_sigma(rate, oracle, cfg.trials), rounded(rate), rounded(oracle),
                    "3 sigma")]
    return _report(cfg, maintenance_success=rate, checks=checks, extra={"events": n, "oracle": rounded(oracle)})


SCENARIO_FUNCS: dict[str, Callable[[ScenarioConfig], MetricsReport]] = {
    "codec-selftest": codec_selftest,
    "phase-xor": phase_xor,
    "sync-jitter": frontend,
    "wakeup-rate": frontend,
    "activation-rate": frontend,
    "goodput-vs-snr": goodput_vs_snr,
    "goodput-vs-loss": goodput_vs_loss,
    "fhss-per-channel": fhss_per_channel,
    "fhss-hopping": fhss_hopping,
    "establishment": establishment,
    "maintenance": maintenance,
    "multi-tag": multi_tag,
}


def run_scenario(cfg: ScenarioConfig) -> MetricsReport:
    """Resolve defaults, run the scenario and validate the report."""
    cfg = cfg.resolved()
    start = time.perf_counter()
    report = SCENARIO_FUNCS[cfg.scenario](cfg)
    report.runtime_s = time.perf_counter() - start
    if report.trials != cfg.trials:
        raise RuntimeError("executed trial count differs from the request")
    report.validate(raw_rate_kbps=cfg.mode.symbol_rate / 1e3)
    return report


# -- sweeps ------------------------------------------------------------------------------------

def _monotone(values: list, increasing: bool) -> bool:
    pairs = zip(values, values[1:])
    return all(b >= a for a, b in pairs) if increasing else all(b <= a for a, b in pairs)


def monotone_checks(axis: str, reports: list) -> list:
    """Declared monotone properties along an SNR sweep (values in ascending order).

    BER must not increase with SNR; for the tag front end jitter spread must
    not increase (no detections counts as infinite spread) and the wake-up rate
    must not decrease.
    """
    if resolve_axis(axis) not in ("channel.snr_db", "channel.tag_snr_db") or len(reports) < 2:
        return []
    out = []
    ber = [r.ber for r in reports if r.ber is not None]
    if len(ber) == len(reports):
        out.append(check("ber-non-increasing", _monotone(ber, False), ber, None))
    if all(r.wakeup_rate is not None for r in reports):
        std = [math.inf if r.jitter_ns is None else r.jitter_ns["std"] for r in reports]
        out.append(check("jitter-std-non-increasing", _monotone(std, False),
                         [None if math.isinf(s) else s for s in std], None))
        wake = [r.wakeup_rate for r in reports]
        out.append(check("wakeup-non-decreasing", _monotone(wake, True), wake, None))
    return out


def sweep(cfg: ScenarioConfig, axis: str, values) -> tuple:
    """Run one report per value of ``axis``; every point shares the same random streams.

    Returns ``(reports, checks)``, the latter holding the monotone checks.
    """
    resolve_axis(axis)
    values = list(values)
    reports = [run_scenario(with_value(cfg, axis, v)) for v in values]
    checks = []
    if values and values == sorted(values):
        checks = monotone_checks(axis, reports)
    elif values:
        order = np.argsort(values, kind="stable")
        checks = monotone_checks(axis, [reports[i] for i in order])
    return reports, checks


# -- arithmetic cross-checks ---------------------------------------------------------------------

def paper_consistency() -> list:
    """Arithmetic behind the reference numbers this package relies on."""
    ratio = 532 / 8.4
    frame = 1 + AA_LEN + HEADER_LEN + MAX_PAYLOAD + CRC_LEN
    inner = MAX_PAYLOAD - PhyMode.LE1M.inner_offset - CRC_LEN
    return [
        check("goodput-ratio", abs(ratio - 63.3) <= 0.1, rounded(ratio), 63.3, 0.1),
        check("tag-capacity-n8", address_capacity(8) == 16, address_capacity(8), 16),
        check("le1m-frame-bytes", frame == 261, frame, 261),
        check("le1m-inner-capacity", inner == PhyMode.LE1M.max_inner_payload == 241, inner, 241),
    ]


def consistency_table(rows: list) -> str:
    width = max(len(r["name"]) for r in rows)
    lines = [f"{'check':<{width}}  {'value':>10}  {'expected':>10}  result"]
    for r in rows:
        lines.append(f"{r['name']:<{width}}  {r['value']!s:>10}  {r['expected']!s:>10}  "
                     f"{'pass' if r['passed'] else 'FAIL'}")
    return "\n".join(lines) + "\n"
