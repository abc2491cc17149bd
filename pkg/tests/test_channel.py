from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from pble.channel import (
    ChannelModel,
    NUM_CHANNELS,
    add_awgn,
    erase_packet,
    event_rng,
    event_uniforms,
    flip_bits,
    gfsk_ber,
    load_profile,
    measure_receiver_ber,
    receiver_ber,
    per_channel_snr,
    trial_rng,
    wifi_profile,
)
from pble.phy import IqWaveform


def test_awgn_power_at_0db():
    w = IqWaveform(100e6, np.ones(1_000_000, dtype=complex))
    out = add_awgn(w, 0.0, np.random.default_rng(1))
    noise = out.samples - w.samples
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(1.0, rel=0.02)
    # circular: equal power in I and Q
    assert np.var(noise.real) == pytest.approx(np.var(noise.imag), rel=0.02)


def test_awgn_explicit_signal_power():
    w = IqWaveform(1e6, np.zeros(200_000, dtype=complex))
    out = add_awgn(w, 10.0, np.random.default_rng(2), signal_power=4.0)
    assert np.mean(np.abs(out.samples) ** 2) == pytest.approx(0.4, rel=0.02)


def test_awgn_bypass_and_infinite():
    w = IqWaveform(1e6, np.exp(1j * np.arange(100.0)))
    assert np.array_equal(add_awgn(w, None).samples, w.samples)
    assert np.array_equal(add_awgn(w, float("inf")).samples, w.samples)
    assert np.array_equal(add_awgn(w, 0.0, bypass=True).samples, w.samples)
    with pytest.raises(ValueError):
        add_awgn(w, 3.0)


def test_awgn_deterministic():
    w = IqWaveform(1e6, np.ones(1000, dtype=complex))
    a = add_awgn(w, 5.0, event_rng(7, "s", 3, 2))
    b = add_awgn(w, 5.0, event_rng(7, "s", 3, 2))
    c = add_awgn(w, 5.0, event_rng(7, "s", 3, 3))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_erasure_bounds():
    rng = np.random.default_rng(3)
    assert not any(erase_packet(0.0, rng) for _ in range(1000))
    assert all(erase_packet(1.0, rng) for _ in range(1000))
    rate = np.mean([erase_packet(0.3, rng) for _ in range(20_000)])
    assert rate == pytest.approx(0.3, abs=0.015)
    assert erase_packet(0.5, 0.49) and not erase_packet(0.5, 0.5)
    for bad in (-0.1, 1.1):
        with pytest.raises(ValueError):
            erase_packet(bad, rng)


def test_event_uniforms_prefix_stable():
    a = event_uniforms(1, "maintain", 4, 10)
    b = event_uniforms(1, "maintain", 4, 1000)
    assert np.array_equal(a, b[:10])


@given(st.integers(0, 2**32), st.integers(0, 10_000), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_streams_distinct(seed, t1, t2):
    a = trial_rng(seed, "x", t1).random(4)
    b = trial_rng(seed, "x", t2).random(4)
    assert np.array_equal(a, b) == (t1 == t2)


def test_streams_depend_on_scenario_and_seed():
    base = trial_rng(0, "a", 0).random(8)
    assert not np.array_equal(base, trial_rng(0, "b", 0).random(8))
    assert not np.array_equal(base, trial_rng(1, "a", 0).random(8))
    assert not np.array_equal(base, event_rng(0, "a", 0, 0).random(8))


def test_substreams_uncorrelated():
    x = np.concatenate([trial_rng(5, "c", t).random(50) for t in range(200)])
    y = np.concatenate([event_rng(5, "c", t, 0).random(50) for t in range(200)])
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.05


def test_gfsk_ber():
    assert gfsk_ber(None) == 0.0
    assert gfsk_ber(0.0) == pytest.approx(0.5 * np.exp(-0.5))
    assert gfsk_ber(30.0) < 1e-100
    assert gfsk_ber(5) > gfsk_ber(10)


def test_flip_bits_rate():
    bits = np.zeros(100_000, dtype=np.uint8)
    out = flip_bits(bits, 0.1, np.random.default_rng(4))
    assert out.mean() == pytest.approx(0.1, abs=0.005)
    assert np.array_equal(flip_bits(bits, 0.0, None), bits)


def test_channel_model_validation():
    with pytest.raises(ValueError):
        ChannelModel(snr_db=[1.0] * 39)
    with pytest.raises(ValueError):
        ChannelModel(erasure_p=2)
    with pytest.raises(ValueError):
        ChannelModel(noise_bandwidth="wide")
    m = ChannelModel(snr_db=list(range(40)))
    assert m.per_channel and m.snr_for(37) == 37.0
    with pytest.raises(ValueError):
        m.snr_for(40)
    assert ChannelModel(snr_db=12).snr_for(5) == 12.0
    assert ChannelModel().snr_for(0) is None


def test_per_sample_snr():
    m = ChannelModel()
    assert m.per_sample_snr(20.0, 100e6, 1e6) == pytest.approx(0.0)
    assert ChannelModel(noise_bandwidth="sample").per_sample_snr(20.0, 100e6, 1e6) == 20.0
    assert ChannelModel(noise_bandwidth=2e6).per_sample_snr(20.0, 32e6, 1e6) == pytest.approx(20 - 10 * np.log10(16))
    assert m.per_sample_snr(None, 1, 1) is None


def test_profiles(tmp_path):
    assert load_profile(15) == (15.0,) * NUM_CHANNELS
    assert load_profile({"flat": 7}) == (7.0,) * NUM_CHANNELS
    assert len(load_profile("flat")) == NUM_CHANNELS
    w = load_profile("wifi")
    assert w == wifi_profile()
    assert min(w) < max(w)
    # advertising channels 37, 38, 39 sit between the Wi-Fi channels
    assert w[37] == w[38] == w[39] == max(w)
    p = tmp_path / "prof.json"
    p.write_text(json.dumps(list(range(40))))
    assert load_profile(str(p))[39] == 39.0
    with pytest.raises(ValueError):
        load_profile([1.0, 2.0])
    with pytest.raises(ValueError):
        load_profile({"slope": 1})
    with pytest.raises(ValueError):
        load_profile("no-such-profile")
    assert per_channel_snr("wifi").snr_for(0) == w[0]


def test_to_dict_roundtrip():
    m = ChannelModel(snr_db=[3.0] * 40, erasure_p=0.1, seed=9)
    assert ChannelModel(**m.to_dict()) == m


@pytest.mark.parametrize("mode", ["LE1M", "LE2M"])
@pytest.mark.parametrize("snr", [8.0, 12.0])
def test_receiver_ber_curve_matches_waveform(mode, snr):
    errors, bits = measure_receiver_ber(mode, snr, 200_000, np.random.default_rng([3, int(snr)]))
    table = receiver_ber(mode, snr)
    sigma = np.sqrt(table * (1 - table) / bits)
    assert abs(errors / bits - table) <= 4 * sigma + 0.05 * table


@pytest.mark.parametrize("mode", ["LE1M", "LE2M"])
def test_receiver_ber_shape(mode):
    grid = np.linspace(-5, 30, 141)
    vals = [receiver_ber(mode, s) for s in grid]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert all(0 <= v <= 0.5 for v in vals)
    # a practical receiver never beats the ideal noncoherent curve
    assert all(receiver_ber(mode, s) >= gfsk_ber(s) for s in (2, 6, 10, 14))
    assert receiver_ber(mode, None) == 0.0
