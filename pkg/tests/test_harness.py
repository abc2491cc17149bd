from __future__ import annotations

import csv
import io
import json
import math
import statistics
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from oracles import no_run_probability as dp_no_run
from pble import gf2codec as gc
from pble import linklayer as ll
from pble.harness import cli
from pble.harness.config import SCENARIOS, ConfigError, calibration, from_dict, load_config, with_value
from pble.harness.metrics import CSV_FIELDS, MetricsReport, jitter_stats, no_run_probability, within_sigma
from pble.harness.scenarios import monotone_checks, paper_consistency, run_scenario, sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- config ----------------------------------------------------------------------------

@pytest.mark.parametrize("data, field", [
    ({"scenario": "nope"}, "scenario"),
    ({"scenario": "maintenance", "colour": 1}, "colour"),
    ({"scenario": "maintenance", "link": {"speed": 1}}, "link.speed"),
    ({"scenario": "maintenance", "trials": 0}, "trials"),
    ({"scenario": "maintenance", "seed": -1}, "seed"),
    ({"scenario": "maintenance", "phy_mode": "LE3M"}, "phy_mode"),
    ({"scenario": "goodput-vs-loss", "channel": {"erasure_p": 0.1}}, "channel.erasure_p"),
    ({"scenario": "sync-jitter", "channel": {"snr_db": [10.0] * 40}}, "channel.snr_db"),
    ({"scenario": "goodput-vs-snr", "channel": {"erasure_p": 1.5}}, "channel.erasure_p"),
    ({"scenario": "goodput-vs-snr", "link": {"calibrated": True, "packet_cap": 3}}, "link.calibrated"),
    ({"phy_mode": "LE1M"}, "scenario"),
])
def test_config_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as info:
        from_dict(data)
    assert info.value.field == field
    payload = json.loads(info.value.to_json())
    assert payload["error"] == "config" and payload["field"] == field


def test_resolved_fills_defaults():
    cfg = from_dict({"scenario": "multi-tag", "phy_mode": "LE2M"}).resolved()
    assert cfg.trials == 200
    assert cfg.link.tags == 4
    assert cfg.link.payload_bytes == 240
    assert cfg.channel.noise_bandwidth == "symbol"
    fe = from_dict({"scenario": "wakeup-rate"}).resolved()
    assert fe.channel.noise_bandwidth == "sample"


def test_calibrated_config_uses_shipped_calibration():
    cal = calibration()
    for mode in ("LE1M", "LE2M"):
        cfg = load_config(CONFIGS / f"calibrated-{mode.lower()}.json").resolved()
        assert cfg.link.packet_cap == cal["modes"][mode]["packet_cap"]
        assert cfg.link.guard == cal["guard"]
        assert cfg.link.payload_bytes == cal["modes"][mode]["payload_bytes"]


def test_load_config_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_with_value_replaces_profile_and_rejects_fractional_integers():
    cfg = from_dict({"scenario": "fhss-per-channel", "channel": {"profile": "wifi"}})
    swept = with_value(cfg, "snr", 12.0)
    assert swept.channel.profile is None and swept.channel.snr_db == 12.0
    with pytest.raises(ConfigError):
        with_value(from_dict({"scenario": "multi-tag"}), "link.tags", 2.5)
    with pytest.raises(ConfigError):
        with_value(cfg, "colour", 1)


# -- metrics ---------------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.integers(0, 300), st.integers(1, 8))
def test_matrix_power_matches_list_dp(p, n, run):
    assert math.isclose(no_run_probability(p, n, run), dp_no_run(p, n, run), rel_tol=1e-9, abs_tol=1e-12)


def test_jitter_stats_against_statistics_module():
    errs = [1e-9, -2e-9, 4e-9, 0.5e-9, -3e-9]
    ns = [e * 1e9 for e in errs]
    j = jitter_stats(errs)
    assert math.isclose(j["mean"], statistics.mean(ns), rel_tol=1e-9)
    assert math.isclose(j["std"], statistics.stdev(ns), rel_tol=1e-9)
    assert 3.0 <= j["p95"] <= 4.0
    assert jitter_stats([1e-9]) is None


def test_within_sigma():
    assert within_sigma(0.5, 0.5, 100)
    assert not within_sigma(0.7, 0.5, 100)
    assert within_sigma(1.0, 1.0, 10)


def test_report_rejects_bad_rates():
    r = MetricsReport("establishment", "LE1M", 0, 1, {}, per=1.5)
    with pytest.raises(ValueError):
        r.validate()
    g = MetricsReport("goodput-vs-snr", "LE1M", 0, 1, {}, goodput_kbps=1500.0)
    with pytest.raises(ValueError):
        g.validate(raw_rate_kbps=1000.0)


# -- scenarios -------------------------------------------------------------------------

SMALL = {
    "codec-selftest": 100, "phase-xor": 500, "sync-jitter": 30, "wakeup-rate": 30, "activation-rate": 30,
    "goodput-vs-snr": 20, "goodput-vs-loss": 20, "fhss-per-channel": 74, "fhss-hopping": 100_000,
    "establishment": 5000, "maintenance": 500, "multi-tag": 24,
}


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_every_scenario_noiseless_passes_and_keeps_trials(scenario):
    data = {"scenario": scenario, "trials": SMALL[scenario]}
    if scenario == "fhss-per-channel":
        data["channel"] = {"snr_db": "inf"}
    r = run_scenario(from_dict(data))
    assert r.trials == SMALL[scenario]
    assert r.checks and r.passed, [c for c in r.checks if not c["passed"]]


def test_phase_xor_noise_causes_errors():
    r = run_scenario(from_dict({"scenario": "phase-xor", "trials": 2000, "channel": {"snr_db": 0}}))
    assert 0 < r.ber < 0.5


def test_goodput_vs_loss_drops_goodput():
    base = {"scenario": "goodput-vs-loss", "trials": 40}
    clean = run_scenario(from_dict(base))
    lossy = run_scenario(from_dict({**base, "link": {"loss_p": 0.3}}))
    assert lossy.goodput_kbps < clean.goodput_kbps
    assert lossy.passed


def test_one_depressed_channel_has_highest_per():
    snr = [16.0] * 40
    snr[5] = 11.0
    r = run_scenario(from_dict({"scenario": "fhss-per-channel", "trials": 370, "channel": {"snr_db": snr}}))
    rows = r.per_channel
    worst = max(rows, key=lambda row: row["per"])
    assert worst["channel"] == 5
    pers = [row["per"] for row in rows]
    assert min(pers) <= r.per <= max(pers)
    gps = [row["goodput_kbps"] for row in rows]
    assert min(gps) <= r.goodput_kbps <= max(gps)


def test_wifi_profile_hurts_overlapped_channels():
    r = run_scenario(from_dict({"scenario": "fhss-per-channel", "trials": 370}))
    rows = {row["channel"]: row for row in r.per_channel}
    low = [row["per"] for row in rows.values() if row["snr_db"] < max(x["snr_db"] for x in rows.values())]
    high = [row["per"] for row in rows.values() if row["snr_db"] == max(x["snr_db"] for x in rows.values())]
    assert np.mean(low) > np.mean(high)


def test_report_echo_reruns_identically(tmp_path):
    r1 = run_scenario(from_dict({"scenario": "goodput-vs-snr", "trials": 10, "seed": 9, "channel": {"snr_db": 14}}))
    again = run_scenario(from_dict(json.loads(json.dumps(r1.to_dict()))))
    assert again.to_dict() == r1.to_dict()


# -- sweeps ----------------------------------------------------------------------------

def test_sweep_snr_ber_non_increasing():
    cfg = from_dict({"scenario": "goodput-vs-snr", "trials": 30})
    reports, checks = sweep(cfg, "snr", [0, 10, 20, 30])
    assert len(reports) == 4
    bers = [r.ber for r in reports]
    assert all(b <= a for a, b in zip(bers, bers[1:]))
    assert [c["name"] for c in checks] == ["ber-non-increasing"] and checks[0]["passed"]


def test_maintenance_loss_sweep_matches_dp():
    cfg = from_dict({"scenario": "maintenance", "trials": 4000, "link": {"duration": 10.0}})
    values = [0.0, 0.2, 0.4, 0.5, 0.6, 0.9]
    reports, _ = sweep(cfg, "loss", values)
    for p, r in zip(values, reports):
        oracle = dp_no_run(p, 200)
        sigma = math.sqrt(oracle * (1 - oracle) / 4000)
        assert abs(r.maintenance_success - oracle) <= 3 * sigma + 1e-12


def test_sweep_empty_values():
    reports, checks = sweep(from_dict({"scenario": "maintenance"}), "loss", [])
    assert reports == [] and checks == []


def test_sweep_unknown_axis():
    with pytest.raises(ConfigError):
        sweep(from_dict({"scenario": "maintenance"}), "colour", [1])


def test_monotone_checks_flag_violations():
    def rep(ber):
        return MetricsReport("goodput-vs-snr", "LE1M", 0, 1, {}, ber=ber)
    assert monotone_checks("snr", [rep(0.1), rep(0.2)])[0]["passed"] is False
    assert monotone_checks("snr", [rep(0.2), rep(0.2)])[0]["passed"] is True
    assert monotone_checks("loss", [rep(0.1), rep(0.2)]) == []


def test_monotone_checks_treat_missing_jitter_as_infinite():
    def rep(std, wake):
        j = None if std is None else {"mean": 0.0, "std": std, "p95": 0.0}
        return MetricsReport("sync-jitter", "LE1M", 0, 1, {}, wakeup_rate=wake, jitter_ns=j)
    ok = monotone_checks("snr", [rep(None, 0.0), rep(50.0, 0.5), rep(5.0, 1.0)])
    assert all(c["passed"] for c in ok)
    bad = monotone_checks("snr", [rep(5.0, 1.0), rep(None, 0.0)])
    assert not any(c["passed"] for c in bad)


# -- consistency -----------------------------------------------------------------------

def test_paper_consistency_rows():
    rows = {r["name"]: r for r in paper_consistency()}
    assert all(r["passed"] for r in rows.values())
    assert abs(rows["goodput-ratio"]["value"] - 63.33) < 0.01
    assert rows["tag-capacity-n8"]["value"] == 16
    assert rows["le1m-frame-bytes"]["value"] == 261


# -- CLI -------------------------------------------------------------------------------

def test_cli_determinism_byte_identical(tmp_path, capsys):
    for scenario, extra in (("goodput-vs-snr", ["--trials", "15"]), ("sync-jitter", ["--trials", "40"]),
                            ("establishment", ["--trials", "2000"]), ("codec-selftest", ["--trials", "50"])):
        outs = []
        for k in range(2):
            path = tmp_path / f"{scenario}-{k}.json"
            code, _, _ = run_cli(capsys, scenario, "--seed", "123", "--out", str(path), *extra)
            assert code == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]


def test_cli_determinism_across_processes(tmp_path):
    paths = [tmp_path / f"r{k}.csv" for k in range(2)]
    for p in paths:
        subprocess.run([sys.executable, "-m", "pble.harness.cli", "sweep", "goodput-vs-snr", "--axis", "snr",
                        "--values", "8,14", "--trials", "10", "--seed", "4", "--format", "csv", "--out", str(p)],
                       check=True, capture_output=True)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_cli_echo_rerun(tmp_path, capsys):
    first = tmp_path / "first.json"
    second = tmp_path / "second.json"
    run_cli(capsys, "goodput-vs-snr", "--trials", "10", "--seed", "77", "--out", str(first))
    code, _, _ = run_cli(capsys, "goodput-vs-snr", "--config", str(first), "--out", str(second))
    assert code == 0
    assert first.read_bytes() == second.read_bytes()


def test_cli_echo_rejects_other_scenario(tmp_path, capsys):
    first = tmp_path / "first.json"
    run_cli(capsys, "establishment", "--trials", "10", "--out", str(first))
    code, _, err = run_cli(capsys, "maintenance", "--config", str(first))
    assert code == 2 and json.loads(err.splitlines()[0])["field"] == "scenario"


def test_cli_json_report_shape(capsys):
    code, out, err = run_cli(capsys, "establishment", "--trials", "1000")
    assert code == 0 and "runtime" in err
    doc = json.loads(out)
    assert doc["schema"] == "1"
    assert doc["config"]["trials"] == 1000
    assert "runtime" not in out and "output" not in doc["config"]


def test_cli_usage_error_is_json(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["establishment", "--bogus"])
    assert info.value.code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "usage"


def test_cli_config_error_exit_2(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"scenario": "maintenance", "link": {"loss_p": 2}}))
    code, out, err = run_cli(capsys, "maintenance", "--config", str(p))
    assert code == 2 and out == ""
    assert json.loads(err)["field"] == "link.loss_p"


def test_cli_failed_check_exit_3(tmp_path, capsys):
    # Calibrated for 50 ms events but run at 100 ms: goodput halves and misses the reference.
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"scenario": "goodput-vs-snr", "link": {"calibrated": True, "conn_interval": 0.1}}))
    code, out, _ = run_cli(capsys, "goodput-vs-snr", "--config", str(p), "--trials", "10")
    assert code == 3
    failed = [c["name"] for c in json.loads(out)["checks"] if not c["passed"]]
    assert failed == ["calibrated-goodput"]


def test_cli_sweep_csv(capsys):
    code, out, _ = run_cli(capsys, "sweep", "goodput-vs-snr", "--axis", "snr", "--values", "0,10,20,30",
                           "--trials", "20", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0]) == CSV_FIELDS
    assert [r["value"] for r in rows] == ["0", "10", "20", "30"]
    bers = [float(r["ber"]) for r in rows]
    assert all(b <= a for a, b in zip(bers, bers[1:]))


def test_cli_sweep_empty_values(capsys):
    code, out, _ = run_cli(capsys, "sweep", "maintenance", "--axis", "loss", "--values", "")
    assert code == 0 and out == ""


def test_cli_sweep_unknown_axis(capsys):
    code, _, err = run_cli(capsys, "sweep", "maintenance", "--axis", "colour", "--values", "1")
    assert code == 2 and json.loads(err)["field"] == "axis"


def test_cli_check_paper(capsys):
    code, out, _ = run_cli(capsys, "check-paper")
    assert code == 0
    assert "FAIL" not in out and out.count("pass") == 4


@pytest.mark.parametrize("argv", [["vectors"], ["codec", "vectors"]])
def test_cli_vectors_recombine(capsys, argv):
    code, out, _ = run_cli(capsys, *argv, "--count", "25", "--seed", "3")
    assert code == 0
    records = json.loads(out)
    assert len(records) == 25
    for rec in records:
        tag = gc.bytes_to_bits(bytes.fromhex(rec["tag_part_hex"]))
        src = gc.bytes_to_bits(bytes.fromhex(rec["source_part_hex"]))
        mono = gc.bytes_to_bits(bytes.fromhex(rec["monolithic_hex"]))
        assert np.array_equal(tag ^ src, mono)
        msg, ok = gc.decode_pdu_region(mono, int(rec["init_hex"], 16), rec["channel"])
        assert ok and gc.bits_to_bytes(msg).hex() == rec["message_hex"]


def test_cli_vectors_csv_matches_json(capsys):
    _, js, _ = run_cli(capsys, "vectors", "--count", "5", "--seed", "8")
    _, cs, _ = run_cli(capsys, "vectors", "--count", "5", "--seed", "8", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(cs)))
    assert [dict(r, channel=int(r["channel"])) for r in rows] == json.loads(js)


def test_cli_packet_dump(capsys):
    code, out, _ = run_cli(capsys, "packet", "dump", "--mode", "LE2M", "--payload-len", "10", "--channel", "4")
    assert code == 0
    doc = json.loads(out)
    assert doc["mode"] == "LE2M" and doc["inner_offset"] == 8
    regions = doc["region_map"]
    assert regions[0]["start"] == 0 and regions[-1]["end"] == 8 + 10 + 3
    assert doc["outer"]["header"] == doc["outer"]["header"].upper()


def test_cli_packet_dump_capacity_error(capsys):
    code, _, err = run_cli(capsys, "packet", "dump", "--mode", "LE2M", "--payload-len", "241")
    assert code == 2 and "capacity" in json.loads(err)["message"]


def test_cli_trace_is_valid_jsonl(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    code, _, _ = run_cli(capsys, "multi-tag", "--trials", "12", "--trace", str(trace))
    assert code == 0
    records = [json.loads(line) for line in trace.read_text().splitlines()]
    assert ll.validate_trace(records) == []
    assert sum(r.get("type") == "event" for r in records) == 12


def test_cli_trace_rejected_without_link(tmp_path, capsys):
    code, _, err = run_cli(capsys, "establishment", "--trials", "10", "--trace", str(tmp_path / "t.jsonl"))
    assert code == 2 and json.loads(err)["field"] == "trace"
