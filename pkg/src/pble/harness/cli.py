"""Command-line entry point.

Exit codes: 0 success, 2 configuration or usage error (JSON on stderr),
3 a check inside the report failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .. import gf2codec as gc
from ..channel import trial_rng
from ..packet import InnerSpec, PhyMode, build_carrier, encode_tag_address
from .config import SCENARIOS, ConfigError, ScenarioConfig, from_dict, load_config
from .metrics import dumps_json, render
from .scenarios import consistency_table, paper_consistency, run_scenario, sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3

VECTOR_FIELDS = ("message_hex", "init_hex", "channel", "tag_part_hex", "source_part_hex", "monolithic_hex")


class JsonArgumentParser(argparse.ArgumentParser):
    """Usage errors go to stderr as JSON with exit code 2."""

    def error(self, message: str):
        sys.stderr.write(json.dumps({"error": "usage", "message": message}) + "\n")
        raise SystemExit(EXIT_CONFIG)


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _values(text: str) -> list:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            v = float(item)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {item!r}") from None
        out.append(int(v) if v.is_integer() and "." not in item and not math.isinf(v) else v)
    return out


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (a saved report is accepted too)")
    p.add_argument("--seed", type=_u64)
    p.add_argument("--trials", type=int)
    p.add_argument("--phy-mode", choices=[m.value for m in PhyMode])
    p.add_argument("--out", help="output file (default: config output.path, else stdout)")
    p.add_argument("--format", choices=("json", "csv"))


def build_parser() -> argparse.ArgumentParser:
    parser = JsonArgumentParser(prog="pble", description="BLE backscatter link simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        _run_options(p)
        p.add_argument("--trace", help="write the link event trace as JSON lines")
    sw = sub.add_parser("sweep", help="run a scenario over values of one parameter")
    sw.add_argument("scenario", choices=SCENARIOS)
    sw.add_argument("--axis", required=True, help="snr, tag_snr, erasure, loss or section.name")
    sw.add_argument("--values", required=True, type=_values, help="comma-separated values")
    _run_options(sw)

    def vector_options(p):
        p.add_argument("--count", type=int, default=16)
        p.add_argument("--seed", type=_u64, default=0)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out")

    vector_options(sub.add_parser("vectors", help="emit distributed-coding test vectors"))
    codec = sub.add_parser("codec", help="codec utilities").add_subparsers(dest="codec_command", required=True)
    vector_options(codec.add_parser("vectors", help="emit distributed-coding test vectors"))
    sub.add_parser("check-paper", help="arithmetic cross-checks of reference numbers")
    packet = sub.add_parser("packet", help="packet utilities").add_subparsers(dest="packet_command", required=True)
    dump = packet.add_parser("dump", help="show a carrier packet layout")
    dump.add_argument("--mode", choices=[m.value for m in PhyMode], default="LE1M")
    dump.add_argument("--payload-len", type=int, default=None, help="inner payload bytes (default: maximum)")
    dump.add_argument("--channel", type=int, default=None, help="fill the XOR region for this channel")
    dump.add_argument("--crc-init", type=lambda s: int(s, 0), default=0)
    dump.add_argument("--tag-id", type=int, default=0)
    dump.add_argument("--n", type=int, default=8)
    dump.add_argument("--aa", default="71764b50", help="inner access address, hex")
    dump.add_argument("--format", choices=("json",), default="json")
    dump.add_argument("--out")
    return parser


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args, scenario: str) -> ScenarioConfig:
    overrides = {"seed": args.seed, "trials": args.trials, "phy_mode": args.phy_mode}
    if args.config:
        cfg = load_config(args.config, **overrides)
        if cfg.scenario != scenario:
            raise ConfigError(f"config is for {cfg.scenario!r}, not {scenario!r}", "scenario")
        return cfg
    return from_dict({"scenario": scenario}, **overrides)


def _destination(args, cfg: ScenarioConfig) -> tuple:
    return args.out or cfg.output.path, args.format or cfg.output.format


def vectors(count: int, seed: int) -> list:
    """Random distributed-coding cases with both encoder halves and the monolithic result."""
    if count < 0:
        raise ConfigError("count must be non-negative", "count")
    out = []
    for i in range(count):
        rng = trial_rng(seed, "vectors", i)
        msg = rng.bytes(int(rng.integers(0, gc.MAX_TAG_MESSAGE_BYTES + 1)))
        init = int(rng.integers(0, 1 << 24))
        ch = int(rng.integers(0, gc.NUM_CHANNELS))
        n_bits = 8 * len(msg)
        out.append({
            "message_hex": msg.hex(),
            "init_hex": f"{init:06x}",
            "channel": ch,
            "tag_part_hex": gc.bits_to_bytes(gc.tag_baseband(msg)).hex(),
            "source_part_hex": gc.bits_to_bytes(gc.source_premod(init, ch, n_bits).bits).hex(),
            "monolithic_hex": gc.bits_to_bytes(gc.encode_monolithic(msg, init, ch)).hex(),
        })
    return out


def _vectors_text(records: list, fmt: str) -> str:
    if fmt == "json":
        return dumps_json(records)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=VECTOR_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(records)
    return buf.getvalue()


def packet_dump(args) -> dict:
    mode = PhyMode.parse(args.mode)
    p = mode.max_inner_payload if args.payload_len is None else args.payload_len
    try:
        aa = bytes.fromhex(args.aa)
        c = build_carrier(mode, encode_tag_address(args.tag_id, args.n), InnerSpec(aa, 0x02, p),
                          crc_init=args.crc_init, channel_index=args.channel)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return c.dump()


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "check-paper":
        rows = paper_consistency()
        sys.stdout.write(consistency_table(rows))
        return EXIT_OK if all(r["passed"] for r in rows) else EXIT_CHECK
    if cmd in ("vectors", "codec"):
        _emit(_vectors_text(vectors(args.count, args.seed), args.format), args.out)
        return EXIT_OK
    if cmd == "packet":
        _emit(dumps_json(packet_dump(args)), args.out)
        return EXIT_OK
    if cmd == "sweep":
        cfg = _config(args, args.scenario)
        out, fmt = _destination(args, cfg)
        reports, checks = sweep(cfg, args.axis, args.values)
        if not args.values:
            _emit("", out)
            return EXIT_OK
        _emit(render(reports, fmt, axis=args.axis, values=args.values, checks=checks), out)
        ok = all(r.passed for r in reports) and all(c["passed"] for c in checks)
        return EXIT_OK if ok else EXIT_CHECK
    cfg = _config(args, cmd)
    out, fmt = _destination(args, cfg)
    report = run_scenario(cfg)
    _emit(render([report], fmt), out)
    if args.trace:
        if report.trace is None:
            raise ConfigError(f"{cmd} produces no link trace", "trace")
        report.trace.write(args.trace)
    return EXIT_OK if report.passed else EXIT_CHECK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        code = _dispatch(args)
    except ConfigError as exc:
        sys.stderr.write(exc.to_json() + "\n")
        return EXIT_CONFIG
    sys.stderr.write(f"runtime {time.perf_counter() - start:.3f} s\n")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
