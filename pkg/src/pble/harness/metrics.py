"""Report type, statistics helpers and the output writers.

JSON reports carry ``"schema": "1"``.  CSV files have the fixed header
:data:`CSV_FIELDS`, one row per report; per-channel and per-tag breakdowns
appear in JSON only.  Wall-clock runtime and the link trace are kept on the
report object but never written into it, so identical runs give identical
files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

SCHEMA = "1"

CSV_FIELDS = (
    "scenario",
    "phy_mode",
    "seed",
    "trials",
    "axis",
    "value",
    "goodput_kbps",
    "ber",
    "per",
    "wakeup_rate",
    "activation_rate",
    "jitter_mean_ns",
    "jitter_std_ns",
    "jitter_p95_ns",
    "establishment_success",
    "maintenance_success",
    "checks_passed",
)

_RATES = ("ber", "per", "wakeup_rate", "activation_rate", "establishment_success", "maintenance_success")


def check(name: str, passed: bool, value: Any = None, expected: Any = None, tolerance: Any = None) -> dict:
    return {"name": name, "passed": bool(passed), "value": value, "expected": expected, "tolerance": tolerance}


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def within_sigma(observed: float, expected: float, n: int, k: float = 3.0) -> bool:
    s = binomial_sigma(expected, n)
    return abs(observed - expected) <= k * s + 1e-12


def no_run_probability(p: float, n: int, run: int = 6) -> float:
    """P(no ``run`` consecutive failures in ``n`` Bernoulli(p) events), by a Markov-chain power."""
    # states 0..run-1: current failure streak; absorbing state ``run`` dropped (mass lost)
    t = np.zeros((run, run))
    for k in range(run):
        t[k, 0] = 1 - p
        if k + 1 < run:
            t[k, k + 1] = p
    dist = np.zeros(run)
    dist[0] = 1.0
    return float((dist @ np.linalg.matrix_power(t, n)).sum())


def jitter_stats(errors_s: Sequence[float]) -> Optional[dict]:
    """Mean, standard deviation and 95th percentile of |error|, in ns; None below two samples."""
    e = np.asarray(errors_s, dtype=float) * 1e9
    if e.size < 2:
        return None
    return {
        "mean": _r(e.mean()),
        "std": _r(e.std(ddof=1)),
        "p95": _r(np.percentile(np.abs(e), 95)),
    }


def _r(x: float) -> float:
    """Round to 12 significant digits so text output is stable across platforms."""
    return float(f"{float(x):.12g}")


def rounded(x: Optional[float]) -> Optional[float]:
    return None if x is None else _r(x)


@dataclass
class MetricsReport:
    scenario: str
    phy_mode: str
    seed: int
    trials: int
    config: dict
    goodput_kbps: Optional[float] = None
    ber: Optional[float] = None
    per: Optional[float] = None
    wakeup_rate: Optional[float] = None
    activation_rate: Optional[float] = None
    jitter_ns: Optional[dict] = None
    establishment_success: Optional[float] = None
    maintenance_success: Optional[float] = None
    per_channel: Optional[list] = None
    per_tag: Optional[list] = None
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    runtime_s: float = 0.0
    trace: Any = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("goodput_kbps", *_RATES):
            setattr(self, name, rounded(getattr(self, name)))

    def validate(self, raw_rate_kbps: Optional[float] = None) -> None:
        for name in _RATES:
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise ValueError(f"{name}={v} is not a rate")
        if self.goodput_kbps is not None and raw_rate_kbps is not None and self.goodput_kbps > raw_rate_kbps:
            raise ValueError("goodput exceeds the PHY rate")

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "scenario": self.scenario,
            "phy_mode": self.phy_mode,
            "seed": self.seed,
            "trials": self.trials,
            "metrics": {
                "goodput_kbps": self.goodput_kbps,
                "ber": self.ber,
                "per": self.per,
                "wakeup_rate": self.wakeup_rate,
                "activation_rate": self.activation_rate,
                "jitter_ns": self.jitter_ns,
                "establishment_success": self.establishment_success,
                "maintenance_success": self.maintenance_success,
            },
            "per_channel": self.per_channel,
            "per_tag": self.per_tag,
            "checks": self.checks,
            "extra": self.extra,
            "config": self.config,
        }

    def csv_row(self, axis: Optional[str] = None, value: Optional[float] = None) -> dict:
        j = self.jitter_ns or {}
        return {
            "scenario": self.scenario,
            "phy_mode": self.phy_mode,
            "seed": self.seed,
            "trials": self.trials,
            "axis": axis,
            "value": value,
            "goodput_kbps": self.goodput_kbps,
            "ber": self.ber,
            "per": self.per,
            "wakeup_rate": self.wakeup_rate,
            "activation_rate": self.activation_rate,
            "jitter_mean_ns": j.get("mean"),
            "jitter_std_ns": j.get("std"),
            "jitter_p95_ns": j.get("p95"),
            "establishment_success": self.establishment_success,
            "maintenance_success": self.maintenance_success,
            "checks_passed": self.passed,
        }


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()


def _json_value(v: Any) -> Any:
    return "inf" if isinstance(v, float) and math.isinf(v) else v


def render(reports: Sequence[MetricsReport], fmt: str, *, axis: Optional[str] = None,
           values: Optional[Sequence[float]] = None, checks: Optional[list] = None) -> str:
    """Text for one report, or a sweep when ``axis`` is given."""
    if fmt == "csv":
        if axis is None:
            return csv_text([r.csv_row() for r in reports])
        return csv_text([r.csv_row(axis, v) for r, v in zip(reports, values)])
    if axis is None:
        return dumps_json(reports[0].to_dict())
    return dumps_json({
        "schema": SCHEMA,
        "axis": axis,
        "values": [_json_value(v) for v in values or []],
        "reports": [r.to_dict() for r in reports],
        "checks": checks or [],
    })
