"""Fixed-threshold triage baseline.

Two stacked criteria sets over one reading:

* Criteria 1 — clinical-guideline threshold rules with a 2-level output
  (URGENT when any rule fires, else NOT AN ISSUE). Rules that need history
  (systolic drop, BP persistence, weight deltas and median baseline) are
  inert when their history requirement is unmet; they never raise.
* Criteria 2 — a points-based early-warning score reduced to the
  parameters home devices report (SpO2, systolic BP, pulse), scored per
  reading, with the standard flag ladder on the total.

The final severity is the ordinal max of the two. The rule tables load
from a JSON config file (see ``data/fixed_rules.json`` for the shipped
defaults) so alternate threshold sets can be A/B-tested.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from importlib import resources
from statistics import median
from typing import Mapping, Sequence

from .core import (
    DeviceKind,
    PatientFlags,
    Reading,
    Severity,
    TriageTrace,
    VitalHistory,
    severity_max,
)

FIXED_RATER_ID = "fixed_baseline"

_COMPARE = {
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
}


def _in_band(value: float, band: Sequence) -> bool:
    lo, hi, _points = band
    if lo is not None and value < lo:
        return False
    if hi is not None and value >= hi:
        return False
    return True


def _band_points(value: float, bands: Sequence[Sequence]) -> int:
    for band in bands:
        if _in_band(value, band):
            return int(band[2])
    raise ValueError(f"value {value} not covered by bands {bands}")


@dataclass(frozen=True)
class FixedRuleConfig:
    """Parsed rule tables; see data/fixed_rules.json for the schema."""

    bp_rules: tuple[Mapping, ...]
    spo2_rules: tuple[Mapping, ...]
    weight_hf_rules: tuple[Mapping, ...]
    weight_all_rules: tuple[Mapping, ...]
    news2: Mapping

    def rule_ids(self) -> tuple[str, ...]:
        rules = (
            self.bp_rules + self.spo2_rules
            + self.weight_hf_rules + self.weight_all_rules
        )
        return tuple(r["id"] for r in rules)


def load_fixed_rules(path=None) -> FixedRuleConfig:
    """Load rule tables from ``path``, or the packaged defaults."""
    if path is None:
        text = resources.files("rpm_triage").joinpath("data/fixed_rules.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    raw = json.loads(text)
    c1 = raw["criteria1"]
    config = FixedRuleConfig(
        bp_rules=tuple(c1["blood_pressure"]),
        spo2_rules=tuple(c1["spo2"]),
        weight_hf_rules=tuple(c1["weight_hf_only"]),
        weight_all_rules=tuple(c1["weight_all"]),
        news2=raw["news2"],
    )
    ids = config.rule_ids()
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate rule ids in fixed rule config")
    return config


_DEFAULT_CONFIG: FixedRuleConfig | None = None


def default_fixed_rules() -> FixedRuleConfig:
    global _DEFAULT_CONFIG
    if _DEFAULT_CONFIG is None:
        _DEFAULT_CONFIG = load_fixed_rules()
    return _DEFAULT_CONFIG


# --- Criteria 1: guideline threshold rules ---------------------------------


def _bp_pairs(history: VitalHistory) -> list[tuple]:
    """Time-ordered (t, systolic, diastolic|None) triples from history.

    Systolic and diastolic points from one cuff reading share a timestamp,
    which is what the join keys on.
    """
    dia_at = {t: v for t, v in history.series("diastolic")}
    return [(t, v, dia_at.get(t)) for t, v in history.series("systolic")]


def _eval_bp_rule(rule: Mapping, reading: Reading, history: VitalHistory) -> bool:
    sys_v = reading.measurements["systolic"]
    dia_v = reading.measurements["diastolic"]
    kind = rule["type"]
    if kind == "bp_compare":
        values = {"systolic": sys_v, "diastolic": dia_v}
        return any(
            _COMPARE[op](values[name], threshold)
            for name, op, threshold in rule["any"]
        )
    if kind == "bp_systolic_drop":
        # Previous reading = most recent prior systolic within the lookback
        # window; anything older leaves the rule inert.
        prior = history.window("systolic", reading.timestamp, rule["lookback_days"])
        if not prior:
            return False
        _t, prev = prior[-1]
        return prev - sys_v >= rule["drop_gte"]
    if kind == "bp_persistence":
        pairs = _bp_pairs(history)
        pairs = [p for p in pairs if p[0] < reading.timestamp]
        recent = pairs[-(rule["last_n"] - 1):] + [(reading.timestamp, sys_v, dia_v)]
        hits = sum(
            1
            for _t, s, d in recent
            if s > rule["systolic_gt"] or (d is not None and d > rule["diastolic_gt"])
        )
        return hits >= rule["min_hits"]
    raise ValueError(f"unknown BP rule type {kind!r}")


def _eval_weight_rule(rule: Mapping, reading: Reading, history: VitalHistory) -> bool:
    current = reading.measurements["bodyweight"]
    kind = rule["type"]
    if kind == "weight_delta":
        # Compare against the earliest reading inside the lookback window;
        # an empty window leaves the rule inert.
        points = history.window("bodyweight", reading.timestamp, rule["days"])
        if not points:
            return False
        _t, earliest = points[0]
        delta = current - earliest if rule["direction"] == "gain" else earliest - current
        return delta >= rule["kg"] if rule["inclusive"] else delta > rule["kg"]
    if kind == "weight_median_baseline":
        points = history.window("bodyweight", reading.timestamp, rule["days"])
        if len(points) < rule["min_points"]:
            return False
        base = median(v for _t, v in points)
        return abs(current - base) > rule["kg"]
    raise ValueError(f"unknown weight rule type {kind!r}")


def criteria1_classify(
    reading: Reading,
    flags: PatientFlags,
    history: VitalHistory,
    config: FixedRuleConfig | None = None,
) -> tuple[Severity, list[str]]:
    """Guideline threshold rules: URGENT if any rule fires, else NOT AN ISSUE."""
    config = config or default_fixed_rules()
    fired: list[str] = []
    if reading.device is DeviceKind.BLOOD_PRESSURE_CUFF:
        for rule in config.bp_rules:
            if _eval_bp_rule(rule, reading, history):
                fired.append(rule["id"])
    elif reading.device is DeviceKind.PULSE_OXIMETER:
        spo2 = reading.measurements["spo2"]
        for rule in config.spo2_rules:
            if rule["copd"] == flags.copd and spo2 < rule["threshold"]:
                fired.append(rule["id"])
    elif reading.device is DeviceKind.WEIGHT_SCALE:
        rules = list(config.weight_all_rules)
        if flags.heart_failure:
            rules = list(config.weight_hf_rules) + rules
        for rule in rules:
            if _eval_weight_rule(rule, reading, history):
                fired.append(rule["id"])
    severity = Severity.URGENT if fired else Severity.NOT_AN_ISSUE
    return severity, fired


# --- Criteria 2: modified early-warning score -------------------------------


@dataclass(frozen=True)
class News2Score:
    """Per-reading component points. Absent components are None.

    Scoring is per reading, so at most two components are present (SpO2 +
    pulse for oximeters, SBP + pulse for cuffs) and the total never
    exceeds 6. Weight readings have no scoreable parameter: total 0.
    """

    spo2_points: int | None = None
    sbp_points: int | None = None
    pulse_points: int | None = None
    scale_used: int | None = None

    @property
    def total(self) -> int:
        return sum(p for p in (self.spo2_points, self.sbp_points, self.pulse_points) if p)

    @property
    def max_single(self) -> int:
        present = [p for p in (self.spo2_points, self.sbp_points, self.pulse_points) if p is not None]
        return max(present, default=0)


def _score_spo2(value: float, flags: PatientFlags, news2: Mapping) -> tuple[int, int]:
    """Returns (points, scale). Scale 2 applies to COPD or home-O2 patients."""
    if flags.copd or flags.home_o2:
        if value < 93:
            return _band_points(value, news2["spo2_scale2"]), 2
        if flags.home_o2:
            return _band_points(value, news2["spo2_scale2_on_o2_above"]), 2
        return 0, 2
    return _band_points(value, news2["spo2_scale1"]), 1


def news2_score(
    reading: Reading,
    flags: PatientFlags,
    config: FixedRuleConfig | None = None,
) -> News2Score:
    """Score one reading; components depend on the device kind."""
    news2 = (config or default_fixed_rules()).news2
    if reading.device is DeviceKind.BLOOD_PRESSURE_CUFF:
        return News2Score(
            sbp_points=_band_points(reading.measurements["systolic"], news2["sbp"]),
            pulse_points=_band_points(reading.measurements["pulse_rate"], news2["pulse"]),
        )
    if reading.device is DeviceKind.PULSE_OXIMETER:
        spo2_points, scale = _score_spo2(reading.measurements["spo2"], flags, news2)
        return News2Score(
            spo2_points=spo2_points,
            pulse_points=_band_points(reading.measurements["pulse"], news2["pulse"]),
            scale_used=scale,
        )
    # Weight scales carry no scoreable parameter: defined zero score.
    return News2Score()


def news2_flag(score: News2Score, config: FixedRuleConfig | None = None) -> Severity:
    """Escalation ladder on the total; max severity when rows overlap."""
    rows = (config or default_fixed_rules()).news2["flag_rows"]
    total, max_single = score.total, score.max_single
    best = Severity.NOT_AN_ISSUE
    for row in rows:
        when = row["when"]
        if when == "total_eq":
            hit = total == row["value"]
        elif when == "total_between":
            hit = row["lo"] <= total <= row["hi"]
        elif when == "max_single_eq":
            hit = max_single == row["value"]
        elif when == "total_gte":
            hit = total >= row["value"]
        else:
            raise ValueError(f"unknown flag row {when!r}")
        if hit:
            best = severity_max(best, Severity(row["severity"]))
    return best


# --- Combined classifier -----------------------------------------------------


def fixed_classify(
    reading: Reading,
    flags: PatientFlags,
    history: VitalHistory,
    config: FixedRuleConfig | None = None,
) -> TriageTrace:
    """severity = max(Criteria 1, Criteria 2 flag), with a full trace."""
    config = config or default_fixed_rules()
    started = time.perf_counter()
    c1_severity, fired = criteria1_classify(reading, flags, history, config)
    score = news2_score(reading, flags, config)
    flag = news2_flag(score, config)

    rule_severities: dict[str, Severity] = {rule: Severity.URGENT for rule in fired}
    fired_all = list(fired)
    if flag > Severity.NOT_AN_ISSUE:
        fired_all.append("news2_flag")
        rule_severities["news2_flag"] = flag

    components: dict[str, float] = {
        "news2_total": float(score.total),
        "news2_max_single": float(score.max_single),
    }
    if score.spo2_points is not None:
        components["news2_spo2"] = float(score.spo2_points)
    if score.sbp_points is not None:
        components["news2_sbp"] = float(score.sbp_points)
    if score.pulse_points is not None:
        components["news2_pulse"] = float(score.pulse_points)
    if score.scale_used is not None:
        components["news2_spo2_scale"] = float(score.scale_used)

    return TriageTrace(
        rater_id=FIXED_RATER_ID,
        severity=severity_max(c1_severity, flag),
        fired_rules=tuple(fired_all),
        rule_severities=rule_severities,
        component_scores=components,
        duration_s=time.perf_counter() - started,
    )
