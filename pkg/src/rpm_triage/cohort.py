"""Seeded synthetic cohort and vital-sign simulator with an as-of context store.

Stands in for production monitoring data at desk scale: draws a patient
population whose demographics and comorbidity mix converge to configured
targets, emits device reading streams around per-patient baselines, injects
clinically shaped scenarios with machine-checkable numeric signatures, and
builds a context store (conditions, medications, encounters, notes, contacts)
that answers "what was known at time t" without leaking future data.

Everything downstream of ``SimConfig.seed`` is deterministic: re-running any
generation with the same config yields byte-identical output.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    DEVICE_MEASUREMENTS,
    SECONDS_PER_DAY,
    DeviceKind,
    PatientFlags,
    Reading,
    Severity,
    format_instant,
    parse_instant,
)

# Named RNG streams: default_rng accepts the [seed, stream, ...] list as
# entropy, so each generation phase draws from its own reproducible stream.
_COHORT_STREAM = 1
_READINGS_STREAM = 2
_CONTEXT_STREAM = 3
_SCENARIO_STREAM = 4


def _rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, *extra])


DEFAULT_DEVICE_MIX: Mapping[DeviceKind, float] = MappingProxyType({
    DeviceKind.BLOOD_PRESSURE_CUFF: 0.456,
    DeviceKind.PULSE_OXIMETER: 0.390,
    DeviceKind.WEIGHT_SCALE: 0.154,
})

DEFAULT_PREVALENCE: Mapping[str, float] = MappingProxyType({
    "hypertension": 0.451,
    "heart_failure": 0.319,
    "diabetes": 0.310,
    "cad": 0.271,
    "copd": 0.242,
    "obesity": 0.227,
    "ckd": 0.215,
})

DEFAULT_START = datetime(2026, 3, 2, 0, 0, 0, tzinfo=timezone.utc)

# Condition label carried in the context store for patients on home oxygen.
HOME_OXYGEN = "home_oxygen"


@dataclass(frozen=True)
class SimConfig:
    """Knobs for one simulation run.

    ``reading_skew`` is the Dirichlet concentration used to split readings
    across patients; small values give a heavy-tailed split where a minority
    of frequent measurers contributes most of the volume, which is what the
    history-window rules need to engage at small scale.
    """

    seed: int = 0
    patient_count: int = 340
    reading_count: int = 500
    span_days: int = 60
    start: datetime = DEFAULT_START
    device_mix: Mapping[DeviceKind, float] = field(
        default_factory=lambda: dict(DEFAULT_DEVICE_MIX)
    )
    prevalence: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_PREVALENCE)
    )
    scenario_quotas: Mapping["ScenarioKind", int] = field(default_factory=dict)
    age_mean: float = 70.3
    age_sd: float = 9.5
    age_range: tuple[float, float] = (32.0, 91.0)
    female_fraction: float = 0.602
    home_o2_given_copd: float = 0.30
    reading_skew: float = 0.35

    def __post_init__(self):
        if self.patient_count < 0 or self.reading_count < 0:
            raise ValueError("patient and reading counts must be non-negative")
        if self.span_days <= 0:
            raise ValueError("span_days must be positive")
        if self.start.tzinfo is None:
            raise ValueError("start must be timezone-aware")
        if self.age_sd <= 0 or self.reading_skew <= 0:
            raise ValueError("age_sd and reading_skew must be positive")
        lo, hi = self.age_range
        if not lo < hi:
            raise ValueError("age_range must be (low, high) with low < high")
        mix = {DeviceKind(k): float(v) for k, v in self.device_mix.items()}
        for kind, frac in mix.items():
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"device mix fraction out of [0, 1]: {kind.value}")
        total = sum(mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"device mix must sum to 1, got {total}")
        prev = {str(k): float(v) for k, v in self.prevalence.items()}
        for name, frac in prev.items():
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"prevalence out of [0, 1]: {name}")
        for frac, label in (
            (self.female_fraction, "female_fraction"),
            (self.home_o2_given_copd, "home_o2_given_copd"),
        ):
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"{label} out of [0, 1]")
        quotas = {ScenarioKind(k): int(v) for k, v in self.scenario_quotas.items()}
        for kind, quota in quotas.items():
            if quota < 0:
                raise ValueError(f"negative scenario quota: {kind.value}")
        # Freeze normalized mappings in a fixed iteration order so identical
        # config contents draw identical random streams.
        object.__setattr__(
            self,
            "device_mix",
            MappingProxyType(dict(sorted(mix.items(), key=lambda kv: kv[0].value))),
        )
        object.__setattr__(
            self, "prevalence", MappingProxyType(dict(sorted(prev.items())))
        )
        object.__setattr__(
            self,
            "scenario_quotas",
            MappingProxyType(dict(sorted(quotas.items(), key=lambda kv: kv[0].value))),
        )

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "patient_count": self.patient_count,
            "reading_count": self.reading_count,
            "span_days": self.span_days,
            "start": format_instant(self.start),
            "device_mix": {k.value: v for k, v in self.device_mix.items()},
            "prevalence": dict(self.prevalence),
            "scenario_quotas": {k.value: v for k, v in self.scenario_quotas.items()},
            "age_mean": self.age_mean,
            "age_sd": self.age_sd,
            "age_range": list(self.age_range),
            "female_fraction": self.female_fraction,
            "home_o2_given_copd": self.home_o2_given_copd,
            "reading_skew": self.reading_skew,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "SimConfig":
        kwargs = dict(record)
        if "start" in kwargs:
            kwargs["start"] = parse_instant(kwargs["start"])
        if "age_range" in kwargs:
            lo, hi = kwargs["age_range"]
            kwargs["age_range"] = (float(lo), float(hi))
        return cls(**kwargs)


@dataclass(frozen=True)
class PatientProfile:
    """One synthetic patient: demographics, comorbidity flags, and the
    per-series personal baseline (mean, spread) their readings are drawn
    around."""

    patient_id: str
    age_years: float
    sex: str
    flags: PatientFlags
    baselines: Mapping[str, tuple[float, float]]
    enrolled_at: datetime

    def __post_init__(self):
        if self.sex not in ("female", "male"):
            raise ValueError(f"sex must be 'female' or 'male', got {self.sex!r}")
        if not 0.0 < self.age_years < 130.0:
            raise ValueError(f"implausible age: {self.age_years}")
        object.__setattr__(
            self,
            "baselines",
            MappingProxyType(
                {k: (float(m), float(s)) for k, (m, s) in self.baselines.items()}
            ),
        )

    def to_record(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "age_years": self.age_years,
            "sex": self.sex,
            "flags": self.flags.to_record(),
            "baselines": {k: list(v) for k, v in self.baselines.items()},
            "enrolled_at": format_instant(self.enrolled_at),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "PatientProfile":
        return cls(
            patient_id=record["patient_id"],
            age_years=float(record["age_years"]),
            sex=record["sex"],
            flags=PatientFlags.from_record(record["flags"]),
            baselines={k: (v[0], v[1]) for k, v in record["baselines"].items()},
            enrolled_at=parse_instant(record["enrolled_at"]),
        )


def _draw_baselines(
    rng: np.random.Generator, flags: PatientFlags
) -> dict[str, tuple[float, float]]:
    # Comorbidity-conditioned normals: hypertensive patients sit chronically
    # above the 140 mmHg rule line, COPD/home-O2 patients run low SpO2.
    if "hypertension" in flags.conditions:
        sys_mu = rng.normal(149.0, 8.0)
        dia_mu = rng.normal(88.0, 6.0)
    else:
        sys_mu = rng.normal(122.0, 7.0)
        dia_mu = rng.normal(75.0, 5.0)
    dia_mu = min(dia_mu, sys_mu - 28.0)
    pulse_mu = rng.normal(74.0, 8.0)
    if flags.home_o2:
        spo2_mu = rng.normal(89.5, 1.2)
    elif flags.copd:
        spo2_mu = rng.normal(92.5, 1.4)
    else:
        spo2_mu = rng.normal(96.6, 0.9)
    spo2_mu = min(spo2_mu, 99.0)
    if "obesity" in flags.conditions:
        weight_mu = rng.normal(99.0, 13.0)
    else:
        weight_mu = rng.normal(78.0, 11.0)
    weight_mu = max(weight_mu, 42.0)
    return {
        "systolic": (sys_mu, rng.uniform(4.0, 9.0)),
        "diastolic": (dia_mu, rng.uniform(3.0, 6.5)),
        "pulse": (pulse_mu, rng.uniform(3.0, 7.0)),
        "spo2": (spo2_mu, rng.uniform(0.6, 1.5)),
        "bodyweight": (weight_mu, rng.uniform(0.25, 0.6)),
    }


def generate_cohort(config: SimConfig) -> list[PatientProfile]:
    """Draw the patient population.

    Ages come from a truncated normal (resampled into ``age_range``), sex and
    each comorbidity from independent Bernoulli draws, so empirical fractions
    converge to the configured targets as the count grows.
    """
    rng = _rng(config.seed, _COHORT_STREAM)
    lo, hi = config.age_range
    cohort: list[PatientProfile] = []
    for i in range(config.patient_count):
        age = float(rng.normal(config.age_mean, config.age_sd))
        while not lo <= age <= hi:
            age = float(rng.normal(config.age_mean, config.age_sd))
        sex = "female" if rng.random() < config.female_fraction else "male"
        conditions = {
            name for name, p in config.prevalence.items() if rng.random() < p
        }
        copd = "copd" in conditions
        home_o2 = copd and rng.random() < config.home_o2_given_copd
        if home_o2:
            conditions.add(HOME_OXYGEN)
        flags = PatientFlags(
            copd=copd,
            heart_failure="heart_failure" in conditions,
            home_o2=home_o2,
            conditions=frozenset(conditions),
        )
        enrolled = config.start - timedelta(days=int(rng.integers(45, 420)))
        cohort.append(
            PatientProfile(
                patient_id=f"sim-{i:05d}",
                age_years=round(age, 1),
                sex=sex,
                flags=flags,
                baselines=_draw_baselines(rng, flags),
                enrolled_at=enrolled,
            )
        )
    return cohort


def _draw_measurements(
    rng: np.random.Generator, profile: PatientProfile, kind: DeviceKind
) -> dict[str, float]:
    b = profile.baselines
    if kind is DeviceKind.BLOOD_PRESSURE_CUFF:
        systolic = float(np.clip(round(rng.normal(*b["systolic"])), 62, 262))
        diastolic = float(np.clip(round(rng.normal(*b["diastolic"])), 35, 165))
        diastolic = min(diastolic, systolic - 15.0)  # keep pulse pressure sane
        return {
            "systolic": systolic,
            "diastolic": diastolic,
            "pulse_rate": float(np.clip(round(rng.normal(*b["pulse"])), 30, 190)),
        }
    if kind is DeviceKind.PULSE_OXIMETER:
        return {
            "spo2": float(np.clip(round(rng.normal(*b["spo2"])), 68, 100)),
            "pulse": float(np.clip(round(rng.normal(*b["pulse"])), 30, 190)),
        }
    return {
        "bodyweight": float(max(round(rng.normal(*b["bodyweight"]), 2), 30.0))
    }


def generate_readings(
    cohort: Sequence[PatientProfile], config: SimConfig
) -> list[Reading]:
    """Emit ``config.reading_count`` readings across the cohort.

    Device kind is drawn per reading from the configured mix (so the emitted
    mix converges to target), timestamps are uniform over the span, and
    per-patient counts follow a Dirichlet-skewed split.
    """
    if not cohort:
        raise ValueError("cohort is empty")
    rng = _rng(config.seed, _READINGS_STREAM)
    weights = rng.dirichlet(np.full(len(cohort), config.reading_skew))
    counts = rng.multinomial(config.reading_count, weights)
    kinds = tuple(config.device_mix)
    probs = np.array([config.device_mix[k] for k in kinds])
    span_seconds = config.span_days * SECONDS_PER_DAY
    drafts = []
    for profile, count in zip(cohort, counts):
        for _ in range(int(count)):
            kind = kinds[int(rng.choice(len(kinds), p=probs))]
            ts = config.start + timedelta(seconds=int(rng.uniform(0, span_seconds)))
            drafts.append((ts, profile.patient_id, kind, _draw_measurements(rng, profile, kind)))
    drafts.sort(key=lambda d: (d[0], d[1], d[2].value, sorted(d[3].items())))
    return [
        Reading(f"r{i:06d}", pid, kind, ts, values)
        for i, (ts, pid, kind, values) in enumerate(drafts)
    ]


class ScenarioKind(str, Enum):
    HYPERTENSIVE_SURGE = "hypertensive_surge"
    EXERCISE_BP_DECLINE = "exercise_bp_decline"
    HF_WEIGHT_SURGE = "hf_weight_surge"
    CHRONIC_HYPOXEMIA = "chronic_hypoxemia"
    DEVICE_GLITCH = "device_glitch"
    STABLE_BASELINE = "stable_baseline"


# Device a scenario targets (None = any), the sub-measurement it rewrites,
# and the minimum series length it needs.
_SCENARIO_DEVICE: Mapping[ScenarioKind, DeviceKind | None] = MappingProxyType({
    ScenarioKind.HYPERTENSIVE_SURGE: DeviceKind.BLOOD_PRESSURE_CUFF,
    ScenarioKind.EXERCISE_BP_DECLINE: DeviceKind.BLOOD_PRESSURE_CUFF,
    ScenarioKind.HF_WEIGHT_SURGE: DeviceKind.WEIGHT_SCALE,
    ScenarioKind.CHRONIC_HYPOXEMIA: DeviceKind.PULSE_OXIMETER,
    ScenarioKind.DEVICE_GLITCH: DeviceKind.WEIGHT_SCALE,
    ScenarioKind.STABLE_BASELINE: None,
})

_PRIMARY_MEASUREMENT: Mapping[DeviceKind, str] = MappingProxyType({
    DeviceKind.BLOOD_PRESSURE_CUFF: "systolic",
    DeviceKind.PULSE_OXIMETER: "spo2",
    DeviceKind.WEIGHT_SCALE: "bodyweight",
})

_MIN_SERIES_LEN: Mapping[ScenarioKind, int] = MappingProxyType({
    ScenarioKind.HYPERTENSIVE_SURGE: 2,
    ScenarioKind.EXERCISE_BP_DECLINE: 3,
    ScenarioKind.HF_WEIGHT_SURGE: 4,
    ScenarioKind.CHRONIC_HYPOXEMIA: 4,
    ScenarioKind.DEVICE_GLITCH: 2,
    ScenarioKind.STABLE_BASELINE: 1,
})

# (magnitude, duration_days) defaults per kind. Magnitude is the minimum
# rise/fall/gain, the glitch multiplier, or the sigma band half-width.
_SCENARIO_DEFAULTS: Mapping[ScenarioKind, tuple[float, float]] = MappingProxyType({
    ScenarioKind.HYPERTENSIVE_SURGE: (81.0, 1.0),
    ScenarioKind.EXERCISE_BP_DECLINE: (15.0, 45.0 / 1440.0),
    ScenarioKind.HF_WEIGHT_SURGE: (5.2, 2.0),
    ScenarioKind.CHRONIC_HYPOXEMIA: (0.0, 14.0),
    ScenarioKind.DEVICE_GLITCH: (10.0, 0.0),
    ScenarioKind.STABLE_BASELINE: (2.0, 0.0),
})

# Labeling hint only; nothing downstream scores against it.
DEFAULT_EXPECTED_SEVERITY: Mapping[ScenarioKind, Severity] = MappingProxyType({
    ScenarioKind.HYPERTENSIVE_SURGE: Severity.URGENT,
    ScenarioKind.EXERCISE_BP_DECLINE: Severity.URGENT,
    ScenarioKind.HF_WEIGHT_SURGE: Severity.URGENT,
    ScenarioKind.CHRONIC_HYPOXEMIA: Severity.MONITOR,
    ScenarioKind.DEVICE_GLITCH: Severity.MONITOR,
    ScenarioKind.STABLE_BASELINE: Severity.NOT_AN_ISSUE,
})


@dataclass(frozen=True)
class ScenarioSpec:
    """One scenario to inject: what shape, how big, over how long, and what
    severity a test may expect it to provoke."""

    kind: ScenarioKind
    magnitude: float | None = None
    duration_days: float | None = None
    expected_severity: Severity | None = None

    def resolved(self) -> tuple[float, float]:
        mag, dur = _SCENARIO_DEFAULTS[self.kind]
        return (
            mag if self.magnitude is None else float(self.magnitude),
            dur if self.duration_days is None else float(self.duration_days),
        )

    def expected(self) -> Severity:
        if self.expected_severity is not None:
            return self.expected_severity
        return DEFAULT_EXPECTED_SEVERITY[self.kind]


def _check_series(series: Sequence[Reading], kind: ScenarioKind) -> list[Reading]:
    if not series:
        raise ValueError("scenario series is empty")
    patients = {r.patient_id for r in series}
    devices = {r.device for r in series}
    if len(patients) != 1 or len(devices) != 1:
        raise ValueError("scenario series must belong to one patient and one device")
    wanted = _SCENARIO_DEVICE[kind]
    device = next(iter(devices))
    if wanted is not None and device is not wanted:
        raise ValueError(
            f"{kind.value} targets {wanted.value}, series is {device.value}"
        )
    need = _MIN_SERIES_LEN[kind]
    if len(series) < need:
        raise ValueError(
            f"series too short for {kind.value}: need at least {need} readings, "
            f"got {len(series)}"
        )
    return sorted(series, key=lambda r: (r.timestamp, r.reading_id))


def _retime(
    target: datetime, floor: datetime | None, latest: datetime
) -> datetime:
    """Clamp a backdated timestamp between its predecessor and the series end."""
    t = target
    if floor is not None and t <= floor:
        t = floor + timedelta(seconds=1)
    if t >= latest:
        raise ValueError("readings too close together to retime scenario")
    return t


def inject_scenario(
    series: Sequence[Reading], spec: ScenarioSpec, seed: int
) -> list[Reading]:
    """Rewrite one patient's single-device series so it carries the scenario's
    numeric signature; returns a new time-sorted list with the same ids.

    Signatures (re-checkable via :func:`verify_scenario`):

    - hypertensive_surge: systolic rise >= magnitude within duration, final >= 200
    - exercise_bp_decline: monotone systolic fall >= magnitude across three
      readings within duration
    - hf_weight_surge: weight gain >= magnitude within duration from a stable
      baseline
    - chronic_hypoxemia: every SpO2 value in [86, 90], series spanning >= duration
    - device_glitch: one value >= magnitude x the rest-of-series median
    - stable_baseline: every value within magnitude sigma of the series median
    """
    ordered = _check_series(series, spec.kind)
    rng = _rng(seed, _SCENARIO_STREAM)
    magnitude, duration = spec.resolved()
    primary = _PRIMARY_MEASUREMENT[ordered[0].device]
    times = [r.timestamp for r in ordered]
    values = [dict(r.measurements) for r in ordered]
    baseline = statistics.median(v[primary] for v in values)
    spread = (
        statistics.stdev(v[primary] for v in values) if len(values) >= 2 else 0.0
    )
    kind = spec.kind

    if kind is ScenarioKind.HYPERTENSIVE_SURGE:
        prev_sys = float(round(rng.uniform(112.0, 126.0)))
        final_sys = float(round(max(prev_sys + magnitude, 200.0 + rng.uniform(2.0, 20.0))))
        floor = times[-3] if len(times) > 2 else None
        times[-2] = _retime(times[-1] - timedelta(hours=6), floor, times[-1])
        values[-2]["systolic"] = prev_sys
        values[-2]["diastolic"] = float(round(prev_sys * 0.63))
        values[-1]["systolic"] = final_sys
        values[-1]["diastolic"] = float(round(final_sys * rng.uniform(0.45, 0.50)))
    elif kind is ScenarioKind.EXERCISE_BP_DECLINE:
        start_sys = float(round(rng.uniform(92.0, 100.0)))
        fall1 = float(round(rng.uniform(6.0, 10.0)))
        fall2 = float(round(magnitude - fall1 + rng.uniform(1.0, 4.0)))
        floor = times[-4] if len(times) > 3 else None
        back = timedelta(seconds=int(duration * SECONDS_PER_DAY * 0.9))
        first = _retime(times[-1] - back, floor, times[-1])
        second = (first + (times[-1] - first) / 2).replace(microsecond=0)
        times[-3], times[-2] = first, second
        for idx, sys_v in zip((-3, -2, -1), (start_sys, start_sys - fall1, start_sys - fall1 - fall2)):
            values[idx]["systolic"] = sys_v
            values[idx]["diastolic"] = float(round(sys_v * rng.uniform(0.66, 0.72)))
    elif kind is ScenarioKind.HF_WEIGHT_SURGE:
        final = round(baseline + magnitude - 0.65 + rng.uniform(0.0, 0.65), 2)
        for v in values[:-2]:
            v["bodyweight"] = round(baseline + rng.uniform(-0.35, 0.35), 2)
        floor = times[-3] if len(times) > 2 else None
        back = timedelta(seconds=int(duration / 2 * SECONDS_PER_DAY))
        times[-2] = _retime(times[-1] - back, floor, times[-1])
        values[-2]["bodyweight"] = round(final - magnitude - rng.uniform(0.05, 0.30), 2)
        values[-1]["bodyweight"] = final
    elif kind is ScenarioKind.CHRONIC_HYPOXEMIA:
        if (times[-1] - times[0]).total_seconds() < duration * SECONDS_PER_DAY:
            raise ValueError(
                f"series too short for {kind.value}: must span {duration:g} days"
            )
        for v in values:
            v["spo2"] = float(round(rng.uniform(86.6, 89.4)))
    elif kind is ScenarioKind.DEVICE_GLITCH:
        # Scale from the largest untouched value so the multiple holds against
        # any central estimate a checker recomputes from the rest.
        ref = max(v[primary] for v in values[:-1])
        values[-1][primary] = round(ref * (magnitude + rng.uniform(0.5, 5.0)), 1)
    elif kind is ScenarioKind.STABLE_BASELINE:
        sigma = max(spread, 0.01)
        for v in values:
            v[primary] = round(
                baseline + rng.uniform(-0.95, 0.95) * magnitude * sigma, 2
            )

    out = [
        Reading(r.reading_id, r.patient_id, r.device, t, v)
        for r, t, v in zip(ordered, times, values)
    ]
    out.sort(key=lambda r: (r.timestamp, r.reading_id))
    return out


def verify_scenario(
    kind: ScenarioKind,
    series: Sequence[Reading],
    *,
    magnitude: float | None = None,
    duration_days: float | None = None,
    baseline: tuple[float, float] | None = None,
) -> bool:
    """Re-measure a scenario's numeric signature from an emitted series.

    Deliberately independent of the injection code paths: plain scans over
    the readings, no shared state beyond the per-kind constants.
    """
    mag, dur = _SCENARIO_DEFAULTS[kind]
    if magnitude is not None:
        mag = float(magnitude)
    if duration_days is not None:
        dur = float(duration_days)
    ordered = sorted(series, key=lambda r: (r.timestamp, r.reading_id))
    primary = _PRIMARY_MEASUREMENT[ordered[0].device]
    points = [(r.timestamp, r.measurements[primary]) for r in ordered]

    if kind is ScenarioKind.HYPERTENSIVE_SURGE:
        horizon = timedelta(days=dur)
        for i, (t0, v0) in enumerate(points):
            for t1, v1 in points[i + 1:]:
                if t1 - t0 <= horizon and v1 - v0 >= mag and v1 >= 200.0:
                    return True
        return False
    if kind is ScenarioKind.EXERCISE_BP_DECLINE:
        horizon = timedelta(days=dur)
        for (t0, v0), (_, v1), (t2, v2) in zip(points, points[1:], points[2:]):
            if t2 - t0 <= horizon and v0 > v1 > v2 and v0 - v2 >= mag:
                return True
        return False
    if kind is ScenarioKind.HF_WEIGHT_SURGE:
        horizon = timedelta(days=dur)
        for i, (t0, v0) in enumerate(points):
            for t1, v1 in points[i + 1:]:
                if t1 - t0 <= horizon and v1 - v0 >= mag:
                    return True
        return False
    if kind is ScenarioKind.CHRONIC_HYPOXEMIA:
        suffix = []
        for t, v in reversed(points):
            if not 86.0 <= v <= 90.0:
                break
            suffix.append(t)
        if len(suffix) < 2:
            return False
        return (suffix[0] - suffix[-1]).total_seconds() >= dur * SECONDS_PER_DAY
    if kind is ScenarioKind.DEVICE_GLITCH:
        for i, (_, v) in enumerate(points):
            rest = [w for j, (_, w) in enumerate(points) if j != i]
            if rest and v >= mag * statistics.median(rest):
                return True
        return False
    if kind is ScenarioKind.STABLE_BASELINE:
        vals = [v for _, v in points]
        if baseline is not None:
            mu, sigma = baseline
        else:
            mu = statistics.median(vals)
            sigma = statistics.stdev(vals) if len(vals) >= 2 else 0.0
        # One reporting unit (0.01) of slack for value rounding.
        tol = mag * max(sigma, 0.01) + 0.01
        return all(abs(v - mu) <= tol for v in vals)
    raise ValueError(f"unknown scenario kind: {kind}")


@dataclass(frozen=True)
class InjectedScenario:
    """Manifest entry: which readings carry which scenario."""

    patient_id: str
    kind: ScenarioKind
    device: DeviceKind
    reading_ids: tuple[str, ...]
    expected_severity: Severity

    def to_record(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "kind": self.kind.value,
            "device": self.device.value,
            "reading_ids": list(self.reading_ids),
            "expected_severity": int(self.expected_severity),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "InjectedScenario":
        return cls(
            patient_id=record["patient_id"],
            kind=ScenarioKind(record["kind"]),
            device=DeviceKind(record["device"]),
            reading_ids=tuple(record["reading_ids"]),
            expected_severity=Severity.from_value(record["expected_severity"]),
        )


def _series_eligible(
    kind: ScenarioKind, series: Sequence[Reading], profile: PatientProfile
) -> bool:
    if len(series) < _MIN_SERIES_LEN[kind]:
        return False
    if kind is ScenarioKind.HF_WEIGHT_SURGE and not profile.flags.heart_failure:
        return False
    if kind is ScenarioKind.CHRONIC_HYPOXEMIA:
        span = (series[-1].timestamp - series[0].timestamp).total_seconds()
        if span < _SCENARIO_DEFAULTS[kind][1] * SECONDS_PER_DAY:
            return False
    return True


def apply_scenario_quotas(
    readings: Sequence[Reading],
    cohort: Sequence[PatientProfile],
    config: SimConfig,
) -> tuple[list[Reading], list[InjectedScenario]]:
    """Inject ``config.scenario_quotas`` into eligible patient series.

    Longest series are claimed first; each patient hosts at most one
    scenario so test labels stay unambiguous. Raises when a quota cannot
    be met by the generated data.
    """
    profiles = {p.patient_id: p for p in cohort}
    grouped: dict[tuple[str, DeviceKind], list[Reading]] = {}
    for r in sorted(readings, key=lambda r: (r.timestamp, r.reading_id)):
        grouped.setdefault((r.patient_id, r.device), []).append(r)

    by_id = {r.reading_id: r for r in readings}
    used_patients: set[str] = set()
    injected: list[InjectedScenario] = []
    draw = 0
    for kind, quota in config.scenario_quotas.items():
        wanted_device = _SCENARIO_DEVICE[kind]
        candidates = [
            (pid, device, series)
            for (pid, device), series in grouped.items()
            if (wanted_device is None or device is wanted_device)
            and pid not in used_patients
            and _series_eligible(kind, series, profiles[pid])
        ]
        candidates.sort(key=lambda c: (-len(c[2]), c[0], c[1].value))
        if len(candidates) < quota:
            raise ValueError(
                f"cannot satisfy scenario quota {kind.value}={quota}: "
                f"only {len(candidates)} eligible series"
            )
        for pid, device, series in candidates[:quota]:
            spec = ScenarioSpec(kind)
            rewritten = inject_scenario(
                series, spec, seed=int(_rng(config.seed, _SCENARIO_STREAM, draw).integers(2**63))
            )
            draw += 1
            before = {r.reading_id: r for r in series}
            changed = tuple(
                r.reading_id
                for r in rewritten
                if before[r.reading_id].measurements != r.measurements
                or before[r.reading_id].timestamp != r.timestamp
            )
            for r in rewritten:
                by_id[r.reading_id] = r
            used_patients.add(pid)
            injected.append(
                InjectedScenario(pid, kind, device, changed, spec.expected())
            )
    merged = sorted(by_id.values(), key=lambda r: (r.timestamp, r.reading_id))
    return merged, injected


@dataclass(frozen=True)
class DatedItem:
    """A labelled context fact with the instant it became known."""

    label: str
    at: datetime

    def to_record(self) -> dict:
        return {"label": self.label, "at": format_instant(self.at)}

    @classmethod
    def from_record(cls, record: Mapping) -> "DatedItem":
        return cls(label=record["label"], at=parse_instant(record["at"]))


@dataclass(frozen=True)
class Encounter:
    encounter_id: str
    reason: str
    admitted_at: datetime
    discharged_at: datetime

    def __post_init__(self):
        if self.discharged_at < self.admitted_at:
            raise ValueError(f"encounter {self.encounter_id}: discharge precedes admission")

    def to_record(self) -> dict:
        return {
            "encounter_id": self.encounter_id,
            "reason": self.reason,
            "admitted_at": format_instant(self.admitted_at),
            "discharged_at": format_instant(self.discharged_at),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "Encounter":
        return cls(
            encounter_id=record["encounter_id"],
            reason=record["reason"],
            admitted_at=parse_instant(record["admitted_at"]),
            discharged_at=parse_instant(record["discharged_at"]),
        )


@dataclass(frozen=True)
class PatientContext:
    """Everything the store knows about one patient, fully timestamped."""

    patient_id: str
    age_years: float
    sex: str
    enrolled_at: datetime
    conditions: tuple[DatedItem, ...]
    medications: tuple[DatedItem, ...]
    encounters: tuple[Encounter, ...]
    notes: tuple[DatedItem, ...]
    contacts: tuple[datetime, ...]

    def to_record(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "age_years": self.age_years,
            "sex": self.sex,
            "enrolled_at": format_instant(self.enrolled_at),
            "conditions": [c.to_record() for c in self.conditions],
            "medications": [m.to_record() for m in self.medications],
            "encounters": [e.to_record() for e in self.encounters],
            "notes": [n.to_record() for n in self.notes],
            "contacts": [format_instant(t) for t in self.contacts],
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "PatientContext":
        return cls(
            patient_id=record["patient_id"],
            age_years=float(record["age_years"]),
            sex=record["sex"],
            enrolled_at=parse_instant(record["enrolled_at"]),
            conditions=tuple(DatedItem.from_record(c) for c in record["conditions"]),
            medications=tuple(DatedItem.from_record(m) for m in record["medications"]),
            encounters=tuple(Encounter.from_record(e) for e in record["encounters"]),
            notes=tuple(DatedItem.from_record(n) for n in record["notes"]),
            contacts=tuple(parse_instant(t) for t in record["contacts"]),
        )


@dataclass(frozen=True)
class ContextSnapshot:
    """The patient's chart as of one instant; never contains later data.

    Demographics are registration facts and always present; before
    enrollment every list is empty and ``enrolled_at`` is withheld.
    """

    patient_id: str
    as_of: datetime
    age_years: float
    sex: str
    enrolled_at: datetime | None
    conditions: tuple[DatedItem, ...]
    medications: tuple[DatedItem, ...]
    encounters: tuple[Encounter, ...]
    notes: tuple[DatedItem, ...]
    last_contact: datetime | None

    def flags(self) -> PatientFlags:
        """Comorbidity flags derivable from what was documented by ``as_of``."""
        labels = {c.label for c in self.conditions}
        return PatientFlags(
            copd="copd" in labels,
            heart_failure="heart_failure" in labels,
            home_o2=HOME_OXYGEN in labels,
            conditions=frozenset(labels),
        )

    def max_timestamp(self) -> datetime | None:
        """Latest instant attached to any contained datum (audit hook)."""
        stamps = [c.at for c in self.conditions]
        stamps += [m.at for m in self.medications]
        stamps += [e.discharged_at for e in self.encounters]
        stamps += [n.at for n in self.notes]
        if self.last_contact is not None:
            stamps.append(self.last_contact)
        if self.enrolled_at is not None:
            stamps.append(self.enrolled_at)
        return max(stamps) if stamps else None

    def to_record(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "as_of": format_instant(self.as_of),
            "age_years": self.age_years,
            "sex": self.sex,
            "enrolled_at": (
                None if self.enrolled_at is None else format_instant(self.enrolled_at)
            ),
            "conditions": [c.to_record() for c in self.conditions],
            "medications": [m.to_record() for m in self.medications],
            "encounters": [e.to_record() for e in self.encounters],
            "notes": [n.to_record() for n in self.notes],
            "last_contact": (
                None if self.last_contact is None else format_instant(self.last_contact)
            ),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "ContextSnapshot":
        return cls(
            patient_id=record["patient_id"],
            as_of=parse_instant(record["as_of"]),
            age_years=float(record["age_years"]),
            sex=record["sex"],
            enrolled_at=(
                None if record["enrolled_at"] is None
                else parse_instant(record["enrolled_at"])
            ),
            conditions=tuple(DatedItem.from_record(c) for c in record["conditions"]),
            medications=tuple(DatedItem.from_record(m) for m in record["medications"]),
            encounters=tuple(Encounter.from_record(e) for e in record["encounters"]),
            notes=tuple(DatedItem.from_record(n) for n in record["notes"]),
            last_contact=(
                None if record["last_contact"] is None
                else parse_instant(record["last_contact"])
            ),
        )


class ContextStore:
    """Immutable-after-build mapping of patient id to full context."""

    def __init__(self, patients: Iterable[PatientContext] = ()):
        self._patients: dict[str, PatientContext] = {}
        for ctx in patients:
            self.add(ctx)

    def add(self, ctx: PatientContext) -> None:
        if ctx.patient_id in self._patients:
            raise ValueError(f"duplicate patient: {ctx.patient_id}")
        self._patients[ctx.patient_id] = ctx

    def get(self, patient_id: str) -> PatientContext:
        try:
            return self._patients[patient_id]
        except KeyError:
            raise KeyError(f"unknown patient: {patient_id}") from None

    def patient_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._patients))

    def __len__(self) -> int:
        return len(self._patients)

    def __contains__(self, patient_id: str) -> bool:
        return patient_id in self._patients

    def to_record(self) -> dict:
        return {
            "format": "rpm-triage.context-store.v1",
            "patients": [
                self._patients[pid].to_record() for pid in self.patient_ids()
            ],
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "ContextStore":
        if record.get("format") != "rpm-triage.context-store.v1":
            raise ValueError(f"unrecognized context store format: {record.get('format')!r}")
        return cls(PatientContext.from_record(p) for p in record["patients"])


def as_of(store: ContextStore, patient_id: str, t: datetime) -> ContextSnapshot:
    """The patient's chart restricted to what was known at ``t``.

    Monotone in ``t``: earlier snapshots are subsets of later ones.
    Encounters are included once discharged (an open encounter's discharge
    date would itself be future data).
    """
    ctx = store.get(patient_id)
    if t < ctx.enrolled_at:
        return ContextSnapshot(
            patient_id=ctx.patient_id,
            as_of=t,
            age_years=ctx.age_years,
            sex=ctx.sex,
            enrolled_at=None,
            conditions=(),
            medications=(),
            encounters=(),
            notes=(),
            last_contact=None,
        )
    contacts = [c for c in ctx.contacts if c <= t]
    return ContextSnapshot(
        patient_id=ctx.patient_id,
        as_of=t,
        age_years=ctx.age_years,
        sex=ctx.sex,
        enrolled_at=ctx.enrolled_at,
        conditions=tuple(c for c in ctx.conditions if c.at <= t),
        medications=tuple(m for m in ctx.medications if m.at <= t),
        encounters=tuple(e for e in ctx.encounters if e.discharged_at <= t),
        notes=tuple(n for n in ctx.notes if n.at <= t),
        last_contact=max(contacts) if contacts else None,
    )


def snapshot_for(store: ContextStore, reading: Reading) -> ContextSnapshot:
    return as_of(store, reading.patient_id, reading.timestamp)


_CONDITION_MEDS: Mapping[str, tuple[str, ...]] = MappingProxyType({
    "hypertension": ("lisinopril 20 mg daily", "amlodipine 5 mg daily"),
    "heart_failure": ("furosemide 40 mg daily", "carvedilol 12.5 mg twice daily"),
    "diabetes": ("metformin 1000 mg twice daily",),
    "cad": ("aspirin 81 mg daily", "atorvastatin 40 mg daily"),
    "copd": ("tiotropium 18 mcg inhaled daily",),
    "ckd": (),
    "obesity": (),
    HOME_OXYGEN: ("home oxygen 2 L/min continuous",),
})

_ENCOUNTER_REASONS = (
    "heart failure exacerbation",
    "copd exacerbation",
    "chest pain evaluation",
    "hypertensive urgency",
    "community acquired pneumonia",
    "medication adjustment",
)

_NOTE_TEMPLATES = (
    "Televisit: {cond} stable on current regimen.",
    "Care coordination call: medication adherence reviewed, no new symptoms.",
    "Nursing note: device technique reviewed with patient.",
    "Follow-up note: {cond} management plan unchanged.",
)


def build_context_store(
    cohort: Sequence[PatientProfile], config: SimConfig
) -> ContextStore:
    """Grow a deterministic chart for every patient: conditions documented
    shortly after enrollment, condition-driven medications, a few encounters,
    notes, and outreach contacts scattered over the span."""
    rng = _rng(config.seed, _CONTEXT_STREAM)
    end = config.start + timedelta(days=config.span_days)
    store = ContextStore()
    for profile in cohort:
        enrolled = profile.enrolled_at
        active_days = max((end - enrolled).days, 1)
        conditions = []
        medications = []
        for name in sorted(profile.flags.conditions):
            documented = enrolled + timedelta(seconds=int(rng.uniform(0, 14 * SECONDS_PER_DAY)))
            conditions.append(DatedItem(name, documented))
            for med in _CONDITION_MEDS.get(name, ()):
                started = documented + timedelta(seconds=int(rng.uniform(0, 10 * SECONDS_PER_DAY)))
                medications.append(DatedItem(med, started))
        encounters = []
        for k in range(int(rng.poisson(1.2))):
            admitted = enrolled + timedelta(
                seconds=int(rng.uniform(0, active_days * SECONDS_PER_DAY))
            )
            stay = timedelta(seconds=int(rng.uniform(1, 9) * SECONDS_PER_DAY))
            encounters.append(
                Encounter(
                    encounter_id=f"{profile.patient_id}-enc{k}",
                    reason=_ENCOUNTER_REASONS[int(rng.integers(len(_ENCOUNTER_REASONS)))],
                    admitted_at=admitted,
                    discharged_at=admitted + stay,
                )
            )
        encounters.sort(key=lambda e: e.admitted_at)
        cond_labels = sorted(profile.flags.conditions) or ["routine monitoring"]
        notes = []
        for _ in range(1 + int(rng.poisson(1.0))):
            template = _NOTE_TEMPLATES[int(rng.integers(len(_NOTE_TEMPLATES)))]
            written = enrolled + timedelta(
                seconds=int(rng.uniform(0, active_days * SECONDS_PER_DAY))
            )
            cond = cond_labels[int(rng.integers(len(cond_labels)))]
            notes.append(DatedItem(template.format(cond=cond.replace("_", " ")), written))
        notes.sort(key=lambda n: n.at)
        contacts = sorted(
            enrolled + timedelta(seconds=int(rng.uniform(0, active_days * SECONDS_PER_DAY)))
            for _ in range(int(rng.poisson(2.0)))
        )
        store.add(
            PatientContext(
                patient_id=profile.patient_id,
                age_years=profile.age_years,
                sex=profile.sex,
                enrolled_at=enrolled,
                conditions=tuple(sorted(conditions, key=lambda c: (c.at, c.label))),
                medications=tuple(sorted(medications, key=lambda m: (m.at, m.label))),
                encounters=tuple(encounters),
                notes=tuple(notes),
                contacts=tuple(contacts),
            )
        )
    return store


@dataclass(frozen=True)
class SimDataset:
    """One complete simulation: population, readings, scenario manifest,
    and the context store they were generated against."""

    config: SimConfig
    cohort: tuple[PatientProfile, ...]
    readings: tuple[Reading, ...]
    scenarios: tuple[InjectedScenario, ...]
    store: ContextStore


def generate_dataset(config: SimConfig) -> SimDataset:
    cohort = generate_cohort(config)
    readings = generate_readings(cohort, config) if cohort else []
    if config.scenario_quotas:
        readings, scenarios = apply_scenario_quotas(readings, cohort, config)
    else:
        scenarios = []
    store = build_context_store(cohort, config)
    return SimDataset(
        config=config,
        cohort=tuple(cohort),
        readings=tuple(readings),
        scenarios=tuple(scenarios),
        store=store,
    )


def write_cohort(path: str | Path, cohort: Iterable[PatientProfile]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for profile in cohort:
            fh.write(json.dumps(profile.to_record(), sort_keys=True) + "\n")
            count += 1
    return count


def read_cohort(path: str | Path) -> list[PatientProfile]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(PatientProfile.from_record(json.loads(line)))
    return out


def write_context_store(path: str | Path, store: ContextStore) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(store.to_record(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_context_store(path: str | Path) -> ContextStore:
    with open(path, encoding="utf-8") as fh:
        return ContextStore.from_record(json.load(fh))


def write_scenarios(path: str | Path, scenarios: Iterable[InjectedScenario]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_record() for s in scenarios], fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_scenarios(path: str | Path) -> list[InjectedScenario]:
    with open(path, encoding="utf-8") as fh:
        return [InjectedScenario.from_record(r) for r in json.load(fh)]
