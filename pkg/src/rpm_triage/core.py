"""Shared vitals vocabulary: readings, severity ordering, history windows.

Every other module builds on these types. All of them are immutable values
after construction and the operations are pure functions, so they are safe
to use from any number of concurrent workers.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum, IntEnum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence


class Severity(IntEnum):
    """Four-level ordinal triage label. Higher code = higher escalation."""

    NOT_AN_ISSUE = 0
    MONITOR = 1
    URGENT = 2
    EMERGENCY = 3

    @classmethod
    def from_value(cls, value) -> "Severity":
        """Coerce an int code or a (case-insensitive) name to a Severity."""
        if isinstance(value, Severity):
            return value
        if isinstance(value, bool):
            raise ValueError(f"not a severity: {value!r}")
        if isinstance(value, int):
            return cls(value)
        if isinstance(value, str):
            key = value.strip().upper().replace(" ", "_").replace("-", "_")
            try:
                return cls[key]
            except KeyError:
                pass
            if key.isdigit():
                return cls(int(key))
        raise ValueError(f"not a severity: {value!r}")


# Display metadata: expected response timeframe per level.
RESPONSE_TIMEFRAMES: Mapping[Severity, str] = MappingProxyType({
    Severity.EMERGENCY: "clinical outreach within 60 minutes",
    Severity.URGENT: "clinical outreach within 24 hours",
    Severity.MONITOR: "review within 14 days",
    Severity.NOT_AN_ISSUE: "no action required",
})


class ActionType(str, Enum):
    """Operational follow-up routing, recorded but never scored."""

    NO_ACTION = "no_action"
    EQUIPMENT_RESOLUTION = "equipment_resolution"
    PATIENT_EDUCATION = "patient_education"
    CLINICAL_REVIEW = "clinical_review"
    URGENT_REVIEW = "urgent_review"
    CARE_COORDINATION = "care_coordination"


class DeviceKind(str, Enum):
    BLOOD_PRESSURE_CUFF = "blood_pressure_cuff"
    PULSE_OXIMETER = "pulse_oximeter"
    WEIGHT_SCALE = "weight_scale"


# Sub-measurement names per device kind; a reading must carry exactly these.
DEVICE_MEASUREMENTS: Mapping[DeviceKind, tuple[str, ...]] = MappingProxyType({
    DeviceKind.BLOOD_PRESSURE_CUFF: ("systolic", "diastolic", "pulse_rate"),
    DeviceKind.PULSE_OXIMETER: ("spo2", "pulse"),
    DeviceKind.WEIGHT_SCALE: ("bodyweight",),
})

# Cuff pulse_rate and oximeter pulse are the same physiological parameter;
# history pools them under one series key.
_SERIES_ALIASES: Mapping[str, str] = MappingProxyType({"pulse_rate": "pulse"})

LB_TO_KG = 0.45359237

SECONDS_PER_DAY = 86_400


def series_key(measurement_name: str) -> str:
    """Canonical history series name for a sub-measurement."""
    return _SERIES_ALIASES.get(measurement_name, measurement_name)


def severity_max(a: Severity, b: Severity) -> Severity:
    """Ordinal maximum; commutative, associative, idempotent."""
    return a if a >= b else b


def collapse_actionable(s: Severity) -> bool:
    """Binary alerting threshold: URGENT and EMERGENCY are actionable."""
    return s >= Severity.URGENT


def within_one(a: Severity, b: Severity) -> bool:
    return abs(int(a) - int(b)) <= 1


def parse_instant(text: str) -> datetime:
    """RFC 3339 UTC timestamp -> aware datetime (second resolution)."""
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        raise ValueError(f"timestamp must carry a UTC offset: {text!r}")
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_instant(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).replace(microsecond=0).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


def _as_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        raise ValueError("timestamps must be timezone-aware")
    return ts.astimezone(timezone.utc).replace(microsecond=0)


@dataclass(frozen=True)
class Reading:
    """One device measurement event.

    Values are kept exactly as ingested: device glitches (a 1000+ kg scale
    reading, say) must survive to the classifiers, so there is no range
    clamping here — only finiteness and name checks.
    """

    reading_id: str
    patient_id: str
    device: DeviceKind
    timestamp: datetime
    measurements: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "timestamp", _as_utc(self.timestamp))
        expected = set(DEVICE_MEASUREMENTS[self.device])
        got = set(self.measurements)
        if got != expected:
            raise ValueError(
                f"reading {self.reading_id}: {self.device.value} requires "
                f"measurements {sorted(expected)}, got {sorted(got)}"
            )
        for name, value in self.measurements.items():
            if not math.isfinite(float(value)):
                raise ValueError(
                    f"reading {self.reading_id}: non-finite value for {name}"
                )
        object.__setattr__(
            self,
            "measurements",
            MappingProxyType({k: float(v) for k, v in self.measurements.items()}),
        )

    def to_record(self) -> dict:
        return {
            "reading_id": self.reading_id,
            "patient_id": self.patient_id,
            "device": self.device.value,
            "timestamp": format_instant(self.timestamp),
            "measurements": dict(self.measurements),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "Reading":
        return cls(
            reading_id=record["reading_id"],
            patient_id=record["patient_id"],
            device=DeviceKind(record["device"]),
            timestamp=parse_instant(record["timestamp"]),
            measurements={k: float(v) for k, v in record["measurements"].items()},
        )


@dataclass(frozen=True)
class PatientFlags:
    """Comorbidity snapshot used by the rule baselines.

    Immutable per evaluation call; ``conditions`` carries optional extra
    tags (hypertension, diabetes, ckd, cad, obesity) for the simulator.
    """

    copd: bool = False
    heart_failure: bool = False
    home_o2: bool = False
    conditions: frozenset[str] = frozenset()

    def to_record(self) -> dict:
        return {
            "copd": self.copd,
            "heart_failure": self.heart_failure,
            "home_o2": self.home_o2,
            "conditions": sorted(self.conditions),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "PatientFlags":
        return cls(
            copd=bool(record.get("copd", False)),
            heart_failure=bool(record.get("heart_failure", False)),
            home_o2=bool(record.get("home_o2", False)),
            conditions=frozenset(record.get("conditions", ())),
        )


class VitalHistory:
    """Per-patient time-ordered value series, one per measurement name.

    Heart-rate points from BP cuffs (``pulse_rate``) and oximeters
    (``pulse``) land in one pooled ``pulse`` series. Insertion keeps each
    series sorted, so timestamps are non-decreasing regardless of the order
    readings arrive in.
    """

    def __init__(self, patient_id: str):
        self.patient_id = patient_id
        self._series: dict[str, list[tuple[datetime, float]]] = {}

    def add(self, name: str, timestamp: datetime, value: float) -> None:
        ts = _as_utc(timestamp)
        seq = self._series.setdefault(series_key(name), [])
        entry = (ts, float(value))
        idx = bisect.bisect_right([t for t, _ in seq], ts)
        seq.insert(idx, entry)

    def add_reading(self, reading: Reading) -> None:
        if reading.patient_id != self.patient_id:
            raise ValueError(
                f"reading {reading.reading_id} belongs to {reading.patient_id}, "
                f"not {self.patient_id}"
            )
        for name, value in reading.measurements.items():
            self.add(name, reading.timestamp, value)

    def series(self, name: str) -> tuple[tuple[datetime, float], ...]:
        return tuple(self._series.get(series_key(name), ()))

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._series))

    def window(
        self, name: str, end: datetime, days: int
    ) -> list[tuple[datetime, float]]:
        """Points with end - days*24h <= t < end, time-ordered.

        The point at exactly ``end`` is excluded: a reading is never part
        of its own history. Unknown names yield an empty list.
        """
        if days <= 0:
            raise ValueError("days must be positive")
        end = _as_utc(end)
        start = end - timedelta(seconds=days * SECONDS_PER_DAY)
        seq = self._series.get(series_key(name), ())
        return [(t, v) for t, v in seq if start <= t < end]

    def before(self, end: datetime) -> "VitalHistory":
        """Copy containing only points strictly before ``end`` (as-of trim)."""
        end = _as_utc(end)
        trimmed = VitalHistory(self.patient_id)
        for key, seq in self._series.items():
            kept = [(t, v) for t, v in seq if t < end]
            if kept:
                trimmed._series[key] = kept
        return trimmed

    def to_record(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "series": {
                key: [[format_instant(t), v] for t, v in seq]
                for key, seq in sorted(self._series.items())
            },
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "VitalHistory":
        hist = cls(record["patient_id"])
        for key, seq in record.get("series", {}).items():
            for t, v in seq:
                hist.add(key, parse_instant(t), float(v))
        return hist


def window(
    history: VitalHistory, name: str, end: datetime, days: int
) -> list[tuple[datetime, float]]:
    """Module-level alias for :meth:`VitalHistory.window`."""
    return history.window(name, end, days)


def build_histories(readings: Iterable[Reading]) -> dict[str, VitalHistory]:
    """Fold readings into one VitalHistory per patient."""
    histories: dict[str, VitalHistory] = {}
    for reading in readings:
        hist = histories.setdefault(
            reading.patient_id, VitalHistory(reading.patient_id)
        )
        hist.add_reading(reading)
    return histories


@dataclass(frozen=True)
class TriageTrace:
    """A classifier's output plus the fired rules and scores behind it.

    ``rule_severities`` maps each fired rule id to the severity it carried;
    the trace severity must equal their maximum (NOT_AN_ISSUE when nothing
    fired).
    """

    rater_id: str
    severity: Severity
    fired_rules: tuple[str, ...] = ()
    rule_severities: Mapping[str, Severity] = field(default_factory=dict)
    component_scores: Mapping[str, float] = field(default_factory=dict)
    action: ActionType | None = None
    duration_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "rule_severities", MappingProxyType(dict(self.rule_severities))
        )
        object.__setattr__(
            self, "component_scores", MappingProxyType(dict(self.component_scores))
        )
        object.__setattr__(self, "fired_rules", tuple(self.fired_rules))
        if set(self.fired_rules) != set(self.rule_severities):
            raise ValueError("fired_rules and rule_severities must list the same rules")
        implied = max(
            self.rule_severities.values(), default=Severity.NOT_AN_ISSUE
        )
        if self.severity != implied:
            raise ValueError(
                f"trace severity {self.severity.name} != max fired-rule "
                f"severity {Severity(implied).name}"
            )
        if self.duration_s < 0:
            raise ValueError("duration must be >= 0")

    def to_record(self) -> dict:
        return {
            "rater_id": self.rater_id,
            "severity": int(self.severity),
            "fired_rules": list(self.fired_rules),
            "rule_severities": {k: int(v) for k, v in self.rule_severities.items()},
            "component_scores": dict(self.component_scores),
            "action": self.action.value if self.action else None,
            "duration_s": self.duration_s,
        }


# --- Readings file format -------------------------------------------------
#
# One JSON record per line:
#   {"reading_id": ..., "patient_id": ..., "device": ...,
#    "timestamp": "RFC3339 UTC", "measurements": {name: value}}
# This is the lingua franca of every CLI subcommand.


def write_readings(path: str | Path, readings: Iterable[Reading]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for reading in readings:
            fh.write(json.dumps(reading.to_record(), sort_keys=True) + "\n")
            count += 1
    return count


def read_readings(path: str | Path) -> list[Reading]:
    readings = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                readings.append(Reading.from_record(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: bad reading record: {exc}") from exc
    return readings
