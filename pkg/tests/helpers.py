"""Tiny factories shared across test modules."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

from rpm_triage.core import DeviceKind, Reading, VitalHistory

T0 = datetime(2026, 1, 15, 12, 0, 0, tzinfo=timezone.utc)

_counter = 0


def _next_id() -> str:
    global _counter
    _counter += 1
    return f"r{_counter:06d}"


def at(days: float = 0.0, minutes: float = 0.0) -> datetime:
    return T0 + timedelta(days=days, minutes=minutes)


def bp(systolic, diastolic, pulse_rate=80.0, ts=None, patient="p1") -> Reading:
    return Reading(
        reading_id=_next_id(),
        patient_id=patient,
        device=DeviceKind.BLOOD_PRESSURE_CUFF,
        timestamp=ts or T0,
        measurements={
            "systolic": systolic,
            "diastolic": diastolic,
            "pulse_rate": pulse_rate,
        },
    )


def spo2(value, pulse=70.0, ts=None, patient="p1") -> Reading:
    return Reading(
        reading_id=_next_id(),
        patient_id=patient,
        device=DeviceKind.PULSE_OXIMETER,
        timestamp=ts or T0,
        measurements={"spo2": value, "pulse": pulse},
    )


def wt(kg, ts=None, patient="p1") -> Reading:
    return Reading(
        reading_id=_next_id(),
        patient_id=patient,
        device=DeviceKind.WEIGHT_SCALE,
        timestamp=ts or T0,
        measurements={"bodyweight": kg},
    )


def history_of(*readings: Reading) -> VitalHistory:
    hist = VitalHistory(readings[0].patient_id if readings else "p1")
    for reading in readings:
        hist.add_reading(reading)
    return hist
