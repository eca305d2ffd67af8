"""Patient-specific adaptive baseline.

Instead of fixed clinical thresholds, each sub-measurement is judged
against the patient's own trailing 30 days:

* Rule 1 (deviation): |v - mu| against 2/3/4 sigma bands.
* Rule 2 (rate of change): |v - previous| against the same multiples of
  the SD of the window's consecutive deltas.
* Rule 3 (persistence): 3 or more consecutive readings, scanning backward
  from the current one, outside a band.

Bands map to severities 2s->MONITOR, 3s->URGENT, 4s->EMERGENCY. A series
with fewer than 10 prior in-window readings contributes NOT AN ISSUE; the
final severity is the max across the reading's sub-measurements and rules.

Because everything is relative to the patient's own mean, a chronically
abnormal but stable vital normalizes to "in range" here. That blind spot
is intentional: it is the main failure mode this baseline exists to
demonstrate against the fixed-threshold one.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from statistics import fmean, stdev
from types import MappingProxyType
from typing import Mapping, Sequence

from .core import (
    Reading,
    Severity,
    TriageTrace,
    VitalHistory,
    series_key,
)

ADAPTIVE_RATER_ID = "adaptive_baseline"

# Band multiplier -> severity. Band 0 means "inside every band".
BAND_TO_SEVERITY: Mapping[int, Severity] = MappingProxyType({
    0: Severity.NOT_AN_ISSUE,
    2: Severity.MONITOR,
    3: Severity.URGENT,
    4: Severity.EMERGENCY,
})

_DEFAULT_FLOORS = MappingProxyType({
    "systolic": 1.0,
    "diastolic": 1.0,
    "pulse": 1.0,
    "spo2": 0.5,
    "bodyweight": 0.1,
})


@dataclass(frozen=True)
class AdaptiveConfig:
    """Tunables; shipped defaults live in data/adaptive_config.json.

    ``sigma_floors`` guards the sigma=0 degenerate case: a perfectly
    constant history plus one tick of device noise must not jump straight
    to EMERGENCY through the strict > comparison.
    """

    window_days: int = 30
    min_prior_readings: int = 10
    persistence_run_length: int = 3
    rule3_use_floored_sigma: bool = True
    sigma_floors: Mapping[str, float] = field(default_factory=lambda: _DEFAULT_FLOORS)

    def __post_init__(self):
        object.__setattr__(self, "sigma_floors", MappingProxyType(dict(self.sigma_floors)))
        if self.window_days <= 0 or self.min_prior_readings < 1:
            raise ValueError("window_days and min_prior_readings must be positive")
        if self.persistence_run_length < 1:
            raise ValueError("persistence_run_length must be positive")
        for name, floor in self.sigma_floors.items():
            if floor < 0:
                raise ValueError(f"negative sigma floor for {name}")

    def floor_for(self, series: str) -> float:
        return self.sigma_floors.get(series, 0.0)


def load_adaptive_config(path=None) -> AdaptiveConfig:
    """Load tunables from ``path``, or the packaged defaults."""
    if path is None:
        text = resources.files("rpm_triage").joinpath("data/adaptive_config.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    raw = json.loads(text)
    return AdaptiveConfig(
        window_days=int(raw["window_days"]),
        min_prior_readings=int(raw["min_prior_readings"]),
        persistence_run_length=int(raw["persistence_run_length"]),
        rule3_use_floored_sigma=bool(raw["rule3_use_floored_sigma"]),
        sigma_floors={k: float(v) for k, v in raw["sigma_floors"].items()},
    )


_DEFAULT_CONFIG: AdaptiveConfig | None = None


def default_adaptive_config() -> AdaptiveConfig:
    global _DEFAULT_CONFIG
    if _DEFAULT_CONFIG is None:
        _DEFAULT_CONFIG = load_adaptive_config()
    return _DEFAULT_CONFIG


@dataclass(frozen=True)
class RollingStats:
    """Window summary. mu/sigma are None exactly when the window is empty."""

    n: int
    mu: float | None
    sigma: float | None


@dataclass(frozen=True)
class DeltaStats:
    """SD of the window's consecutive deltas; None until m >= 2."""

    m: int
    sigma_delta: float | None


@dataclass(frozen=True)
class BandOutcome:
    rule: str  # deviation | delta | persistence
    band: int  # 0 (none), 2, 3 or 4
    severity: Severity

    def __post_init__(self):
        if self.rule not in ("deviation", "delta", "persistence"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.severity != BAND_TO_SEVERITY.get(self.band):
            raise ValueError(f"band {self.band} does not map to {self.severity.name}")


def _band(distance: float, sigma: float) -> int:
    for k in (4, 3, 2):
        if distance > k * sigma:
            return k
    return 0


def _outcome(rule: str, band: int) -> BandOutcome:
    return BandOutcome(rule, band, BAND_TO_SEVERITY[band])


def rolling_stats(
    history: VitalHistory,
    name: str,
    end: datetime,
    config: AdaptiveConfig | None = None,
) -> RollingStats:
    """Mean and sample SD over the trailing window, excluding ``end`` itself."""
    config = config or default_adaptive_config()
    values = [v for _t, v in history.window(name, end, config.window_days)]
    if not values:
        return RollingStats(0, None, None)
    sigma = stdev(values) if len(values) >= 2 else 0.0
    return RollingStats(len(values), fmean(values), sigma)


def delta_stats(
    history: VitalHistory,
    name: str,
    end: datetime,
    config: AdaptiveConfig | None = None,
) -> DeltaStats:
    """Sample SD of consecutive in-window deltas (m = n - 1 of them)."""
    config = config or default_adaptive_config()
    values = [v for _t, v in history.window(name, end, config.window_days)]
    deltas = [b - a for a, b in zip(values, values[1:])]
    if len(deltas) < 2:
        return DeltaStats(len(deltas), None)
    return DeltaStats(len(deltas), stdev(deltas))


def classify_deviation(v: float, stats: RollingStats, floor: float = 0.0) -> BandOutcome:
    """Rule 1: current value vs the rolling mean."""
    sigma = max(stats.sigma, floor)
    return _outcome("deviation", _band(abs(v - stats.mu), sigma))


def classify_delta(
    v: float, v_prev: float, dstats: DeltaStats, floor: float = 0.0
) -> BandOutcome:
    """Rule 2: jump since the previous in-window reading."""
    if dstats.m < 2:
        return _outcome("delta", 0)
    sigma = max(dstats.sigma_delta, floor)
    return _outcome("delta", _band(abs(v - v_prev), sigma))


def classify_persistence(
    recent: Sequence[float],
    stats: RollingStats,
    floor: float = 0.0,
    run_length: int = 3,
) -> BandOutcome:
    """Rule 3: sustained excursion.

    ``recent`` is time-ordered with the current value last; the run is
    counted backward from it and breaks at the first in-band value.
    """
    sigma = max(stats.sigma, floor)
    for k in (4, 3, 2):
        run = 0
        for x in reversed(recent):
            if abs(x - stats.mu) > k * sigma:
                run += 1
            else:
                break
        if run >= run_length:
            return _outcome("persistence", k)
    return _outcome("persistence", 0)


def adaptive_classify(
    reading: Reading,
    history: VitalHistory,
    config: AdaptiveConfig | None = None,
) -> TriageTrace:
    """Max severity across the reading's sub-measurements and all three rules."""
    config = config or default_adaptive_config()
    started = time.perf_counter()
    fired: dict[str, Severity] = {}
    components: dict[str, float] = {}

    for name in sorted(reading.measurements):
        value = reading.measurements[name]
        series = series_key(name)
        points = history.window(name, reading.timestamp, config.window_days)
        components[f"{series}_n"] = float(len(points))
        if len(points) < config.min_prior_readings:
            continue

        values = [v for _t, v in points]
        stats = RollingStats(len(values), fmean(values), stdev(values))
        floor = config.floor_for(series)
        components[f"{series}_mu"] = stats.mu
        components[f"{series}_sigma"] = max(stats.sigma, floor)

        outcomes = [classify_deviation(value, stats, floor)]

        deltas = [b - a for a, b in zip(values, values[1:])]
        dstats = DeltaStats(len(deltas), stdev(deltas) if len(deltas) >= 2 else None)
        outcomes.append(classify_delta(value, values[-1], dstats, floor))

        outcomes.append(
            classify_persistence(
                values + [value],
                stats,
                floor if config.rule3_use_floored_sigma else 0.0,
                config.persistence_run_length,
            )
        )

        for out in outcomes:
            components[f"{series}_{out.rule}_band"] = float(out.band)
            if out.severity > Severity.NOT_AN_ISSUE:
                fired[f"{series}_{out.rule}"] = out.severity

    severity = max(fired.values(), default=Severity.NOT_AN_ISSUE)
    return TriageTrace(
        rater_id=ADAPTIVE_RATER_ID,
        severity=severity,
        fired_rules=tuple(fired),
        rule_severities=fired,
        component_scores=components,
        duration_s=time.perf_counter() - started,
    )
