"""The pluggable rater port.

Everything that can grade a reading — rule baselines, stochastic mocks,
recorded-log replays, an external HTTP agent — hides behind one stateless
``rate(case, run_index)`` contract, so studies never care which kind of
rater they are driving. Failures from the external adapter are first-class
results, not exceptions: a study records them and moves on.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

import httpx
import numpy as np

from .adaptive_rules import AdaptiveConfig, adaptive_classify
from .cohort import ContextSnapshot, ContextStore, snapshot_for
from .core import (
    ActionType,
    PatientFlags,
    Reading,
    Severity,
    TriageTrace,
    VitalHistory,
    build_histories,
)
from .fixed_rules import FixedRuleConfig, fixed_classify


TIMEOUT = "timeout"
MALFORMED_RESPONSE = "malformed_response"
CONNECTION_ERROR = "connection_error"
FAILURE_KINDS = (TIMEOUT, MALFORMED_RESPONSE, CONNECTION_ERROR)


@dataclass(frozen=True)
class RaterCase:
    """One grading task: the reading plus everything knowable at its instant.

    Construction enforces temporal correctness, so a rater can never see
    context or history from after the reading it is grading.
    """

    reading: Reading
    history: VitalHistory
    snapshot: ContextSnapshot | None = None

    def __post_init__(self):
        if self.history.patient_id != self.reading.patient_id:
            raise ValueError(
                f"case {self.reading.reading_id}: history belongs to "
                f"{self.history.patient_id}, reading to {self.reading.patient_id}"
            )
        for name in self.history.names():
            for t, _ in self.history.series(name):
                if t >= self.reading.timestamp:
                    raise ValueError(
                        f"case {self.reading.reading_id}: history contains "
                        f"data at or after the reading instant"
                    )
        if self.snapshot is not None:
            if self.snapshot.patient_id != self.reading.patient_id:
                raise ValueError(
                    f"case {self.reading.reading_id}: snapshot belongs to "
                    f"{self.snapshot.patient_id}"
                )
            stamp = self.snapshot.max_timestamp()
            if stamp is not None and stamp > self.reading.timestamp:
                raise ValueError(
                    f"case {self.reading.reading_id}: snapshot contains "
                    f"data from after the reading instant"
                )

    @property
    def case_id(self) -> str:
        return self.reading.reading_id

    def flags(self) -> PatientFlags:
        return self.snapshot.flags() if self.snapshot is not None else PatientFlags()


@dataclass(frozen=True)
class RaterVerdict:
    """A completed grading: the trace, optional free-text rationale, and the
    wall-clock duration of the trial."""

    trace: TriageTrace
    duration_s: float
    rationale: str | None = None

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError("verdict duration must be non-negative")

    @property
    def severity(self) -> Severity:
        return self.trace.severity

    @property
    def action(self) -> ActionType | None:
        return self.trace.action


@dataclass(frozen=True)
class RaterFailure:
    """A trial that produced no verdict; ``kind`` is one of
    ``timeout`` / ``malformed_response`` / ``connection_error``."""

    kind: str
    rater_id: str
    duration_s: float
    detail: str = ""

    def __post_init__(self):
        if self.kind not in FAILURE_KINDS:
            raise ValueError(f"unknown failure kind: {self.kind}")
        if self.duration_s < 0:
            raise ValueError("failure duration must be non-negative")


RaterResult = RaterVerdict | RaterFailure


def is_failure(result: RaterResult) -> bool:
    return isinstance(result, RaterFailure)


@runtime_checkable
class Rater(Protocol):
    rater_id: str

    def rate(self, case: RaterCase, run_index: int = 0) -> RaterResult: ...


def rate(rater: Rater, case: RaterCase, run_index: int = 0) -> RaterResult:
    """Grade one case. Stateless: nothing about prior calls may change the
    outcome, and deterministic raters must ignore ``run_index``."""
    return rater.rate(case, run_index)


def make_cases(
    readings: Sequence[Reading],
    store: ContextStore | None = None,
    histories: Mapping[str, VitalHistory] | None = None,
) -> list[RaterCase]:
    """Build temporally correct cases: each reading sees only strictly
    earlier history and an as-of context snapshot."""
    if histories is None:
        histories = build_histories(readings)
    cases = []
    for reading in readings:
        history = histories[reading.patient_id].before(reading.timestamp)
        snapshot = snapshot_for(store, reading) if store is not None else None
        cases.append(RaterCase(reading=reading, history=history, snapshot=snapshot))
    return cases


@dataclass(frozen=True)
class FixedBaselineRater:
    """Deterministic rater over the fixed-threshold rule set; comorbidity
    flags come from the case snapshot, falling back to a caller-supplied
    table when no context store is in play."""

    config: FixedRuleConfig | None = None
    flags_by_patient: Mapping[str, PatientFlags] = field(default_factory=dict)
    rater_id: str = "fixed_baseline"

    def rate(self, case: RaterCase, run_index: int = 0) -> RaterVerdict:
        if case.snapshot is not None:
            flags = case.snapshot.flags()
        else:
            flags = self.flags_by_patient.get(case.reading.patient_id, PatientFlags())
        trace = fixed_classify(case.reading, flags, case.history, self.config)
        return RaterVerdict(trace=trace, duration_s=trace.duration_s)


@dataclass(frozen=True)
class AdaptiveBaselineRater:
    """Deterministic rater over the rolling personal-baseline rules."""

    config: AdaptiveConfig | None = None
    rater_id: str = "adaptive_baseline"

    def rate(self, case: RaterCase, run_index: int = 0) -> RaterVerdict:
        trace = adaptive_classify(case.reading, case.history, self.config)
        return RaterVerdict(trace=trace, duration_s=trace.duration_s)


@dataclass(frozen=True)
class NoiseKernel:
    """4x4 row-stochastic matrix: probability of emitting label j given the
    latent label i. Rows must sum to 1 within 1e-12."""

    matrix: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.matrix)
        if len(rows) != 4 or any(len(row) != 4 for row in rows):
            raise ValueError("noise kernel must be 4x4")
        for i, row in enumerate(rows):
            if any(v < 0 or not np.isfinite(v) for v in row):
                raise ValueError(f"kernel row {i} has negative or non-finite mass")
            if abs(sum(row) - 1.0) > 1e-12:
                raise ValueError(f"kernel row {i} sums to {sum(row)!r}, not 1")
        object.__setattr__(self, "matrix", rows)

    def row(self, latent: Severity) -> tuple[float, ...]:
        return self.matrix[int(latent)]

    @classmethod
    def identity(cls) -> "NoiseKernel":
        return cls(tuple(tuple(1.0 if i == j else 0.0 for j in range(4))
                         for i in range(4)))

    @classmethod
    def uniform(cls) -> "NoiseKernel":
        return cls(((0.25,) * 4,) * 4)

    @classmethod
    def near_diagonal(cls, p: float) -> "NoiseKernel":
        """Diagonal mass ``p``; the remainder split over adjacent levels."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("diagonal mass must be in [0, 1]")
        rows = []
        for i in range(4):
            row = [0.0] * 4
            row[i] = p
            neighbors = [j for j in (i - 1, i + 1) if 0 <= j < 4]
            for j in neighbors:
                row[j] = (1.0 - p) / len(neighbors)
            rows.append(tuple(row))
        return cls(tuple(rows))


# Default operational routing a mock attaches to each severity.
_MOCK_ACTIONS: Mapping[Severity, ActionType] = {
    Severity.NOT_AN_ISSUE: ActionType.NO_ACTION,
    Severity.MONITOR: ActionType.PATIENT_EDUCATION,
    Severity.URGENT: ActionType.CLINICAL_REVIEW,
    Severity.EMERGENCY: ActionType.URGENT_REVIEW,
}


def _case_entropy(case_id: str) -> int:
    digest = hashlib.blake2b(case_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class MockRater:
    """Stochastic rater: emits a label drawn from the kernel row of the
    case's latent label.

    The RNG stream is keyed on (seed, case id, run index) alone, so the
    same trial gives the same label no matter the evaluation order,
    sharding, or how many other cases were rated first.
    """

    kernel: NoiseKernel
    latent: Mapping[str, Severity]
    seed: int
    rater_id: str = "mock"

    def rate(self, case: RaterCase, run_index: int = 0) -> RaterVerdict:
        try:
            latent = self.latent[case.case_id]
        except KeyError:
            raise KeyError(f"no latent label for case {case.case_id}") from None
        rng = np.random.default_rng(
            [self.seed, _case_entropy(case.case_id), run_index]
        )
        severity = Severity.from_value(int(rng.choice(4, p=self.kernel.row(latent))))
        duration = round(float(rng.uniform(4.0, 30.0)), 1)
        fired = {} if severity is Severity.NOT_AN_ISSUE else {"mock_label": severity}
        trace = TriageTrace(
            rater_id=self.rater_id,
            severity=severity,
            action=_MOCK_ACTIONS[severity],
            fired_rules=tuple(fired),
            rule_severities=fired,
            component_scores={"latent": float(int(latent))},
            duration_s=duration,
        )
        return RaterVerdict(trace=trace, duration_s=duration)


def mock_rater(
    kernel: NoiseKernel,
    latent: Mapping[str, Severity],
    seed: int,
    rater_id: str = "mock",
) -> MockRater:
    return MockRater(kernel=kernel, latent=latent, seed=seed, rater_id=rater_id)


RATER_LOG_FIELDS = (
    "case_id",      # reading id the trial graded
    "run_index",    # 0-based repeat number within the study
    "rater_id",     # who graded
    "outcome",      # "verdict" or a failure kind
    "severity",     # integer severity code, null on failure
    "action",       # action code, null when none recorded
    "rationale",    # free text, null when none recorded
    "duration_s",   # wall-clock seconds for the trial
    "detail",       # failure detail, null on success
)


@dataclass(frozen=True)
class RaterLogEntry:
    """One row of the record/replay log; field order matches
    ``RATER_LOG_FIELDS``."""

    case_id: str
    run_index: int
    rater_id: str
    outcome: str
    severity: int | None
    action: str | None
    rationale: str | None
    duration_s: float
    detail: str | None = None

    def __post_init__(self):
        if self.outcome != "verdict" and self.outcome not in FAILURE_KINDS:
            raise ValueError(f"unknown outcome: {self.outcome}")
        if self.outcome == "verdict" and self.severity is None:
            raise ValueError("verdict rows need a severity")

    @classmethod
    def from_result(
        cls, case_id: str, run_index: int, result: RaterResult
    ) -> "RaterLogEntry":
        if isinstance(result, RaterFailure):
            return cls(
                case_id=case_id,
                run_index=run_index,
                rater_id=result.rater_id,
                outcome=result.kind,
                severity=None,
                action=None,
                rationale=None,
                duration_s=result.duration_s,
                detail=result.detail or None,
            )
        return cls(
            case_id=case_id,
            run_index=run_index,
            rater_id=result.trace.rater_id,
            outcome="verdict",
            severity=int(result.severity),
            action=None if result.action is None else result.action.value,
            rationale=result.rationale,
            duration_s=result.duration_s,
            detail=None,
        )

    def to_result(self) -> RaterResult:
        if self.outcome != "verdict":
            return RaterFailure(
                kind=self.outcome,
                rater_id=self.rater_id,
                duration_s=self.duration_s,
                detail=self.detail or "",
            )
        severity = Severity.from_value(self.severity)
        fired = {} if severity is Severity.NOT_AN_ISSUE else {"recorded_label": severity}
        trace = TriageTrace(
            rater_id=self.rater_id,
            severity=severity,
            action=None if self.action is None else ActionType(self.action),
            fired_rules=tuple(fired),
            rule_severities=fired,
            component_scores={},
            duration_s=self.duration_s,
        )
        return RaterVerdict(
            trace=trace, duration_s=self.duration_s, rationale=self.rationale
        )

    def to_record(self) -> dict:
        return {name: getattr(self, name) for name in RATER_LOG_FIELDS}

    @classmethod
    def from_record(cls, record: Mapping) -> "RaterLogEntry":
        return cls(**{name: record[name] for name in RATER_LOG_FIELDS})


class RecordingRater:
    """Pass-through wrapper that appends every trial to ``log``."""

    def __init__(self, inner: Rater):
        self.inner = inner
        self.log: list[RaterLogEntry] = []

    @property
    def rater_id(self) -> str:
        return self.inner.rater_id

    def rate(self, case: RaterCase, run_index: int = 0) -> RaterResult:
        result = self.inner.rate(case, run_index)
        self.log.append(RaterLogEntry.from_result(case.case_id, run_index, result))
        return result


class ReplayRater:
    """Replays a recorded log verbatim, keyed by (case id, run index)."""

    def __init__(self, entries: Iterable[RaterLogEntry], rater_id: str | None = None):
        self._entries: dict[tuple[str, int], RaterLogEntry] = {}
        ids = set()
        for entry in entries:
            key = (entry.case_id, entry.run_index)
            if key in self._entries:
                raise ValueError(f"duplicate log entry for {key}")
            self._entries[key] = entry
            ids.add(entry.rater_id)
        if rater_id is None:
            if len(ids) != 1:
                raise ValueError("log covers multiple raters; pass rater_id")
            rater_id = next(iter(ids))
        self.rater_id = rater_id

    def rate(self, case: RaterCase, run_index: int = 0) -> RaterResult:
        try:
            return self._entries[(case.case_id, run_index)].to_result()
        except KeyError:
            raise KeyError(
                f"no recorded trial for case {case.case_id} run {run_index}"
            ) from None


def write_rater_log(path: str | Path, entries: Iterable[RaterLogEntry]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_record(), sort_keys=True) + "\n")
            count += 1
    return count


def read_rater_log(path: str | Path) -> list[RaterLogEntry]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(RaterLogEntry.from_record(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad log row: {exc}") from exc
    return out


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to reach an external grading agent."""

    url: str
    rater_id: str = "external_agent"
    timeout_s: float = 120.0
    auth_token: str | None = None
    max_in_flight: int = 4

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")


class ExternalRater:
    """HTTP adapter for an external agent.

    Sends ``{reading, snapshot, history, run_index}``, expects
    ``{severity, action, rationale}``. One request per trial, never
    retried: a retry would break the independence the studies assume.
    In-flight requests are bounded by ``max_in_flight``.
    """

    def __init__(
        self,
        config: EndpointConfig,
        transport: httpx.BaseTransport | None = None,
    ):
        self.config = config
        self.rater_id = config.rater_id
        self._gate = threading.BoundedSemaphore(config.max_in_flight)
        headers = {}
        if config.auth_token:
            headers["Authorization"] = f"Bearer {config.auth_token}"
        self._client = httpx.Client(
            timeout=config.timeout_s, headers=headers, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def _payload(self, case: RaterCase, run_index: int) -> dict:
        return {
            "reading": case.reading.to_record(),
            "snapshot": None if case.snapshot is None else case.snapshot.to_record(),
            "history": case.history.to_record(),
            "run_index": run_index,
        }

    def rate(self, case: RaterCase, run_index: int = 0) -> RaterResult:
        started = time.perf_counter()
        with self._gate:
            try:
                response = self._client.post(
                    self.config.url, json=self._payload(case, run_index)
                )
            except httpx.TimeoutException as exc:
                return RaterFailure(
                    kind=TIMEOUT,
                    rater_id=self.rater_id,
                    duration_s=time.perf_counter() - started,
                    detail=str(exc) or "request timed out",
                )
            except httpx.TransportError as exc:
                return RaterFailure(
                    kind=CONNECTION_ERROR,
                    rater_id=self.rater_id,
                    duration_s=time.perf_counter() - started,
                    detail=str(exc) or type(exc).__name__,
                )
        duration = time.perf_counter() - started
        try:
            body = response.json()
            if response.status_code != 200:
                raise ValueError(f"status {response.status_code}")
            severity = Severity.from_value(body["severity"])
            raw_action = body.get("action")
            action = None if raw_action is None else ActionType(raw_action)
            rationale = body.get("rationale")
            if rationale is not None and not isinstance(rationale, str):
                raise ValueError("rationale must be text")
        except (ValueError, KeyError, TypeError) as exc:
            return RaterFailure(
                kind=MALFORMED_RESPONSE,
                rater_id=self.rater_id,
                duration_s=duration,
                detail=str(exc),
            )
        fired = {} if severity is Severity.NOT_AN_ISSUE else {"agent_label": severity}
        trace = TriageTrace(
            rater_id=self.rater_id,
            severity=severity,
            action=action,
            fired_rules=tuple(fired),
            rule_severities=fired,
            component_scores={},
            duration_s=duration,
        )
        return RaterVerdict(trace=trace, duration_s=duration, rationale=rationale)


def external_adapter(
    config: EndpointConfig, transport: httpx.BaseTransport | None = None
) -> ExternalRater:
    return ExternalRater(config, transport=transport)
