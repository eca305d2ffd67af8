"""Blinded review-queue state: sessions, grades, payloads, persistence.

The store owns one grading queue per reviewer (from an assignment plan),
hands out case payloads with every piece of patient context trimmed to the
reading instant, and records grades through a write-ahead log so a restart
after any accepted submission loses nothing.

Blinding is enforced structurally: a payload is built from a fixed schema
that simply has no field for another reviewer's grade, a rule verdict, or
an anchor marker, and an auditor walks every key of every payload to prove
it. The id a client sees for a queue slot is its position in that
reviewer's queue, which is the same for first passes and repeats.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

from ..agreement import RatingRow
from ..assignment import AssignmentPlan
from ..cohort import ContextStore
from ..core import ActionType, Severity, format_instant, parse_instant
from ..raters import RaterCase

MAX_DURATION_S = 24 * 3600.0

# No payload key may contain one of these fragments; this is the structural
# blinding check. Values are clinical text and are not scanned.
FORBIDDEN_KEY_FRAGMENTS = (
    "grade", "verdict", "anchor", "rater", "latent", "severity",
    "presentation_index",
)


class AuthError(ValueError):
    """Unknown or wrong token."""


@dataclass
class ReviewSession:
    reviewer_id: str
    token: str
    cursor: int
    started_at: datetime
    updated_at: datetime


@dataclass(frozen=True)
class GradeRecord:
    reviewer_id: str
    position: int
    sample_id: str
    presentation_index: int  # 1-based, from the plan; never serialized to clients
    severity: Severity
    action: ActionType
    duration_s: float
    submitted_at: datetime

    def to_record(self) -> dict:
        return {
            "reviewer_id": self.reviewer_id,
            "position": self.position,
            "sample_id": self.sample_id,
            "presentation_index": self.presentation_index,
            "severity": int(self.severity),
            "action": self.action.value,
            "duration_s": self.duration_s,
            "submitted_at": format_instant(self.submitted_at),
        }


@dataclass(frozen=True)
class SubmissionResult:
    accepted: bool
    duplicate: bool
    current_head: str | None  # set on out-of-order rejection
    graded: int


def default_guidelines() -> str:
    ref = resources.files("rpm_triage.data").joinpath("severity_guidelines.txt")
    return ref.read_text(encoding="utf-8")


def presentation_ref(reviewer_id: str, position: int) -> str:
    return f"{reviewer_id}#{position:04d}"


def parse_presentation_ref(ref: str) -> tuple[str, int]:
    reviewer_id, _, raw = ref.rpartition("#")
    if not reviewer_id or not raw.isdigit():
        raise ValueError(f"malformed presentation id: {ref!r}")
    return reviewer_id, int(raw)


def _derive_token(reviewer_id: str, salt: str) -> str:
    digest = hashlib.blake2b(
        f"{salt}|{reviewer_id}".encode("utf-8"), digest_size=12
    )
    return digest.hexdigest()


def audit_payload(payload: Mapping) -> list[str]:
    """All key paths whose name leaks grading state; empty means blind."""
    violations: list[str] = []

    def walk(node, path):
        if isinstance(node, Mapping):
            for key, value in node.items():
                lowered = str(key).lower()
                if any(frag in lowered for frag in FORBIDDEN_KEY_FRAGMENTS):
                    violations.append(f"{path}.{key}" if path else str(key))
                walk(value, f"{path}.{key}" if path else str(key))
        elif isinstance(node, (list, tuple)):
            for i, value in enumerate(node):
                walk(value, f"{path}[{i}]")

    walk(payload, "")
    return violations


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


class ReviewStore:
    """Queue, session, and grade state for one review study."""

    def __init__(
        self,
        plan: AssignmentPlan,
        cases: Mapping[str, RaterCase],
        context: ContextStore | None = None,
        tokens: Mapping[str, str] | None = None,
        export_token: str | None = None,
        wal_path: str | Path | None = None,
        guidelines: str | None = None,
        token_salt: str = "review-service",
        clock: Callable[[], datetime] = _utc_now,
    ):
        missing = sorted(set(plan.sample_ids) - set(cases))
        if missing:
            raise ValueError(
                f"plan references {len(missing)} samples with no case data: "
                f"{missing[:5]}"
            )
        self.plan = plan
        self.cases = dict(cases)
        self.context = context
        self.guidelines = guidelines if guidelines is not None else default_guidelines()
        self._clock = clock
        self._wal_path = Path(wal_path) if wal_path is not None else None
        self._wal_handle = None
        self._lock = threading.Lock()
        self._reviewer_locks = {r: threading.Lock() for r in plan.reviewer_ids}

        if tokens is None:
            tokens = {
                r: _derive_token(r, token_salt) for r in plan.reviewer_ids
            }
        unknown = sorted(set(tokens) - set(plan.reviewer_ids))
        if unknown:
            raise ValueError(f"tokens for reviewers not in the plan: {unknown}")
        if len(set(tokens.values())) != len(tokens):
            raise ValueError("reviewer tokens must be distinct")
        self.tokens = dict(tokens)
        self.export_token = (
            export_token if export_token is not None
            else _derive_token("export", token_salt)
        )
        started = self._clock()
        self.sessions = {
            reviewer_id: ReviewSession(
                reviewer_id=reviewer_id,
                token=token,
                cursor=0,
                started_at=started,
                updated_at=started,
            )
            for reviewer_id, token in self.tokens.items()
        }
        self._by_token = {s.token: s for s in self.sessions.values()}
        self.grades: dict[tuple[str, int], GradeRecord] = {}
        if self._wal_path is not None and self._wal_path.exists():
            self._replay_wal()
        if self._wal_path is not None:
            self._wal_path.parent.mkdir(parents=True, exist_ok=True)
            self._wal_handle = open(self._wal_path, "a", encoding="utf-8")

    # --- sessions -------------------------------------------------------

    def authenticate(self, token: str) -> ReviewSession:
        try:
            return self._by_token[token]
        except KeyError:
            raise AuthError("unknown review token") from None

    # --- payloads -------------------------------------------------------

    def _trends(self, case: RaterCase) -> dict[str, list[dict]]:
        reading = case.reading
        out: dict[str, list[dict]] = {}
        for name in case.history.names():
            points = [
                {"t": format_instant(t), "v": v}
                for t, v in case.history.window(name, reading.timestamp, days=30)
            ]
            if points:
                out[name] = points
        for name, value in sorted(reading.measurements.items()):
            out.setdefault(name, []).append(
                {"t": format_instant(reading.timestamp), "v": value}
            )
        return out

    def _calls(self, case: RaterCase) -> list[dict]:
        reading = case.reading
        if self.context is not None and reading.patient_id in self.context:
            contacts = self.context.get(reading.patient_id).contacts
            stamps = [t for t in contacts if t <= reading.timestamp]
        elif case.snapshot is not None and case.snapshot.last_contact is not None:
            stamps = [case.snapshot.last_contact]
        else:
            stamps = []
        return [{"at": format_instant(t)} for t in sorted(stamps)]

    def build_payload(self, reviewer_id: str, position: int) -> dict:
        """The full blinded case view for one queue slot."""
        item = self.plan.queues[reviewer_id][position]
        case = self.cases[item.sample_id]
        reading = case.reading
        snapshot = case.snapshot
        patient: dict = {"patient_id": reading.patient_id}
        encounters: list[dict] = []
        notes: list[dict] = []
        if snapshot is not None:
            patient.update({
                "age_years": snapshot.age_years,
                "sex": snapshot.sex,
                "enrolled_at": (
                    format_instant(snapshot.enrolled_at)
                    if snapshot.enrolled_at else None
                ),
                "problem_list": [
                    {"label": c.label, "since": format_instant(c.at)}
                    for c in snapshot.conditions
                ],
                "medications": [
                    {"label": m.label, "since": format_instant(m.at)}
                    for m in snapshot.medications
                ],
            })
            encounters = [
                {
                    "reason": e.reason,
                    "admitted_at": format_instant(e.admitted_at),
                    "discharged_at": format_instant(e.discharged_at),
                }
                for e in snapshot.encounters
            ]
            notes = [
                {"summary": n.label, "at": format_instant(n.at)}
                for n in snapshot.notes
            ]
        else:
            patient.update({"problem_list": [], "medications": []})
        payload = {
            "presentation_id": presentation_ref(reviewer_id, position),
            "position": position,
            "queue_length": len(self.plan.queues[reviewer_id]),
            "reading": reading.to_record(),
            "trends": self._trends(case),
            "patient": patient,
            "encounters": encounters,
            "notes": notes,
            "calls": self._calls(case),
            "guidelines": self.guidelines,
        }
        violations = audit_payload(payload)
        if violations:  # pragma: no cover - structural schema guarantee
            raise AssertionError(f"payload leaks grading state: {violations}")
        return payload

    def queue_head(self, token: str) -> dict | None:
        """Next payload for this reviewer, or None when the queue is done."""
        session = self.authenticate(token)
        with self._reviewer_locks[session.reviewer_id]:
            queue = self.plan.queues[session.reviewer_id]
            if session.cursor >= len(queue):
                return None
            return self.build_payload(session.reviewer_id, session.cursor)

    def progress(self, token: str) -> tuple[int, int]:
        session = self.authenticate(token)
        return session.cursor, len(self.plan.queues[session.reviewer_id])

    # --- grading --------------------------------------------------------

    def submit_grade(
        self,
        token: str,
        presentation_id: str,
        severity,
        action,
        duration_s: float,
    ) -> SubmissionResult:
        session = self.authenticate(token)
        reviewer_id, position = parse_presentation_ref(presentation_id)
        if reviewer_id != session.reviewer_id:
            raise AuthError("presentation id belongs to another reviewer")
        severity = Severity.from_value(severity)
        action = ActionType(action)
        duration_s = min(max(float(duration_s), 0.0), MAX_DURATION_S)
        with self._reviewer_locks[session.reviewer_id]:
            queue = self.plan.queues[session.reviewer_id]
            if position >= len(queue):
                raise ValueError(
                    f"presentation {presentation_id} is outside the queue"
                )
            if position < session.cursor:
                # idempotent repeat: the first accepted write stands
                return SubmissionResult(
                    accepted=True, duplicate=True, current_head=None,
                    graded=session.cursor,
                )
            if position > session.cursor:
                return SubmissionResult(
                    accepted=False, duplicate=False,
                    current_head=presentation_ref(
                        session.reviewer_id, session.cursor
                    ),
                    graded=session.cursor,
                )
            item = queue[position]
            record = GradeRecord(
                reviewer_id=session.reviewer_id,
                position=position,
                sample_id=item.sample_id,
                presentation_index=item.presentation_index,
                severity=severity,
                action=action,
                duration_s=duration_s,
                submitted_at=self._clock(),
            )
            self._append_wal(record)
            self.grades[(session.reviewer_id, position)] = record
            session.cursor += 1
            session.updated_at = record.submitted_at
            return SubmissionResult(
                accepted=True, duplicate=False, current_head=None,
                graded=session.cursor,
            )

    # --- persistence ----------------------------------------------------

    def _append_wal(self, record: GradeRecord) -> None:
        if self._wal_handle is None:
            return
        with self._lock:
            self._wal_handle.write(
                json.dumps(record.to_record(), sort_keys=True) + "\n"
            )
            self._wal_handle.flush()
            os.fsync(self._wal_handle.fileno())

    def _replay_wal(self) -> None:
        with open(self._wal_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    reviewer_id = rec["reviewer_id"]
                    position = int(rec["position"])
                    session = self.sessions[reviewer_id]
                    item = self.plan.queues[reviewer_id][position]
                    if position != session.cursor:
                        raise ValueError(
                            f"grade at position {position}, cursor at "
                            f"{session.cursor}"
                        )
                    if item.sample_id != rec["sample_id"]:
                        raise ValueError(
                            f"grade for {rec['sample_id']}, queue holds "
                            f"{item.sample_id}"
                        )
                    record = GradeRecord(
                        reviewer_id=reviewer_id,
                        position=position,
                        sample_id=rec["sample_id"],
                        presentation_index=int(rec["presentation_index"]),
                        severity=Severity.from_value(rec["severity"]),
                        action=ActionType(rec["action"]),
                        duration_s=float(rec["duration_s"]),
                        submitted_at=parse_instant(rec["submitted_at"]),
                    )
                except (KeyError, ValueError, IndexError) as exc:
                    raise ValueError(
                        f"{self._wal_path}:{line_no}: bad grade record: {exc}"
                    ) from exc
                self.grades[(reviewer_id, position)] = record
                session.cursor += 1
                session.updated_at = record.submitted_at

    def close(self) -> None:
        if self._wal_handle is not None:
            self._wal_handle.close()
            self._wal_handle = None

    # --- export and audits ----------------------------------------------

    def export_rows(self) -> list[RatingRow]:
        """Accepted grades in the panel ratings format.

        The presentation index is written here and only here; clients never
        see it. The exported index is zero-based: 0 marks a first showing.
        """
        rows = []
        for reviewer_id in self.plan.reviewer_ids:
            session = self.sessions[reviewer_id]
            for position in range(session.cursor):
                record = self.grades[(reviewer_id, position)]
                rows.append(RatingRow(
                    item_id=record.sample_id,
                    rater_id=reviewer_id,
                    severity=record.severity,
                    duration_s=record.duration_s,
                    presentation_index=record.presentation_index - 1,
                ))
        return rows

    def audit_blinding(self) -> int:
        """Build every payload in every queue; returns how many were checked.

        build_payload already refuses to return a leaking payload, so this
        sweep proves the whole study surface at once.
        """
        checked = 0
        for reviewer_id in self.plan.reviewer_ids:
            for position in range(len(self.plan.queues[reviewer_id])):
                self.build_payload(reviewer_id, position)
                checked += 1
        return checked

    def verify_queue_integrity(self) -> None:
        """Accepted grades must form a per-reviewer prefix of the plan."""
        for reviewer_id in self.plan.reviewer_ids:
            session = self.sessions[reviewer_id]
            queue = self.plan.queues[reviewer_id]
            for position in range(session.cursor):
                record = self.grades.get((reviewer_id, position))
                if record is None:
                    raise AssertionError(
                        f"{reviewer_id}: hole at position {position}"
                    )
                if record.sample_id != queue[position].sample_id:
                    raise AssertionError(
                        f"{reviewer_id}: grade at {position} is for "
                        f"{record.sample_id}, queue holds "
                        f"{queue[position].sample_id}"
                    )
