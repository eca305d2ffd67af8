"""HTTP layer over the review store and the rule raters.

Endpoints:
  GET  /api/health          liveness probe
  GET  /api/queue/head      the caller's next blinded case, or done
  POST /api/grades          submit the grade for the current queue head
  GET  /api/export.csv      panel ratings export (export token only)
  POST /api/triage          grade one reading with a rule baseline
  POST /api/agent           grading-endpoint stub in the external-agent
                            wire format (when a stub rater is configured)

Reviewer calls authenticate with a per-reviewer bearer token; the export
route takes its own token. When a UI bundle directory is supplied it is
served at the web root.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Literal, Mapping

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..agreement import RATINGS_FIELDS
from ..core import PatientFlags, Reading, Severity, VitalHistory
from ..cohort import ContextSnapshot
from ..raters import (
    AdaptiveBaselineRater,
    FixedBaselineRater,
    Rater,
    RaterCase,
    RaterVerdict,
    rate,
)
from .store import AuthError, ReviewStore, SubmissionResult


class ReadingModel(BaseModel):
    reading_id: str
    patient_id: str
    device: str
    timestamp: str
    measurements: dict[str, float]


class FlagsModel(BaseModel):
    copd: bool = False
    heart_failure: bool = False
    home_o2: bool = False
    conditions: list[str] = Field(default_factory=list)


class TriageRequest(BaseModel):
    reading: ReadingModel
    history: list[ReadingModel] = Field(default_factory=list)
    flags: FlagsModel | None = None
    rater: Literal["fixed", "adaptive"] = "fixed"


class VerdictModel(BaseModel):
    rater_id: str
    severity: int
    severity_name: str
    action: str | None
    fired_rules: list[str]
    rule_severities: dict[str, int]
    duration_s: float

    @classmethod
    def from_verdict(cls, verdict: RaterVerdict) -> "VerdictModel":
        trace = verdict.trace
        return cls(
            rater_id=trace.rater_id,
            severity=int(trace.severity),
            severity_name=trace.severity.name.lower(),
            action=trace.action.value if trace.action else None,
            fired_rules=sorted(trace.fired_rules),
            rule_severities={
                name: int(level)
                for name, level in sorted(trace.rule_severities.items())
            },
            duration_s=verdict.duration_s,
        )


class GradeRequest(BaseModel):
    presentation_id: str
    severity: int | str
    action: str
    duration_s: float = 0.0


class GradeResponse(BaseModel):
    accepted: bool
    duplicate: bool
    graded: int


class QueueHeadResponse(BaseModel):
    done: bool
    graded: int
    total: int
    case: dict | None = None


class AgentStubRequest(BaseModel):
    reading: dict
    snapshot: dict | None = None
    history: dict | None = None
    run_index: int = 0


def _triage_case(body: TriageRequest) -> RaterCase:
    try:
        reading = Reading.from_record(body.reading.model_dump())
        history = VitalHistory(reading.patient_id)
        for model in body.history:
            history.add_reading(Reading.from_record(model.model_dump()))
        return RaterCase(reading=reading, history=history)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app(
    store: ReviewStore | None = None,
    stub_rater: Rater | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="rpm-triage review service")

    def session_token(authorization: str = Header(default="")) -> str:
        scheme, _, token = authorization.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise HTTPException(status_code=401, detail="missing bearer token")
        return token

    def require_store() -> ReviewStore:
        if store is None:
            raise HTTPException(status_code=503, detail="no review study loaded")
        return store

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/api/queue/head", response_model=QueueHeadResponse)
    def queue_head(token: str = Depends(session_token)) -> QueueHeadResponse:
        active = require_store()
        try:
            payload = active.queue_head(token)
            graded, total = active.progress(token)
        except AuthError as exc:
            raise HTTPException(status_code=401, detail=str(exc)) from exc
        return QueueHeadResponse(
            done=payload is None, graded=graded, total=total, case=payload
        )

    @app.post("/api/grades", response_model=GradeResponse)
    def submit_grade(
        body: GradeRequest, token: str = Depends(session_token)
    ) -> GradeResponse:
        active = require_store()
        try:
            result: SubmissionResult = active.submit_grade(
                token,
                presentation_id=body.presentation_id,
                severity=body.severity,
                action=body.action,
                duration_s=body.duration_s,
            )
        except AuthError as exc:
            raise HTTPException(status_code=401, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        if not result.accepted:
            raise HTTPException(
                status_code=409,
                detail={
                    "reason": "submission is not for the queue head",
                    "current_head": result.current_head,
                },
            )
        return GradeResponse(
            accepted=True, duplicate=result.duplicate, graded=result.graded
        )

    @app.get("/api/export.csv", response_class=PlainTextResponse)
    def export_ratings(token: str = Depends(session_token)) -> str:
        active = require_store()
        if token != active.export_token:
            raise HTTPException(status_code=401, detail="export token required")
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(RATINGS_FIELDS)
        for row in active.export_rows():
            writer.writerow([
                row.item_id,
                row.rater_id,
                int(row.severity),
                "" if row.duration_s is None else row.duration_s,
                row.presentation_index,
            ])
        return buffer.getvalue()

    @app.post("/api/triage", response_model=VerdictModel)
    def triage(body: TriageRequest) -> VerdictModel:
        case = _triage_case(body)
        flags_by_patient: Mapping[str, PatientFlags] = {}
        if body.flags is not None:
            flags_by_patient = {
                case.reading.patient_id: PatientFlags(
                    copd=body.flags.copd,
                    heart_failure=body.flags.heart_failure,
                    home_o2=body.flags.home_o2,
                    conditions=frozenset(body.flags.conditions),
                )
            }
        if body.rater == "fixed":
            rater: Rater = FixedBaselineRater(flags_by_patient=flags_by_patient)
        else:
            rater = AdaptiveBaselineRater()
        verdict = rate(rater, case)
        return VerdictModel.from_verdict(verdict)

    @app.post("/api/agent")
    def agent_stub(body: AgentStubRequest) -> dict:
        if stub_rater is None:
            raise HTTPException(status_code=503, detail="no stub rater configured")
        try:
            reading = Reading.from_record(body.reading)
            history = (
                VitalHistory.from_record(body.history)
                if body.history is not None
                else VitalHistory(reading.patient_id)
            )
            snapshot = (
                ContextSnapshot.from_record(body.snapshot)
                if body.snapshot is not None else None
            )
            case = RaterCase(reading=reading, history=history, snapshot=snapshot)
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        result = rate(stub_rater, case, body.run_index)
        if not isinstance(result, RaterVerdict):
            raise HTTPException(status_code=502, detail=result.kind)
        return {
            "severity": int(result.severity),
            "action": result.action.value if result.action else None,
            "rationale": result.rationale or "",
        }

    if ui_dir is not None:
        app.mount(
            "/", StaticFiles(directory=str(ui_dir), html=True), name="ui"
        )
    return app
