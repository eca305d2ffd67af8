"""Blinded review service: queue store plus the HTTP app over it."""

from .app import create_app
from .store import (
    AuthError,
    GradeRecord,
    ReviewSession,
    ReviewStore,
    SubmissionResult,
    audit_payload,
    default_guidelines,
    parse_presentation_ref,
    presentation_ref,
)

__all__ = [
    "AuthError",
    "GradeRecord",
    "ReviewSession",
    "ReviewStore",
    "SubmissionResult",
    "audit_payload",
    "create_app",
    "default_guidelines",
    "parse_presentation_ref",
    "presentation_ref",
]
