"""Error types shared across the package.

Every error carries a machine-readable payload so CLI and HTTP layers can
emit structured JSON instead of bare tracebacks.
"""

from __future__ import annotations

import json
from typing import Any


class DomainError(Exception):
    """Base class for all domain-level failures."""

    code = "domain_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"error": self.code, "message": self.message, "details": self.details}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class ManifestError(DomainError):
    """Manifest failed validation; details carry the per-record violations."""

    code = "invalid_manifest"


class RatingLogError(DomainError):
    """A rating event is malformed or violates log invariants."""

    code = "invalid_rating"


class OffGridScoreError(RatingLogError):
    """Raw score is not a multiple of 0.1 within [0, 5]."""

    code = "off_grid_score"


class DegenerateDistributionError(DomainError):
    """Too few samples or zero variance: kurtosis and outlier test undefined."""

    code = "degenerate_distribution"


class DegenerateSubjectError(DomainError):
    """Subject has fewer than 2 surviving scores or near-zero spread."""

    code = "degenerate_subject"


class PipelineError(DomainError):
    """A scoring pipeline stage failed; details carry the stage name."""

    code = "pipeline_error"


class UndefinedCorrelationError(DomainError):
    """Correlation is undefined (constant series); never silently NaN."""

    code = "undefined_correlation"


class StudyError(DomainError):
    """Study-service lifecycle or protocol violation."""

    code = "study_error"
