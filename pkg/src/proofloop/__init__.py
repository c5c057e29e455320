"""Verifier-guided solution refinement with a replayable event log."""

from .policy import (
    Decision,
    PipelineConfig,
    ReviewMode,
    RunState,
    Step,
    advance,
    decide,
    is_major_fail,
    is_pass,
)
from .types import (
    BugReport,
    DraftOrigin,
    DraftVerdict,
    Finding,
    FindingClass,
    Problem,
    ReviewStatus,
    Severity,
    SolutionDraft,
    VerdictKind,
)

__version__ = "0.1.0"

__all__ = [
    "BugReport",
    "Decision",
    "DraftOrigin",
    "DraftVerdict",
    "Finding",
    "FindingClass",
    "PipelineConfig",
    "Problem",
    "ReviewMode",
    "ReviewStatus",
    "RunState",
    "Severity",
    "SolutionDraft",
    "Step",
    "VerdictKind",
    "advance",
    "decide",
    "is_major_fail",
    "is_pass",
]
