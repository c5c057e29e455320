"""Immutable domain values passed between the pipeline stages.

Everything here is a frozen dataclass or an enum: stages communicate by
constructing new values, never by mutating shared state.  The ``to_dict`` /
``from_dict`` pairs exist so the event log and the review API can move these
values through JSON without a serialization framework.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from .errors import ContractViolationError


class DraftVerdict(str, Enum):
    """What the solver claims about its own draft."""

    COMPLETE = "complete"
    PARTIAL = "partial"
    UNPARSED = "unparsed"


class DraftOrigin(str, Enum):
    """Which stage produced a draft."""

    INITIAL = "initial"
    SELF_IMPROVEMENT = "self_improvement"
    CORRECTION = "correction"


class FindingClass(str, Enum):
    CRITICAL_ERROR = "critical_error"
    JUSTIFICATION_GAP = "justification_gap"


class Severity(str, Enum):
    MAJOR = "major"
    MINOR = "minor"
    UNRATED = "unrated"


class ReviewStatus(str, Enum):
    UNREVIEWED = "unreviewed"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


class VerdictKind(str, Enum):
    """Classification of a verifier report's verdict sentence."""

    CORRECT = "correct"
    INVALID = "invalid"
    GAPS_ONLY = "gaps_only"
    UNPARSED = "unparsed"


@dataclass(frozen=True, slots=True)
class Problem:
    """A problem statement handed to the pipeline, TeX expected."""

    id: str
    statement: str
    hint: str | None = None

    def __post_init__(self) -> None:
        if not self.id.strip():
            raise ContractViolationError("problem id must be non-empty")
        if not self.statement.strip():
            raise ContractViolationError("problem statement must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "statement": self.statement, "hint": self.hint}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> Problem:
        return Problem(
            id=data["id"], statement=data["statement"], hint=data.get("hint")
        )


@dataclass(frozen=True, slots=True)
class SolutionDraft:
    """One attempt at a solution, at a particular point in the loop.

    ``version`` counts drafts within a run: 0 for the initial attempt, 1 for
    the self-improved draft, 2 and up for corrections.
    """

    version: int
    body: str
    summary_verdict: DraftVerdict
    produced_by: DraftOrigin

    def __post_init__(self) -> None:
        if self.version < 0:
            raise ContractViolationError("draft version must be >= 0")
        if self.summary_verdict is not DraftVerdict.UNPARSED and not self.body.strip():
            raise ContractViolationError("parsed draft must have a non-empty body")

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "body": self.body,
            "summary_verdict": self.summary_verdict.value,
            "produced_by": self.produced_by.value,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> SolutionDraft:
        return SolutionDraft(
            version=data["version"],
            body=data["body"],
            summary_verdict=DraftVerdict(data["summary_verdict"]),
            produced_by=DraftOrigin(data["produced_by"]),
        )


@dataclass(frozen=True, slots=True)
class Finding:
    """One issue raised by the verifier against a draft."""

    location_quote: str
    classification: FindingClass
    explanation: str
    severity: Severity = Severity.UNRATED
    review_status: ReviewStatus = ReviewStatus.UNREVIEWED

    def __post_init__(self) -> None:
        if not self.location_quote:
            raise ContractViolationError("finding needs a location quote")

    @property
    def effective_severity(self) -> Severity:
        """Unrated findings count as major until a reviewer says otherwise."""
        if self.severity is Severity.UNRATED:
            return Severity.MAJOR
        return self.severity

    def to_dict(self) -> dict[str, Any]:
        return {
            "location_quote": self.location_quote,
            "classification": self.classification.value,
            "explanation": self.explanation,
            "severity": self.severity.value,
            "review_status": self.review_status.value,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> Finding:
        return Finding(
            location_quote=data["location_quote"],
            classification=FindingClass(data["classification"]),
            explanation=data["explanation"],
            severity=Severity(data["severity"]),
            review_status=ReviewStatus(data["review_status"]),
        )


@dataclass(frozen=True, slots=True)
class BugReport:
    """A parsed verifier response: the verdict sentence plus its findings.

    ``raw`` keeps the verifier's full text so nothing is lost to parsing;
    ``findings`` preserves document order.
    """

    verdict_sentence: str
    verdict_kind: VerdictKind
    findings: tuple[Finding, ...]
    raw: str

    def __post_init__(self) -> None:
        if self.verdict_kind is VerdictKind.CORRECT:
            for f in self.findings:
                if (
                    f.classification is FindingClass.CRITICAL_ERROR
                    and f.review_status is not ReviewStatus.DELETED
                ):
                    raise ContractViolationError(
                        "a correct verdict cannot coexist with a live critical error"
                    )

    def with_finding(self, index: int, finding: Finding) -> BugReport:
        """Return a copy with ``findings[index]`` replaced."""
        if not 0 <= index < len(self.findings):
            raise ContractViolationError(f"finding index {index} out of range")
        updated = list(self.findings)
        updated[index] = finding
        return replace(self, findings=tuple(updated))

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict_sentence": self.verdict_sentence,
            "verdict_kind": self.verdict_kind.value,
            "findings": [f.to_dict() for f in self.findings],
            "raw": self.raw,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> BugReport:
        return BugReport(
            verdict_sentence=data["verdict_sentence"],
            verdict_kind=VerdictKind(data["verdict_kind"]),
            findings=tuple(Finding.from_dict(f) for f in data["findings"]),
            raw=data["raw"],
        )
