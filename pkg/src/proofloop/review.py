"""Review decisions and the hub that connects blocked runs to reviewers.

A decision targets one finding of one report and is one of: confirm it,
delete it, or re-rate its severity.  Confirm and delete are terminal per
finding; severity can be adjusted until a terminal action lands.  Batches
are atomic: if any decision in a batch is invalid, none of them apply.

The hub is the in-process meeting point for human review.  A run that enters
review registers here and blocks; the review API (or a test) submits
decisions and finally releases the run.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Protocol

from .errors import ContractViolationError, ReviewConflictError, ReviewError
from .types import BugReport, ReviewStatus, Severity


class StaleDecisionError(ReviewError):
    """The decision targets a report index that is no longer under review."""


class ReviewAction(str, Enum):
    CONFIRM = "confirm"
    DELETE = "delete"
    SET_SEVERITY = "set_severity"


@dataclass(frozen=True, slots=True)
class ReviewDecision:
    run_id: str
    report_index: int
    finding_index: int
    action: ReviewAction
    severity: Severity | None = None
    reviewer: str = ""
    timestamp: str = ""

    def __post_init__(self) -> None:
        if self.action is ReviewAction.SET_SEVERITY:
            if self.severity not in (Severity.MAJOR, Severity.MINOR):
                raise ContractViolationError(
                    "set_severity needs an explicit major or minor rating"
                )
        elif self.severity is not None:
            raise ContractViolationError(f"{self.action.value} does not take a severity")
        if self.report_index < 0 or self.finding_index < 0:
            raise ContractViolationError("indices must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "report_index": self.report_index,
            "finding_index": self.finding_index,
            "action": self.action.value,
            "severity": self.severity.value if self.severity else None,
            "reviewer": self.reviewer,
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> ReviewDecision:
        severity = data.get("severity")
        return ReviewDecision(
            run_id=data["run_id"],
            report_index=data["report_index"],
            finding_index=data["finding_index"],
            action=ReviewAction(data["action"]),
            severity=Severity(severity) if severity else None,
            reviewer=data.get("reviewer", ""),
            timestamp=data.get("timestamp", ""),
        )


def apply_decision(report: BugReport, decision: ReviewDecision) -> BugReport:
    """Apply one decision; raises rather than silently double-judging."""
    if not 0 <= decision.finding_index < len(report.findings):
        raise ReviewError(
            f"finding index {decision.finding_index} out of range "
            f"(report has {len(report.findings)} findings)"
        )
    finding = report.findings[decision.finding_index]
    if decision.action is ReviewAction.CONFIRM:
        if finding.review_status is not ReviewStatus.UNREVIEWED:
            raise ReviewConflictError(
                f"finding {decision.finding_index} already judged "
                f"({finding.review_status.value})"
            )
        updated = replace(finding, review_status=ReviewStatus.CONFIRMED)
    elif decision.action is ReviewAction.DELETE:
        if finding.review_status is not ReviewStatus.UNREVIEWED:
            raise ReviewConflictError(
                f"finding {decision.finding_index} already judged "
                f"({finding.review_status.value})"
            )
        updated = replace(finding, review_status=ReviewStatus.DELETED)
    else:  # SET_SEVERITY
        if finding.review_status is ReviewStatus.DELETED:
            raise ReviewConflictError(
                f"finding {decision.finding_index} is deleted; severity is moot"
            )
        assert decision.severity is not None
        updated = replace(finding, severity=decision.severity)
    return report.with_finding(decision.finding_index, updated)


def apply_decisions(report: BugReport, decisions: list[ReviewDecision]) -> BugReport:
    """Apply a batch in order.  The input report is immutable, so a failure
    partway leaves the caller's report untouched; callers get atomicity by
    only keeping the returned value on success."""
    for decision in decisions:
        report = apply_decision(report, decision)
    return report


class ReviewSessionLike(Protocol):
    """What the hub needs from a run blocked in review."""

    run_id: str
    problem_id: str

    @property
    def report(self) -> BugReport: ...

    @property
    def report_index(self) -> int: ...

    def apply(self, decisions: list[ReviewDecision], source: str) -> BugReport: ...


class _PendingEntry:
    def __init__(self, session: ReviewSessionLike) -> None:
        self.session = session
        self.released = threading.Event()
        self.release_note: str | None = None


class ReviewHub:
    """Registry of runs currently blocked in review.

    ``register`` and ``wait_for_release`` are called by the run's own thread;
    ``submit`` and ``release`` arrive from the review API or tests.  A run id
    can hold at most one open review at a time.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._pending: dict[str, _PendingEntry] = {}

    def register(self, session: ReviewSessionLike) -> None:
        with self._lock:
            if session.run_id in self._pending:
                raise ReviewConflictError(f"run {session.run_id!r} is already in review")
            self._pending[session.run_id] = _PendingEntry(session)

    def pending_run_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._pending)

    def pending_report(self, run_id: str) -> tuple[int, BugReport]:
        with self._lock:
            entry = self._pending.get(run_id)
            if entry is None:
                raise ReviewConflictError(f"run {run_id!r} is not blocked in review")
            return entry.session.report_index, entry.session.report

    def submit(self, run_id: str, decisions: list[ReviewDecision], source: str = "human") -> BugReport:
        with self._lock:
            entry = self._pending.get(run_id)
            if entry is None:
                raise ReviewConflictError(f"run {run_id!r} is not blocked in review")
            if entry.released.is_set():
                raise ReviewConflictError(f"run {run_id!r} was already released")
            current_index = entry.session.report_index
        for decision in decisions:
            if decision.run_id != run_id:
                raise ReviewError(
                    f"decision addressed to run {decision.run_id!r}, not {run_id!r}"
                )
            if decision.report_index != current_index:
                raise StaleDecisionError(
                    f"decision targets report {decision.report_index}, "
                    f"but report {current_index} is under review"
                )
        return entry.session.apply(decisions, source)

    def release(self, run_id: str, note: str | None = None) -> None:
        with self._lock:
            entry = self._pending.get(run_id)
            if entry is None:
                raise ReviewConflictError(f"run {run_id!r} is not blocked in review")
            if entry.released.is_set():
                raise ReviewConflictError(f"run {run_id!r} was already released")
            entry.release_note = note
            entry.released.set()

    def wait_for_release(self, run_id: str, timeout: float | None) -> str:
        """Block the run thread until release or timeout; returns a note for
        the log ("released" or "timeout").  Always unregisters the run."""
        with self._lock:
            entry = self._pending.get(run_id)
        if entry is None:
            raise ReviewConflictError(f"run {run_id!r} is not registered for review")
        released = entry.released.wait(timeout=timeout)
        with self._lock:
            self._pending.pop(run_id, None)
        if released:
            return entry.release_note or "released"
        return "timeout"
