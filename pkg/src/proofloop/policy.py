"""The run state machine and the accept/reject policy.

A run walks Generate -> Improve -> Verify, then loops through Verify, Review
and Correct until the policy ends it.  The policy is two sliding windows over
verification outcomes: enough consecutive passes accepts the draft, enough
consecutive major failures rejects it, and a hard iteration cap aborts runs
that do neither.  ``advance`` is a pure function; the orchestrator owns all
side effects.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Union

from .errors import ConfigError, ContractViolationError, TransitionError
from .types import (
    BugReport,
    FindingClass,
    ReviewStatus,
    Severity,
    SolutionDraft,
    VerdictKind,
)


class Step(str, Enum):
    GENERATE = "generate"
    IMPROVE = "improve"
    VERIFY = "verify"
    REVIEW = "review"
    CORRECT = "correct"
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    ABORTED = "aborted"
    FAILED = "failed"


TERMINAL_STEPS = frozenset({Step.ACCEPTED, Step.REJECTED, Step.ABORTED, Step.FAILED})

# Steps whose outgoing gateway call yields a new draft.
DRAFTING_STEPS = frozenset({Step.GENERATE, Step.IMPROVE, Step.CORRECT})


class ReviewMode(str, Enum):
    HUMAN = "human"
    AUTO = "auto"
    SKIP = "skip"


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    CONTINUE = "continue"
    ABORT = "abort"


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    """Tunable knobs for a run.  Defaults mirror the production setup."""

    pass_threshold: int = 5
    rejection_window: int = 10
    temperature: float = 0.1
    thinking_budget: int = 32768
    parallel_runs: int = 1
    review_mode: ReviewMode = ReviewMode.AUTO
    max_total_iterations: int = 30

    def __post_init__(self) -> None:
        if self.pass_threshold < 1:
            raise ConfigError("pass_threshold must be >= 1")
        if self.rejection_window < 1:
            raise ConfigError("rejection_window must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError("temperature must lie in [0, 2]")
        if self.thinking_budget <= 0:
            raise ConfigError("thinking_budget must be positive")
        if self.parallel_runs < 1:
            raise ConfigError("parallel_runs must be >= 1")
        if self.max_total_iterations < 1:
            raise ConfigError("max_total_iterations must be >= 1")

    def to_dict(self) -> dict:
        return {
            "pass_threshold": self.pass_threshold,
            "rejection_window": self.rejection_window,
            "temperature": self.temperature,
            "thinking_budget": self.thinking_budget,
            "parallel_runs": self.parallel_runs,
            "review_mode": self.review_mode.value,
            "max_total_iterations": self.max_total_iterations,
        }

    @staticmethod
    def from_dict(data: dict) -> PipelineConfig:
        return PipelineConfig(
            pass_threshold=data.get("pass_threshold", 5),
            rejection_window=data.get("rejection_window", 10),
            temperature=data.get("temperature", 0.1),
            thinking_budget=data.get("thinking_budget", 32768),
            parallel_runs=data.get("parallel_runs", 1),
            review_mode=ReviewMode(data.get("review_mode", "auto")),
            max_total_iterations=data.get("max_total_iterations", 30),
        )


@dataclass(frozen=True, slots=True)
class RunState:
    step: Step = Step.GENERATE
    iteration: int = 0
    consecutive_passes: int = 0
    consecutive_major_fails: int = 0
    current_draft: SolutionDraft | None = None
    report_history: tuple[BugReport, ...] = ()


# --- events -----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class DraftProduced:
    draft: SolutionDraft


@dataclass(frozen=True, slots=True)
class ReportProduced:
    report: BugReport


@dataclass(frozen=True, slots=True)
class ReviewCompleted:
    """Review of the latest report finished; carries the post-review report."""

    report: BugReport


@dataclass(frozen=True, slots=True)
class BackendFailed:
    reason: str


PipelineEvent = Union[DraftProduced, ReportProduced, ReviewCompleted, BackendFailed]


# --- verification outcome predicates ----------------------------------------


def is_pass(report: BugReport) -> bool:
    """True iff this report lets the draft through unchallenged.

    Requires a correct verdict and no live finding that matters: a critical
    error of any severity, or a justification gap rated (or defaulting to)
    major.  Deleted findings never count.
    """
    if report.verdict_kind is VerdictKind.UNPARSED:
        raise ContractViolationError("pass/fail is undefined for an unparsed report")
    if report.verdict_kind is not VerdictKind.CORRECT:
        return False
    for f in report.findings:
        if f.review_status is ReviewStatus.DELETED:
            continue
        if f.classification is FindingClass.CRITICAL_ERROR:
            return False
        if f.effective_severity is Severity.MAJOR:
            return False
    return True


def is_major_fail(report: BugReport) -> bool:
    """True iff the report contains a live critical error or major gap."""
    if report.verdict_kind is VerdictKind.UNPARSED:
        raise ContractViolationError("pass/fail is undefined for an unparsed report")
    for f in report.findings:
        if f.review_status is ReviewStatus.DELETED:
            continue
        if f.classification is FindingClass.CRITICAL_ERROR:
            return True
        if f.effective_severity is Severity.MAJOR:
            return True
    return False


def fold_counters(reports: Iterable[BugReport]) -> tuple[int, int]:
    """Replay the two consecutive-outcome counters over a report sequence.

    Any non-pass resets the pass streak; any report that is not a major fail
    resets the major-fail streak.  Used both by ``advance`` and by views that
    rebuild counters from a log.
    """
    passes = 0
    fails = 0
    for report in reports:
        if is_pass(report):
            passes += 1
            fails = 0
        elif is_major_fail(report):
            fails += 1
            passes = 0
        else:
            passes = 0
            fails = 0
    return passes, fails


# --- the policy -------------------------------------------------------------


def decide(state: RunState, config: PipelineConfig) -> Decision:
    """Judge a run whose counters were just updated by a verification.

    Acceptance and rejection take precedence over the iteration cap, so a
    streak completed exactly at the cap still counts.
    """
    if state.step in TERMINAL_STEPS:
        raise ContractViolationError("decide has no meaning in a terminal state")
    if state.consecutive_passes >= config.pass_threshold:
        return Decision.ACCEPT
    if state.consecutive_major_fails >= config.rejection_window:
        return Decision.REJECT
    if state.iteration >= config.max_total_iterations:
        return Decision.ABORT
    return Decision.CONTINUE


_DECISION_STEP = {
    Decision.ACCEPT: Step.ACCEPTED,
    Decision.REJECT: Step.REJECTED,
    Decision.ABORT: Step.ABORTED,
}


def advance(state: RunState, event: PipelineEvent, config: PipelineConfig) -> RunState:
    """Apply one event to a run state and return the successor state.

    Raises ``TransitionError`` when the event is illegal in the current step
    and ``ContractViolationError`` when the event payload itself is unusable
    (an unparsed report, a review with no report on file).  Terminal states
    accept no event at all.
    """
    if state.step in TERMINAL_STEPS:
        raise TransitionError(f"step {state.step.value} is terminal")

    if isinstance(event, BackendFailed):
        return replace(state, step=Step.FAILED)

    if isinstance(event, DraftProduced):
        if state.step not in DRAFTING_STEPS:
            raise TransitionError(f"no draft expected in step {state.step.value}")
        next_step = Step.IMPROVE if state.step is Step.GENERATE else Step.VERIFY
        return replace(state, step=next_step, current_draft=event.draft)

    if isinstance(event, ReportProduced):
        if state.step is not Step.VERIFY:
            raise TransitionError(f"no report expected in step {state.step.value}")
        report = event.report
        if report.verdict_kind is VerdictKind.UNPARSED:
            raise ContractViolationError(
                "unparsed reports must be retried or failed before advancing"
            )
        if is_pass(report):
            passes, fails = state.consecutive_passes + 1, 0
        elif is_major_fail(report):
            passes, fails = 0, state.consecutive_major_fails + 1
        else:
            passes, fails = 0, 0
        interim = replace(
            state,
            iteration=state.iteration + 1,
            consecutive_passes=passes,
            consecutive_major_fails=fails,
            report_history=state.report_history + (report,),
        )
        decision = decide(interim, config)
        if decision is not Decision.CONTINUE:
            return replace(interim, step=_DECISION_STEP[decision])
        if passes:
            # A pass that does not yet accept: same draft, fresh verification.
            return interim
        if config.review_mode is ReviewMode.SKIP:
            return replace(interim, step=Step.CORRECT)
        return replace(interim, step=Step.REVIEW)

    if isinstance(event, ReviewCompleted):
        if state.step is not Step.REVIEW:
            raise TransitionError(f"no review expected in step {state.step.value}")
        if not state.report_history:
            raise ContractViolationError("review completed with no report on file")
        if event.report.raw != state.report_history[-1].raw:
            raise ContractViolationError("reviewed report does not match the latest report")
        history = state.report_history[:-1] + (event.report,)
        passes, fails = fold_counters(history)
        interim = replace(
            state,
            consecutive_passes=passes,
            consecutive_major_fails=fails,
            report_history=history,
        )
        if not is_pass(event.report):
            return replace(interim, step=Step.CORRECT)
        # Review neutralized every live issue: the iteration is recounted as
        # a pass, which may complete the acceptance streak on the spot.
        decision = decide(interim, config)
        if decision is not Decision.CONTINUE:
            return replace(interim, step=_DECISION_STEP[decision])
        return replace(interim, step=Step.VERIFY)

    raise TransitionError(f"unrecognized event: {event!r}")
