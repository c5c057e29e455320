"""Drives runs end to end and keeps every run replayable from its log.

The split here matters: ``Engine`` is the deterministic interpreter.  It
consumes response texts and review decisions, advances the state machine,
and says which events belong in the log.  The run loop around it owns the
side effects (gateway calls, log writes, blocking on reviewers).  Resume is
then almost free: replay the logged responses and decisions through a fresh
engine and keep driving.  The engine never touches the network or the disk.
"""

from __future__ import annotations

import logging
import re
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from threading import Lock

from .errors import (
    BackendError,
    ContractViolationError,
    ResumeRefusedError,
    ReviewConflictError,
)
from .events import EventKind, EventLogWriter, LogHeader, LogStore, RunEvent, utc_now
from .gateway import CompletionResponse, Gateway, request_for
from .parsing import parse_bug_report, parse_solver_output
from .policy import (
    TERMINAL_STEPS,
    BackendFailed,
    Decision,
    DraftProduced,
    PipelineConfig,
    ReportProduced,
    ReviewCompleted,
    ReviewMode,
    RunState,
    Step,
    advance,
)
from .prompts import (
    RenderedPrompt,
    render_correction,
    render_self_improve,
    render_solver,
    render_verifier,
)
from .review import (
    ReviewAction,
    ReviewDecision,
    ReviewHub,
    StaleDecisionError,
    apply_decisions,
)
from .types import (
    BugReport,
    DraftOrigin,
    DraftVerdict,
    Problem,
    ReviewStatus,
    Severity,
    SolutionDraft,
    VerdictKind,
)

LOGGER = logging.getLogger(__name__)

# How many identical correction cycles (same draft text, same report text)
# we tolerate before declaring the run stalled and aborting early.
STALL_LIMIT = 3

# An output that defies parsing gets one fresh attempt; the second failure
# in the same step fails the run.
UNPARSED_LIMIT = 2

_STEP_CALL_KINDS = {
    Step.GENERATE: "solver",
    Step.IMPROVE: "self_improve",
    Step.CORRECT: "correction",
    Step.VERIFY: "verifier",
}

_STEP_ORIGIN = {
    Step.GENERATE: DraftOrigin.INITIAL,
    Step.IMPROVE: DraftOrigin.SELF_IMPROVEMENT,
    Step.CORRECT: DraftOrigin.CORRECTION,
}


@dataclass(frozen=True)
class RunOutcome:
    run_id: str
    terminal: Step
    final_draft: SolutionDraft | None
    iterations: int
    reports: tuple[BugReport, ...]
    reason: str | None = None


Effect = tuple[EventKind, dict]


class Engine:
    """Deterministic pipeline interpreter for one run.

    ``apply_response`` and friends mutate ``self.state`` through the pure
    ``advance`` function and return the log events those inputs imply.  Feed
    it the same inputs and it walks the same path, which is exactly what
    replay does.
    """

    def __init__(self, problem: Problem, config: PipelineConfig, run_id: str) -> None:
        self.problem = problem
        self.config = config
        self.run_id = run_id
        self.state = RunState()
        self.pending_report: BugReport | None = None
        self.terminal_reason: str | None = None
        self._unparsed_streak = 0
        self._stall_streak = 0
        # Body of the draft the latest correction started from, consumed by
        # the next verification to spot do-nothing correction cycles.
        self._corrected_from: str | None = None

    # -- queries -------------------------------------------------------------

    def next_call_kind(self) -> str:
        step = self.state.step
        if step not in _STEP_CALL_KINDS:
            raise ContractViolationError(f"no gateway call belongs to step {step.value}")
        return _STEP_CALL_KINDS[step]

    def next_prompt(self) -> RenderedPrompt:
        step = self.state.step
        if step is Step.GENERATE:
            return render_solver(self.problem)
        if step is Step.IMPROVE:
            assert self.state.current_draft is not None
            return render_self_improve(self.problem, self.state.current_draft)
        if step is Step.CORRECT:
            assert self.state.current_draft is not None
            return render_correction(
                self.problem, self.state.current_draft, self.state.report_history[-1]
            )
        if step is Step.VERIFY:
            assert self.state.current_draft is not None
            return render_verifier(self.problem, self.state.current_draft)
        raise ContractViolationError(f"no prompt belongs to step {step.value}")

    def outcome(self) -> RunOutcome:
        if self.state.step not in TERMINAL_STEPS:
            raise ContractViolationError("outcome requested before the run ended")
        return RunOutcome(
            run_id=self.run_id,
            terminal=self.state.step,
            final_draft=self.state.current_draft,
            iterations=self.state.iteration,
            reports=self.state.report_history,
            reason=self.terminal_reason,
        )

    # -- transitions ---------------------------------------------------------

    def apply_response(self, kind: str, text: str) -> list[Effect]:
        if kind == "review":
            return self._apply_review_response(text)
        expected = self.next_call_kind()
        if kind != expected:
            raise ContractViolationError(
                f"got a {kind!r} response while step {self.state.step.value} "
                f"expects {expected!r}"
            )
        if kind == "verifier":
            return self._apply_verifier_response(text)
        return self._apply_draft_response(text)

    def _apply_draft_response(self, text: str) -> list[Effect]:
        output = parse_solver_output(text)
        if output.summary_verdict is DraftVerdict.UNPARSED:
            self._unparsed_streak += 1
            if self._unparsed_streak >= UNPARSED_LIMIT:
                return self.fail(
                    f"solver output unparsed {self._unparsed_streak} times in a row "
                    f"during step {self.state.step.value}"
                )
            return []  # the loop re-issues the call
        self._unparsed_streak = 0
        step = self.state.step
        if step is Step.GENERATE:
            version = 0
        else:
            assert self.state.current_draft is not None
            version = self.state.current_draft.version + 1
        if step is Step.CORRECT:
            assert self.state.current_draft is not None
            self._corrected_from = self.state.current_draft.body
        draft = output.to_draft(version, _STEP_ORIGIN[step])
        self.state = advance(self.state, DraftProduced(draft), self.config)
        return [(EventKind.STEP_ENTERED, {"step": self.state.step.value})]

    def _apply_verifier_response(self, text: str) -> list[Effect]:
        report = parse_bug_report(text)
        effects: list[Effect] = [
            (EventKind.REPORT_PARSED, {"report": report.to_dict()})
        ]
        if report.verdict_kind is VerdictKind.UNPARSED:
            self._unparsed_streak += 1
            if self._unparsed_streak >= UNPARSED_LIMIT:
                return effects + self.fail(
                    f"verifier output unparsed {self._unparsed_streak} times in a row"
                )
            return effects
        self._unparsed_streak = 0

        previous_raw = (
            self.state.report_history[-1].raw if self.state.report_history else None
        )
        self.state = advance(self.state, ReportProduced(report), self.config)

        # A correction that changed nothing, answered by the same report as
        # before, is a stalled cycle.
        if (
            self._corrected_from is not None
            and self.state.current_draft is not None
            and self.state.current_draft.body == self._corrected_from
            and previous_raw == report.raw
        ):
            self._stall_streak += 1
        else:
            self._stall_streak = 0
        self._corrected_from = None

        decision = self._decision_for_step(self.state.step)
        stalled = (
            decision is Decision.CONTINUE and self._stall_streak >= STALL_LIMIT
        )
        if stalled:
            self.state = replace(self.state, step=Step.ABORTED)
            self.terminal_reason = (
                f"stalled: {self._stall_streak} correction cycles changed nothing"
            )
            decision = Decision.ABORT

        payload = {
            "decision": decision.value,
            "iteration": self.state.iteration,
            "consecutive_passes": self.state.consecutive_passes,
            "consecutive_major_fails": self.state.consecutive_major_fails,
        }
        if stalled:
            payload["reason"] = self.terminal_reason
        effects.append((EventKind.DECISION_MADE, payload))

        if self.state.step in TERMINAL_STEPS:
            effects.append((EventKind.TERMINAL, self._terminal_payload()))
        else:
            if self.state.step is Step.REVIEW:
                self.pending_report = report
            effects.append((EventKind.STEP_ENTERED, {"step": self.state.step.value}))
        return effects

    def _apply_review_response(self, text: str) -> list[Effect]:
        """Digest an automatic reviewer's response into decisions."""
        if self.state.step is not Step.REVIEW or self.pending_report is None:
            raise ReviewConflictError("no report is under review")
        decisions = parse_review_response(
            text,
            run_id=self.run_id,
            report_index=len(self.state.report_history) - 1,
            finding_count=len(self.pending_report.findings),
        )
        updated = self.apply_review_decisions(decisions)
        return [
            (
                EventKind.REVIEW_DECISION_APPLIED,
                {
                    "source": "auto",
                    "decisions": [d.to_dict() for d in decisions],
                    "report_after": updated.to_dict(),
                },
            )
        ]

    def apply_review_decisions(self, decisions: list[ReviewDecision]) -> BugReport:
        if self.state.step is not Step.REVIEW or self.pending_report is None:
            raise ReviewConflictError("no report is under review")
        current_index = len(self.state.report_history) - 1
        for decision in decisions:
            if decision.report_index != current_index:
                raise StaleDecisionError(
                    f"decision targets report {decision.report_index}, "
                    f"but report {current_index} is under review"
                )
        self.pending_report = apply_decisions(self.pending_report, decisions)
        return self.pending_report

    def complete_review(self, note: str | None = None) -> list[Effect]:
        if self.state.step is not Step.REVIEW or self.pending_report is None:
            raise ReviewConflictError("no report is under review")
        report = self.pending_report
        self.pending_report = None
        self.state = advance(self.state, ReviewCompleted(report), self.config)

        effects: list[Effect] = []
        if self.state.step is not Step.CORRECT:
            # Review neutralized the report; the iteration was recounted.
            decision = self._decision_for_step(self.state.step)
            effects.append(
                (
                    EventKind.DECISION_MADE,
                    {
                        "decision": decision.value,
                        "iteration": self.state.iteration,
                        "consecutive_passes": self.state.consecutive_passes,
                        "consecutive_major_fails": self.state.consecutive_major_fails,
                        "recounted_after_review": True,
                    },
                )
            )
        if self.state.step in TERMINAL_STEPS:
            effects.append((EventKind.TERMINAL, self._terminal_payload()))
        else:
            payload = {"step": self.state.step.value}
            if note:
                payload["note"] = f"review {note}"
            effects.append((EventKind.STEP_ENTERED, payload))
        return effects

    def fail(self, reason: str) -> list[Effect]:
        self.state = advance(self.state, BackendFailed(reason), self.config)
        self.terminal_reason = reason
        return [(EventKind.TERMINAL, self._terminal_payload())]

    @staticmethod
    def _decision_for_step(step: Step) -> Decision:
        return {
            Step.ACCEPTED: Decision.ACCEPT,
            Step.REJECTED: Decision.REJECT,
            Step.ABORTED: Decision.ABORT,
        }.get(step, Decision.CONTINUE)

    def _terminal_payload(self) -> dict:
        draft = self.state.current_draft
        return {
            "terminal": self.state.step.value,
            "iterations": self.state.iteration,
            "final_draft": draft.to_dict() if draft else None,
            "reason": self.terminal_reason,
        }


# --- automatic review -------------------------------------------------------

AUTO_REVIEW_INSTRUCTIONS = """\
You earlier verified a solution and produced the bug report quoted below. \
Re-examine each finding with fresh eyes and decide whether it identifies a \
real problem in the solution. Answer with exactly one line per finding, in \
the form `Finding N: CONFIRM` or `Finding N: DELETE`, where DELETE means the \
finding is mistaken and should be withdrawn. You may append \
`(severity: major)` or `(severity: minor)` to a CONFIRM line to rate how \
serious the issue is. Do not add any other commentary.
"""


def build_review_prompt(
    problem: Problem, draft: SolutionDraft, report: BugReport
) -> RenderedPrompt:
    parts = [AUTO_REVIEW_INSTRUCTIONS, "### Problem ###", "", problem.statement.strip(), ""]
    parts += ["### Solution ###", "", draft.body.strip(), ""]
    parts += ["### Bug Report ###", "", f"Final verdict: {report.verdict_sentence}", ""]
    for i, finding in enumerate(report.findings, start=1):
        parts.append(
            f"Finding {i} [{finding.classification.value}] at \"{finding.location_quote}\": "
            f"{finding.explanation}"
        )
    return RenderedPrompt(template_name="review", text="\n".join(parts) + "\n", slots_filled=())


_REVIEW_LINE_RE = re.compile(
    r"(?im)^\s*finding\s+(\d+)\s*[:\-]\s*(confirm|delete)\b"
    r"(?:[^\n]*?severity\s*[:\-]?\s*(major|minor))?"
)


def parse_review_response(
    text: str, *, run_id: str, report_index: int, finding_count: int
) -> list[ReviewDecision]:
    """Turn reviewer output into decisions, one terminal action per finding.

    Findings the response never mentions (or mentions unintelligibly) are
    confirmed: an unclear review must not quietly delete evidence.
    """
    verdicts: dict[int, tuple[str, str | None]] = {}
    for match in _REVIEW_LINE_RE.finditer(text):
        index = int(match.group(1)) - 1
        if 0 <= index < finding_count and index not in verdicts:
            verdicts[index] = (match.group(2).lower(), match.group(3))
    decisions: list[ReviewDecision] = []
    timestamp = utc_now()
    for index in range(finding_count):
        action, severity = verdicts.get(index, ("confirm", None))
        decisions.append(
            ReviewDecision(
                run_id=run_id,
                report_index=report_index,
                finding_index=index,
                action=ReviewAction.DELETE if action == "delete" else ReviewAction.CONFIRM,
                reviewer="auto",
                timestamp=timestamp,
            )
        )
        if action == "confirm" and severity:
            decisions.append(
                ReviewDecision(
                    run_id=run_id,
                    report_index=report_index,
                    finding_index=index,
                    action=ReviewAction.SET_SEVERITY,
                    severity=Severity(severity.lower()),
                    reviewer="auto",
                    timestamp=timestamp,
                )
            )
    return decisions


# --- review sessions and reviewers ------------------------------------------


class ReviewSession:
    """Hands a blocked run's review surface to whoever performs the review."""

    def __init__(self, engine: Engine, writer: EventLogWriter) -> None:
        self._engine = engine
        self._writer = writer
        self._lock = Lock()
        self.run_id = engine.run_id
        self.problem_id = engine.problem.id

    @property
    def problem(self) -> Problem:
        return self._engine.problem

    @property
    def draft(self) -> SolutionDraft:
        draft = self._engine.state.current_draft
        assert draft is not None
        return draft

    @property
    def report(self) -> BugReport:
        report = self._engine.pending_report
        if report is None:
            raise ReviewConflictError("no report is under review")
        return report

    @property
    def report_index(self) -> int:
        return len(self._engine.state.report_history) - 1

    def apply(self, decisions: list[ReviewDecision], source: str) -> BugReport:
        with self._lock:
            updated = self._engine.apply_review_decisions(decisions)
            self._writer.append(
                EventKind.REVIEW_DECISION_APPLIED,
                {
                    "source": source,
                    "decisions": [d.to_dict() for d in decisions],
                    "report_after": updated.to_dict(),
                },
            )
            return updated

    def run_auto_review(self, gateway: Gateway, config: PipelineConfig) -> None:
        """One extra gateway call re-judging each finding, logged like any
        other call so resume can replay it without re-asking the model."""
        if not self.report.findings:
            return
        if any(
            f.review_status is not ReviewStatus.UNREVIEWED for f in self.report.findings
        ):
            # A resumed run already replayed this review; do not re-ask.
            return
        prompt = build_review_prompt(self.problem, self.draft, self.report)
        request = request_for(prompt, config, request_id=f"{self.run_id}-review")
        self._writer.append(
            EventKind.PROMPT_SENT,
            {"kind": "review", "sha256": prompt.sha256, "chars": len(prompt.text)},
        )
        response = gateway.complete(request)
        self._writer.append(EventKind.RESPONSE_RECEIVED, _response_payload("review", response))
        with self._lock:
            effects = self._engine.apply_response("review", response.text)
        _write_effects(self._writer, effects)


class SkipReviewer:
    def review(self, session: ReviewSession) -> str | None:
        return "skipped"


class AutoReviewer:
    def __init__(self, gateway: Gateway, config: PipelineConfig) -> None:
        self._gateway = gateway
        self._config = config

    def review(self, session: ReviewSession) -> str | None:
        session.run_auto_review(self._gateway, self._config)
        return "auto"


class HumanReviewer:
    """Blocks the run until a human releases it through the hub (or the wait
    times out, which proceeds exactly as if review had been skipped)."""

    def __init__(self, hub: ReviewHub, timeout: float | None = 86400.0) -> None:
        self._hub = hub
        self._timeout = timeout

    def review(self, session: ReviewSession) -> str | None:
        self._hub.register(session)
        return self._hub.wait_for_release(session.run_id, self._timeout)


def make_reviewer(
    config: PipelineConfig,
    gateway: Gateway,
    hub: ReviewHub | None = None,
    review_timeout: float | None = 86400.0,
):
    if config.review_mode is ReviewMode.SKIP:
        return SkipReviewer()
    if config.review_mode is ReviewMode.AUTO:
        return AutoReviewer(gateway, config)
    if hub is None:
        raise ContractViolationError("human review needs a hub to receive decisions")
    return HumanReviewer(hub, review_timeout)


# --- the run loop -----------------------------------------------------------


def _response_payload(kind: str, response: CompletionResponse) -> dict:
    return {
        "kind": kind,
        "text": response.text,
        "usage": response.usage.to_dict(),
        "truncated": response.truncated,
        "retries": response.retries,
        "backend": response.backend,
    }


def _write_effects(writer: EventLogWriter, effects: list[Effect]) -> None:
    for kind, payload in effects:
        writer.append(kind, payload)


def _drive(
    engine: Engine,
    gateway: Gateway,
    reviewer,
    writer: EventLogWriter,
) -> RunOutcome:
    request_no = 0
    try:
        while engine.state.step not in TERMINAL_STEPS:
            if engine.state.step is Step.REVIEW:
                note = reviewer.review(ReviewSession(engine, writer))
                effects = engine.complete_review(note=note)
                _write_effects(writer, effects)
                continue
            prompt = engine.next_prompt()
            kind = engine.next_call_kind()
            request_no += 1
            writer.append(
                EventKind.PROMPT_SENT,
                {"kind": kind, "sha256": prompt.sha256, "chars": len(prompt.text)},
            )
            request = request_for(
                prompt, engine.config, request_id=f"{engine.run_id}-{request_no:03d}"
            )
            try:
                response = gateway.complete(request)
            except BackendError as exc:
                LOGGER.warning("run %s: backend failure: %s", engine.run_id, exc)
                effects = engine.fail(f"{type(exc).__name__}: {exc}")
                _write_effects(writer, effects)
                break
            writer.append(EventKind.RESPONSE_RECEIVED, _response_payload(kind, response))
            effects = engine.apply_response(kind, response.text)
            _write_effects(writer, effects)
    finally:
        writer.close()
    outcome = engine.outcome()
    LOGGER.info(
        "run %s finished %s after %d iterations",
        outcome.run_id,
        outcome.terminal.value,
        outcome.iterations,
    )
    return outcome


def _sanitize(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-") or "run"


def new_run_id(problem: Problem) -> str:
    return f"{_sanitize(problem.id)}-{uuid.uuid4().hex[:8]}"


def run_pipeline(
    problem: Problem,
    config: PipelineConfig,
    gateway: Gateway,
    reviewer=None,
    *,
    store: LogStore,
    run_id: str | None = None,
    hub: ReviewHub | None = None,
    review_timeout: float | None = 86400.0,
) -> RunOutcome:
    """Run one problem to a terminal outcome, logging every event."""
    run_id = run_id or new_run_id(problem)
    if reviewer is None:
        reviewer = make_reviewer(config, gateway, hub=hub, review_timeout=review_timeout)
    writer = store.create(run_id, problem, config)
    engine = Engine(problem, config, run_id)
    writer.append(EventKind.STEP_ENTERED, {"step": engine.state.step.value})
    return _drive(engine, gateway, reviewer, writer)


def run_many(
    problem: Problem,
    config: PipelineConfig,
    gateway: Gateway,
    reviewer=None,
    *,
    store: LogStore,
    base_run_id: str | None = None,
    hub: ReviewHub | None = None,
) -> list[RunOutcome]:
    """Launch ``config.parallel_runs`` independent runs of the same problem.

    Results come back ordered by run index regardless of which thread
    finished first.  Runs share the gateway (and its rate limits) but
    nothing else.
    """
    base = base_run_id or new_run_id(problem)
    run_ids = [f"{base}-r{i:02d}" for i in range(config.parallel_runs)]
    if reviewer is None:
        reviewer = make_reviewer(config, gateway, hub=hub)
    with ThreadPoolExecutor(max_workers=config.parallel_runs) as pool:
        futures = [
            pool.submit(
                run_pipeline,
                problem,
                config,
                gateway,
                reviewer,
                store=store,
                run_id=run_id,
            )
            for run_id in run_ids
        ]
        return [future.result() for future in futures]


def summarize(outcomes: list[RunOutcome]) -> dict:
    counts: dict[str, int] = {}
    for outcome in outcomes:
        counts[outcome.terminal.value] = counts.get(outcome.terminal.value, 0) + 1
    return {
        "total": len(outcomes),
        "by_terminal": counts,
        "succeeded": any(o.terminal is Step.ACCEPTED for o in outcomes),
    }


# --- replay and resume ------------------------------------------------------


def replay(header: LogHeader, events: list[RunEvent]) -> Engine:
    """Rebuild an engine by replaying a log's responses and decisions.

    Only events that carry information the engine cannot derive are applied:
    response texts and human review decisions.  Everything else in the log is
    derived output, except the terminal record, which is cross-checked so a
    log written by diverging code is refused instead of silently re-run.
    """
    engine = Engine(header.problem, header.config, header.run_id)
    for event in events:
        if event.kind is EventKind.RESPONSE_RECEIVED:
            kind = event.payload["kind"]
            engine.apply_response(kind, event.payload["text"])
        elif event.kind is EventKind.REVIEW_DECISION_APPLIED:
            if event.payload.get("source") == "auto":
                continue  # already derived from the logged review response
            decisions = [
                ReviewDecision.from_dict(d) for d in event.payload["decisions"]
            ]
            engine.apply_review_decisions(decisions)
        elif event.kind is EventKind.STEP_ENTERED:
            if (
                engine.state.step is Step.REVIEW
                and event.payload["step"] != Step.REVIEW.value
            ):
                note = event.payload.get("note")
                engine.complete_review(note=note)
        elif event.kind is EventKind.DECISION_MADE:
            if engine.state.step is Step.REVIEW and event.payload.get(
                "recounted_after_review"
            ):
                engine.complete_review()
        elif event.kind is EventKind.TERMINAL:
            recorded = event.payload["terminal"]
            if (
                engine.state.step not in TERMINAL_STEPS
                and recorded == Step.FAILED.value
            ):
                # Backend failures leave no deriving event; trust the record.
                engine.fail(event.payload.get("reason") or "backend failure")
            if engine.state.step.value != recorded:
                raise ResumeRefusedError(
                    f"log replays to {engine.state.step.value!r} but records "
                    f"terminal {recorded!r}; refusing to resume from it"
                )
            if engine.terminal_reason is None:
                engine.terminal_reason = event.payload.get("reason")
    return engine


def consumed_responses(events: list[RunEvent]) -> int:
    """How many gateway responses a log already contains.  A resumed run's
    scripted backend must skip exactly this many entries."""
    return sum(1 for e in events if e.kind is EventKind.RESPONSE_RECEIVED)


def resume_run(
    store: LogStore,
    run_id: str,
    gateway: Gateway,
    reviewer=None,
    *,
    hub: ReviewHub | None = None,
    review_timeout: float | None = 86400.0,
) -> RunOutcome:
    """Pick a run up from its log.

    A completed log is returned as-is with zero gateway calls.  A truncated
    one is replayed to the last applied event; whatever half-finished step
    follows is simply done again.
    """
    header, events, writer = store.reopen(run_id)
    engine = replay(header, events)
    if engine.state.step in TERMINAL_STEPS:
        writer.close()
        return engine.outcome()
    if reviewer is None:
        reviewer = make_reviewer(
            header.config, gateway, hub=hub, review_timeout=review_timeout
        )
    return _drive(engine, gateway, reviewer, writer)
