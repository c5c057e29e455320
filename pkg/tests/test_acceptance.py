"""Top-level acceptance gate.

One test per guaranteed behavior, each self-contained and pinned to frozen
expected values, so `pytest -v tests/test_acceptance.py` reads as a pass/fail
checklist for the package's core claims:

* the shipped instruction texts are byte-identical to their golden copies;
* the parser recovers the golden report and survives 1000 decorated ones;
* the state machine equals the brute-force interpreter on every outcome
  sequence up to the iteration depth that matters;
* scripted runs hit their exact terminals, survive arbitrary crash points,
  and honor review decisions without extra gateway traffic;
* the reliability numbers match closed form and the absorbing-chain oracle.
"""

from __future__ import annotations

import hashlib
import random
import time
from dataclasses import replace

from helpers import (
    abort30_entries,
    accept5_entries,
    emit_report,
    major_report_text,
    pass_report_text,
    reject10_entries,
    IMPROVED_TEXT,
    SOLVER_TEXT,
)
from test_orchestrator import (
    CORRECT_WITH_GAP,
    ScriptedReviewer,
    auto_entries,
    run_cut_points,
)
from test_policy_equivalence import compare_against_reference
from conftest import FIXTURES
from proofloop.events import EventKind
from proofloop.gateway import MockBackend, ScriptEntry
from proofloop.orchestrator import run_pipeline
from proofloop.parsing import parse_bug_report
from proofloop.policy import (
    PipelineConfig,
    ReviewMode,
    Step,
    is_major_fail,
    is_pass,
)
from proofloop.prompts import TemplateName, hint_sentences, load_template, render_solver
from proofloop.reliability import (
    Truth,
    VerifierErrorModel,
    false_accept_closed_form,
    policy_outcome_exact,
    simulate_policy,
    standard_error,
)
from proofloop.review import ReviewAction
from proofloop.types import BugReport, FindingClass, Problem, VerdictKind

SKIP = PipelineConfig(review_mode=ReviewMode.SKIP)

# Frozen digests of the two verbatim instruction texts, slots unfilled.
GOLDEN_SHA256 = {
    TemplateName.SOLVER: "34014f3bc6d40475c72bf318552f9695329eaff975ee36b32647d1b5ecf817dd",
    TemplateName.VERIFIER: "776b2fb4e544e6ef56de1aad7f01f9c74694aaf5aabb2cd7a4d488618480254e",
}

HINTS = (
    "Let us try to solve the problem by induction.",
    "Let us try to solve the problem by analytic geometry.",
)


def test_prompt_fidelity():
    started = time.perf_counter()
    for name, digest in GOLDEN_SHA256.items():
        body = load_template(name).body
        assert hashlib.sha256(body.encode("utf-8")).hexdigest() == digest

    plain = Problem(id="p", statement="Prove the statement.")
    base = render_solver(plain).text
    assert set(hint_sentences().values()) == set(HINTS)
    for sentence in HINTS:
        hinted = render_solver(replace(plain, hint=sentence)).text
        assert hinted == base + "\n" + sentence + "\n"
    assert time.perf_counter() - started < 1.0


def test_parser_golden_report():
    started = time.perf_counter()
    text = (FIXTURES / "reports" / "golden_invalid.txt").read_text("utf-8")
    report = parse_bug_report(text)

    assert report.verdict_kind is VerdictKind.INVALID
    assert [f.classification for f in report.findings] == [
        FindingClass.JUSTIFICATION_GAP,
        FindingClass.CRITICAL_ERROR,
    ]
    gap, critical = report.findings
    assert gap.location_quote == (
        "By interchanging the limit and the integral, we get..."
    )
    assert gap.explanation == (
        "The solution interchanges a limit and an integral without providing "
        "justification, such as proving uniform convergence."
    )
    assert critical.location_quote == (
        "From $A > B$ and $C > D$, it follows that $A-C > B-D$"
    )
    assert critical.explanation == (
        "This step is a logical fallacy. Subtracting inequalities in this "
        "manner is not a valid mathematical operation."
    )
    assert time.perf_counter() - started < 1.0


def test_policy_equivalence_exhaustive():
    started = time.perf_counter()
    config = PipelineConfig(
        pass_threshold=5,
        rejection_window=10,
        max_total_iterations=30,
        review_mode=ReviewMode.SKIP,
    )
    nodes, mismatches = compare_against_reference(config, max_depth=12)
    assert mismatches == []
    assert nodes >= 3**12 // 3  # every live node of the depth-12 tree
    assert time.perf_counter() - started < 30.0


def test_end_to_end_mock_runs(store, problem):
    started = time.perf_counter()
    accepted = run_pipeline(
        problem, SKIP, MockBackend(accept5_entries()), store=store, run_id="e2e-accept"
    )
    assert accepted.terminal is Step.ACCEPTED and accepted.iterations == 5

    rejected = run_pipeline(
        problem, SKIP, MockBackend(reject10_entries()), store=store, run_id="e2e-reject"
    )
    assert rejected.terminal is Step.REJECTED and rejected.iterations == 10

    aborted = run_pipeline(
        problem, SKIP, MockBackend(abort30_entries()), store=store, run_id="e2e-abort"
    )
    assert aborted.terminal is Step.ABORTED and aborted.iterations == 30
    assert time.perf_counter() - started < 10.0


def test_crash_resume_every_cut_point(tmp_path, problem):
    started = time.perf_counter()
    original, resumed = run_cut_points(
        tmp_path, problem, accept5_entries(), SKIP, "acceptance-resume"
    )
    divergences = [
        (cut, outcome) for cut, outcome in enumerate(resumed) if outcome != original
    ]
    assert divergences == []
    assert time.perf_counter() - started < 60.0


def test_reliability_analysis():
    started = time.perf_counter()
    assert false_accept_closed_form(0.5, 5) == 0.03125

    trials = 10**6
    config = PipelineConfig(review_mode=ReviewMode.SKIP)
    for i, p_miss in enumerate((0.1, 0.3, 0.5)):
        for j, p_false_alarm in enumerate((0.0, 0.1, 0.2)):
            model = VerifierErrorModel(p_miss=p_miss, p_false_alarm=p_false_alarm)
            seed = 1000 + 10 * i + j
            for truth in (Truth.FLAWED, Truth.SOUND):
                exact = policy_outcome_exact(
                    model.pass_probability(truth),
                    config.pass_threshold,
                    config.rejection_window,
                    config.max_total_iterations,
                )
                sim = simulate_policy(model, truth, config, trials, seed=seed)
                observed = (
                    sim.p_false_accept if truth is Truth.FLAWED else sim.p_false_reject
                )
                expected = (
                    exact.accept_probability
                    if truth is Truth.FLAWED
                    else exact.reject_probability
                )
                tolerance = 4 * standard_error(expected, trials)
                assert abs(observed - expected) <= tolerance, (
                    f"p_miss={p_miss} p_false_alarm={p_false_alarm} {truth.value}: "
                    f"simulated {observed} vs exact {expected} "
                    f"(tolerance {tolerance})"
                )
    assert time.perf_counter() - started < 300.0


def test_review_semantics(tmp_path, problem):
    from proofloop.events import LogStore

    started = time.perf_counter()

    # Deleting the sole critical error must flip is_major_fail, and the
    # flipped report must be what the event log records.
    store = LogStore(tmp_path / "delete")
    before = parse_bug_report(major_report_text(1))
    assert is_major_fail(before)

    run_pipeline(
        problem,
        PipelineConfig(review_mode=ReviewMode.AUTO),
        MockBackend(auto_entries("Finding 1: DELETE\n")),
        store=store,
        run_id="flip",
    )
    applied = [
        e
        for e in store.read("flip")[1]
        if e.kind is EventKind.REVIEW_DECISION_APPLIED
    ]
    assert len(applied) == 1
    logged = BugReport.from_dict(applied[0].payload["report_after"])
    assert logged.raw == before.raw
    assert not is_major_fail(logged)

    # A correct-verdict report whose findings are all deleted recounts as a
    # pass, completing the streak with no further gateway traffic.
    store = LogStore(tmp_path / "recount")
    entries = [
        ScriptEntry(SOLVER_TEXT, kind="solver"),
        ScriptEntry(IMPROVED_TEXT, kind="self_improve"),
    ]
    entries += [ScriptEntry(pass_report_text(i), kind="verifier") for i in range(1, 5)]
    entries.append(ScriptEntry(CORRECT_WITH_GAP, kind="verifier"))
    backend = MockBackend(entries)
    assert not is_pass(parse_bug_report(CORRECT_WITH_GAP))

    outcome = run_pipeline(
        problem,
        PipelineConfig(review_mode=ReviewMode.AUTO),
        backend,
        ScriptedReviewer([(0, ReviewAction.DELETE)]),
        store=store,
        run_id="recount",
    )
    assert outcome.terminal is Step.ACCEPTED
    assert outcome.iterations == 5
    assert backend.calls == 7
    assert is_pass(outcome.reports[-1])
    assert time.perf_counter() - started < 5.0


def test_parser_robustness_round_trip():
    started = time.perf_counter()
    rng = random.Random(20250823)
    failures = []
    for case in range(1000):
        emitted = emit_report(rng)
        report = parse_bug_report(emitted.text)
        if report.verdict_kind is not emitted.verdict:
            failures.append((case, "verdict", report.verdict_kind, emitted.verdict))
        if len(report.findings) != len(emitted.classes):
            failures.append(
                (case, "count", len(report.findings), len(emitted.classes))
            )
        elif [f.classification for f in report.findings] != emitted.classes:
            failures.append((case, "classes", None, None))
    assert failures == []
    assert time.perf_counter() - started < 60.0
