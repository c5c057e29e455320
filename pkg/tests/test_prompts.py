"""Template integrity and rendering tests.

The four template assets are pinned by hash; these tests carry their own
frozen copies of the digests so any byte-level drift in the assets, the
manifest, or the loader shows up immediately.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import replace

import pytest

from proofloop.errors import (
    ContractViolationError,
    NothingToCorrectError,
    PlaceholderCollisionWarning,
    PromptError,
)
from proofloop.prompts import (
    TemplateName,
    format_bug_report,
    hint_sentences,
    load_template,
    render_correction,
    render_self_improve,
    render_solver,
    render_verifier,
)
from proofloop.types import (
    BugReport,
    DraftOrigin,
    DraftVerdict,
    Finding,
    FindingClass,
    Problem,
    ReviewStatus,
    VerdictKind,
)

# Frozen, independent of the manifest on disk.
PINNED_SHA256 = {
    TemplateName.SOLVER: "34014f3bc6d40475c72bf318552f9695329eaff975ee36b32647d1b5ecf817dd",
    TemplateName.VERIFIER: "776b2fb4e544e6ef56de1aad7f01f9c74694aaf5aabb2cd7a4d488618480254e",
    TemplateName.SELF_IMPROVE: "d66e4c1265cf7b82cd611eea713e4b4c6a747e2e9b7cbcff35f3d475718d49a9",
    TemplateName.CORRECTION: "de9503b6d97de8bea701ccf36429471fece7c785701929a49cbc9ec8070e4c0e",
}

HINT_INDUCTION = "Let us try to solve the problem by induction."
HINT_GEOMETRY = "Let us try to solve the problem by analytic geometry."

PROBLEM = Problem(id="p1", statement="Prove that $1 + 1 = 2$.")


def draft(body: str = "A complete proof by direct computation."):
    from proofloop.types import SolutionDraft

    return SolutionDraft(1, body, DraftVerdict.COMPLETE, DraftOrigin.SELF_IMPROVEMENT)


# --- template integrity -----------------------------------------------------


@pytest.mark.parametrize("name", list(TemplateName))
def test_template_bodies_match_pinned_hashes(name):
    template = load_template(name)
    digest = hashlib.sha256(template.body.encode("utf-8")).hexdigest()
    assert digest == PINNED_SHA256[name]
    assert template.sha256 == PINNED_SHA256[name]


def test_verbatim_and_reconstructed_provenance():
    assert load_template(TemplateName.SOLVER).provenance == "verbatim"
    assert load_template(TemplateName.VERIFIER).provenance == "verbatim"
    assert load_template(TemplateName.SELF_IMPROVE).provenance == "reconstructed"
    assert load_template(TemplateName.CORRECTION).provenance == "reconstructed"


def test_solver_template_has_no_placeholders():
    assert load_template(TemplateName.SOLVER).placeholders == ()


def test_verifier_template_placeholders_in_order():
    template = load_template(TemplateName.VERIFIER)
    assert template.placeholders == (
        "[Paste the TeX for the problem statement here]",
        "[Paste the TeX for the solution to be verified here]",
    )


def test_correction_template_has_three_placeholders():
    template = load_template(TemplateName.CORRECTION)
    assert len(template.placeholders) == 3
    assert "[Paste the verifier bug report here]" in template.placeholders


def test_hint_sentences_are_exact():
    hints = hint_sentences()
    assert hints["induction"] == HINT_INDUCTION
    assert hints["analytic_geometry"] == HINT_GEOMETRY
    assert len(hints) == 2


# --- rendering --------------------------------------------------------------


def test_solver_render_is_template_then_statement():
    rendered = render_solver(PROBLEM)
    assert rendered.text.startswith(load_template(TemplateName.SOLVER).body)
    assert rendered.text.endswith("\n" + PROBLEM.statement + "\n")
    assert rendered.template_name == "solver"


def test_solver_render_appends_hint_after_statement():
    hinted = Problem(id="p1", statement=PROBLEM.statement, hint=HINT_INDUCTION)
    rendered = render_solver(hinted)
    assert rendered.text.endswith(PROBLEM.statement + "\n\n" + HINT_INDUCTION + "\n")
    without = render_solver(PROBLEM)
    assert rendered.text.startswith(without.text)


def test_rendering_fills_every_placeholder():
    d = draft()
    for rendered in (
        render_self_improve(PROBLEM, d),
        render_verifier(PROBLEM, d),
    ):
        assert "[Paste the TeX" not in rendered.text
        assert PROBLEM.statement in rendered.text
        assert d.body in rendered.text


def test_verifier_render_keeps_surrounding_bytes():
    template = load_template(TemplateName.VERIFIER)
    rendered = render_verifier(PROBLEM, draft("BODY-MARKER"))
    expected = template.body.replace(
        "[Paste the TeX for the problem statement here]", PROBLEM.statement
    ).replace(
        "[Paste the TeX for the solution to be verified here]", "BODY-MARKER"
    )
    assert rendered.text == expected


def test_empty_draft_body_is_refused():
    with pytest.raises(ContractViolationError):
        render_verifier(PROBLEM, draft("   "))
    with pytest.raises(ContractViolationError):
        render_self_improve(PROBLEM, draft("   "))


def test_substitution_warns_when_a_value_contains_a_placeholder():
    sneaky = draft("see [Paste the TeX for the problem statement here] above")
    with pytest.warns(PlaceholderCollisionWarning):
        render_verifier(PROBLEM, sneaky)


# --- correction prompt ------------------------------------------------------


def _report(findings=(), verdict=VerdictKind.INVALID, sentence="The solution is invalid."):
    return BugReport(sentence, verdict, tuple(findings), raw="fixture")


def test_correction_embeds_only_live_findings():
    findings = (
        Finding("kept step", FindingClass.CRITICAL_ERROR, "still wrong"),
        Finding(
            "deleted step",
            FindingClass.JUSTIFICATION_GAP,
            "was spurious",
            review_status=ReviewStatus.DELETED,
        ),
    )
    rendered = render_correction(PROBLEM, draft(), _report(findings))
    assert "kept step" in rendered.text
    assert "deleted step" not in rendered.text


def test_correction_with_no_live_findings_but_bad_verdict_still_renders():
    findings = (
        Finding(
            "deleted step",
            FindingClass.CRITICAL_ERROR,
            "withdrawn",
            review_status=ReviewStatus.DELETED,
        ),
    )
    rendered = render_correction(PROBLEM, draft(), _report(findings))
    assert "withdrawn during review" in rendered.text


def test_correction_refuses_a_clean_correct_report():
    clean = _report(verdict=VerdictKind.CORRECT, sentence="The solution is correct.")
    with pytest.raises(NothingToCorrectError):
        render_correction(PROBLEM, draft(), clean)


def test_bug_report_formatting_round_trips_through_the_parser():
    from proofloop.parsing import parse_bug_report

    findings = (
        Finding("the key step", FindingClass.CRITICAL_ERROR, "does not follow."),
        Finding("a side remark", FindingClass.JUSTIFICATION_GAP, "needs detail."),
    )
    text = format_bug_report(_report(findings))
    parsed = parse_bug_report(text)
    assert parsed.verdict_kind is VerdictKind.INVALID
    assert [f.classification for f in parsed.findings] == [
        FindingClass.CRITICAL_ERROR,
        FindingClass.JUSTIFICATION_GAP,
    ]
    assert [f.location_quote for f in parsed.findings] == [
        "the key step",
        "a side remark",
    ]


def test_manifest_tamper_detection(monkeypatch):
    import copy

    import proofloop.prompts as prompts_module

    original = prompts_module._manifest

    def tampered():
        data = copy.deepcopy(original())
        for entry in data["templates"]:
            if entry["name"] == "solver":
                entry["sha256"] = "0" * 64
        return data

    monkeypatch.setattr(prompts_module, "_manifest", tampered)
    prompts_module.load_template.cache_clear()
    try:
        with pytest.raises(PromptError):
            load_template(TemplateName.SOLVER)
    finally:
        prompts_module.load_template.cache_clear()
