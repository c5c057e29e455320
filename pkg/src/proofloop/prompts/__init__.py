"""Prompt assembly for the four gateway call kinds.

The solver and verifier instruction texts are carried verbatim in asset files
and are hash-pinned: the loader refuses to run if an asset no longer matches
the manifest, so any edit to the wording is a deliberate, reviewable change.
The self-improvement and correction prompts are our own reconstructions and
are pinned the same way.

Templates use literal bracket placeholders (the verifier text already ships
with them); rendering substitutes each declared placeholder exactly once, in
order, and warns if substituted content smuggles a placeholder token back in.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources

from ..errors import (
    ContractViolationError,
    NothingToCorrectError,
    PlaceholderCollisionWarning,
    PromptError,
)
from ..types import (
    BugReport,
    Finding,
    FindingClass,
    Problem,
    ReviewStatus,
    SolutionDraft,
    VerdictKind,
)


class TemplateName(str, Enum):
    SOLVER = "solver"
    VERIFIER = "verifier"
    SELF_IMPROVE = "self_improve"
    CORRECTION = "correction"


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    provenance: str  # "verbatim" or "reconstructed"
    body: str
    placeholders: tuple[str, ...]
    sha256: str


@dataclass(frozen=True)
class RenderedPrompt:
    """A prompt ready to send.  ``template_name`` is a plain string so ad-hoc
    prompts (the automatic reviewer's, for one) can flow through the gateway
    alongside the four pinned kinds."""

    template_name: str
    text: str
    slots_filled: tuple[str, ...]

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def _read_asset(filename: str) -> str:
    data = resources.files(__package__).joinpath("assets", filename).read_text("utf-8")
    # Tolerate checkouts that rewrote line endings; templates are defined in LF.
    return data.replace("\r\n", "\n")


@lru_cache(maxsize=1)
def _manifest() -> dict:
    return json.loads(_read_asset("manifest.json"))


@lru_cache(maxsize=None)
def load_template(name: TemplateName) -> PromptTemplate:
    """Load one template and verify it against its pinned hash."""
    for entry in _manifest()["templates"]:
        if entry["name"] == name.value:
            break
    else:
        raise PromptError(f"template {name.value!r} missing from manifest")
    body = _read_asset(entry["file"])
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if digest != entry["sha256"]:
        raise PromptError(
            f"template {name.value!r} does not match its pinned hash; "
            "refusing to build prompts from altered instruction text"
        )
    placeholders = tuple(entry["placeholders"])
    for ph in placeholders:
        if body.count(ph) != 1:
            raise PromptError(f"placeholder {ph!r} must occur exactly once in {name.value!r}")
    return PromptTemplate(
        name=name,
        provenance=entry["provenance"],
        body=body,
        placeholders=placeholders,
        sha256=digest,
    )


def hint_sentences() -> dict[str, str]:
    """The fixed hint sentences available to ``--hint`` shorthands."""
    return dict(_manifest()["hints"])


def _substitute(template: PromptTemplate, values: dict[str, str]) -> str:
    for ph in template.placeholders:
        if ph not in values:
            raise PromptError(f"no value supplied for placeholder {ph!r}")
    for key in values:
        if key not in template.placeholders:
            raise PromptError(f"{key!r} is not a placeholder of {template.name.value!r}")
    text = template.body
    for ph in template.placeholders:
        value = values[ph]
        if not value.strip():
            raise ContractViolationError(f"empty value for placeholder {ph!r}")
        text = text.replace(ph, value, 1)
    for ph in template.placeholders:
        if ph in text:
            warnings.warn(
                f"substituted content reintroduced placeholder {ph!r}",
                PlaceholderCollisionWarning,
                stacklevel=3,
            )
    return text


def render_solver(problem: Problem) -> RenderedPrompt:
    """Instruction text, then the problem, then the optional hint sentence."""
    template = load_template(TemplateName.SOLVER)
    text = template.body
    if not text.endswith("\n"):
        text += "\n"
    text += "\n" + problem.statement.strip() + "\n"
    if problem.hint:
        text += "\n" + problem.hint.strip() + "\n"
    return RenderedPrompt(template.name.value, text, ())


def render_self_improve(problem: Problem, draft: SolutionDraft) -> RenderedPrompt:
    template = load_template(TemplateName.SELF_IMPROVE)
    if not draft.body.strip():
        raise ContractViolationError("cannot improve an empty draft")
    text = _substitute(
        template,
        {
            "[Paste the TeX for the problem statement here]": problem.statement,
            "[Paste the TeX for your previous draft here]": draft.body,
        },
    )
    return RenderedPrompt(template.name.value, text, template.placeholders)


def render_verifier(problem: Problem, draft: SolutionDraft) -> RenderedPrompt:
    template = load_template(TemplateName.VERIFIER)
    if not draft.body.strip():
        raise ContractViolationError("cannot verify an empty draft body")
    text = _substitute(
        template,
        {
            "[Paste the TeX for the problem statement here]": problem.statement,
            "[Paste the TeX for the solution to be verified here]": draft.body,
        },
    )
    return RenderedPrompt(template.name.value, text, template.placeholders)


def format_bug_report(report: BugReport) -> str:
    """Re-emit a report for the correction prompt, live findings only."""
    lines = [f"**Final Verdict:** {report.verdict_sentence}", "", "**List of Findings:**"]
    live = [f for f in report.findings if f.review_status is not ReviewStatus.DELETED]
    for f in live:
        label = (
            "Critical Error"
            if f.classification is FindingClass.CRITICAL_ERROR
            else "Justification Gap"
        )
        lines.append(f'*   **Location:** "{f.location_quote}"')
        lines.append(f"    *   **Issue:** {label} - {f.explanation}")
    if not live:
        lines.append(
            "*   (Every finding was withdrawn during review; "
            "the verdict sentence above still stands.)"
        )
    return "\n".join(lines) + "\n"


def render_correction(
    problem: Problem, draft: SolutionDraft, report: BugReport
) -> RenderedPrompt:
    """Build the fix-it prompt from the latest draft and its bug report.

    Refuses when there is nothing to act on: a correct verdict whose findings
    were all deleted describes a draft that needs no correction.
    """
    template = load_template(TemplateName.CORRECTION)
    if not draft.body.strip():
        raise ContractViolationError("cannot correct an empty draft body")
    live = [f for f in report.findings if f.review_status is not ReviewStatus.DELETED]
    if not live and report.verdict_kind is VerdictKind.CORRECT:
        raise NothingToCorrectError(
            "report carries a correct verdict and no live findings; nothing to correct"
        )
    text = _substitute(
        template,
        {
            "[Paste the TeX for the problem statement here]": problem.statement,
            "[Paste the TeX for your current solution here]": draft.body,
            "[Paste the verifier bug report here]": format_bug_report(report),
        },
    )
    return RenderedPrompt(template.name.value, text, template.placeholders)
