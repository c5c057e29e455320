"""Parsers for the two response shapes the pipeline consumes.

Solver responses carry a summary (with a completeness verdict) and a detailed
solution; verifier responses carry a verdict sentence and a findings list.
Model output drifts, so both parsers are deliberately forgiving:

* they are line-oriented and anchor on labels (``Final Verdict``,
  ``Location``, ``Issue``), never on exact markdown;
* label matching is case-insensitive and tolerates bullet glyphs, bold
  markers, and varied separators;
* when the same label appears twice, the first occurrence wins;
* nothing raises on malformed input -- a response that defies parsing comes
  back marked ``UNPARSED``, and the raw text always survives on the result.

Findings are collected wherever their labels appear, not just inside a
``List of Findings`` section, since verifiers sometimes inline them.  A
finding's classification must be stated on its ``Issue`` line; issue bullets
with no recognizable classification are not turned into findings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .types import (
    BugReport,
    DraftOrigin,
    DraftVerdict,
    Finding,
    FindingClass,
    SolutionDraft,
    VerdictKind,
)

# --- line-level regexes -----------------------------------------------------

# Bullet prefix: any run of common glyphs, with or without indentation.
_BULLET = r"\s*(?:[*+•-]\s+)*"
# Optional markdown emphasis around a label.
_EM = r"\*{0,2}"

# A label can close its bold marker either side of the separator
# ("**Location**:" or "**Location:**"), hence the trailing _EM.
_VERDICT_RE = re.compile(
    rf"(?i)^{_BULLET}{_EM}\s*final\s+verdict\s*{_EM}\s*[:\-–—]*\s*{_EM}\s*(?P<rest>.*)$"
)
_LOCATION_RE = re.compile(
    rf"(?i)^{_BULLET}{_EM}\s*location\s*{_EM}\s*[:\-–—]\s*{_EM}\s*(?P<rest>.*)$"
)
_ISSUE_RE = re.compile(
    rf"(?i)^{_BULLET}{_EM}\s*issue\s*{_EM}\s*[:\-–—]\s*{_EM}\s*(?P<rest>.*)$"
)

_CRITICAL_RE = re.compile(r"(?i)critical\s+error")
_GAP_RE = re.compile(r"(?i)justification\s+gap")

# Verdict-sentence cues.  Invalidity outranks gaps, gaps outrank correctness,
# so a sentence like "correct except for one critical error" reads as invalid.
_INVALID_CUES = ("invalid", "critical error", "incorrect", "not correct", "flawed", "wrong")
_GAP_CUES = ("justification gap",)
_CORRECT_RE = re.compile(r"(?i)\bcorrect\b")

_QUOTE_PAIRS = (('"', '"'), ("“", "”"), ("'", "'"), ("‘", "’"), ("`", "`"))


def classify_finding_line(line: str) -> FindingClass | None:
    """Classify one line by its literal label; ``None`` when neither appears.

    When both labels occur on the line, the one written first wins.
    """
    crit = _CRITICAL_RE.search(line)
    gap = _GAP_RE.search(line)
    if crit and gap:
        return (
            FindingClass.CRITICAL_ERROR
            if crit.start() < gap.start()
            else FindingClass.JUSTIFICATION_GAP
        )
    if crit:
        return FindingClass.CRITICAL_ERROR
    if gap:
        return FindingClass.JUSTIFICATION_GAP
    return None


def classify_verdict_sentence(sentence: str) -> VerdictKind:
    lowered = sentence.lower()
    if any(cue in lowered for cue in _INVALID_CUES):
        return VerdictKind.INVALID
    if any(cue in lowered for cue in _GAP_CUES):
        return VerdictKind.GAPS_ONLY
    if _CORRECT_RE.search(lowered):
        return VerdictKind.CORRECT
    return VerdictKind.UNPARSED


def _strip_emphasis(text: str) -> str:
    text = text.strip()
    while text.startswith("*") and text.endswith("*") and len(text) >= 2:
        text = text[1:-1].strip()
    return text


def _unquote(text: str) -> str:
    text = _strip_emphasis(text)
    for opening, closing in _QUOTE_PAIRS:
        if len(text) >= 2 and text.startswith(opening) and text.endswith(closing):
            return text[len(opening) : -len(closing)].strip()
    return text


def _strip_classification_label(rest: str) -> str:
    """Drop a leading 'Critical Error -' / 'Justification Gap:' from an issue."""
    m = re.match(
        rf"(?i)^\s*{_EM}\s*(critical\s+error|justification\s+gap)\s*{_EM}"
        r"\s*[:\-–—]*\s*",
        rest,
    )
    return rest[m.end() :].strip() if m else rest.strip()


_NO_LOCATION = "(no location quoted)"


def parse_bug_report(raw: str) -> BugReport:
    """Parse a verifier response into a ``BugReport``.

    The verdict comes from the first ``Final Verdict`` line; if that line
    carries no sentence, the next non-blank line is taken instead.  Findings
    are ``Issue`` lines bearing a classification label, each paired with the
    closest preceding ``Location`` line.  Severities start out unrated and
    review status starts out unreviewed; both belong to the review stage, not
    to parsing.

    Never raises: a response with no usable verdict yields
    ``VerdictKind.UNPARSED`` and whatever findings could still be salvaged.
    """
    lines = raw.split("\n")

    verdict_sentence = ""
    verdict_found = False
    pending_location: str | None = None
    awaiting_verdict = False
    awaiting_location = False
    findings: list[Finding] = []

    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue

        location_m = _LOCATION_RE.match(line)
        issue_m = _ISSUE_RE.match(line)
        verdict_m = _VERDICT_RE.match(line)

        if awaiting_verdict and not (location_m or issue_m or verdict_m):
            verdict_sentence = _strip_emphasis(stripped)
            awaiting_verdict = False
            continue
        if awaiting_location and not (location_m or issue_m or verdict_m):
            pending_location = _unquote(stripped)
            awaiting_location = False
            continue

        if verdict_m and not verdict_found:
            verdict_found = True
            rest = verdict_m.group("rest").strip()
            if rest:
                verdict_sentence = _strip_emphasis(rest)
            else:
                awaiting_verdict = True
            continue

        if location_m:
            rest = location_m.group("rest").strip()
            if rest:
                pending_location = _unquote(rest)
                awaiting_location = False
            else:
                awaiting_location = True
            continue

        if issue_m:
            rest = issue_m.group("rest").strip()
            classification = classify_finding_line(rest)
            if classification is None:
                continue
            findings.append(
                Finding(
                    location_quote=pending_location or _NO_LOCATION,
                    classification=classification,
                    explanation=_strip_classification_label(rest),
                )
            )
            pending_location = None
            awaiting_location = False
            continue

    kind = classify_verdict_sentence(verdict_sentence) if verdict_found else VerdictKind.UNPARSED
    if kind is VerdictKind.CORRECT and any(
        f.classification is FindingClass.CRITICAL_ERROR for f in findings
    ):
        # The sentence claims correctness while the findings list a critical
        # error; trust the findings and downgrade.
        kind = VerdictKind.INVALID

    return BugReport(
        verdict_sentence=verdict_sentence,
        verdict_kind=kind,
        findings=tuple(findings),
        raw=raw,
    )


# --- solver output ----------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SolverOutput:
    """Structured view of a solver response; ``raw`` is always intact."""

    summary_verdict: DraftVerdict
    method_sketch: str
    detailed_solution: str
    raw: str

    def to_draft(self, version: int, produced_by: DraftOrigin) -> SolutionDraft:
        body = self.detailed_solution if self.detailed_solution.strip() else self.raw
        return SolutionDraft(
            version=version,
            body=body,
            summary_verdict=self.summary_verdict,
            produced_by=produced_by,
        )


_SUMMARY_HEAD_RE = re.compile(
    rf"(?i)^\s*(?:#{{1,6}}\s*)?{_EM}\s*(?:\d+\s*[.):]?\s*)?summary\b"
)
_DETAIL_HEAD_RE = re.compile(
    rf"(?i)^\s*(?:#{{1,6}}\s*)?{_EM}\s*(?:\d+\s*[.):]?\s*)?detailed\s+solution\b"
)
_SKETCH_LABEL_RE = re.compile(
    rf"(?i)^{_BULLET}{_EM}\s*(?:[a-z]\s*[.):]\s*)?method\s+sketch"
    rf"\s*{_EM}\s*[:\-–—]*\s*{_EM}\s*(?P<rest>.*)$"
)

_PARTIAL_CUES = (
    "not found a complete solution",
    "partial solution",
    "have not fully solved",
    "not been able to solve",
    "could not solve",
)
_COMPLETE_CUES = (
    "successfully solved",
    "found a complete solution",
    "complete and rigorous solution",
)


def _classify_draft_verdict(text: str) -> DraftVerdict:
    lowered = text.lower()
    # Negated completeness must be checked first: "not found a complete
    # solution" contains "found a complete solution".
    if any(cue in lowered for cue in _PARTIAL_CUES):
        return DraftVerdict.PARTIAL
    if any(cue in lowered for cue in _COMPLETE_CUES):
        return DraftVerdict.COMPLETE
    return DraftVerdict.UNPARSED


def parse_solver_output(raw: str) -> SolverOutput:
    """Parse a solver response into summary verdict, sketch, and solution.

    Section headings are matched loosely ("**1. Summary**", "## Summary",
    "2) Detailed Solution" all work).  The completeness verdict is read from
    the summary when one exists, otherwise from the whole response.  If the
    verdict parses but no detailed-solution section can be found, the entire
    response stands in as the solution body so that verification still has
    text to work with.
    """
    lines = raw.split("\n")
    summary_at: int | None = None
    detail_at: int | None = None
    for i, line in enumerate(lines):
        if summary_at is None and _SUMMARY_HEAD_RE.match(line):
            summary_at = i
            continue
        if detail_at is None and _DETAIL_HEAD_RE.match(line):
            detail_at = i

    if detail_at is not None:
        summary_end = detail_at
        detailed = "\n".join(lines[detail_at + 1 :]).strip()
    else:
        summary_end = len(lines)
        detailed = ""
    if summary_at is not None:
        summary_text = "\n".join(lines[summary_at + 1 : summary_end]).strip()
    else:
        summary_text = ""

    verdict_source = summary_text if summary_text else raw
    verdict = _classify_draft_verdict(verdict_source)

    sketch = ""
    if summary_text:
        sketch_lines: list[str] = []
        collecting = False
        for line in summary_text.split("\n"):
            m = _SKETCH_LABEL_RE.match(line)
            if m:
                collecting = True
                rest = m.group("rest").strip()
                if rest:
                    sketch_lines.append(rest)
                continue
            if collecting:
                sketch_lines.append(line)
        sketch = "\n".join(sketch_lines).strip() if sketch_lines else summary_text

    return SolverOutput(
        summary_verdict=verdict,
        method_sketch=sketch,
        detailed_solution=detailed,
        raw=raw,
    )
