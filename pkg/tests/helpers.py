"""Shared builders for the test suite.

Three kinds of material live here:

* canned response texts that parse to known drafts and reports, used to
  script the mock backend;
* ready-made report objects for driving the policy state machine directly;
* a seeded emitter that generates decorated bug-report texts together with
  the ground truth a parser must recover from them.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from proofloop.gateway import ScriptEntry
from proofloop.types import (
    BugReport,
    Finding,
    FindingClass,
    Severity,
    VerdictKind,
)

# --- canned response texts --------------------------------------------------

SOLVER_TEXT = """\
**1. Summary**

I have successfully solved the problem. The argument bounds each term of
the sum directly and then telescopes.

**2. Detailed Solution**

Let $n \\ge 1$. For each $k \\le n$ we have $a_k \\le 2^{-k}$ by induction on
$k$, so the sum is bounded by $\\sum_{k=1}^{n} 2^{-k} < 1$, which is what we
needed to show.
"""

IMPROVED_TEXT = """\
**1. Summary**

I have successfully solved the problem. This pass tightens the inductive
step and states the base case explicitly.

**2. Detailed Solution**

Base case: $a_1 = 1/2 \\le 2^{-1}$. Inductive step: if $a_k \\le 2^{-k}$ then
$a_{k+1} = a_k / 2 \\le 2^{-(k+1)}$. Hence $\\sum_{k=1}^{n} a_k < 1$ for every
$n$, completing the proof.
"""

PARTIAL_TEXT = """\
**1. Summary**

I have not found a complete solution, but I have rigorously proven that the
bound holds for all even $n$.

**2. Detailed Solution**

For even $n$ the terms pair up and each pair contributes at most $2^{-k}$,
so the partial claim follows.
"""


def pass_report_text(tag: int | str = 0) -> str:
    return (
        "**Final Verdict:** The solution is correct.\n"
        "\n"
        f"No issues were found on verification {tag}.\n"
    )


def major_report_text(tag: int | str = 0) -> str:
    return (
        "**Final Verdict:** The solution is **invalid** because it contains "
        "a Critical Error.\n"
        "\n"
        "**List of Findings:**\n"
        f'*   **Location:** "the bound asserted in step {tag}"\n'
        "    *   **Issue:** Critical Error - The inequality is applied in "
        "the wrong direction.\n"
    )


def gap_report_text(tag: int | str = 0) -> str:
    return (
        "**Final Verdict:** The solution contains one or more Justification "
        "Gaps.\n"
        "\n"
        "**List of Findings:**\n"
        f'*   **Location:** "the convergence claim near step {tag}"\n'
        "    *   **Issue:** Justification Gap - The interchange of sum and "
        "limit is not justified.\n"
    )


def correction_text(attempt: int) -> str:
    return (
        "**1. Summary**\n"
        "\n"
        "I have successfully solved the problem. The flagged step has been "
        "repaired.\n"
        "\n"
        "**2. Detailed Solution**\n"
        "\n"
        f"Corrected attempt {attempt}: the inequality now runs in the right "
        "direction, since $2^{-(k+1)} \\le 2^{-k}$ for all $k \\ge 0$.\n"
    )


# A text that parses both as a complete solver response and as a clean
# correct-verdict report, so one repeating script entry can serve any step.
UNIVERSAL_TEXT = """\
**1. Summary**

I have successfully solved the problem.

**Final Verdict:** The solution is correct.

**2. Detailed Solution**

The required bound follows from the triangle inequality applied once.
"""


# --- scripted runs ----------------------------------------------------------


def accept5_entries() -> list[ScriptEntry]:
    """Generate, improve, then five straight passing verifications."""
    entries = [
        ScriptEntry(SOLVER_TEXT, kind="solver"),
        ScriptEntry(IMPROVED_TEXT, kind="self_improve"),
    ]
    entries += [
        ScriptEntry(pass_report_text(i), kind="verifier") for i in range(1, 6)
    ]
    return entries


def reject10_entries() -> list[ScriptEntry]:
    """Ten straight major failures, each but the last answered with a
    correction (run with review skipped)."""
    entries = [
        ScriptEntry(SOLVER_TEXT, kind="solver"),
        ScriptEntry(IMPROVED_TEXT, kind="self_improve"),
    ]
    for i in range(1, 11):
        entries.append(ScriptEntry(major_report_text(i), kind="verifier"))
        if i < 10:
            entries.append(ScriptEntry(correction_text(i), kind="correction"))
    return entries


def abort30_entries() -> list[ScriptEntry]:
    """Alternating pass/major verifications so neither streak completes;
    the run hits the iteration cap at exactly 30."""
    entries = [
        ScriptEntry(SOLVER_TEXT, kind="solver"),
        ScriptEntry(IMPROVED_TEXT, kind="self_improve"),
    ]
    for i in range(1, 31):
        if i % 2 == 1:
            entries.append(ScriptEntry(pass_report_text(i), kind="verifier"))
        else:
            entries.append(ScriptEntry(major_report_text(i), kind="verifier"))
            if i < 30:
                entries.append(ScriptEntry(correction_text(i), kind="correction"))
    return entries


def write_script(path: Path, entries: list[ScriptEntry], exhaustion: str = "fail") -> Path:
    data = {
        "exhaustion": exhaustion,
        "entries": [
            {
                "text": entry.text,
                **({"kind": entry.kind} if entry.kind else {}),
                **({"fail": entry.fail} if entry.fail else {}),
            }
            for entry in entries
        ],
    }
    path.write_text(json.dumps(data, indent=2), encoding="utf-8")
    return path


# --- report objects for driving the policy directly -------------------------

PASS_REPORT = BugReport(
    verdict_sentence="The solution is correct.",
    verdict_kind=VerdictKind.CORRECT,
    findings=(),
    raw="reference pass",
)

MAJOR_REPORT = BugReport(
    verdict_sentence="The solution is invalid.",
    verdict_kind=VerdictKind.INVALID,
    findings=(
        Finding(
            location_quote="step under test",
            classification=FindingClass.CRITICAL_ERROR,
            explanation="the step does not follow",
        ),
    ),
    raw="reference major fail",
)

MINOR_REPORT = BugReport(
    verdict_sentence="The solution contains a justification gap.",
    verdict_kind=VerdictKind.GAPS_ONLY,
    findings=(
        Finding(
            location_quote="step under test",
            classification=FindingClass.JUSTIFICATION_GAP,
            explanation="a small omission, already reviewed down",
            severity=Severity.MINOR,
        ),
    ),
    raw="reference minor fail",
)

REPORT_FOR_OUTCOME = {
    "pass": PASS_REPORT,
    "major": MAJOR_REPORT,
    "minor": MINOR_REPORT,
}


# --- decorated report emitter ------------------------------------------------

_BULLETS = ["*   ", "-   ", "+ ", "•   ", ""]
_QUOTES = [('"', '"'), ("“", "”"), ("`", "`"), ("", "")]
_LOCATION_SNIPPETS = [
    "In Step {n}, the map $f$ is assumed injective",
    "the sum $\\sum_k a_k$ converges by comparison",
    "taking $x \\to \\infty$ in equation ({n})",
    "both roots of the quadratic are positive",
    "the induction hypothesis applied to $n-{n}$",
    "WLOG $a \\ge b \\ge c$",
]
_EXPLANATIONS = [
    "the claim is used before it is established.",
    "no bound on the remainder term is given.",
    "the two cases are not exhaustive.",
    "this relies on continuity, which was never shown.",
    "the substitution changes the domain silently.",
]
_NARRATION = [
    "The algebra in the preceding step checks out.",
    "This matches the boundary condition stated earlier.",
    "The estimate here is standard and needs no comment.",
    "Each term of the expansion was verified numerically.",
]
_SENTENCES = {
    VerdictKind.CORRECT: [
        "The solution is correct.",
        "After a full review, the solution is correct.",
        "Every step checks out; the solution is **correct**.",
    ],
    VerdictKind.INVALID: [
        "The solution is **invalid** because it contains a Critical Error.",
        "The solution is invalid.",
        "The central argument is incorrect.",
        "The proof of the main claim is flawed.",
    ],
    VerdictKind.GAPS_ONLY: [
        "The solution contains one or more Justification Gaps.",
        "The solution has a justification gap that must be repaired.",
    ],
}
_CLASS_LABELS = {
    FindingClass.CRITICAL_ERROR: ["Critical Error", "Critical error", "CRITICAL ERROR"],
    FindingClass.JUSTIFICATION_GAP: [
        "Justification Gap",
        "Justification gap",
        "JUSTIFICATION GAP",
    ],
}


@dataclass
class EmittedReport:
    text: str
    verdict: VerdictKind
    classes: list[FindingClass]
    locations: list[str]


def _label(rng: random.Random, name: str) -> str:
    style = rng.randrange(4)
    if style == 0:
        return f"**{name}:**"
    if style == 1:
        return f"**{name}**" + rng.choice([":", " -", " —"])
    if style == 2:
        return f"{name}" + rng.choice([":", " -"])
    return f"*{name}*:"


def emit_report(rng: random.Random) -> EmittedReport:
    """One decorated report text plus the truth a parser must recover."""
    verdict = rng.choice(
        [VerdictKind.CORRECT, VerdictKind.INVALID, VerdictKind.GAPS_ONLY]
    )
    if verdict is VerdictKind.CORRECT:
        classes = [FindingClass.JUSTIFICATION_GAP] * rng.randrange(0, 3)
    elif verdict is VerdictKind.INVALID:
        n = rng.randrange(1, 5)
        classes = [
            rng.choice([FindingClass.CRITICAL_ERROR, FindingClass.JUSTIFICATION_GAP])
            for _ in range(n)
        ]
        classes[rng.randrange(n)] = FindingClass.CRITICAL_ERROR
    else:
        classes = [FindingClass.JUSTIFICATION_GAP] * rng.randrange(1, 4)

    lines: list[str] = []
    for _ in range(rng.randrange(0, 3)):
        lines.append(rng.choice(_NARRATION))
    sentence = rng.choice(_SENTENCES[verdict])
    verdict_label = rng.choice(["**Final Verdict:**", "**Final Verdict**:", "Final Verdict:"])
    if rng.random() < 0.2:
        lines.append(verdict_label)
        lines.append(sentence)
    else:
        lines.append(f"{verdict_label} {sentence}")
    lines.append("")
    if classes and rng.random() < 0.8:
        lines.append(rng.choice(["**List of Findings:**", "List of Findings:"]))

    locations = []
    for cls in classes:
        bullet = rng.choice(_BULLETS)
        location = rng.choice(_LOCATION_SNIPPETS).replace("{n}", str(rng.randrange(1, 9)))
        opening, closing = rng.choice(_QUOTES)
        lines.append(f"{bullet}{_label(rng, 'Location')} {opening}{location}{closing}")
        if rng.random() < 0.3:
            lines.append(rng.choice(_NARRATION))
        class_label = rng.choice(_CLASS_LABELS[cls])
        sep = rng.choice([" - ", ": ", " — ", " "])
        explanation = rng.choice(_EXPLANATIONS)
        lines.append(f"{bullet}{_label(rng, 'Issue')} {class_label}{sep}{explanation}")
        if rng.random() < 0.4:
            lines.append("")
        locations.append(location)

    if rng.random() < 0.5:
        lines.append("")
        lines.append("### Detailed Verification Log ###")
        for _ in range(rng.randrange(1, 4)):
            lines.append(rng.choice(_NARRATION))

    return EmittedReport("\n".join(lines) + "\n", verdict, classes, locations)
