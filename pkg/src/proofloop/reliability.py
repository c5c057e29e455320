"""Reliability analysis of the accept/reject policy under a noisy verifier.

The verifier is modeled as a Bernoulli check: a flawed solution slips past
one check with probability ``p_miss``; a sound solution draws a spurious
major finding with probability ``p_false_alarm``.  Checks are independent.

Two deliberately separate routes compute the policy's behavior:

* ``policy_outcome_exact`` walks the absorbing chain over the two streak
  counters directly from the window rules, with no code shared with the
  pipeline;
* ``simulate_policy`` runs Monte Carlo trials whose every transition comes
  from the production ``advance``/``decide`` pair (compiled once into a
  lookup table, so a million trials stay cheap).

If the pipeline's policy code drifts from the stated rules, the two routes
disagree and the tests comparing them fail.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ConfigError
from .policy import (
    PipelineConfig,
    ReportProduced,
    ReviewMode,
    RunState,
    Step,
    advance,
)
from .types import (
    BugReport,
    DraftOrigin,
    DraftVerdict,
    Finding,
    FindingClass,
    SolutionDraft,
    VerdictKind,
)


class Truth(str, Enum):
    FLAWED = "flawed"
    SOUND = "sound"


@dataclass(frozen=True, slots=True)
class VerifierErrorModel:
    p_miss: float
    p_false_alarm: float
    independence: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_miss <= 1.0:
            raise ConfigError("p_miss must lie in [0, 1]")
        if not 0.0 <= self.p_false_alarm <= 1.0:
            raise ConfigError("p_false_alarm must lie in [0, 1]")
        if not self.independence:
            raise ConfigError("only independent checks are modeled")

    def pass_probability(self, truth: Truth) -> float:
        """Chance that one check passes a solution of the given truth."""
        if truth is Truth.FLAWED:
            return self.p_miss
        return 1.0 - self.p_false_alarm


@dataclass(frozen=True, slots=True)
class PolicyReliability:
    p_false_accept: float
    p_false_reject: float
    expected_checks_to_terminal: float
    confidence_halfwidth: float


@dataclass(frozen=True, slots=True)
class ExactPolicyOutcome:
    accept_probability: float
    reject_probability: float
    abort_probability: float
    expected_checks: float


def false_accept_closed_form(
    model: VerifierErrorModel | float, pass_threshold: int
) -> float:
    """Probability one uninterrupted pass window lets a flawed solution
    through: ``p_miss ** pass_threshold``.  This ignores rejection and the
    iteration cap; ``policy_outcome_exact`` accounts for both.  Accepts a
    bare ``p_miss`` for quick calculations."""
    if pass_threshold < 1:
        raise ConfigError("pass_threshold must be >= 1")
    p_miss = model.p_miss if isinstance(model, VerifierErrorModel) else float(model)
    if not 0.0 <= p_miss <= 1.0:
        raise ConfigError("p_miss must lie in [0, 1]")
    return p_miss ** pass_threshold


def policy_outcome_exact(
    pass_prob: float,
    pass_threshold: int,
    rejection_window: int,
    max_iterations: int,
) -> ExactPolicyOutcome:
    """Exact absorption probabilities for the two-streak policy.

    Implements the window rules directly: a pass extends the pass streak and
    clears the fail streak, a major fail does the opposite, the pass streak
    reaching ``pass_threshold`` accepts, the fail streak reaching
    ``rejection_window`` rejects, and anything still running after
    ``max_iterations`` checks aborts.  Aborted walks count ``max_iterations``
    checks in the expectation.
    """
    if not 0.0 <= pass_prob <= 1.0:
        raise ConfigError("pass_prob must lie in [0, 1]")
    fail_prob = 1.0 - pass_prob
    dist: dict[tuple[int, int], float] = {(0, 0): 1.0}
    accept = reject = 0.0
    expected = 0.0
    for t in range(1, max_iterations + 1):
        nxt: dict[tuple[int, int], float] = {}
        accepted_now = rejected_now = 0.0
        for (passes, fails), prob in dist.items():
            if pass_prob > 0.0:
                mass = prob * pass_prob
                if passes + 1 >= pass_threshold:
                    accepted_now += mass
                else:
                    key = (passes + 1, 0)
                    nxt[key] = nxt.get(key, 0.0) + mass
            if fail_prob > 0.0:
                mass = prob * fail_prob
                if fails + 1 >= rejection_window:
                    rejected_now += mass
                else:
                    key = (0, fails + 1)
                    nxt[key] = nxt.get(key, 0.0) + mass
        accept += accepted_now
        reject += rejected_now
        expected += t * (accepted_now + rejected_now)
        dist = nxt
    abort = sum(dist.values())
    expected += max_iterations * abort
    return ExactPolicyOutcome(
        accept_probability=accept,
        reject_probability=reject,
        abort_probability=abort,
        expected_checks=expected,
    )


# --- Monte Carlo through the production policy ------------------------------

_PASS_REPORT = BugReport(
    verdict_sentence="The solution is correct.",
    verdict_kind=VerdictKind.CORRECT,
    findings=(),
    raw="synthetic pass",
)
_FAIL_REPORT = BugReport(
    verdict_sentence="The solution contains a Critical Error and is therefore invalid.",
    verdict_kind=VerdictKind.INVALID,
    findings=(
        Finding(
            location_quote="(synthetic)",
            classification=FindingClass.CRITICAL_ERROR,
            explanation="synthetic major failure",
        ),
    ),
    raw="synthetic fail",
)
_DUMMY_DRAFT = SolutionDraft(
    version=1,
    body="synthetic draft",
    summary_verdict=DraftVerdict.COMPLETE,
    produced_by=DraftOrigin.SELF_IMPROVEMENT,
)

_ACCEPT, _REJECT, _ABORT = 1, 2, 3


@dataclass(frozen=True)
class _Tables:
    next_pass: np.ndarray
    next_fail: np.ndarray
    absorb_pass: np.ndarray
    absorb_fail: np.ndarray


def _counter_states(config: PipelineConfig) -> list[tuple[int, int]]:
    """Every reachable (pass streak, fail streak) pair; the two are never
    both positive."""
    states = [(p, 0) for p in range(config.pass_threshold)]
    states += [(0, m) for m in range(1, config.rejection_window)]
    return states


def _transition_tables(config: PipelineConfig) -> _Tables:
    """Compile ``advance``/``decide`` into per-state transitions.

    Each entry is obtained by actually running one synthetic verification
    through the production state machine, so the table is the policy, not a
    reimplementation of it.  The iteration cap is applied by the caller at
    the exact step count; the probe config pushes it out of the way.
    """
    probe_config = replace(
        config, review_mode=ReviewMode.SKIP, max_total_iterations=10**9
    )
    states = _counter_states(config)
    index = {state: i for i, state in enumerate(states)}
    n = len(states)
    tables = _Tables(
        next_pass=np.zeros(n, dtype=np.int64),
        next_fail=np.zeros(n, dtype=np.int64),
        absorb_pass=np.zeros(n, dtype=np.int8),
        absorb_fail=np.zeros(n, dtype=np.int8),
    )
    for i, (passes, fails) in enumerate(states):
        for report, next_arr, absorb_arr in (
            (_PASS_REPORT, tables.next_pass, tables.absorb_pass),
            (_FAIL_REPORT, tables.next_fail, tables.absorb_fail),
        ):
            probe = RunState(
                step=Step.VERIFY,
                iteration=0,
                consecutive_passes=passes,
                consecutive_major_fails=fails,
                current_draft=_DUMMY_DRAFT,
                report_history=(),
            )
            landed = advance(probe, ReportProduced(report), probe_config)
            if landed.step is Step.ACCEPTED:
                absorb_arr[i] = _ACCEPT
            elif landed.step is Step.REJECTED:
                absorb_arr[i] = _REJECT
            else:
                next_arr[i] = index[
                    (landed.consecutive_passes, landed.consecutive_major_fails)
                ]
    return tables


_BLOCK_SIZE = 1 << 16


def _simulate_block(
    seed: int, block_index: int, trials: int, pass_prob: float, tables: _Tables, cap: int
) -> tuple[int, int, int, int]:
    """One seeded block of trials; returns (accepts, rejects, aborts, steps)."""
    rng = np.random.default_rng([seed, block_index])
    state = np.zeros(trials, dtype=np.int64)
    outcome = np.zeros(trials, dtype=np.int8)
    steps = np.zeros(trials, dtype=np.int64)
    for t in range(1, cap + 1):
        draws = rng.random(trials) < pass_prob
        running = np.flatnonzero(outcome == 0)
        if running.size == 0:
            break
        s = state[running]
        passed = draws[running]
        absorbed = np.where(passed, tables.absorb_pass[s], tables.absorb_fail[s])
        landed = np.where(passed, tables.next_pass[s], tables.next_fail[s])
        hit = absorbed != 0
        outcome[running[hit]] = absorbed[hit]
        steps[running[hit]] = t
        state[running[~hit]] = landed[~hit]
    running = outcome == 0
    outcome[running] = _ABORT
    steps[running] = cap
    return (
        int(np.count_nonzero(outcome == _ACCEPT)),
        int(np.count_nonzero(outcome == _REJECT)),
        int(np.count_nonzero(outcome == _ABORT)),
        int(steps.sum()),
    )


def simulate_policy(
    model: VerifierErrorModel,
    truth: Truth,
    config: PipelineConfig,
    trials: int,
    seed: int,
    workers: int = 1,
) -> PolicyReliability:
    """Monte Carlo estimate of the policy's behavior for one ground truth.

    Trials are split into fixed-size blocks seeded by ``(seed, block
    index)``, and results are reduced in block order, so the estimate is a
    pure function of ``seed`` no matter how many workers run the blocks.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    pass_prob = model.pass_probability(truth)
    tables = _transition_tables(config)
    cap = config.max_total_iterations

    blocks = []
    offset = 0
    block_index = 0
    while offset < trials:
        size = min(_BLOCK_SIZE, trials - offset)
        blocks.append((block_index, size))
        offset += size
        block_index += 1

    def job(block: tuple[int, int]) -> tuple[int, int, int, int]:
        b, size = block
        return _simulate_block(seed, b, size, pass_prob, tables, cap)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, blocks))
    else:
        results = [job(block) for block in blocks]

    accepts = sum(r[0] for r in results)
    rejects = sum(r[1] for r in results)
    steps = sum(r[3] for r in results)

    accept_rate = accepts / trials
    reject_rate = rejects / trials
    if truth is Truth.FLAWED:
        p_false_accept, p_false_reject = accept_rate, 0.0
        focus = accept_rate
    else:
        p_false_accept, p_false_reject = 0.0, reject_rate
        focus = reject_rate
    halfwidth = 1.96 * math.sqrt(focus * (1.0 - focus) / trials)
    return PolicyReliability(
        p_false_accept=p_false_accept,
        p_false_reject=p_false_reject,
        expected_checks_to_terminal=steps / trials,
        confidence_halfwidth=halfwidth,
    )


def standard_error(p: float, trials: int) -> float:
    """Standard error of a proportion estimate under true probability p."""
    return math.sqrt(p * (1.0 - p) / trials)


def reliability_table(
    model: VerifierErrorModel,
    config: PipelineConfig,
    trials: int,
    seed: int,
) -> dict:
    """Everything the CLI prints: closed form, exact chain, and simulation
    for both ground truths."""
    exact_flawed = policy_outcome_exact(
        model.pass_probability(Truth.FLAWED),
        config.pass_threshold,
        config.rejection_window,
        config.max_total_iterations,
    )
    exact_sound = policy_outcome_exact(
        model.pass_probability(Truth.SOUND),
        config.pass_threshold,
        config.rejection_window,
        config.max_total_iterations,
    )
    sim_flawed = simulate_policy(model, Truth.FLAWED, config, trials, seed)
    sim_sound = simulate_policy(model, Truth.SOUND, config, trials, seed + 1)
    return {
        "model": {"p_miss": model.p_miss, "p_false_alarm": model.p_false_alarm},
        "closed_form_false_accept": false_accept_closed_form(
            model, config.pass_threshold
        ),
        "exact": {
            "false_accept": exact_flawed.accept_probability,
            "false_reject": exact_sound.reject_probability,
            "abort_flawed": exact_flawed.abort_probability,
            "abort_sound": exact_sound.abort_probability,
            "expected_checks_flawed": exact_flawed.expected_checks,
            "expected_checks_sound": exact_sound.expected_checks,
        },
        "simulated": {
            "false_accept": sim_flawed.p_false_accept,
            "false_accept_halfwidth": sim_flawed.confidence_halfwidth,
            "false_reject": sim_sound.p_false_reject,
            "false_reject_halfwidth": sim_sound.confidence_halfwidth,
            "expected_checks_flawed": sim_flawed.expected_checks_to_terminal,
            "expected_checks_sound": sim_sound.expected_checks_to_terminal,
            "trials": trials,
            "seed": seed,
        },
    }
