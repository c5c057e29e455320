"""Command-line entry points.

Five subcommands:

* ``run`` solves a problem file end to end against a scripted or HTTP
  backend, logging every event under the output directory;
* ``resume`` picks a crashed or interrupted run up from its log;
* ``report`` prints a human-readable transcript of a run's log;
* ``reliability`` prints the acceptance-policy error analysis for given
  per-check verifier error rates;
* ``serve`` starts the review API over an existing log directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
from pathlib import Path

from .errors import ConfigError, ProofloopError
from .events import EventKind, LogStore
from .gateway import (
    Gateway,
    HttpBackend,
    MockBackend,
    RateLimitedGateway,
    RetryingGateway,
)
from .orchestrator import consumed_responses, resume_run, run_many, run_pipeline, summarize
from .policy import PipelineConfig, ReviewMode
from .prompts import hint_sentences
from .reliability import VerifierErrorModel, reliability_table
from .review import ReviewHub
from .types import Problem

logger = logging.getLogger(__name__)


def _load_problem(path: Path, hint: str | None) -> Problem:
    """Problem files are either JSON ({"id", "statement", "hint"?}) or plain
    text, in which case the file stem is the id."""
    if path.suffix == ".json":
        data = json.loads(path.read_text("utf-8"))
        problem = Problem.from_dict(data)
    else:
        problem = Problem(id=path.stem, statement=path.read_text("utf-8"))
    if hint is not None:
        known = hint_sentences()
        problem = Problem(problem.id, problem.statement, known.get(hint, hint))
    return problem


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    """--config accepts inline JSON or the path of a JSON file."""
    if not args.config:
        data = {}
    elif args.config.lstrip().startswith("{"):
        data = json.loads(args.config)
    else:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {args.config}")
        data = json.loads(path.read_text("utf-8"))
    if args.runs is not None:
        data["parallel_runs"] = args.runs
    if args.review is not None:
        data["review_mode"] = args.review
    return PipelineConfig.from_dict(data)


def _build_gateway(args: argparse.Namespace, start_index: int = 0) -> Gateway:
    if args.backend == "mock":
        if not args.script:
            raise SystemExit("--script is required with --backend mock")
        backend = MockBackend.from_file(Path(args.script), start_index=start_index)
    else:
        if not args.base_url:
            raise SystemExit("--base-url is required with --backend http")
        backend = HttpBackend(
            base_url=args.base_url,
            model=args.model,
            api_key=os.environ.get(args.api_key_env),
            timeout=args.http_timeout,
        )
    gateway: Gateway = RetryingGateway(backend)
    if args.max_in_flight > 1 or args.min_interval > 0:
        gateway = RateLimitedGateway(
            gateway,
            max_in_flight=args.max_in_flight,
            min_interval=args.min_interval,
        )
    return gateway


def _start_service(
    store: LogStore, hub: ReviewHub, host: str, port: int, token: str | None
) -> threading.Thread:
    import uvicorn

    from .service import create_app

    app = create_app(store, hub, token=token)
    server = uvicorn.Server(
        uvicorn.Config(app, host=host, port=port, log_level="warning")
    )
    thread = threading.Thread(target=server.run, name="review-api", daemon=True)
    thread.start()
    return thread


def _print_outcomes(outcomes, summary) -> None:
    for outcome in outcomes:
        line = f"{outcome.run_id}: {outcome.terminal.value} after {outcome.iterations} iterations"
        if outcome.reason:
            line += f" ({outcome.reason})"
        print(line)
    print(f"success: {str(summary['succeeded']).lower()}")


def _cmd_run(args: argparse.Namespace) -> int:
    problem = _load_problem(Path(args.problem), args.hint)
    config = _build_config(args)
    gateway = _build_gateway(args)
    store = LogStore(Path(args.out))
    hub: ReviewHub | None = None
    if config.review_mode is ReviewMode.HUMAN:
        if args.serve_port is None:
            raise SystemExit(
                "--review human needs --serve-port so a reviewer can reach the run"
            )
        hub = ReviewHub()
        _start_service(store, hub, args.serve_host, args.serve_port, args.token)
        print(
            f"review api listening on http://{args.serve_host}:{args.serve_port}",
            file=sys.stderr,
        )
    if config.parallel_runs > 1:
        outcomes = run_many(
            problem, config, gateway, store=store, base_run_id=args.run_id, hub=hub
        )
    else:
        outcomes = [
            run_pipeline(
                problem,
                config,
                gateway,
                store=store,
                run_id=args.run_id,
                hub=hub,
                review_timeout=args.review_timeout,
            )
        ]
    summary = summarize(outcomes)
    _print_outcomes(outcomes, summary)
    return 0 if summary["succeeded"] else 1


def _cmd_resume(args: argparse.Namespace) -> int:
    store = LogStore(Path(args.out))
    _, events = store.read(args.run_id)
    gateway = _build_gateway(args, start_index=consumed_responses(events))
    outcome = resume_run(
        store, args.run_id, gateway, review_timeout=args.review_timeout
    )
    summary = summarize([outcome])
    _print_outcomes([outcome], summary)
    return 0 if summary["succeeded"] else 1


def _describe_event(event, full: bool) -> str:
    payload = event.payload
    kind = event.kind
    if kind is EventKind.STEP_ENTERED:
        text = f"step -> {payload.get('step')}"
        if "note" in payload:
            text += f" ({payload['note']})"
        return text
    if kind is EventKind.PROMPT_SENT:
        return f"prompt sent: {payload.get('kind')} ({payload.get('sha256', '')[:12]})"
    if kind is EventKind.RESPONSE_RECEIVED:
        suffix = " [truncated]" if payload.get("truncated") else ""
        text = f"response received: {payload.get('kind')}{suffix}"
        if full and payload.get("text"):
            text += "\n" + _indent(payload["text"])
        return text
    if kind is EventKind.REPORT_PARSED:
        n = len(payload.get("report", {}).get("findings", []))
        verdict = payload.get("report", {}).get("verdict_kind")
        return f"report parsed: {verdict}, {n} finding(s)"
    if kind is EventKind.REVIEW_DECISION_APPLIED:
        n = len(payload.get("decisions", []))
        return f"review decisions applied: {n} ({payload.get('source')})"
    if kind is EventKind.DECISION_MADE:
        text = (
            f"decision: {payload.get('decision')} "
            f"(iteration {payload.get('iteration')}, "
            f"passes {payload.get('consecutive_passes')}, "
            f"fails {payload.get('consecutive_major_fails')})"
        )
        if payload.get("reason"):
            text += f" reason: {payload['reason']}"
        return text
    if kind is EventKind.TERMINAL:
        text = f"terminal: {payload.get('terminal')} after {payload.get('iterations')} iteration(s)"
        if payload.get("reason"):
            text += f" ({payload['reason']})"
        return text
    return kind.value


def _indent(text: str) -> str:
    return "\n".join("    | " + line for line in text.splitlines())


def _cmd_report(args: argparse.Namespace) -> int:
    store = LogStore(Path(args.out))
    header, events = store.read(args.run_id)
    print(f"run {header.run_id}  problem {header.problem.id}  created {header.created_at}")
    config = header.config
    print(
        f"config: K={config.pass_threshold} M={config.rejection_window} "
        f"cap={config.max_total_iterations} temperature={config.temperature} "
        f"review={config.review_mode.value}"
    )
    for event in events:
        print(f"  #{event.sequence_no:<3} {_describe_event(event, args.full)}")
    return 0


def _cmd_reliability(args: argparse.Namespace) -> int:
    model = VerifierErrorModel(p_miss=args.p_miss, p_false_alarm=args.p_false_alarm)
    config = PipelineConfig(
        pass_threshold=args.k,
        rejection_window=args.m,
        max_total_iterations=args.cap,
    )
    table = reliability_table(model, config, trials=args.trials, seed=args.seed)
    if args.json:
        print(json.dumps(table, indent=2))
        return 0
    closed = table["closed_form_false_accept"]
    exact = table["exact"]
    sim = table["simulated"]
    print(f"p_miss={model.p_miss} p_false_alarm={model.p_false_alarm} K={args.k} M={args.m} cap={args.cap}")
    print(f"false accept, one pass window (p_miss^K): {closed:.6g}")
    print(f"false accept, full policy (exact):        {exact['false_accept']:.6g}")
    print(
        f"false accept, full policy (simulated):    {sim['false_accept']:.6g}"
        f" +/- {sim['false_accept_halfwidth']:.2g}"
    )
    print(f"false reject, full policy (exact):        {exact['false_reject']:.6g}")
    print(
        f"false reject, full policy (simulated):    {sim['false_reject']:.6g}"
        f" +/- {sim['false_reject_halfwidth']:.2g}"
    )
    print(
        "expected checks to terminal:              "
        f"flawed {exact['expected_checks_flawed']:.3f}, "
        f"sound {exact['expected_checks_sound']:.3f}"
    )
    print(f"({sim['trials']} trials, seed {sim['seed']})")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    store = LogStore(Path(args.out))
    app = create_app(store, ReviewHub(), token=args.token)
    uvicorn.run(app, host=args.serve_host, port=args.serve_port)
    return 0


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=("mock", "http"), default="mock")
    parser.add_argument("--script", help="mock script JSON (required for --backend mock)")
    parser.add_argument("--base-url", help="chat-completion endpoint base URL")
    parser.add_argument("--model", default="default", help="model name for the HTTP backend")
    parser.add_argument(
        "--api-key-env",
        default="PROOFLOOP_API_KEY",
        help="environment variable holding the API key",
    )
    parser.add_argument("--http-timeout", type=float, default=300.0)
    parser.add_argument("--max-in-flight", type=int, default=1)
    parser.add_argument("--min-interval", type=float, default=0.0)
    parser.add_argument("--review-timeout", type=float, default=86400.0)


def _add_serve_args(parser: argparse.ArgumentParser, with_port_default: bool) -> None:
    parser.add_argument("--serve-host", default="127.0.0.1")
    parser.add_argument(
        "--serve-port", type=int, default=8787 if with_port_default else None
    )
    parser.add_argument(
        "--token",
        default=os.environ.get("PROOFLOOP_TOKEN"),
        help="bearer token required on mutating endpoints",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proofloop")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve a problem end to end")
    p_run.add_argument("--problem", required=True, help="problem file (.json or plain text)")
    p_run.add_argument("--hint", help="hint key (see prompt manifest) or literal sentence")
    p_run.add_argument(
        "--config", help="pipeline overrides: inline JSON or a JSON file path"
    )
    p_run.add_argument("--runs", type=int, help="parallel independent runs")
    p_run.add_argument("--review", choices=("human", "auto", "skip"))
    p_run.add_argument("--out", default="runs", help="log directory")
    p_run.add_argument("--run-id", help="explicit run id (base id when --runs > 1)")
    _add_backend_args(p_run)
    _add_serve_args(p_run, with_port_default=False)
    p_run.set_defaults(func=_cmd_run)

    p_resume = sub.add_parser("resume", help="continue a run from its log")
    p_resume.add_argument("--run-id", required=True)
    p_resume.add_argument("--out", default="runs")
    _add_backend_args(p_resume)
    p_resume.set_defaults(func=_cmd_resume)

    p_report = sub.add_parser("report", help="print a run transcript")
    p_report.add_argument("--run-id", required=True)
    p_report.add_argument("--out", default="runs")
    p_report.add_argument("--full", action="store_true", help="include response bodies")
    p_report.set_defaults(func=_cmd_report)

    p_rel = sub.add_parser("reliability", help="acceptance-policy error analysis")
    p_rel.add_argument("--p-miss", type=float, required=True)
    p_rel.add_argument("--p-false-alarm", type=float, required=True)
    p_rel.add_argument("--k", type=int, default=5, help="pass threshold")
    p_rel.add_argument("--m", type=int, default=10, help="rejection window")
    p_rel.add_argument("--cap", type=int, default=30, help="max verifications per run")
    p_rel.add_argument("--trials", type=int, default=100_000)
    p_rel.add_argument("--seed", type=int, default=0)
    p_rel.add_argument("--json", action="store_true")
    p_rel.set_defaults(func=_cmd_reliability)

    p_serve = sub.add_parser("serve", help="start the review API over a log directory")
    p_serve.add_argument("--out", default="runs")
    _add_serve_args(p_serve, with_port_default=True)
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProofloopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
