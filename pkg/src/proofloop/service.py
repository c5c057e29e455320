"""HTTP review service.

Exposes runs and their pending bug reports so an operator (or another
program) can confirm, delete, or re-rate findings, then release a blocked
run.  All views are derived by replaying the event log, so the service never
holds state of its own; mutations go through the ReviewHub that the blocked
run is waiting on.

Endpoints
    GET  /runs                      list run summaries
    GET  /runs/{id}                 one run in detail
    GET  /runs/{id}/report          the report currently under review
    POST /runs/{id}/decisions       body: {"report_index": N, "decisions":
                                    [{"finding_index": i, "action":
                                    "confirm"|"delete"|"set_severity",
                                    "severity": "major"|"minor"}]}
    POST /runs/{id}/release         body (optional): {"note": "..."}
    GET  /runs/{id}/events          server-sent event stream of the log

Errors use the envelope {"code", "message", "detail"}.  When the app is
created with a token, the two POST endpoints require "Authorization: Bearer
<token>"; reads never do.
"""

from __future__ import annotations

import asyncio
import json
import logging
from typing import Any, Literal

from fastapi import Depends, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .errors import (
    ConfigError,
    ContractViolationError,
    LogError,
    ProofloopError,
    ReviewConflictError,
    ReviewError,
)
from .events import EventKind, LogStore, utc_now
from .orchestrator import Engine, replay
from .policy import Step
from .review import ReviewAction, ReviewDecision, ReviewHub, StaleDecisionError
from .types import Severity

logger = logging.getLogger(__name__)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: Any = None) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


def _envelope(status: int, code: str, message: str, detail: Any = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "detail": detail},
    )


class DecisionIn(BaseModel):
    finding_index: int = Field(ge=0)
    action: Literal["confirm", "delete", "set_severity"]
    severity: Literal["major", "minor"] | None = None


class DecisionsBody(BaseModel):
    report_index: int = Field(ge=0)
    decisions: list[DecisionIn]


class ReleaseBody(BaseModel):
    note: str = ""


def _replay_run(store: LogStore, run_id: str) -> Engine:
    header, events = store.read(run_id)
    return replay(header, events)


def run_summary_view(engine: Engine) -> dict[str, Any]:
    """The row the run board shows; a pure function of the replayed state."""
    state = engine.state
    latest = state.report_history[-1].verdict_kind.value if state.report_history else None
    return {
        "run_id": engine.run_id,
        "step": state.step.value,
        "iteration": state.iteration,
        "consecutive_passes": state.consecutive_passes,
        "latest_verdict": latest,
        "pending_review": state.step is Step.REVIEW,
    }


def create_app(
    store: LogStore,
    hub: ReviewHub,
    *,
    token: str | None = None,
    poll_interval: float = 0.25,
) -> FastAPI:
    app = FastAPI(title="proofloop review service", docs_url=None, redoc_url=None)

    def require_token(authorization: str | None = Header(default=None)) -> None:
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise ApiError(401, "unauthorized", "missing or invalid bearer token")

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError) -> JSONResponse:
        return _envelope(exc.status, exc.code, exc.message, exc.detail)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(
        request: Request, exc: RequestValidationError
    ) -> JSONResponse:
        return _envelope(422, "validation_error", "request body failed validation", exc.errors())

    @app.exception_handler(ProofloopError)
    async def _domain_error(request: Request, exc: ProofloopError) -> JSONResponse:
        if isinstance(exc, StaleDecisionError):
            return _envelope(409, "stale_report", str(exc))
        if isinstance(exc, ReviewConflictError):
            return _envelope(409, "review_conflict", str(exc))
        if isinstance(exc, (ReviewError, ContractViolationError, ConfigError)):
            return _envelope(422, "invalid_decision", str(exc))
        if isinstance(exc, LogError):
            return _envelope(500, "corrupt_log", str(exc))
        return _envelope(500, "internal_error", str(exc))

    def _load(run_id: str) -> Engine:
        if not store.exists(run_id):
            raise ApiError(404, "not_found", f"no run {run_id!r}")
        return _replay_run(store, run_id)

    @app.get("/runs")
    async def list_runs() -> list[dict[str, Any]]:
        views = []
        for run_id in store.list_run_ids():
            try:
                views.append(run_summary_view(_replay_run(store, run_id)))
            except LogError as exc:
                logger.warning("skipping unreadable log for %s: %s", run_id, exc)
        return views

    @app.get("/runs/{run_id}")
    async def get_run(run_id: str) -> dict[str, Any]:
        engine = _load(run_id)
        header, _ = store.read(run_id)
        view = run_summary_view(engine)
        view.update(
            consecutive_major_fails=engine.state.consecutive_major_fails,
            problem=header.problem.to_dict(),
            config=header.config.to_dict(),
            reports=len(engine.state.report_history),
            terminal_reason=engine.terminal_reason,
            created_at=header.created_at,
        )
        return view

    @app.get("/runs/{run_id}/report")
    async def get_report(run_id: str) -> dict[str, Any]:
        if not store.exists(run_id):
            raise ApiError(404, "not_found", f"no run {run_id!r}")
        report_index, report = hub.pending_report(run_id)
        return {"run_id": run_id, "report_index": report_index, "report": report.to_dict()}

    @app.post("/runs/{run_id}/decisions", dependencies=[Depends(require_token)])
    async def post_decisions(run_id: str, body: DecisionsBody) -> dict[str, Any]:
        if not store.exists(run_id):
            raise ApiError(404, "not_found", f"no run {run_id!r}")
        stamp = utc_now()
        decisions = [
            ReviewDecision(
                run_id=run_id,
                report_index=body.report_index,
                finding_index=item.finding_index,
                action=ReviewAction(item.action),
                severity=Severity(item.severity) if item.severity else None,
                reviewer="human",
                timestamp=stamp,
            )
            for item in body.decisions
        ]
        report = hub.submit(run_id, decisions, source="human")
        return {"run_id": run_id, "report_index": body.report_index, "report": report.to_dict()}

    @app.post("/runs/{run_id}/release", dependencies=[Depends(require_token)])
    async def post_release(run_id: str, body: ReleaseBody | None = None) -> dict[str, Any]:
        if not store.exists(run_id):
            raise ApiError(404, "not_found", f"no run {run_id!r}")
        note = body.note if body and body.note else None
        hub.release(run_id, note)
        return {"run_id": run_id, "released": True}

    @app.get("/runs/{run_id}/events")
    async def stream_events(run_id: str) -> StreamingResponse:
        if not store.exists(run_id):
            raise ApiError(404, "not_found", f"no run {run_id!r}")
        path = store.path_for(run_id)

        async def generate():
            offset = 0
            header_sent = False
            buffer = b""
            while True:
                with path.open("rb") as fh:
                    fh.seek(offset)
                    chunk = fh.read()
                offset += len(chunk)
                buffer += chunk
                progressed = False
                while True:
                    newline = buffer.find(b"\n")
                    if newline < 0:
                        break
                    line, buffer = buffer[:newline], buffer[newline + 1 :]
                    progressed = True
                    record = json.loads(line.decode("utf-8"))
                    if not header_sent:
                        header_sent = True
                        yield _sse("header", record)
                        continue
                    yield _sse(record["kind"], record)
                    if record["kind"] == EventKind.TERMINAL.value:
                        return
                if not progressed:
                    await asyncio.sleep(poll_interval)

        return StreamingResponse(generate(), media_type="text/event-stream")

    return app


def _sse(event: str, data: dict[str, Any]) -> str:
    return f"event: {event}\ndata: {json.dumps(data, separators=(',', ':'))}\n\n"
