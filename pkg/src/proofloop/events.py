"""Append-only JSONL run logs.

Each run owns one file: a header line that freezes the problem and config,
then one line per event with a strictly increasing ``sequence_no``.  The log
is the source of truth for a run; live state is always reconstructible by
replaying it.  Readers validate hard and refuse damaged files, because a
resume from a questionable log would diverge silently.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import LogError, ResumeRefusedError
from .policy import PipelineConfig
from .types import Problem

SCHEMA_NAME = "proofloop.run-log"
SCHEMA_VERSION = 1


class EventKind(str, Enum):
    STEP_ENTERED = "step_entered"
    PROMPT_SENT = "prompt_sent"
    RESPONSE_RECEIVED = "response_received"
    REPORT_PARSED = "report_parsed"
    REVIEW_DECISION_APPLIED = "review_decision_applied"
    DECISION_MADE = "decision_made"
    TERMINAL = "terminal"


@dataclass(frozen=True, slots=True)
class RunEvent:
    run_id: str
    sequence_no: int
    timestamp: str
    kind: EventKind
    payload: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "sequence_no": self.sequence_no,
            "timestamp": self.timestamp,
            "kind": self.kind.value,
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> RunEvent:
        return RunEvent(
            run_id=data["run_id"],
            sequence_no=data["sequence_no"],
            timestamp=data["timestamp"],
            kind=EventKind(data["kind"]),
            payload=data["payload"],
        )


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


_RUN_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


def check_run_id(run_id: str) -> str:
    if not _RUN_ID_RE.match(run_id):
        raise LogError(f"run id {run_id!r} is not filesystem-safe")
    return run_id


@dataclass(frozen=True, slots=True)
class LogHeader:
    run_id: str
    problem: Problem
    config: PipelineConfig
    created_at: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA_NAME,
            "version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "problem": {
                "id": self.problem.id,
                "statement": self.problem.statement,
                "hint": self.problem.hint,
            },
            "config": self.config.to_dict(),
            "created_at": self.created_at,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> LogHeader:
        problem = data["problem"]
        return LogHeader(
            run_id=data["run_id"],
            problem=Problem(
                id=problem["id"], statement=problem["statement"], hint=problem.get("hint")
            ),
            config=PipelineConfig.from_dict(data["config"]),
            created_at=data["created_at"],
        )


class EventLogWriter:
    """Appends events to one run's log.  Each event is a single ``write`` of
    a full line followed by a flush, so a reader never sees half an event
    from a cooperating writer."""

    def __init__(self, path: Path, run_id: str, next_sequence_no: int) -> None:
        self._path = path
        self._run_id = run_id
        self._next = next_sequence_no
        self._lock = threading.Lock()
        self._handle = path.open("a", encoding="utf-8")

    @property
    def run_id(self) -> str:
        return self._run_id

    def append(self, kind: EventKind, payload: dict[str, Any]) -> RunEvent:
        with self._lock:
            event = RunEvent(
                run_id=self._run_id,
                sequence_no=self._next,
                timestamp=utc_now(),
                kind=kind,
                payload=payload,
            )
            self._next += 1
            line = json.dumps(event.to_dict(), ensure_ascii=False)
            self._handle.write(line + "\n")
            self._handle.flush()
        return event

    def close(self) -> None:
        with self._lock:
            self._handle.close()

    def __enter__(self) -> EventLogWriter:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def read_log(path: Path) -> tuple[LogHeader, list[RunEvent]]:
    """Read and validate a run log.

    Raises ``ResumeRefusedError`` on a bad header, a line that is not valid
    JSON, a sequence gap, or a torn final line; the message names the first
    offending line or sequence number so the damage can be inspected.
    """
    if not path.exists():
        raise LogError(f"no run log at {path}")
    text = path.read_text("utf-8")
    if not text:
        raise ResumeRefusedError(f"{path} is empty")
    if not text.endswith("\n"):
        raise ResumeRefusedError(f"{path} ends mid-line; the final event is torn")
    lines = text.splitlines()

    try:
        header_data = json.loads(lines[0])
    except ValueError as exc:
        raise ResumeRefusedError(f"{path} header is not valid JSON: {exc}") from exc
    if header_data.get("schema") != SCHEMA_NAME:
        raise ResumeRefusedError(f"{path} is not a {SCHEMA_NAME} file")
    if header_data.get("version") != SCHEMA_VERSION:
        raise ResumeRefusedError(
            f"{path} has schema version {header_data.get('version')}, "
            f"expected {SCHEMA_VERSION}"
        )
    header = LogHeader.from_dict(header_data)

    events: list[RunEvent] = []
    expected_seq = 1
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            event = RunEvent.from_dict(json.loads(line))
        except (ValueError, KeyError) as exc:
            raise ResumeRefusedError(
                f"{path} line {lineno} (sequence_no {expected_seq}) is corrupt: {exc}"
            ) from exc
        if event.sequence_no != expected_seq:
            raise ResumeRefusedError(
                f"{path} has a sequence gap: expected {expected_seq}, "
                f"found {event.sequence_no}"
            )
        if event.run_id != header.run_id:
            raise ResumeRefusedError(
                f"{path} event {event.sequence_no} belongs to run {event.run_id!r}, "
                f"not {header.run_id!r}"
            )
        events.append(event)
        expected_seq += 1
    return header, events


class LogStore:
    """A directory of run logs, one ``<run_id>.jsonl`` per run."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, run_id: str) -> Path:
        return self.root / f"{check_run_id(run_id)}.jsonl"

    def list_run_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def exists(self, run_id: str) -> bool:
        return self.path_for(run_id).exists()

    def create(self, run_id: str, problem: Problem, config: PipelineConfig) -> EventLogWriter:
        path = self.path_for(run_id)
        if path.exists():
            raise LogError(f"run {run_id!r} already has a log")
        header = LogHeader(
            run_id=run_id, problem=problem, config=config, created_at=utc_now()
        )
        with path.open("x", encoding="utf-8") as handle:
            handle.write(json.dumps(header.to_dict(), ensure_ascii=False) + "\n")
        return EventLogWriter(path, run_id, next_sequence_no=1)

    def read(self, run_id: str) -> tuple[LogHeader, list[RunEvent]]:
        return read_log(self.path_for(run_id))

    def reopen(self, run_id: str) -> tuple[LogHeader, list[RunEvent], EventLogWriter]:
        """Validate an existing log and return a writer positioned after its
        last event.  This is the resume entry point."""
        header, events = self.read(run_id)
        next_seq = events[-1].sequence_no + 1 if events else 1
        writer = EventLogWriter(self.path_for(run_id), run_id, next_sequence_no=next_seq)
        return header, events, writer
