"""Model access: a real HTTP chat-completion backend, a scripted mock, and
composable wrappers for retries and rate limiting.

The pipeline only ever sends plain text prompts and reads back plain text.
There is deliberately no tool or function-call plumbing anywhere in the wire
format; ``HttpBackend.build_payload`` is the single place a request becomes
JSON, and a test pins the absence of those fields.
"""

from __future__ import annotations

import json
import threading
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .errors import (
    AuthBackendError,
    BackendError,
    BackendExhaustedError,
    BackpressureError,
    ConfigError,
    ScriptExhaustedError,
    ScriptMismatchError,
    TransientBackendError,
)
from .policy import PipelineConfig
from .prompts import RenderedPrompt

DEFAULT_MAX_OUTPUT_TOKENS = 32768


@dataclass(frozen=True, slots=True)
class Usage:
    prompt_tokens: int = 0
    output_tokens: int = 0
    thinking_tokens: int = 0

    def to_dict(self) -> dict[str, int]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "output_tokens": self.output_tokens,
            "thinking_tokens": self.thinking_tokens,
        }

    @staticmethod
    def from_dict(data: dict[str, int]) -> Usage:
        return Usage(
            prompt_tokens=data.get("prompt_tokens", 0),
            output_tokens=data.get("output_tokens", 0),
            thinking_tokens=data.get("thinking_tokens", 0),
        )


@dataclass(frozen=True, slots=True)
class CompletionRequest:
    prompt: RenderedPrompt
    temperature: float
    thinking_budget: int
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    request_id: str = ""

    @property
    def step_kind(self) -> str:
        return self.prompt.template_name


@dataclass(frozen=True, slots=True)
class CompletionResponse:
    text: str
    usage: Usage
    latency: float
    backend: str
    truncated: bool = False  # output hit the token ceiling; flagged, never dropped
    retries: int = 0


def request_for(
    prompt: RenderedPrompt, config: PipelineConfig, request_id: str = ""
) -> CompletionRequest:
    return CompletionRequest(
        prompt=prompt,
        temperature=config.temperature,
        thinking_budget=config.thinking_budget,
        request_id=request_id,
    )


class Gateway(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


# --- scripted mock ----------------------------------------------------------


class Exhaustion(str, Enum):
    REPEAT = "repeat"
    FAIL = "fail"


@dataclass(frozen=True, slots=True)
class ScriptEntry:
    """One canned response.  ``kind`` pins the entry to a step kind so a
    drifting run trips a loud mismatch instead of consuming the wrong line.
    ``fail`` turns consumption into an injected error."""

    text: str = ""
    kind: str | None = None
    fail: str | None = None  # "transient" or "auth"
    truncated: bool = False
    thinking_tokens: int = 0


def _estimate_tokens(text: str) -> int:
    return max(1, (len(text) + 3) // 4)


class MockBackend:
    """Deterministic scripted backend; entries are consumed strictly in order.

    ``start_index`` exists for resume tests: a resumed run must pick up the
    script exactly where the interrupted run left off.
    """

    def __init__(
        self,
        entries: list[ScriptEntry],
        exhaustion: Exhaustion = Exhaustion.FAIL,
        start_index: int = 0,
    ) -> None:
        if not entries:
            raise ConfigError("mock script needs at least one entry")
        self._entries = list(entries)
        self._exhaustion = exhaustion
        self._index = start_index
        self._lock = threading.Lock()
        self.calls = 0
        self.calls_by_kind: Counter[str] = Counter()

    @staticmethod
    def from_file(path: str | Path, start_index: int = 0) -> MockBackend:
        """Load a script from JSON.  Entries may carry ``text`` inline or a
        ``file`` path relative to the script for bulky bodies."""
        path = Path(path)
        data = json.loads(path.read_text("utf-8"))
        entries = []
        for obj in data["entries"]:
            if "file" in obj:
                text = (path.parent / obj["file"]).read_text("utf-8")
            else:
                text = obj.get("text", "")
            entries.append(
                ScriptEntry(
                    text=text,
                    kind=obj.get("kind"),
                    fail=obj.get("fail"),
                    truncated=obj.get("truncated", False),
                    thinking_tokens=obj.get("thinking_tokens", 0),
                )
            )
        exhaustion = Exhaustion(data.get("exhaustion", "fail"))
        return MockBackend(entries, exhaustion=exhaustion, start_index=start_index)

    @property
    def consumed(self) -> int:
        return self._index

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            index = self._index
            if index >= len(self._entries):
                if self._exhaustion is Exhaustion.FAIL:
                    raise ScriptExhaustedError(
                        f"script exhausted after {len(self._entries)} entries"
                    )
                index = index % len(self._entries)
            entry = self._entries[index]
            self._index += 1
            self.calls += 1
            self.calls_by_kind[request.step_kind] += 1
        if entry.kind is not None and entry.kind != request.step_kind:
            raise ScriptMismatchError(
                f"script entry {index} is keyed to {entry.kind!r} "
                f"but the request is a {request.step_kind!r} step"
            )
        if entry.fail == "transient":
            raise TransientBackendError(f"injected transient failure at entry {index}")
        if entry.fail == "auth":
            raise AuthBackendError(f"injected auth failure at entry {index}")
        return CompletionResponse(
            text=entry.text,
            usage=Usage(
                prompt_tokens=_estimate_tokens(request.prompt.text),
                output_tokens=_estimate_tokens(entry.text),
                thinking_tokens=entry.thinking_tokens,
            ),
            latency=0.0,
            backend="mock",
            truncated=entry.truncated,
        )


# --- real backend -----------------------------------------------------------


class HttpBackend:
    """OpenAI-style ``/chat/completions`` client.

    The API key comes from an environment variable, never from config files.
    A truncated completion (finish reason ``length``) is returned flagged,
    not raised: the caller decides whether a cut-off draft is still usable.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 300.0,
        send_thinking_budget: bool = False,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self._model = model
        self._api_key = api_key
        self._send_thinking_budget = send_thinking_budget
        self._client = httpx.Client(base_url=base_url, timeout=timeout, transport=transport)

    def build_payload(self, request: CompletionRequest) -> dict:
        payload = {
            "model": self._model,
            "messages": [{"role": "user", "content": request.prompt.text}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if self._send_thinking_budget:
            # Non-standard field; endpoints that do not know it ignore it.
            payload["thinking_budget"] = request.thinking_budget
        return payload

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        started = time.monotonic()
        try:
            response = self._client.post(
                "/chat/completions", json=self.build_payload(request), headers=headers
            )
        except httpx.TimeoutException as exc:
            raise TransientBackendError(f"request timed out: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        latency = time.monotonic() - started

        if response.status_code in (401, 403):
            raise AuthBackendError(f"backend rejected credentials ({response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"backend returned {response.status_code}")
        if response.status_code >= 400:
            raise BackendError(
                f"backend returned {response.status_code}: {response.text[:200]}"
            )

        try:
            body = response.json()
            choice = body["choices"][0]
            text = choice["message"]["content"] or ""
            finish = choice.get("finish_reason", "")
            usage = body.get("usage", {})
        except (KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"unintelligible completion body: {exc}") from exc

        return CompletionResponse(
            text=text,
            usage=Usage(
                prompt_tokens=usage.get("prompt_tokens", 0),
                output_tokens=usage.get("completion_tokens", 0),
                thinking_tokens=usage.get("reasoning_tokens", 0),
            ),
            latency=latency,
            backend="http",
            truncated=(finish == "length"),
        )


# --- wrappers ---------------------------------------------------------------


class UsageTotals:
    """Thread-safe running totals across every successful completion."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0
        self.prompt_tokens = 0
        self.output_tokens = 0
        self.thinking_tokens = 0

    def add(self, usage: Usage) -> None:
        with self._lock:
            self.calls += 1
            self.prompt_tokens += usage.prompt_tokens
            self.output_tokens += usage.output_tokens
            self.thinking_tokens += usage.thinking_tokens

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "calls": self.calls,
                "prompt_tokens": self.prompt_tokens,
                "output_tokens": self.output_tokens,
                "thinking_tokens": self.thinking_tokens,
            }


class RetryingGateway:
    """Retries transient failures with doubling backoff; keeps usage totals.

    Auth failures and malformed-body errors pass straight through -- retrying
    cannot fix either.  When every attempt is transient-failed the caller
    gets ``BackendExhaustedError`` chained to the last underlying error.
    """

    def __init__(
        self,
        backend: Gateway,
        attempts: int = 3,
        base_delay: float = 1.0,
        max_delay: float = 30.0,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if attempts < 1:
            raise ConfigError("attempts must be >= 1")
        self._backend = backend
        self._attempts = attempts
        self._base_delay = base_delay
        self._max_delay = max_delay
        self._sleep = sleep
        self.totals = UsageTotals()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        delay = self._base_delay
        last_error: TransientBackendError | None = None
        for attempt in range(self._attempts):
            try:
                response = self._backend.complete(request)
            except TransientBackendError as exc:
                last_error = exc
                if attempt + 1 < self._attempts:
                    self._sleep(delay)
                    delay = min(delay * 2, self._max_delay)
                continue
            response = replace(response, retries=attempt)
            self.totals.add(response.usage)
            return response
        raise BackendExhaustedError(
            f"gave up after {self._attempts} attempts: {last_error}"
        ) from last_error


class RateLimitedGateway:
    """FIFO admission control in front of another gateway.

    At most ``max_in_flight`` calls run concurrently, consecutive dispatches
    are at least ``min_interval`` seconds apart, and when ``queue_depth`` is
    set, callers beyond that many waiters are refused immediately with
    ``BackpressureError`` rather than queued without bound.
    """

    def __init__(
        self,
        gateway: Gateway,
        max_in_flight: int = 1,
        min_interval: float = 0.0,
        queue_depth: int | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if min_interval < 0:
            raise ConfigError("min_interval must be >= 0")
        if queue_depth is not None and queue_depth < 0:
            raise ConfigError("queue_depth must be >= 0")
        self._gateway = gateway
        self._max_in_flight = max_in_flight
        self._min_interval = min_interval
        self._queue_depth = queue_depth
        self._clock = clock
        self._sleep = sleep
        self._cond = threading.Condition()
        self._next_ticket = 0
        self._serving = 0
        self._waiting = 0
        self._in_flight = 0
        self._last_slot: float | None = None
        self.dispatch_times: list[float] = []

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._cond:
            if self._queue_depth is not None and self._waiting >= self._queue_depth:
                raise BackpressureError(
                    f"rate-limiter queue is full ({self._waiting} waiting)"
                )
            ticket = self._next_ticket
            self._next_ticket += 1
            self._waiting += 1
            try:
                while not (ticket == self._serving and self._in_flight < self._max_in_flight):
                    self._cond.wait()
            finally:
                self._waiting -= 1
            self._serving += 1
            self._in_flight += 1
            now = self._clock()
            if self._last_slot is None:
                slot = now
            else:
                slot = max(now, self._last_slot + self._min_interval)
            self._last_slot = slot
            self.dispatch_times.append(slot)
            wait_for = slot - now
            # Let the next ticket start competing for the following slot.
            self._cond.notify_all()
        if wait_for > 0:
            self._sleep(wait_for)
        try:
            return self._gateway.complete(request)
        finally:
            with self._cond:
                self._in_flight -= 1
                self._cond.notify_all()
