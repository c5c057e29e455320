"""Gateway stack tests: scripted mock, HTTP client, retry wrapper, and the
rate limiter.  Network behavior is exercised through httpx's mock transport;
time is injected everywhere, so nothing here actually sleeps."""

from __future__ import annotations

import json
import threading
import time

import httpx
import pytest

from proofloop.errors import (
    AuthBackendError,
    BackendError,
    BackendExhaustedError,
    BackpressureError,
    ScriptExhaustedError,
    ScriptMismatchError,
    TransientBackendError,
)
from proofloop.gateway import (
    CompletionRequest,
    CompletionResponse,
    Exhaustion,
    HttpBackend,
    MockBackend,
    RateLimitedGateway,
    RetryingGateway,
    ScriptEntry,
    Usage,
    request_for,
)
from proofloop.policy import PipelineConfig
from proofloop.prompts import RenderedPrompt

CONFIG = PipelineConfig()


def make_request(kind: str = "solver", text: str = "prompt text") -> CompletionRequest:
    return request_for(RenderedPrompt(kind, text, ()), CONFIG, request_id="req-1")


# --- request construction ---------------------------------------------------


def test_request_carries_config_knobs():
    request = make_request()
    assert request.temperature == CONFIG.temperature
    assert request.thinking_budget == CONFIG.thinking_budget
    assert request.step_kind == "solver"


# --- mock backend -----------------------------------------------------------


def test_script_entries_are_consumed_in_order():
    backend = MockBackend([ScriptEntry("one"), ScriptEntry("two")])
    assert backend.complete(make_request()).text == "one"
    assert backend.complete(make_request()).text == "two"
    assert backend.consumed == 2
    assert backend.calls == 2


def test_usage_is_deterministic_from_text_length():
    backend = MockBackend([ScriptEntry("abcdefgh")])
    response = backend.complete(make_request(text="12345678"))
    assert response.usage.prompt_tokens == 2
    assert response.usage.output_tokens == 2


def test_kind_keyed_entry_rejects_the_wrong_step():
    backend = MockBackend([ScriptEntry("one", kind="verifier")])
    with pytest.raises(ScriptMismatchError):
        backend.complete(make_request(kind="solver"))


def test_exhausted_script_fails_by_default():
    backend = MockBackend([ScriptEntry("only")])
    backend.complete(make_request())
    with pytest.raises(ScriptExhaustedError):
        backend.complete(make_request())


def test_exhausted_script_can_repeat():
    backend = MockBackend(
        [ScriptEntry("a"), ScriptEntry("b")], exhaustion=Exhaustion.REPEAT
    )
    texts = [backend.complete(make_request()).text for _ in range(5)]
    assert texts == ["a", "b", "a", "b", "a"]


def test_start_index_skips_already_consumed_entries():
    entries = [ScriptEntry("a"), ScriptEntry("b"), ScriptEntry("c")]
    backend = MockBackend(entries, start_index=2)
    assert backend.complete(make_request()).text == "c"


def test_injected_failures():
    backend = MockBackend(
        [ScriptEntry(fail="transient"), ScriptEntry(fail="auth")]
    )
    with pytest.raises(TransientBackendError):
        backend.complete(make_request())
    with pytest.raises(AuthBackendError):
        backend.complete(make_request())


def test_script_loading_from_json(tmp_path):
    (tmp_path / "body.txt").write_text("from a file", encoding="utf-8")
    script = {
        "exhaustion": "repeat",
        "entries": [
            {"text": "inline", "kind": "solver"},
            {"file": "body.txt"},
        ],
    }
    path = tmp_path / "script.json"
    path.write_text(json.dumps(script), encoding="utf-8")
    backend = MockBackend.from_file(path)
    assert backend.complete(make_request(kind="solver")).text == "inline"
    assert backend.complete(make_request()).text == "from a file"
    assert backend.complete(make_request()).text == "inline"


# --- http backend -----------------------------------------------------------


def _http_backend(handler, **kwargs) -> HttpBackend:
    transport = httpx.MockTransport(handler)
    return HttpBackend(
        base_url="https://example.test/v1",
        model="test-model",
        transport=transport,
        **kwargs,
    )


def _completion_body(text: str, finish: str = "stop") -> dict:
    return {
        "choices": [{"message": {"content": text}, "finish_reason": finish}],
        "usage": {"prompt_tokens": 7, "completion_tokens": 11, "reasoning_tokens": 3},
    }


def test_http_payload_has_no_tool_fields():
    captured = {}

    def handler(request: httpx.Request) -> httpx.Response:
        captured["payload"] = json.loads(request.content)
        captured["auth"] = request.headers.get("Authorization")
        return httpx.Response(200, json=_completion_body("ok"))

    backend = _http_backend(handler, api_key="secret-key")
    backend.complete(make_request())
    payload = captured["payload"]
    assert set(payload) == {"model", "messages", "temperature", "max_tokens"}
    assert "tool" not in json.dumps(payload).lower()
    assert captured["auth"] == "Bearer secret-key"


def test_http_thinking_budget_is_opt_in():
    captured = {}

    def handler(request: httpx.Request) -> httpx.Response:
        captured["payload"] = json.loads(request.content)
        return httpx.Response(200, json=_completion_body("ok"))

    backend = _http_backend(handler, send_thinking_budget=True)
    backend.complete(make_request())
    assert captured["payload"]["thinking_budget"] == CONFIG.thinking_budget


def test_http_maps_usage_and_latency():
    backend = _http_backend(
        lambda request: httpx.Response(200, json=_completion_body("answer"))
    )
    response = backend.complete(make_request())
    assert response.text == "answer"
    assert response.usage == Usage(prompt_tokens=7, output_tokens=11, thinking_tokens=3)
    assert response.backend == "http"
    assert not response.truncated


def test_http_flags_truncation_instead_of_dropping_it():
    backend = _http_backend(
        lambda request: httpx.Response(200, json=_completion_body("cut", finish="length"))
    )
    response = backend.complete(make_request())
    assert response.truncated
    assert response.text == "cut"


@pytest.mark.parametrize(
    "status,expected",
    [
        (401, AuthBackendError),
        (403, AuthBackendError),
        (429, TransientBackendError),
        (500, TransientBackendError),
        (503, TransientBackendError),
        (400, BackendError),
    ],
)
def test_http_status_mapping(status, expected):
    backend = _http_backend(lambda request: httpx.Response(status, text="nope"))
    with pytest.raises(expected):
        backend.complete(make_request())


def test_http_timeout_is_transient():
    def handler(request: httpx.Request) -> httpx.Response:
        raise httpx.ConnectTimeout("slow")

    backend = _http_backend(handler)
    with pytest.raises(TransientBackendError):
        backend.complete(make_request())


def test_http_rejects_malformed_bodies():
    backend = _http_backend(
        lambda request: httpx.Response(200, json={"unexpected": True})
    )
    with pytest.raises(BackendError):
        backend.complete(make_request())


# --- retrying gateway -------------------------------------------------------


def test_two_transient_failures_then_success():
    backend = MockBackend(
        [ScriptEntry(fail="transient"), ScriptEntry(fail="transient"), ScriptEntry("ok")]
    )
    sleeps: list[float] = []
    gateway = RetryingGateway(backend, attempts=3, sleep=sleeps.append)
    response = gateway.complete(make_request())
    assert response.text == "ok"
    assert response.retries == 2
    assert sleeps == [1.0, 2.0]


def test_retry_gives_up_after_configured_attempts():
    backend = MockBackend([ScriptEntry(fail="transient")] * 3)
    sleeps: list[float] = []
    gateway = RetryingGateway(backend, attempts=3, sleep=sleeps.append)
    with pytest.raises(BackendExhaustedError) as excinfo:
        gateway.complete(make_request())
    assert isinstance(excinfo.value.__cause__, TransientBackendError)
    assert sleeps == [1.0, 2.0]


def test_retry_backoff_caps_at_max_delay():
    backend = MockBackend([ScriptEntry(fail="transient")] * 6)
    sleeps: list[float] = []
    gateway = RetryingGateway(
        backend, attempts=6, base_delay=1.0, max_delay=8.0, sleep=sleeps.append
    )
    with pytest.raises(BackendExhaustedError):
        gateway.complete(make_request())
    assert sleeps == [1.0, 2.0, 4.0, 8.0, 8.0]


def test_auth_errors_are_not_retried():
    backend = MockBackend([ScriptEntry(fail="auth"), ScriptEntry("never reached")])
    sleeps: list[float] = []
    gateway = RetryingGateway(backend, sleep=sleeps.append)
    with pytest.raises(AuthBackendError):
        gateway.complete(make_request())
    assert sleeps == []
    assert backend.consumed == 1


def test_usage_totals_count_only_successes():
    backend = MockBackend(
        [ScriptEntry(fail="transient"), ScriptEntry("four"), ScriptEntry("eight910")]
    )
    gateway = RetryingGateway(backend, sleep=lambda _: None)
    gateway.complete(make_request())
    gateway.complete(make_request())
    snapshot = gateway.totals.snapshot()
    assert snapshot["calls"] == 2
    assert snapshot["output_tokens"] == 1 + 2


# --- rate-limited gateway ---------------------------------------------------


class _RecordingGateway:
    def __init__(self, block: threading.Event | None = None) -> None:
        self.block = block
        self.order: list[str] = []
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        if self.block is not None:
            self.block.wait()
        with self._lock:
            self.order.append(request.request_id)
        return CompletionResponse("done", Usage(1, 1, 0), 0.0, "mock")


def test_dispatches_respect_min_interval():
    inner = _RecordingGateway()
    sleeps: list[float] = []
    limiter = RateLimitedGateway(
        inner,
        max_in_flight=1,
        min_interval=0.1,
        clock=lambda: 0.0,
        sleep=sleeps.append,
    )
    for _ in range(5):
        limiter.complete(make_request())
    times = limiter.dispatch_times
    assert len(times) == 5
    gaps = [b - a for a, b in zip(times, times[1:])]
    assert all(gap >= 0.1 - 1e-9 for gap in gaps)
    assert sleeps == pytest.approx([0.1, 0.2, 0.3, 0.4])


def test_queue_overflow_is_refused_immediately():
    release = threading.Event()
    inner = _RecordingGateway(block=release)
    limiter = RateLimitedGateway(inner, max_in_flight=1, queue_depth=2)

    threads = [
        threading.Thread(target=limiter.complete, args=(make_request(),))
        for _ in range(3)
    ]
    for thread in threads:
        thread.start()
    deadline = time.monotonic() + 5.0
    while limiter._waiting < 2 and time.monotonic() < deadline:
        time.sleep(0.005)
    assert limiter._waiting == 2

    with pytest.raises(BackpressureError):
        limiter.complete(make_request())

    release.set()
    for thread in threads:
        thread.join(timeout=5.0)
    assert len(inner.order) == 3


def test_concurrent_callers_are_served_fifo():
    release = threading.Event()
    inner = _RecordingGateway(block=release)
    limiter = RateLimitedGateway(inner, max_in_flight=1)

    def call(request_id: str) -> None:
        request = request_for(
            RenderedPrompt("solver", "text", ()), CONFIG, request_id=request_id
        )
        limiter.complete(request)

    threads = []
    for i in range(4):
        thread = threading.Thread(target=call, args=(f"r{i}",))
        thread.start()
        # Stagger starts so ticket order matches launch order.
        deadline = time.monotonic() + 5.0
        while limiter._next_ticket <= i and time.monotonic() < deadline:
            time.sleep(0.002)
        threads.append(thread)

    release.set()
    for thread in threads:
        thread.join(timeout=5.0)
    assert inner.order == ["r0", "r1", "r2", "r3"]
