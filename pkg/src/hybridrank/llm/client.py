"""Minimal chat-completions client with retry and latency bookkeeping."""
from __future__ import annotations

import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, TypeVar

import httpx

logger = logging.getLogger(__name__)

API_KEY_ENV = "HYBRIDRANK_API_KEY"
RETRYABLE_STATUS = {429, 500, 502, 503, 504}

K = TypeVar("K")


class LlmError(RuntimeError):
    pass


class TransportError(LlmError):
    """Network failure, timeout, or retryable status after the last attempt."""


class ProtocolError(LlmError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body[:500]
        super().__init__(f"HTTP {status}: {self.body}")


@dataclass(frozen=True)
class LlmEndpoint:
    base_url: str
    model_name: str
    temperature: float = 0.0
    timeout: float = 60.0
    max_concurrency: int = 4
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_cap: float = 60.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"


@dataclass
class CallRecord:
    attempts: int
    latency_seconds: float
    status: int | None


@dataclass
class LlmClient:
    endpoint: LlmEndpoint
    api_key: str | None = None
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    records: list[CallRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise LlmError(f"no credential: set {API_KEY_ENV}")
        self._lock = threading.Lock()
        self._http = httpx.Client(timeout=self.endpoint.timeout, transport=self.transport)

    def close(self) -> None:
        self._http.close()

    def request_body(self, prompt: str) -> dict:
        return {
            "model": self.endpoint.model_name,
            "temperature": self.endpoint.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }

    def complete(self, prompt: str) -> str:
        ep = self.endpoint
        headers = {"Authorization": f"Bearer {self.api_key}"}
        delay = ep.backoff_base
        started = time.perf_counter()
        last: Exception | None = None
        status = None
        for attempt in range(1, ep.max_attempts + 1):
            try:
                resp = self._http.post(ep.url, json=self.request_body(prompt), headers=headers)
            except httpx.TransportError as exc:  # includes timeouts
                last, status = exc, None
            else:
                status = resp.status_code
                if resp.is_success:
                    self._record(attempt, started, status)
                    return _message_text(resp)
                if status not in RETRYABLE_STATUS:
                    self._record(attempt, started, status)
                    raise ProtocolError(status, resp.text)
                last = ProtocolError(status, resp.text)
            if attempt < ep.max_attempts:
                logger.warning("llm call failed (%s); retry %d/%d in %.1fs", last, attempt, ep.max_attempts - 1, delay)
                self.sleep(delay)
                delay = min(delay * 2, ep.backoff_cap)
        self._record(ep.max_attempts, started, status)
        raise TransportError(f"gave up after {ep.max_attempts} attempts: {last}") from last

    def _record(self, attempts: int, started: float, status: int | None) -> None:
        with self._lock:
            self.records.append(CallRecord(attempts, time.perf_counter() - started, status))


def _message_text(resp: httpx.Response) -> str:
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise ProtocolError(resp.status_code, resp.text) from None


def complete(endpoint: LlmEndpoint, prompt: str, client: LlmClient | None = None) -> str:
    """One chat completion; opens a short-lived client when none is given."""
    own = client is None
    client = client or LlmClient(endpoint)
    try:
        return client.complete(prompt)
    finally:
        if own:
            client.close()


def dispatch(
    jobs: Iterable[tuple[K, str]],
    call: Callable[[str], str],
    max_concurrency: int,
) -> dict[K, str | Exception]:
    """Run ``call`` over (key, prompt) pairs with bounded parallelism.

    Failures are returned in place of the text so one bad user does not
    abort the batch. Callers iterate the result in their own key order.
    """
    jobs = list(jobs)

    def run(prompt: str) -> str | Exception:
        try:
            return call(prompt)
        except Exception as exc:  # noqa: BLE001 - per-user failures are data here
            return exc

    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        results = list(pool.map(run, (p for _, p in jobs)))
    return {k: r for (k, _), r in zip(jobs, results)}
