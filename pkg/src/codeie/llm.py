"""Chat-completions client with retries, a concurrency bound and usage accounting.

:class:`ChatClient` owns the retry loop, the in-flight semaphore and the
request log; subclasses only implement ``_send``. :class:`HTTPChatClient`
speaks the common ``POST /chat/completions`` JSON protocol and
:class:`MockClient` replays a scripted transcript for tests.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Union

import httpx

logger = logging.getLogger(__name__)

API_KEY_ENV = "CODEIE_API_KEY"
BASE_URL_ENV = "CODEIE_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
TRANSIENT_STATUS = {408, 409, 425, 429}


class LLMError(RuntimeError):
    """Non-transient failure; surfaces immediately."""


class TransientError(LLMError):
    """Timeouts, 429 and 5xx; retried under the client policy."""


class AuthError(LLMError):
    pass


class MalformedResponseError(LLMError):
    pass


class RetriesExhaustedError(LLMError):
    pass


@dataclass
class ChatRequest:
    model: str
    messages: list[dict[str, str]]
    temperature: float = 0.0
    max_tokens: int | None = None
    tag: str = ""  # pipeline stage, used for usage attribution

    @classmethod
    def user(cls, model: str, prompt: str, **kw: Any) -> "ChatRequest":
        return cls(model, [{"role": "user", "content": prompt}], **kw)

    @property
    def prompt(self) -> str:
        return "\n".join(m["content"] for m in self.messages)

    def payload(self) -> dict[str, Any]:
        body: dict[str, Any] = {"model": self.model, "messages": self.messages, "temperature": self.temperature}
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return body


@dataclass
class ChatResponse:
    content: str
    usage: dict[str, int] = field(default_factory=dict)
    latency: float = 0.0
    model: str = ""


@dataclass
class ClientPolicy:
    max_retries: int = 3
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    max_backoff: float = 30.0
    concurrency: int = 4
    primary_model: str = "gpt-4o-mini"
    fallback_model: str | None = "gpt-4o-2024-08-06"
    timeout: float = 60.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")

    def backoff(self, attempt: int) -> float:
        """Delay before retry number ``attempt`` (0-based)."""
        return min(self.max_backoff, self.backoff_base * self.backoff_factor**attempt)


@dataclass
class AttemptLog:
    attempt: int
    model: str
    tag: str
    outcome: str  # ok | transient | error
    detail: str = ""


class ChatClient:
    def __init__(
        self,
        policy: ClientPolicy | None = None,
        *,
        sleep: Callable[[float], None] = time.sleep,
        audit_path: str | Path | None = None,
    ):
        self.policy = policy or ClientPolicy()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(self.policy.concurrency)
        self._lock = threading.Lock()
        self.attempts: list[AttemptLog] = []
        self.usage: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
        self.in_flight = 0
        self.max_in_flight = 0
        self._audit_path = Path(audit_path) if audit_path else None

    def _send(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def _log(self, entry: AttemptLog, request: ChatRequest, response: ChatResponse | None) -> None:
        with self._lock:
            self.attempts.append(entry)
            if response is not None:
                for k, v in response.usage.items():
                    if isinstance(v, int):
                        self.usage[request.tag or "untagged"][k] += v
            if self._audit_path is not None:
                row = {
                    "attempt": entry.attempt,
                    "tag": entry.tag,
                    "outcome": entry.outcome,
                    "detail": entry.detail,
                    "request": request.payload(),
                    "response": None if response is None else response.content,
                }
                with open(self._audit_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(row, ensure_ascii=False) + "\n")

    def complete(self, request: ChatRequest) -> ChatResponse:
        """Send ``request``, retrying transient failures with exponential backoff.

        At most ``1 + policy.max_retries`` attempts are made. Non-transient
        errors are raised on the first occurrence.
        """
        last: Exception | None = None
        for attempt in range(self.policy.max_retries + 1):
            if attempt:
                self._sleep(self.policy.backoff(attempt - 1))
            with self._slots:
                with self._lock:
                    self.in_flight += 1
                    self.max_in_flight = max(self.max_in_flight, self.in_flight)
                t0 = time.perf_counter()
                try:
                    response = self._send(request)
                except TransientError as e:
                    last = e
                    self._log(AttemptLog(attempt, request.model, request.tag, "transient", str(e)), request, None)
                    logger.warning("transient failure on %s (attempt %d): %s", request.model, attempt + 1, e)
                    continue
                except LLMError as e:
                    self._log(AttemptLog(attempt, request.model, request.tag, "error", str(e)), request, None)
                    raise
                finally:
                    with self._lock:
                        self.in_flight -= 1
            response.latency = response.latency or time.perf_counter() - t0
            self._log(AttemptLog(attempt, request.model, request.tag, "ok"), request, response)
            return response
        raise RetriesExhaustedError(
            f"{request.model}: gave up after {self.policy.max_retries + 1} attempts ({last})"
        )

    def usage_report(self) -> dict[str, dict[str, int]]:
        with self._lock:
            return {tag: dict(counts) for tag, counts in self.usage.items()}


class HTTPChatClient(ChatClient):
    """Client for any endpoint exposing the chat-completions JSON protocol."""

    def __init__(
        self,
        policy: ClientPolicy | None = None,
        *,
        api_key: str | None = None,
        base_url: str | None = None,
        transport: httpx.BaseTransport | None = None,
        **kw: Any,
    ):
        super().__init__(policy, **kw)
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV) or os.environ.get("OPENAI_API_KEY")
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self._http = httpx.Client(timeout=self.policy.timeout, transport=transport)

    def _send(self, request: ChatRequest) -> ChatResponse:
        if not self.api_key:
            raise AuthError(f"no API key; set {API_KEY_ENV}")
        try:
            r = self._http.post(
                f"{self.base_url}/chat/completions",
                json=request.payload(),
                headers={"Authorization": f"Bearer {self.api_key}"},
            )
        except httpx.TimeoutException as e:
            raise TransientError(f"timeout: {e}") from e
        except httpx.TransportError as e:
            raise TransientError(f"transport: {e}") from e
        if r.status_code in (401, 403):
            raise AuthError(f"HTTP {r.status_code}")
        if r.status_code in TRANSIENT_STATUS or r.status_code >= 500:
            raise TransientError(f"HTTP {r.status_code}")
        if r.status_code >= 400:
            raise LLMError(f"HTTP {r.status_code}: {r.text[:200]}")
        try:
            data = r.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise MalformedResponseError(f"unexpected response body: {r.text[:200]}") from e
        if not isinstance(content, str):
            raise MalformedResponseError("message content is not a string")
        usage = {k: v for k, v in (data.get("usage") or {}).items() if isinstance(v, int)}
        return ChatResponse(content, usage, model=data.get("model", request.model))

    def close(self) -> None:
        self._http.close()


Scripted = Union[str, ChatResponse, Exception]


class MockClient(ChatClient):
    """Replays ``transcript`` in order, or answers via ``responder(request)``.

    Transcript items may be strings, :class:`ChatResponse` objects or
    exceptions (raised as-is, e.g. ``TransientError("429")``). Every attempt
    is recorded in ``requests``.
    """

    def __init__(
        self,
        transcript: Iterable[Scripted] = (),
        *,
        responder: Callable[[ChatRequest], Scripted] | None = None,
        delay: float = 0.0,
        policy: ClientPolicy | None = None,
        **kw: Any,
    ):
        kw.setdefault("sleep", lambda _s: None)
        super().__init__(policy, **kw)
        self._script = list(transcript)
        self._responder = responder
        self._delay = delay
        self.requests: list[ChatRequest] = []

    def _send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
            if self._responder is None:
                if not self._script:
                    raise LLMError("mock transcript exhausted")
                item = self._script.pop(0)
        if self._responder is not None:
            item = self._responder(request)
        if self._delay:
            time.sleep(self._delay)
        if isinstance(item, Exception):
            raise item
        if isinstance(item, ChatResponse):
            return item
        return ChatResponse(str(item), {"prompt_tokens": len(request.prompt), "completion_tokens": len(str(item))}, model=request.model)

    @property
    def calls(self) -> int:
        return len(self.requests)


def mock_client(transcript: Iterable[Scripted], **kw: Any) -> MockClient:
    return MockClient(transcript, **kw)
