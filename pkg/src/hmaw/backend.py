"""Chat-completion backends.

``OpenAIChatClient`` speaks the OpenAI-compatible ``/chat/completions``
wire format, which both hosted models and locally served open models
expose. ``MockBackend`` replays a script and never touches the network.
"""

from __future__ import annotations

import os
import threading
import time
from collections import abc
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any, Protocol

import httpx

from hmaw.errors import (
    AuthError,
    BackendError,
    BackendTimeout,
    ConfigError,
    MalformedReply,
    RateLimited,
    ScriptExhausted,
    ServerError,
    TransportError,
)

ENV_API_KEY = "HMAW_API_KEY"
ENV_BASE_URL = "HMAW_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"

MESSAGE_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in MESSAGE_ROLES:
            raise ValueError(f"unknown message role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int | None = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("the first message must come from system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens is not None and self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def to_payload(self) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
        }
        if self.max_tokens is not None:
            payload["max_tokens"] = self.max_tokens
        return payload


@dataclass(frozen=True)
class ChatResponse:
    content: str
    latency: float
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    attempts: int = 1


class ChatBackend(Protocol):
    def chat(self, request: ChatRequest) -> ChatResponse: ...


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 1.0
    backoff_multiplier: float = 2.0
    retryable: frozenset[str] = frozenset({"rate_limited", "server_error", "timeout"})

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        if self.backoff_multiplier < 1:
            raise ValueError("backoff_multiplier must be >= 1")

    def backoff(self, attempt: int) -> float:
        """Seconds to wait after failed attempt number ``attempt`` (1-based)."""
        return self.base_backoff * self.backoff_multiplier ** (attempt - 1)


def call_with_retry(
    fn: Callable[[], Any],
    policy: RetryPolicy,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[Any, int]:
    """Run ``fn`` under ``policy``; return its result and the attempt count."""
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return fn(), attempt
        except BackendError as exc:
            exc.attempts = attempt
            if exc.retry_class not in policy.retryable or attempt == policy.max_attempts:
                raise
            sleep(policy.backoff(attempt))
    raise AssertionError("unreachable")


class OpenAIChatClient:
    """Synchronous client for an OpenAI-compatible chat endpoint.

    Safe to share between threads; ``max_in_flight`` caps concurrent
    requests.
    """

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        api_key: str | None = None,
        *,
        timeout: float = 120.0,
        retry: RetryPolicy | None = None,
        max_in_flight: int = 8,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.retry = retry or RetryPolicy()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @classmethod
    def from_env(cls, base_url: str | None = None, **kwargs) -> OpenAIChatClient:
        url = base_url or os.environ.get(ENV_BASE_URL) or DEFAULT_BASE_URL
        return cls(url, os.environ.get(ENV_API_KEY), **kwargs)

    def close(self):
        self._http.close()

    def chat(self, request: ChatRequest) -> ChatResponse:
        payload = request.to_payload()
        start = time.perf_counter()
        with self._slots:
            data, attempts = call_with_retry(lambda: self._post(payload), self.retry, self._sleep)
        latency = time.perf_counter() - start
        return _parse_reply(data, latency, attempts)

    def _post(self, payload: dict[str, Any]) -> Any:
        url = f"{self.base_url}/chat/completions"
        try:
            resp = self._http.post(url, json=payload)
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"request to {url} timed out") from exc
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {url} failed: {exc}") from exc

        status = resp.status_code
        if status in (401, 403):
            raise AuthError(f"endpoint rejected credentials ({status})", status=status)
        if status == 429:
            raise RateLimited("rate limited", status=status)
        if status == 408:
            raise BackendTimeout("server reported a timeout", status=status)
        if status >= 500:
            raise ServerError(f"server error {status}: {resp.text[:200]}", status=status)
        if status >= 400:
            raise TransportError(f"HTTP {status}: {resp.text[:200]}", status=status)
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedReply("reply body is not JSON") from exc


def _parse_reply(data: Any, latency: float, attempts: int) -> ChatResponse:
    try:
        content = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedReply("reply has no choices[0].message.content") from exc
    if not isinstance(content, str):
        raise MalformedReply("message content is not a string")

    usage = data.get("usage") or {}

    def count(key):
        value = usage.get(key)
        return value if isinstance(value, int) and value >= 0 else None

    return ChatResponse(
        content=content,
        latency=latency,
        prompt_tokens=count("prompt_tokens"),
        completion_tokens=count("completion_tokens"),
        attempts=attempts,
    )


# -- scripted mock -----------------------------------------------------------


@dataclass(frozen=True)
class Sequence:
    replies: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "replies", tuple(self.replies))


@dataclass(frozen=True)
class Echo:
    pass


@dataclass(frozen=True)
class Constant:
    reply: str


@dataclass(frozen=True)
class KeyedByPromptSubstring:
    mapping: Mapping[str, str]
    default: str | None = None


Script = Sequence | Echo | Constant | KeyedByPromptSubstring


@dataclass
class MockBackend:
    """Backend that answers from a script and records every request.

    ``latency`` is reported, not slept: either a fixed number of seconds or
    a list cycled by call number.
    """

    script: Script
    latency: float | abc.Sequence[float] = 0.0
    report_usage: bool = False
    requests: list[ChatRequest] = field(default_factory=list)

    def __post_init__(self):
        if isinstance(self.script, Sequence) and not self.script.replies:
            raise ValueError("a Sequence script needs at least one reply")
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        return len(self.requests)

    def chat(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            index = len(self.requests)
            self.requests.append(request)
        prompt = request.messages[-1].content
        content = self._reply(index, prompt)
        if isinstance(self.latency, (int, float)):
            latency = float(self.latency)
        else:
            latency = float(self.latency[index % len(self.latency)])
        usage = (len(prompt.split()), len(content.split())) if self.report_usage else (None, None)
        return ChatResponse(content, latency, usage[0], usage[1])

    def _reply(self, index: int, prompt: str) -> str:
        script = self.script
        if isinstance(script, Sequence):
            if index >= len(script.replies):
                raise ScriptExhausted(f"script has {len(script.replies)} replies, call #{index + 1}")
            return script.replies[index]
        if isinstance(script, Echo):
            return prompt
        if isinstance(script, Constant):
            return script.reply
        for key, reply in script.mapping.items():
            if key in prompt:
                return reply
        if script.default is not None:
            return script.default
        raise ScriptExhausted("no scripted key matches the prompt")


def mock_backend(script: Script, **kwargs) -> MockBackend:
    return MockBackend(script, **kwargs)


def script_from_dict(data: Mapping[str, Any]) -> Script:
    """Build a script from its JSON form, e.g. ``{"mode": "echo"}``."""
    mode = data.get("mode")
    if mode == "sequence":
        return Sequence(data["replies"])
    if mode == "echo":
        return Echo()
    if mode == "constant":
        return Constant(data["reply"])
    if mode == "keyed":
        return KeyedByPromptSubstring(dict(data["map"]), data.get("default"))
    raise ConfigError(f"unknown mock script mode {mode!r}")


def mock_from_dict(data: Mapping[str, Any]) -> MockBackend:
    return MockBackend(
        script_from_dict(data),
        latency=data.get("latency", 0.0),
        report_usage=bool(data.get("report_usage", False)),
    )
