"""Chat-completion gateway: one live HTTP provider plus record/replay doubles.

Every network call in the package goes through a provider from this module.
The wire shape is the common chat-completions JSON: POST to
``{base_url}/chat/completions`` with model/messages/temperature/max_tokens,
response read from the first choice's message content.

Replay fixtures are human-readable JSON keyed by ``request_tag``::

    {"entries": [{"tag": "...", "request_hash": "...", "content": "..."}]}

and make any pipeline built on them fully deterministic.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import requests

VALID_ROLES = ("system", "user", "assistant")


class GatewayError(Exception):
    """Base class for gateway failures."""


class AuthFailureError(GatewayError):
    """Authentication was rejected; never retried."""


class TransportExhaustedError(GatewayError):
    """Transient transport errors persisted through every retry."""


class ProviderRefusalError(GatewayError):
    """The provider returned a non-transient, non-auth refusal."""


class MissingFixtureEntryError(GatewayError):
    """A replayed request's tag has no recorded fixture entry."""


class FinishReason(Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in VALID_ROLES:
            raise ValueError(f"invalid message role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call, tagged for record/replay keying."""

    model: str
    messages: tuple[ChatMessage, ...]
    max_tokens: int = 512
    temperature: float | None = None
    request_tag: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request must carry at least one message")
        if self.messages[-1].role != "user":
            raise ValueError("last message must have role 'user'")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


def user_request(
    model: str,
    prompt: str,
    *,
    system: str | None = None,
    temperature: float | None = None,
    max_tokens: int = 512,
    tag: str = "",
) -> ChatRequest:
    """Build a single-turn request (optionally with a system message)."""
    messages: list[ChatMessage] = []
    if system is not None:
        messages.append(ChatMessage("system", system))
    messages.append(ChatMessage("user", prompt))
    return ChatRequest(
        model=model,
        messages=tuple(messages),
        max_tokens=max_tokens,
        temperature=temperature,
        request_tag=tag,
    )


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: FinishReason = FinishReason.STOP
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")
        if self.finish_reason is not FinishReason.ERROR and self.content is None:
            raise ValueError("content required unless finish_reason is error")


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str
    api_key_env: str = "CHAT_API_KEY"
    timeout_ms: int = 30_000
    max_retries: int = 3
    backoff_base_ms: int = 250
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout_ms <= 0 or self.backoff_base_ms <= 0:
            raise ValueError("timeouts must be positive")
        if self.max_in_flight <= 0:
            raise ValueError("max_in_flight must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "ProviderConfig":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})


class ChatProvider(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def request_payload(request: ChatRequest) -> dict:
    """Wire-format JSON body for a request (tag stays local)."""
    payload: dict = {
        "model": request.model,
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "max_tokens": request.max_tokens,
    }
    if request.temperature is not None:
        payload["temperature"] = request.temperature
    return payload


def request_hash(request: ChatRequest) -> str:
    """Stable content hash of a request, recorded alongside fixtures."""
    canonical = json.dumps(request_payload(request), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


_TRANSIENT_STATUS = frozenset({429, 500, 502, 503, 504})


class HttpProvider:
    """Live provider over the chat-completions HTTP shape.

    Retries transient transport failures (timeouts, connection errors, 429,
    5xx) with exponential backoff; authentication failures and other client
    errors are raised immediately. At most ``max_in_flight`` requests run
    concurrently.
    """

    def __init__(self, config: ProviderConfig, session: requests.Session | None = None):
        self._config = config
        self._session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def _api_key(self) -> str:
        key = os.environ.get(self._config.api_key_env, "")
        if not key:
            raise AuthFailureError(
                f"environment variable {self._config.api_key_env} is not set"
            )
        return key

    def complete(self, request: ChatRequest) -> ChatResponse:
        url = self._config.base_url.rstrip("/") + "/chat/completions"
        headers = {
            "Authorization": f"Bearer {self._api_key()}",
            "Content-Type": "application/json",
        }
        payload = request_payload(request)
        attempts = self._config.max_retries + 1
        last_error: Exception | None = None
        started = time.monotonic()
        for attempt in range(attempts):
            try:
                with self._slots:
                    response = self._session.post(
                        url,
                        json=payload,
                        headers=headers,
                        timeout=self._config.timeout_ms / 1000.0,
                    )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = exc
            else:
                if response.status_code in (401, 403):
                    raise AuthFailureError(
                        f"authentication rejected (HTTP {response.status_code})"
                    )
                if response.status_code in _TRANSIENT_STATUS:
                    last_error = GatewayError(f"HTTP {response.status_code}")
                elif response.status_code >= 400:
                    raise ProviderRefusalError(
                        f"HTTP {response.status_code}: {response.text[:200]}"
                    )
                else:
                    return self._parse_success(response, started)
            if attempt < attempts - 1:
                time.sleep(self._config.backoff_base_ms * (2**attempt) / 1000.0)
        raise TransportExhaustedError(
            f"gave up after {attempts} attempts: {last_error}"
        )

    def _parse_success(self, response: requests.Response, started: float) -> ChatResponse:
        latency_ms = int((time.monotonic() - started) * 1000)
        try:
            body = response.json()
            choice = body["choices"][0]
            content = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderRefusalError(f"malformed provider response: {exc}") from exc
        raw_reason = choice.get("finish_reason", "stop")
        finish = FinishReason.LENGTH if raw_reason == "length" else FinishReason.STOP
        return ChatResponse(content=content, finish_reason=finish, latency_ms=latency_ms)


class ReplayProvider:
    """Deterministic provider resolving requests from a recorded fixture."""

    def __init__(self, entries: Mapping[str, str]):
        self._entries = dict(entries)

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayProvider":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        entries: dict[str, str] = {}
        for entry in raw.get("entries", []):
            tag = entry["tag"]
            if tag in entries:
                raise ValueError(f"duplicate fixture tag {tag!r}")
            entries[tag] = entry["content"]
        return cls(entries)

    @property
    def tags(self) -> frozenset[str]:
        return frozenset(self._entries)

    def complete(self, request: ChatRequest) -> ChatResponse:
        try:
            content = self._entries[request.request_tag]
        except KeyError:
            raise MissingFixtureEntryError(
                f"no fixture entry for tag {request.request_tag!r}"
            ) from None
        return ChatResponse(content=content, finish_reason=FinishReason.STOP, latency_ms=0)


@dataclass
class Recorder:
    """Pass-through provider that captures responses into a fixture."""

    provider: ChatProvider
    _entries: dict[str, dict] = field(default_factory=dict)

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.provider.complete(request)
        self._entries[request.request_tag] = {
            "tag": request.request_tag,
            "request_hash": request_hash(request),
            "content": response.content,
        }
        return response

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        entries = sorted(self._entries.values(), key=lambda e: e["tag"])
        path.write_text(
            json.dumps({"entries": entries}, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        return path


def record_session(
    provider: ChatProvider, requests_seq: Iterable[ChatRequest], path: str | Path
) -> list[ChatResponse]:
    """Complete each request through *provider*, saving a replayable fixture."""
    recorder = Recorder(provider)
    responses = [recorder.complete(request) for request in requests_seq]
    recorder.save(path)
    return responses


def replay_session(path: str | Path) -> ReplayProvider:
    """Open a recorded fixture as a deterministic provider."""
    return ReplayProvider.from_file(path)
