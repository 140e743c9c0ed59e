"""Chat transports: live HTTP, record/replay cassette, and scripted mock.

All transports share one contract: ``send(transcript, temperature) -> text``.
The orchestrator additionally passes a :class:`RequestMeta` describing which
chain step it is on; live and cassette transports ignore it, the scripted
mock uses it as its lookup key.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .docio import load_json, write_json_atomic

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


class BackendError(RuntimeError):
    """Transport-level failure: missing script entry, cassette miss, HTTP error."""


class TranscriptError(ValueError):
    """Raised when a turn would violate transcript ordering rules."""


@dataclass(frozen=True)
class ChatTurn:
    role: str
    text: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise TranscriptError(f"unknown role {self.role!r}")


class ChatTranscript:
    """Append-only conversation state shared across all steps of one chain.

    Optional system turns lead; afterwards roles strictly alternate
    user/assistant.  Assistant turns are only ever appended once accepted,
    and accepted assistant text is never empty.
    """

    def __init__(self, turns: Sequence[ChatTurn] = ()):
        self._turns: list[ChatTurn] = []
        for turn in turns:
            self.append(turn)

    @property
    def turns(self) -> tuple[ChatTurn, ...]:
        return tuple(self._turns)

    def __len__(self) -> int:
        return len(self._turns)

    def append(self, turn: ChatTurn) -> None:
        if turn.role == "system":
            if any(t.role != "system" for t in self._turns):
                raise TranscriptError("system turns must come first")
        else:
            last = self._turns[-1].role if self._turns else "system"
            expected = "user" if last in ("system", "assistant") else "assistant"
            if turn.role != expected:
                raise TranscriptError(
                    f"expected a {expected} turn after {last!r}, got {turn.role!r}"
                )
            if turn.role == "assistant" and not turn.text.strip():
                raise TranscriptError("accepted assistant turns must be non-empty")
        self._turns.append(turn)

    def add_system(self, text: str) -> None:
        self.append(ChatTurn("system", text))

    def add_user(self, text: str) -> None:
        self.append(ChatTurn("user", text))

    def add_assistant(self, text: str) -> None:
        self.append(ChatTurn("assistant", text))

    def messages(self) -> list[dict[str, str]]:
        return [{"role": t.role, "text": t.text} for t in self._turns]

    def to_json(self) -> list[dict[str, str]]:
        return self.messages()


@dataclass(frozen=True)
class RequestMeta:
    """Orchestrator-side context for a chat request (mock lookup key)."""

    relation: str
    step: int
    attempt: int = 0
    doc_index: int = 0


@dataclass
class RequestEnvelope:
    """What a backend saw for one call; kept by test doubles for assertions."""

    messages: list[dict[str, str]]
    temperature: float
    meta: RequestMeta | None


def request_hash(transcript: ChatTranscript, temperature: float) -> str:
    """Content hash of a request: canonical JSON over messages + temperature."""
    payload = json.dumps(
        {"messages": transcript.messages(), "temperature": temperature},
        ensure_ascii=False,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ChatBackend:
    def send(
        self,
        transcript: ChatTranscript,
        temperature: float,
        meta: RequestMeta | None = None,
    ) -> str:
        raise NotImplementedError


class ScriptedBackend(ChatBackend):
    """Deterministic mock keyed by (relation, step) or (relation, doc_index, step).

    Script values are either a string (served for every attempt) or a sequence
    of strings served per attempt, the last one repeating.  Every call is
    recorded in ``self.calls`` for contract tests.
    """

    def __init__(self, script: Mapping[tuple, str | Sequence[str]]):
        self._script = dict(script)
        self._lock = threading.Lock()
        self.calls: list[RequestEnvelope] = []

    def send(self, transcript, temperature, meta=None):
        if meta is None:
            raise BackendError("scripted backend requires request metadata")
        with self._lock:
            self.calls.append(
                RequestEnvelope(transcript.messages(), temperature, meta)
            )
        for key in ((meta.relation, meta.doc_index, meta.step), (meta.relation, meta.step)):
            if key in self._script:
                value = self._script[key]
                break
        else:
            raise BackendError(
                f"no scripted answer for relation={meta.relation!r} "
                f"doc={meta.doc_index} step={meta.step}"
            )
        if isinstance(value, str):
            return value
        if not value:
            raise BackendError(f"empty script sequence for {meta}")
        return value[min(meta.attempt, len(value) - 1)]


class CassetteBackend(ChatBackend):
    """Record/replay transport backed by a JSON list of hash->text entries.

    Replay consumes entries in file order per request hash, so repeated
    identical requests (sampling) replay in the order they were recorded.
    Record mode delegates to an inner backend and appends to the cassette
    after every call.
    """

    def __init__(self, path: Path | str, mode: str = "replay",
                 inner: ChatBackend | None = None):
        if mode not in ("replay", "record"):
            raise ValueError(f"cassette mode must be 'replay' or 'record', got {mode!r}")
        if mode == "record" and inner is None:
            raise ValueError("cassette record mode needs an inner backend")
        self.path = Path(path)
        self.mode = mode
        self.inner = inner
        self._lock = threading.Lock()
        self._entries: list[dict[str, str]] = []
        self._cursor: dict[str, int] = {}
        if self.path.exists():
            data = load_json(self.path)
            if not isinstance(data, list):
                raise BackendError(f"{self.path}: cassette must be a JSON list")
            self._entries = data
        elif mode == "replay":
            raise BackendError(f"cassette not found: {self.path}")

    def send(self, transcript, temperature, meta=None):
        h = request_hash(transcript, temperature)
        if self.mode == "replay":
            with self._lock:
                start = self._cursor.get(h, 0)
                for i in range(start, len(self._entries)):
                    entry = self._entries[i]
                    if entry["request_hash"] == h and not entry.get("_consumed"):
                        entry["_consumed"] = True
                        self._cursor[h] = i + 1
                        return entry["response_text"]
            raise BackendError(
                f"cassette {self.path} has no unconsumed entry for request hash {h}"
            )
        text = self.inner.send(transcript, temperature, meta)
        with self._lock:
            self._entries.append({"request_hash": h, "response_text": text})
            write_json_atomic(
                self.path,
                [{"request_hash": e["request_hash"], "response_text": e["response_text"]}
                 for e in self._entries],
            )
        return text


class RateLimiter:
    """Token-bucket limiter shared by live-call threads."""

    def __init__(self, rate_per_sec: float, burst: int = 1):
        if rate_per_sec <= 0 or burst < 1:
            raise ValueError("rate must be positive and burst at least 1")
        self.rate = float(rate_per_sec)
        self.capacity = float(burst)
        self._tokens = float(burst)
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class LiveChatBackend(ChatBackend):
    """HTTP client for a chat-completion endpoint.

    The bearer token is read from the environment variable named by
    ``api_key_env`` at call time; secrets never land in config files or run
    artifacts.  Retryable statuses (429 and 5xx) back off exponentially.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str,
        timeout: float = 60.0,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        rate_limiter: RateLimiter | None = None,
        session: Any = None,
    ):
        import requests

        self.base_url = base_url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.rate_limiter = rate_limiter
        self.session = session or requests.Session()

    def _payload(self, transcript: ChatTranscript, temperature: float) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": [
                {"role": t.role, "content": t.text} for t in transcript.turns
            ],
            "temperature": temperature,
        }

    def send(self, transcript, temperature, meta=None):
        token = os.environ.get(self.api_key_env)
        if not token:
            raise BackendError(
                f"environment variable {self.api_key_env} is not set (API key)"
            )
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            try:
                resp = self.session.post(
                    self.base_url,
                    json=self._payload(transcript, temperature),
                    headers={"Authorization": f"Bearer {token}"},
                    timeout=self.timeout,
                )
            except OSError as exc:
                last_error = f"connection error: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError, ValueError) as exc:
                        raise BackendError(
                            f"unexpected completion payload from {self.base_url}: {exc!r}"
                        ) from exc
                last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in RETRYABLE_STATUS:
                    raise BackendError(last_error)
            if attempt + 1 < self.max_attempts:
                delay = min(self.backoff_cap, self.backoff_base * (2 ** attempt))
                logger.warning("chat request failed (%s); retrying in %.1fs", last_error, delay)
                time.sleep(delay)
        raise BackendError(f"chat request failed after {self.max_attempts} attempts: {last_error}")


@dataclass
class CountingBackend(ChatBackend):
    """Wrapper that counts calls; used to prove resumed stages stay cold."""

    inner: ChatBackend
    calls: int = 0
    envelopes: list[RequestEnvelope] = field(default_factory=list)

    def send(self, transcript, temperature, meta=None):
        self.calls += 1
        self.envelopes.append(RequestEnvelope(transcript.messages(), temperature, meta))
        return self.inner.send(transcript, temperature, meta)
