"""Chat-completion gateway: one interface over live providers and replayed
transcripts, with retries, a per-provider concurrency bound, token metering
and exact cost arithmetic.

Every exchange can be recorded to a transcript file (JSONL, one exchange per
line) keyed by a request fingerprint. A replay provider answers later runs
from those recordings, which makes the whole pipeline deterministic and
testable without credentials. Identical requests repeated within a run (the
validation stage sends the same prompt four times) consume successive
recordings in file order.

Money is handled in Decimal micro-dollars; a price quoted per million
tokens is numerically the price in micro-dollars per token, so conversion
is exact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable, Protocol

import requests

from .errors import (
    AuthenticationError,
    ContentRefusalError,
    ProviderError,
    TransportError,
    UnrecordedRequestError,
)

logger = logging.getLogger(__name__)

__all__ = [
    "Message",
    "ModelSpec",
    "ChatRequest",
    "ChatResponse",
    "TokenUsage",
    "PriceEntry",
    "PriceTable",
    "TranscriptEntry",
    "TranscriptWriter",
    "Provider",
    "ReplayProvider",
    "Gateway",
    "fingerprint",
    "load_transcript",
    "replay_source",
    "build_provider",
    "estimate_request_cost",
]

ROLES = ("system", "user", "assistant")

MICRO = Decimal(10) ** 6


@dataclass(frozen=True)
class Message:
    role: str
    text: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"bad role {self.role!r}")


@dataclass(frozen=True)
class ModelSpec:
    provider: str  # openai, anthropic, google, local, replay...
    model_name: str
    max_parallel: int = 50  # 2 is the documented safe setting for anthropic

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if not self.provider or not self.model_name:
            raise ValueError("provider and model_name must be nonempty")


@dataclass(frozen=True)
class ChatRequest:
    model: ModelSpec
    prompt: tuple[Message, ...]
    temperature: float = 0.0
    top_p: float = 1.0
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be nonempty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class TokenUsage:
    # Floats are allowed so published *average* usage rows can flow through
    # the same cost math; live provider usage is always integral.
    input_tokens: int | float = 0
    output_tokens: int | float = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: TokenUsage = field(default_factory=TokenUsage)
    latency_ms: int = 0
    attempts: int = 1  # transport retries consumed to get this reply

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")


# ==============================================================================
# Fingerprinting and transcripts
# ==============================================================================


def fingerprint(request: ChatRequest) -> str:
    """Stable identity of a request: model name, messages and sampling
    parameters. Changing temperature or top_p invalidates recordings on
    purpose; silently replaying stale generations would be worse."""
    payload = {
        "model_name": request.model.model_name,
        "messages": [[m.role, m.text] for m in request.prompt],
        "temperature": request.temperature,
        "top_p": request.top_p,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TranscriptEntry:
    run_id: str
    stage: str
    fingerprint: str
    request: ChatRequest
    response: ChatResponse


def _request_to_json(request: ChatRequest) -> dict:
    return {
        "provider": request.model.provider,
        "model_name": request.model.model_name,
        "max_parallel": request.model.max_parallel,
        "messages": [{"role": m.role, "text": m.text} for m in request.prompt],
        "temperature": request.temperature,
        "top_p": request.top_p,
        "max_output_tokens": request.max_output_tokens,
    }


def _request_from_json(payload: dict) -> ChatRequest:
    return ChatRequest(
        model=ModelSpec(
            provider=payload["provider"],
            model_name=payload["model_name"],
            max_parallel=payload.get("max_parallel", 50),
        ),
        prompt=tuple(
            Message(m["role"], m["text"]) for m in payload["messages"]
        ),
        temperature=payload["temperature"],
        top_p=payload["top_p"],
        max_output_tokens=payload["max_output_tokens"],
    )


class TranscriptWriter:
    """Append-only JSONL transcript; one line per exchange, flushed per
    append so a crashed run still leaves a usable prefix."""

    def __init__(self, path: str | Path, run_id: str):
        self.path = Path(path)
        self.run_id = run_id
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a", encoding="utf-8")

    def append(self, stage: str, request: ChatRequest, response: ChatResponse) -> None:
        record = {
            "run_id": self.run_id,
            "stage": stage,
            "fingerprint": fingerprint(request),
            "request": _request_to_json(request),
            "response": {
                "text": response.text,
                "latency_ms": response.latency_ms,
                "attempts": response.attempts,
            },
            "usage": {
                "input_tokens": response.usage.input_tokens,
                "output_tokens": response.usage.output_tokens,
            },
        }
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TranscriptWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def load_transcript(path: str | Path) -> list[TranscriptEntry]:
    path = Path(path)
    if not path.exists():
        raise ProviderError(f"transcript not found: {path}")
    entries: list[TranscriptEntry] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                entries.append(
                    TranscriptEntry(
                        run_id=record["run_id"],
                        stage=record["stage"],
                        fingerprint=record["fingerprint"],
                        request=_request_from_json(record["request"]),
                        response=ChatResponse(
                            text=record["response"]["text"],
                            usage=TokenUsage(**record["usage"]),
                            latency_ms=record["response"].get("latency_ms", 0),
                            attempts=record["response"].get("attempts", 1),
                        ),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"{path}:{lineno}: malformed transcript: {exc}") from exc
    return entries


# ==============================================================================
# Providers
# ==============================================================================


class Provider(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


class ReplayProvider:
    """Answers requests from recorded exchanges, matched by fingerprint.

    Recordings with the same fingerprint form a FIFO queue, so a prompt
    sent four times (majority voting) replays its four recorded responses
    in original order. An unrecorded request is a hard error rather than a
    silent fallback.
    """

    def __init__(self, entries: Iterable[TranscriptEntry]):
        self._queues: dict[str, deque[ChatResponse]] = {}
        self._count = 0
        for entry in entries:
            self._queues.setdefault(entry.fingerprint, deque()).append(entry.response)
            self._count += 1
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._count

    def complete(self, request: ChatRequest) -> ChatResponse:
        fp = fingerprint(request)
        with self._lock:
            queue = self._queues.get(fp)
            if not queue:
                preview = request.prompt[-1].text[:80].replace("\n", " ")
                raise UnrecordedRequestError(
                    f"unrecorded request {fp[:12]} ({preview!r}...)"
                )
            self._count -= 1
            return queue.popleft()


def replay_source(path: str | Path) -> ReplayProvider:
    """Build a replay provider from a transcript file."""
    return ReplayProvider(load_transcript(path))


class OpenAIChatProvider:
    """OpenAI-style /chat/completions endpoint; also covers local
    OpenAI-compatible servers via base_url."""

    def __init__(self, api_key: str, base_url: str = "https://api.openai.com/v1",
                 timeout: float = 120.0):
        self.api_key = api_key
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": request.model.model_name,
            "messages": [
                {"role": m.role, "content": m.text} for m in request.prompt
            ],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_output_tokens,
        }
        started = time.monotonic()
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        _raise_for_status(resp)
        payload = resp.json()
        choice = payload["choices"][0]
        if choice.get("finish_reason") == "content_filter":
            raise ContentRefusalError("provider content filter triggered")
        usage = payload.get("usage", {})
        return ChatResponse(
            text=choice["message"]["content"] or "",
            usage=TokenUsage(
                usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)
            ),
            latency_ms=int((time.monotonic() - started) * 1000),
        )


class AnthropicMessagesProvider:
    def __init__(self, api_key: str, base_url: str = "https://api.anthropic.com",
                 timeout: float = 120.0):
        self.api_key = api_key
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def complete(self, request: ChatRequest) -> ChatResponse:
        system = "\n\n".join(m.text for m in request.prompt if m.role == "system")
        body = {
            "model": request.model.model_name,
            "messages": [
                {"role": m.role, "content": m.text}
                for m in request.prompt
                if m.role != "system"
            ],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_output_tokens,
        }
        if system:
            body["system"] = system
        started = time.monotonic()
        try:
            resp = requests.post(
                f"{self.base_url}/v1/messages",
                json=body,
                headers={
                    "x-api-key": self.api_key,
                    "anthropic-version": "2023-06-01",
                },
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        _raise_for_status(resp)
        payload = resp.json()
        if payload.get("stop_reason") == "refusal":
            raise ContentRefusalError("model declined to answer")
        text = "".join(
            block.get("text", "") for block in payload.get("content", [])
        )
        usage = payload.get("usage", {})
        return ChatResponse(
            text=text,
            usage=TokenUsage(
                usage.get("input_tokens", 0), usage.get("output_tokens", 0)
            ),
            latency_ms=int((time.monotonic() - started) * 1000),
        )


class GoogleGenerateProvider:
    def __init__(self, api_key: str,
                 base_url: str = "https://generativelanguage.googleapis.com/v1beta",
                 timeout: float = 120.0):
        self.api_key = api_key
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def complete(self, request: ChatRequest) -> ChatResponse:
        contents = [
            {
                "role": "model" if m.role == "assistant" else "user",
                "parts": [{"text": m.text}],
            }
            for m in request.prompt
            if m.role != "system"
        ]
        body: dict = {
            "contents": contents,
            "generationConfig": {
                "temperature": request.temperature,
                "topP": request.top_p,
                "maxOutputTokens": request.max_output_tokens,
            },
        }
        system = "\n\n".join(m.text for m in request.prompt if m.role == "system")
        if system:
            body["systemInstruction"] = {"parts": [{"text": system}]}
        url = (
            f"{self.base_url}/models/{request.model.model_name}:generateContent"
            f"?key={self.api_key}"
        )
        started = time.monotonic()
        try:
            resp = requests.post(url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        _raise_for_status(resp)
        payload = resp.json()
        feedback = payload.get("promptFeedback", {})
        if feedback.get("blockReason"):
            raise ContentRefusalError(f"blocked: {feedback['blockReason']}")
        candidates = payload.get("candidates", [])
        text = ""
        if candidates:
            parts = candidates[0].get("content", {}).get("parts", [])
            text = "".join(p.get("text", "") for p in parts)
        usage = payload.get("usageMetadata", {})
        return ChatResponse(
            text=text,
            usage=TokenUsage(
                usage.get("promptTokenCount", 0),
                usage.get("candidatesTokenCount", 0),
            ),
            latency_ms=int((time.monotonic() - started) * 1000),
        )


def _raise_for_status(resp: requests.Response) -> None:
    if resp.status_code in (401, 403):
        raise AuthenticationError(f"HTTP {resp.status_code}: check API key")
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
    if resp.status_code >= 400:
        raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")


def build_provider(spec: ModelSpec, env: dict[str, str]) -> Provider:
    """Construct a live provider for a model spec; API keys come from
    ``<PROVIDER>_API_KEY``. ``local`` expects an OpenAI-compatible server
    at LOCAL_BASE_URL."""
    key_name = f"{spec.provider.upper()}_API_KEY"
    api_key = env.get(key_name, "")
    if spec.provider == "openai":
        if not api_key:
            raise AuthenticationError(f"{key_name} not set")
        return OpenAIChatProvider(api_key)
    if spec.provider == "anthropic":
        if not api_key:
            raise AuthenticationError(f"{key_name} not set")
        return AnthropicMessagesProvider(api_key)
    if spec.provider == "google":
        if not api_key:
            raise AuthenticationError(f"{key_name} not set")
        return GoogleGenerateProvider(api_key)
    if spec.provider == "local":
        base = env.get("LOCAL_BASE_URL", "http://localhost:8000/v1")
        return OpenAIChatProvider(api_key or "unused", base_url=base)
    raise ProviderError(f"unknown provider {spec.provider!r}")


# ==============================================================================
# Gateway: retries, concurrency bound, recording
# ==============================================================================


class Gateway:
    """Front door for all completions.

    Applies bounded exponential-backoff retries to transport failures
    (authentication errors and content refusals are never retried),
    enforces per-provider max_parallel with a semaphore, and records each
    successful exchange to the transcript when one is attached.
    """

    def __init__(
        self,
        provider: Provider,
        transcript: TranscriptWriter | None = None,
        *,
        max_attempts: int = 5,
        backoff_base_s: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.provider = provider
        self.transcript = transcript
        self.max_attempts = max_attempts
        self.backoff_base_s = backoff_base_s
        self._sleep = sleep
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._sem_lock = threading.Lock()

    def _semaphore(self, spec: ModelSpec) -> threading.BoundedSemaphore:
        with self._sem_lock:
            sem = self._semaphores.get(spec.provider)
            if sem is None:
                sem = threading.BoundedSemaphore(spec.max_parallel)
                self._semaphores[spec.provider] = sem
            return sem

    def complete(self, request: ChatRequest, stage: str = "") -> ChatResponse:
        with self._semaphore(request.model):
            response = self._complete_with_retries(request)
        if self.transcript is not None:
            self.transcript.append(stage, request, response)
        return response

    def _complete_with_retries(self, request: ChatRequest) -> ChatResponse:
        last: TransportError | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self.provider.complete(request)
            except TransportError as exc:
                last = exc
                if attempt < self.max_attempts:
                    delay = self.backoff_base_s * 2 ** (attempt - 1)
                    logger.warning(
                        "transport failure (attempt %d/%d), retrying in %.1fs: %s",
                        attempt, self.max_attempts, delay, exc,
                    )
                    self._sleep(delay)
                continue
            if attempt > 1:
                response = replace(response, attempts=attempt)
            return response
        raise TransportError(
            f"gave up after {self.max_attempts} attempts: {last}"
        ) from last


# ==============================================================================
# Pricing
# ==============================================================================


def _as_decimal(value: int | float | str | Decimal) -> Decimal:
    if isinstance(value, Decimal):
        return value
    # str() round-trips the shortest repr, so 0.1 becomes Decimal("0.1")
    # rather than the full binary expansion.
    return Decimal(str(value))


@dataclass(frozen=True)
class PriceEntry:
    input_per_million: Decimal  # dollars per 1M input tokens
    output_per_million: Decimal

    def __post_init__(self) -> None:
        if self.input_per_million < 0 or self.output_per_million < 0:
            raise ValueError("prices must be >= 0")

    @classmethod
    def per_million(cls, input_price, output_price) -> "PriceEntry":
        return cls(_as_decimal(input_price), _as_decimal(output_price))

    @classmethod
    def per_token(cls, input_price, output_price) -> "PriceEntry":
        return cls(
            _as_decimal(input_price) * MICRO, _as_decimal(output_price) * MICRO
        )

    @property
    def input_per_token(self) -> Decimal:
        return self.input_per_million / MICRO

    @property
    def output_per_token(self) -> Decimal:
        return self.output_per_million / MICRO


@dataclass(frozen=True)
class PriceTable:
    """Model-name (optionally provider-qualified) to price entry."""

    entries: dict[str, PriceEntry]

    @classmethod
    def from_file(cls, path: str | Path) -> "PriceTable":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = {
            name: PriceEntry.per_million(
                row["input_per_million"], row["output_per_million"]
            )
            for name, row in payload.items()
        }
        return cls(entries=entries)

    def lookup(self, spec: ModelSpec) -> PriceEntry:
        for key in (f"{spec.provider}/{spec.model_name}", spec.model_name):
            if key in self.entries:
                return self.entries[key]
        raise KeyError(f"no prices for {spec.provider}/{spec.model_name}")


def estimate_request_cost(usage: TokenUsage, prices: PriceEntry) -> Decimal:
    """Dollar cost of one exchange, exact in micro-dollars."""
    micro = (
        _as_decimal(usage.input_tokens) * prices.input_per_million
        + _as_decimal(usage.output_tokens) * prices.output_per_million
    )
    return micro / MICRO
