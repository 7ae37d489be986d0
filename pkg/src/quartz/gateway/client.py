"""Chat-completion access: wire client, retries, caching, and replay."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

import httpx

from ..errors import (
    BackendUnavailableError,
    ProtocolError,
    ReplayMissError,
    TransportError,
)
from ..ranking import ModelId
from .registry import ModelRegistry

_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


@dataclass
class ChatRequest:
    """One rendered prompt headed for a backend."""

    model: str
    role: str
    instruction: str
    input_text: str
    temperature: float = 0.0
    max_tokens: int = 1024
    attempt: int = 0

    @property
    def text(self) -> str:
        return f"{self.instruction}\n\n{self.input_text}"


@dataclass
class ChatExchange:
    """A completed request/response pair, as recorded in the cache."""

    request: ChatRequest
    response_text: str
    finish_reason: str = "stop"
    latency_s: float = 0.0
    attempts: int = 1
    usage: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "request": {
                "model": self.request.model,
                "role": self.request.role,
                "instruction": self.request.instruction,
                "input": self.request.input_text,
                "temperature": self.request.temperature,
                "max_tokens": self.request.max_tokens,
            },
            "response": {
                "text": self.response_text,
                "finish_reason": self.finish_reason,
                "latency_s": self.latency_s,
                "attempts": self.attempts,
                "usage": self.usage,
            },
        }


class HttpBackend:
    """OpenAI-compatible chat-completions endpoint over HTTP.

    Sends a single user message per request (instruction and input
    concatenated). Credentials come from an environment variable and are
    never stored in config or artifacts.
    """

    def __init__(
        self,
        url: str,
        model: str,
        api_key_env: str,
        timeout: float = 120.0,
    ):
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    def complete(self, request: ChatRequest) -> str:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.text}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            response = httpx.post(
                self.url, json=payload, headers=headers, timeout=self.timeout
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {self.url} failed: {exc}") from exc
        if response.status_code in _RETRYABLE_STATUS:
            raise TransportError(
                f"{self.url} returned status {response.status_code}"
            )
        if response.status_code != 200:
            raise ProtocolError(
                f"{self.url} returned status {response.status_code}: "
                f"{response.text[:200]}"
            )
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProtocolError(
                f"malformed chat completion from {self.url}: {exc}"
            ) from exc


class Gateway:
    """Registry-wide completion entry point with retries, cache, and replay.

    In replay mode every request must hit the exchange cache; a miss is a
    hard error and no backend is ever contacted.
    """

    def __init__(
        self,
        registry: ModelRegistry,
        cache=None,
        *,
        replay: bool = False,
        record: bool = True,
        max_retries: int = 3,
        backoff_base: float = 0.25,
        max_inflight: int = 8,
        sleep=time.sleep,
    ):
        self.registry = registry
        self.cache = cache
        self.replay = replay
        self.record = record and cache is not None
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._inflight = threading.Semaphore(max_inflight)
        self._backend_calls = 0
        self._calls_lock = threading.Lock()

    @property
    def backend_calls(self) -> int:
        return self._backend_calls

    def complete(self, model: ModelId, request: ChatRequest, cache_key=None) -> str:
        if self.cache is not None and cache_key is not None:
            cached = self.cache.lookup(cache_key)
            if cached is not None:
                return cached["response"]["text"]
        if self.replay:
            raise ReplayMissError(
                f"replay mode but no cached exchange for key {cache_key!r}"
            )
        backend = self.registry.backend(model)
        last_error: Exception | None = None
        started = time.monotonic()
        for attempt in range(1, self.max_retries + 1):
            try:
                with self._inflight:
                    with self._calls_lock:
                        self._backend_calls += 1
                    text = backend.complete(request)
            except TransportError as exc:
                last_error = exc
                if attempt < self.max_retries:
                    self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            exchange = ChatExchange(
                request=request,
                response_text=text,
                latency_s=time.monotonic() - started,
                attempts=attempt,
            )
            if self.record and cache_key is not None:
                self.cache.store(cache_key, exchange.to_record())
            return text
        raise BackendUnavailableError(
            f"backend for {model.name!r} unavailable after "
            f"{self.max_retries} attempts: {last_error}",
            last_error,
        )
