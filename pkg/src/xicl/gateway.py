"""Chat-completion gateway: bounded concurrency, retries, rate limiting, and
a content-addressed on-disk response cache.

The wire protocol is the de-facto chat-completion shape: request
``{model, messages: [{role, content}], temperature}``, reply text read from
``choices[0].message.content``. The cache is append-only and keyed by a
digest of (model, system, messages, temperature); with a warm cache a full
run performs zero network operations.

Endpoints with the ``mock:`` scheme never touch the network: they are served
in-process by a deterministic scripted model, which keeps CI and the
end-to-end determinism check offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from xicl.codeswitch import WordMixGenerator

RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class GatewayError(RuntimeError):
    """Authentication failure, exhausted retries, or malformed replies."""


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    system: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int | None = None

    def digest(self) -> str:
        payload = json.dumps(
            {
                "model": self.model_id,
                "system": self.system,
                "messages": list(self.messages),
                "temperature": self.temperature,
            },
            sort_keys=True, ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ModelResponse:
    text: str | None
    finish: str  # stop | length | error
    latency_ms: float = 0.0
    from_cache: bool = False
    usage: dict | None = None
    attempts: int = 1
    error: str | None = None
    # Providers rejecting temperature 0.0 get their configured minimum; the
    # substitution is recorded here so runs can flag it.
    temperature_used: float | None = None

    def __post_init__(self) -> None:
        if (self.text is None) != (self.finish == "error"):
            raise GatewayError("text must be present exactly when finish != error")


@dataclass
class EndpointConfig:
    model_id: str
    url: str
    api_key_env: str | None = None
    requests_per_minute: int | None = None
    min_temperature: float = 0.0
    extra_headers: dict = field(default_factory=dict)


class ResponseCache:
    """cache_dir/responses/<digest>.json, atomic writes, no eviction."""

    def __init__(self, cache_dir: str | Path):
        self.root = Path(cache_dir) / "responses"
        self._lock = threading.Lock()

    def path(self, digest: str) -> Path:
        return self.root / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        path = self.path(digest)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, digest: str, payload: dict) -> None:
        with self._lock:
            self.root.mkdir(parents=True, exist_ok=True)
            tmp = self.path(digest).with_suffix(".tmp")
            tmp.write_text(
                json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1),
                encoding="utf-8",
            )
            os.replace(tmp, self.path(digest))


class _RateLimiter:
    """Minimum spacing between requests for one model."""

    def __init__(self, requests_per_minute: int | None):
        self.interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def wait(self) -> None:
        if self.interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next_slot)
            self._next_slot = slot + self.interval
        delay = slot - now
        if delay > 0:
            time.sleep(delay)


class ScriptedMockModel:
    """Deterministic in-process model for offline runs.

    Generation prompts (code-switching, ladders, paraphrases) are answered by
    the word-mix fallback generator; evaluation prompts get a fixed-format
    answer derived from the request digest, so repeated runs are bit-equal.
    """

    def __init__(self) -> None:
        self._generator = WordMixGenerator()

    def reply(self, request: ChatRequest) -> str:
        system = request.system
        if "bilingual rewriting assistant" in system or "rewriting assistant" in system:
            user = request.messages[-1][1] if request.messages else ""
            return self._generator(system, user)
        query = request.messages[-1][1] if request.messages else ""
        digest = hashlib.sha256(
            (request.digest() + query).encode("utf-8")
        ).hexdigest()
        cot = "Translation First" in system or "step-by-step" in system
        if "uppercase letter" in system:
            letters = sorted(set(_choice_letters(query))) or ["A"]
            letter = letters[int(digest[:8], 16) % len(letters)]
            if cot:
                return f"Mock translation of the query.\nThe answer is {letter}"
            return letter
        if "short-answer" in system or "short answer" in system:
            answer = f"mock-{digest[:6]}"
            return f"Mock translation of the query.\nThe answer is {answer}" if cot else answer
        # Translation prompts: echo the query so chrF has stable input.
        return query.splitlines()[0] if query else ""


def _choice_letters(query: str) -> list[str]:
    letters = []
    for line in query.splitlines():
        if len(line) >= 2 and line[1] == "." and line[0].isalpha() and line[0].isupper():
            letters.append(line[0])
    return letters


class Gateway:
    """Reach chat-completion endpoints through the cache with retries."""

    def __init__(self, endpoints: dict[str, EndpointConfig], cache: ResponseCache,
                 transport: httpx.BaseTransport | None = None,
                 max_tries: int = 5, backoff_base: float = 1.0,
                 sleep=time.sleep, timeout: float = 120.0):
        self.endpoints = endpoints
        self.cache = cache
        self.max_tries = max_tries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=timeout)
        self._mock = ScriptedMockModel()
        self._limiters: dict[str, _RateLimiter] = {}
        self._limiter_lock = threading.Lock()

    def close(self) -> None:
        self._client.close()

    def _limiter(self, model_id: str) -> _RateLimiter:
        with self._limiter_lock:
            limiter = self._limiters.get(model_id)
            if limiter is None:
                endpoint = self.endpoints[model_id]
                limiter = _RateLimiter(endpoint.requests_per_minute)
                self._limiters[model_id] = limiter
            return limiter

    def complete(self, request: ChatRequest) -> ModelResponse:
        digest = request.digest()
        cached = self.cache.get(digest)
        if cached is not None:
            return ModelResponse(
                text=cached["text"], finish=cached.get("finish", "stop"),
                latency_ms=0.0, from_cache=True,
                usage=cached.get("usage"), attempts=0,
                temperature_used=cached.get("temperature_used", request.temperature),
            )
        endpoint = self.endpoints.get(request.model_id)
        if endpoint is None:
            raise GatewayError(f"no endpoint configured for model {request.model_id!r}")

        start = time.monotonic()
        if endpoint.url.startswith("mock:"):
            text = self._mock.reply(request)
            response = ModelResponse(text=text, finish="stop",
                                     latency_ms=(time.monotonic() - start) * 1000,
                                     temperature_used=request.temperature)
        else:
            response = self._complete_http(request, endpoint, start)
        if response.finish != "error":
            self.cache.put(digest, {
                "digest": digest,
                "model": request.model_id,
                "system": request.system,
                "messages": list(request.messages),
                "temperature": request.temperature,
                "temperature_used": response.temperature_used,
                "text": response.text,
                "finish": response.finish,
                "usage": response.usage,
                "created_at": time.time(),
            })
        return response

    def _complete_http(self, request: ChatRequest, endpoint: EndpointConfig,
                       start: float) -> ModelResponse:
        temperature = max(request.temperature, endpoint.min_temperature)
        body = {
            "model": request.model_id,
            "messages": (
                [{"role": "system", "content": request.system}]
                + [{"role": role, "content": content} for role, content in request.messages]
            ),
            "temperature": temperature,
        }
        if request.max_tokens is not None:
            body["max_tokens"] = request.max_tokens
        headers = dict(endpoint.extra_headers)
        if endpoint.api_key_env:
            key = os.environ.get(endpoint.api_key_env)
            if not key:
                raise GatewayError(
                    f"credential env var {endpoint.api_key_env} is not set for "
                    f"model {request.model_id}"
                )
            headers["Authorization"] = f"Bearer {key}"

        last_error = "unknown"
        for attempt in range(1, self.max_tries + 1):
            self._limiter(request.model_id).wait()
            try:
                reply = self._client.post(endpoint.url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                if attempt < self.max_tries:
                    self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            if reply.status_code in (401, 403):
                raise GatewayError(
                    f"authentication failed ({reply.status_code}) for {request.model_id}"
                )
            if reply.status_code in RETRYABLE_STATUS:
                last_error = f"status {reply.status_code}"
                if attempt < self.max_tries:
                    self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            if reply.status_code != 200:
                raise GatewayError(
                    f"unexpected status {reply.status_code} from {endpoint.url}"
                )
            try:
                payload = reply.json()
                choice = payload["choices"][0]
                text = choice["message"]["content"]
                finish = choice.get("finish_reason", "stop")
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise GatewayError(f"malformed reply from {endpoint.url}: {exc}") from exc
            if text is None:
                raise GatewayError(f"null content in reply from {endpoint.url}")
            return ModelResponse(
                text=text,
                finish="length" if finish == "length" else "stop",
                latency_ms=(time.monotonic() - start) * 1000,
                usage=payload.get("usage"),
                attempts=attempt,
                temperature_used=temperature,
            )
        return ModelResponse(
            text=None, finish="error",
            latency_ms=(time.monotonic() - start) * 1000,
            attempts=self.max_tries,
            error=f"exhausted {self.max_tries} tries: {last_error}",
        )

    def complete_batch(self, requests: list[ChatRequest],
                       max_in_flight: int = 4) -> list[ModelResponse]:
        """Concurrent completion preserving request order.

        Individual failures surface as error responses at their position and
        never abort siblings.
        """
        if max_in_flight < 1:
            raise GatewayError("max_in_flight must be >= 1")
        if not requests:
            return []

        def run_one(request: ChatRequest) -> ModelResponse:
            try:
                return self.complete(request)
            except GatewayError as exc:
                return ModelResponse(text=None, finish="error", error=str(exc))

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(run_one, requests))


class ModelGenerator:
    """Adapter giving codeswitch generation the gateway as its text source."""

    def __init__(self, gateway: Gateway, model_id: str, temperature: float = 0.0):
        self.gateway = gateway
        self.model_id = model_id
        self.temperature = temperature
        self.generator_id = model_id

    def __call__(self, system: str, user: str) -> str:
        request = ChatRequest(
            model_id=self.model_id, system=system,
            messages=(("user", user),), temperature=self.temperature,
        )
        response = self.gateway.complete(request)
        if response.finish == "error" or response.text is None:
            raise GatewayError(
                f"generator {self.model_id} failed: {response.error or 'no text'}"
            )
        return response.text
