"""Minimal OpenAI-style chat-completions client.

Retries transient failures (transport errors, 429, 5xx) with exponential
backoff; any other 4xx fails immediately. The API key is read from the
environment at send time and never stored on the request or logged.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import httpx

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


class LLMError(RuntimeError):
    def __init__(self, message: str, digest: str, status: int | None = None):
        super().__init__(f"{message} [request {digest[:12]}]")
        self.digest = digest
        self.status = status


class RequestError(LLMError):
    """Non-retryable rejection (4xx other than 429)."""


class TransportError(LLMError):
    """Retries exhausted on transient failures."""


@dataclass(frozen=True)
class ChatRequest:
    endpoint: str
    model: str
    messages: Sequence[Mapping[str, str]]
    temperature: float = 1.0
    max_output_tokens: int | None = None
    timeout: float = 60.0
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self):
        msgs = tuple({"role": m["role"], "content": m["content"]} for m in self.messages)
        if not msgs:
            raise ValueError("a chat request needs at least one message")
        for m in msgs:
            if m["role"] not in ROLES:
                raise ValueError(f"unknown role {m['role']!r}")
        if any(m["role"] == "system" for m in msgs[1:]):
            raise ValueError("a system message must come first")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        object.__setattr__(self, "messages", msgs)

    def body(self) -> bytes:
        payload = {
            "model": self.model,
            "messages": [{"role": m["role"], "content": m["content"]} for m in self.messages],
            "temperature": self.temperature,
        }
        if self.max_output_tokens is not None:
            payload["max_tokens"] = self.max_output_tokens
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")

    def digest(self) -> str:
        return hashlib.sha256(self.endpoint.encode() + b"\n" + self.body()).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    approximate_usage: bool = False


def _estimate_tokens(text: str) -> int:
    return len(text.split())


@dataclass
class ChatClient:
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_cap: float = 30.0
    max_in_flight: int = 8
    sleep: Callable[[float], None] = time.sleep
    transport: httpx.BaseTransport | None = None
    _gate: threading.BoundedSemaphore = field(init=False, repr=False)

    def __post_init__(self):
        if self.max_attempts < 1 or self.max_in_flight < 1:
            raise ValueError("max_attempts and max_in_flight must be >= 1")
        self._gate = threading.BoundedSemaphore(self.max_in_flight)

    def _headers(self, req: ChatRequest) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(req.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, req: ChatRequest) -> ChatResponse:
        body = req.body()
        digest = req.digest()
        last = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._gate, httpx.Client(timeout=req.timeout, transport=self.transport) as http:
                    resp = http.post(req.endpoint, content=body, headers=self._headers(req))
            except httpx.HTTPError as exc:
                last = f"transport failure: {type(exc).__name__}"
            else:
                if resp.status_code == 200:
                    return self._parse(resp, req, digest)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                else:
                    raise RequestError(f"HTTP {resp.status_code}: {resp.text[:200]}", digest, resp.status_code)
            log.warning("request %s attempt %d/%d failed: %s", digest[:12], attempt, self.max_attempts, last)
            if attempt < self.max_attempts:
                self.sleep(min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1)))
        raise TransportError(f"gave up after {self.max_attempts} attempts ({last})", digest)

    def _parse(self, resp: httpx.Response, req: ChatRequest, digest: str) -> ChatResponse:
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RequestError(f"malformed completion payload: {exc!r}", digest, resp.status_code) from None
        usage = data.get("usage") or {}
        if "completion_tokens" in usage:
            return ChatResponse(text, int(usage.get("prompt_tokens", 0)), int(usage["completion_tokens"]))
        prompt = sum(_estimate_tokens(m["content"]) for m in req.messages)
        return ChatResponse(text, prompt, _estimate_tokens(text), approximate_usage=True)


def complete(req: ChatRequest, client: ChatClient | None = None) -> ChatResponse:
    return (client or ChatClient()).complete(req)
