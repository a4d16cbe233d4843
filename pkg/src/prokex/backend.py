"""Completion backends and reply clean-up.

Two backends share the ``complete(request) -> str`` contract: an HTTP client
for OpenAI-compatible chat endpoints and the offline heuristic extractor in
:mod:`prokex.heuristic`.
"""
from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from typing import Optional

import httpx

from .errors import (
    AuthFailed,
    MissingCredential,
    NoPayloadFound,
    RateLimited,
    Timeout,
    TransportError,
)

API_KEY_ENV = "PKX_API_KEY"


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 4096
    stop_sequences: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("empty prompt")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "heuristic"
    base_url: Optional[str] = None
    model_name: Optional[str] = None
    timeout_seconds: float = 60.0
    max_concurrent_requests: int = 4

    def __post_init__(self):
        if self.kind not in ("http", "heuristic"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not (self.base_url and self.model_name):
            raise ValueError("http backend needs base_url and model_name")
        if self.timeout_seconds <= 0 or self.max_concurrent_requests < 1:
            raise ValueError("timeout and concurrency limits must be positive")


_FENCE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\n?(.*?)```", re.S)


def _balanced_end(text: str, start: int) -> int:
    """Index one past the bracket closing ``text[start]``, or -1."""
    stack = []
    in_string = False
    escaped = False
    pairs = {"{": "}", "[": "]"}
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in pairs:
            stack.append(pairs[ch])
        elif ch in "}]":
            if not stack or stack.pop() != ch:
                return -1
            if not stack:
                return i + 1
    return -1


def _is_container(text: str) -> bool:
    try:
        return isinstance(json.loads(text), (dict, list))
    except ValueError:
        return False


def extract_json_payload(reply: str) -> str:
    """Return the first JSON object/array in a reply, dropping fences and prose."""
    if _is_container(reply):
        return reply
    candidates = [m.group(1) for m in _FENCE.finditer(reply)] + [reply]
    for text in candidates:
        for m in re.finditer(r"[\[{]", text):
            end = _balanced_end(text, m.start())
            if end > 0 and _is_container(text[m.start():end]):
                return text[m.start():end]
    raise NoPayloadFound("no JSON object or array in reply")


def extract_turtle_payload(reply: str) -> str:
    fenced = _FENCE.search(reply)
    text = fenced.group(1) if fenced else reply
    # drop chatter before the first directive when there is one
    m = re.search(r"^\s*(@prefix|PREFIX)\b", text, re.M | re.I)
    if m and text[:m.start()].strip() and not fenced:
        text = text[m.start():]
    return text.strip() + "\n"


class HttpBackend:
    """Client for a ``/chat/completions`` endpoint.

    Thread-safe; at most ``max_concurrent_requests`` requests are in flight.
    """

    def __init__(self, config: BackendConfig, api_key: Optional[str] = None,
                 transport: Optional[httpx.BaseTransport] = None):
        if config.kind != "http":
            raise ValueError("HttpBackend needs an http config")
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not api_key.strip():
            raise MissingCredential(f"missing credential: set {API_KEY_ENV}")
        self.config = config
        self.url = config.base_url.rstrip("/") + "/chat/completions"
        self._gate = threading.BoundedSemaphore(config.max_concurrent_requests)
        self._client = httpx.Client(
            timeout=config.timeout_seconds,
            headers={"Authorization": f"Bearer {api_key.strip()}"},
            transport=transport,
        )

    def close(self):
        self._client.close()

    def payload(self, request: CompletionRequest) -> dict:
        body = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.stop_sequences:
            body["stop"] = list(request.stop_sequences)
        return body

    def complete(self, request: CompletionRequest) -> str:
        with self._gate:
            try:
                resp = self._client.post(self.url, json=self.payload(request))
            except httpx.TimeoutException as exc:
                raise Timeout(f"no reply within {self.config.timeout_seconds}s") from exc
            except httpx.HTTPError as exc:
                raise TransportError(f"{type(exc).__name__}: {exc}") from exc

        status = resp.status_code
        if status in (401, 403):
            raise AuthFailed(f"HTTP {status}: {resp.text[:200]}")
        if status == 429:
            raise RateLimited(f"HTTP 429: {resp.text[:200]}",
                              _retry_after(resp.headers.get("retry-after")))
        if status >= 400:
            raise TransportError(f"HTTP {status}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc
        if not isinstance(content, str):
            raise TransportError("completion content is not text")
        return content


def _retry_after(value: Optional[str]) -> Optional[float]:
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None
