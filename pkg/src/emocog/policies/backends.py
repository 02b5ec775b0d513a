"""Language-model backends: an OpenAI-compatible HTTP client, a scripted replay
backend keyed by prompt hash, and a recorder that captures live traffic."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections.abc import Callable, Mapping
from pathlib import Path
from typing import Protocol

import httpx

from ..domain import BackendConfig, BackendError

log = logging.getLogger(__name__)

DEFAULT_KEY = "__default__"
RETRYABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


class LlmBackend(Protocol):
    def respond(self, prompt: str) -> str: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class HttpChatBackend:
    """Single-turn chat-completions client with bounded retries."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_retries: int = 2,
        temperature: float = 0.0,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout
        self.max_retries = max_retries
        self.temperature = temperature
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @classmethod
    def from_env(cls, cfg: BackendConfig, **kwargs) -> "HttpChatBackend":
        base_url = os.environ.get("EMOCOG_BASE_URL", "https://api.openai.com/v1")
        api_key = os.environ.get("EMOCOG_API_KEY") or os.environ.get("OPENAI_API_KEY")
        model = os.environ.get("EMOCOG_MODEL", cfg.model)
        return cls(base_url, model, api_key, cfg.timeout, cfg.max_retries, cfg.temperature, **kwargs)

    def respond(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        url = f"{self.base_url}/chat/completions"
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._client.post(url, json=payload)
            except httpx.TransportError as exc:
                last = exc
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()["choices"][0]["message"]["content"] or ""
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise BackendError(f"malformed completion body: {exc}") from exc
                if resp.status_code not in RETRYABLE_STATUS:
                    raise BackendError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
                last = BackendError(f"HTTP {resp.status_code}")
            if attempt < self.max_retries:
                self._sleep(0.5 * 2**attempt)
        raise BackendError(f"backend unavailable after {self.max_retries + 1} attempts: {last}")

    def close(self) -> None:
        self._client.close()


class ScriptedBackend:
    """Replays canned responses keyed by prompt hash.

    Prompts without an exact entry fall through to ``defaults``: ordered
    ``(substring, response)`` pairs, first substring found in the prompt wins.
    An empty substring matches everything.
    """

    def __init__(self, responses: Mapping[str, str] | None = None, defaults: list[tuple[str, str]] | None = None):
        self.responses = dict(responses or {})
        self.defaults = list(defaults or [])

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ScriptedBackend":
        data = dict(data)
        default = data.pop(DEFAULT_KEY, None)
        if default is None:
            defaults = []
        elif isinstance(default, str):
            defaults = [("", default)]
        elif isinstance(default, Mapping):
            defaults = [(str(k), str(v)) for k, v in default.items()]
        else:
            raise ValueError(f"{DEFAULT_KEY} must be a string or an object")
        for k, v in data.items():
            if not isinstance(v, str):
                raise ValueError(f"fixture entry {k!r} is not a string")
        return cls(data, defaults)

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedBackend":
        with Path(path).open(encoding="utf-8") as fh:
            return cls.from_mapping(json.load(fh))

    def respond(self, prompt: str) -> str:
        h = prompt_hash(prompt)
        if h in self.responses:
            return self.responses[h]
        for needle, text in self.defaults:
            if needle in prompt:
                return text
        raise BackendError(f"no scripted response for prompt {h[:12]}")


class RecordingBackend:
    """Wraps a live backend and keeps every prompt-hash -> reply pair it saw."""

    def __init__(self, inner: LlmBackend):
        self.inner = inner
        self.records: dict[str, str] = {}
        self.failures = 0
        self._lock = threading.Lock()

    def respond(self, prompt: str) -> str:
        try:
            reply = self.inner.respond(prompt)
        except BackendError:
            with self._lock:
                self.failures += 1
            raise
        with self._lock:
            self.records[prompt_hash(prompt)] = reply
        return reply

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            data = dict(sorted(self.records.items()))
        path.write_text(json.dumps(data, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
