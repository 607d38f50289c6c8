"""Model-server clients: HTTP JSON completion routes and a scripted replay backend."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import httpx

from .prompts import SCHEMAS, PromptBundle

ENV_URL = "LLAMBO_BACKEND_URL"
DEFAULT_URL = "http://localhost:11434"
APIS = ("ollama", "openai")


class BackendError(RuntimeError):
    """Transport-level failure: unreachable server, timeout, exhausted script."""


class ServerError(BackendError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"server returned HTTP {status}: {body[:200]}")
        self.status = status


@dataclass(frozen=True)
class BackendConfig:
    url: str = ""
    model: str = "llama3.1:70b"
    temperature: float = 0.7
    max_retries: int = 2
    timeout: float = 120.0
    api: str = "ollama"
    max_concurrency: int = 1

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")
        if self.api not in APIS:
            raise ValueError(f"unknown api {self.api!r}; expected one of {APIS}")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    def resolved_url(self) -> str:
        return self.url or os.environ.get(ENV_URL) or DEFAULT_URL

    def to_dict(self) -> dict:
        return asdict(self)


class HttpBackend:
    """Client for a local model server (ollama ``/api/generate`` or an
    OpenAI-compatible ``/v1/chat/completions``), streaming disabled."""

    honors_seed = True

    def __init__(self, config: BackendConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)
        self._slots = threading.BoundedSemaphore(config.max_concurrency)

    def request_body(self, prompt: PromptBundle, seed: int, temperature: float) -> dict:
        cfg = self.config
        if cfg.api == "ollama":
            return {
                "model": cfg.model,
                "system": prompt.system_text,
                "prompt": prompt.user_text,
                "stream": False,
                "options": {"temperature": temperature, "seed": seed},
            }
        return {
            "model": cfg.model,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
            "temperature": temperature,
            "seed": seed,
            "stream": False,
        }

    def route(self) -> str:
        base = self.config.resolved_url().rstrip("/")
        return base + ("/api/generate" if self.config.api == "ollama" else "/v1/chat/completions")

    def complete(self, prompt: PromptBundle, seed: int, temperature: float) -> str:
        body = self.request_body(prompt, seed, temperature)
        with self._slots:
            try:
                resp = self._client.post(self.route(), json=body, timeout=self.config.timeout)
            except httpx.HTTPError as exc:
                raise BackendError(f"{type(exc).__name__}: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise ServerError(resp.status_code, resp.text)
        try:
            data = resp.json()
            if self.config.api == "ollama":
                return str(data["response"])
            return str(data["choices"][0]["message"]["content"])
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected response body: {resp.text[:200]}") from exc

    def close(self):
        self._client.close()


class ScriptedBackend:
    """Replays queued replies in order, ignoring prompt content and seeds.

    ``replies`` is either one list shared by every query or a mapping from
    schema name (``config``, ``config_list``, ``score``) to its own queue.
    An exhausted queue raises :class:`BackendError` unless ``cycle`` is set.
    """

    honors_seed = False

    def __init__(self, replies: Union[List[str], Dict[str, List[str]]], cycle: bool = False,
                 config: Optional[BackendConfig] = None):
        if isinstance(replies, dict):
            unknown = set(replies) - set(SCHEMAS)
            if unknown:
                raise ValueError(f"unknown reply queues {sorted(unknown)}")
            self._queues = {k: list(v) for k, v in replies.items()}
            self._shared = False
        else:
            self._queues = {"*": list(replies)}
            self._shared = True
        self.cycle = cycle
        self.config = config or BackendConfig(url="scripted://", model="scripted")
        self._pos = {k: 0 for k in self._queues}
        self._lock = threading.Lock()
        self.requests: List[dict] = []

    @classmethod
    def from_file(cls, path: Union[str, Path], config: Optional[BackendConfig] = None):
        with open(path) as fh:
            doc = json.load(fh)
        if isinstance(doc, dict) and "replies" in doc:
            return cls(doc["replies"], bool(doc.get("cycle", False)), config)
        return cls(doc, False, config)

    def fresh(self) -> "ScriptedBackend":
        """Same script, rewound; one per independent run."""
        replies = self._queues["*"] if self._shared else self._queues
        return ScriptedBackend(replies, self.cycle, self.config)

    def complete(self, prompt: PromptBundle, seed: int, temperature: float) -> str:
        key = "*" if self._shared else prompt.expected_schema
        with self._lock:
            self.requests.append({"schema": prompt.expected_schema, "seed": seed,
                                  "temperature": temperature})
            queue = self._queues.get(key, [])
            i = self._pos.get(key, 0)
            if i >= len(queue):
                if not (self.cycle and queue):
                    raise BackendError(f"scripted reply queue {key!r} is exhausted")
                i = 0
            self._pos[key] = i + 1
            return queue[i]


def make_backend(config: BackendConfig, scripted_replies: Optional[Union[str, Path]] = None):
    if scripted_replies is not None:
        return ScriptedBackend.from_file(scripted_replies, config)
    return HttpBackend(config)
