"""Backend-agnostic chat-completion client with record/replay cassettes.

Live backends speak the de-facto chat-completions JSON shape over HTTP with
greedy decoding and bounded retries. Replay backends serve completions from a
JSON-lines cassette keyed by a stable hash of the request, which makes every
test and benchmark run bit-reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import requests


class BackendError(Exception):
    pass


class MissingCredential(BackendError):
    pass


class CassetteMiss(BackendError):
    def __init__(self, request_hash: str):
        self.request_hash = request_hash
        super().__init__(f"no cassette record for request {request_hash}")


class TransportError(BackendError):
    pass


class NonRetryableStatus(BackendError):
    def __init__(self, status: int, body: str):
        self.status = status
        super().__init__(f"backend returned HTTP {status}: {body[:200]}")


@dataclass(frozen=True)
class ChatMessage:
    role: str       # system | user | assistant
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple          # of ChatMessage
    greedy: bool = True
    max_tokens: int = 1024

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message must be system or user")

    @staticmethod
    def of(*pairs: tuple[str, str], max_tokens: int = 1024) -> "ChatRequest":
        return ChatRequest(messages=tuple(ChatMessage(r, c) for r, c in pairs),
                           max_tokens=max_tokens)


@dataclass(frozen=True)
class Completion:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0


@dataclass(frozen=True)
class BackendSpec:
    kind: str                               # live | replay
    model_id: str = "default"
    endpoint_url: Optional[str] = None      # live only
    credential_env_name: Optional[str] = None
    cassette_path: Optional[str] = None     # replay source, or live write-through

    def __post_init__(self):
        if self.kind == "live":
            if not self.endpoint_url or not self.credential_env_name:
                raise ValueError("live backend needs endpoint_url and credential_env_name")
        elif self.kind == "replay":
            if not self.cassette_path:
                raise ValueError("replay backend needs cassette_path")
        else:
            raise ValueError(f"unknown backend kind: {self.kind!r}")


def request_hash(req: ChatRequest, model_id: str) -> str:
    """Stable digest over the semantic request fields only."""
    payload = {
        "model": model_id,
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "greedy": req.greedy,
        "max_tokens": req.max_tokens,
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# global in-flight request budget shared by every backend in the process
_budget = threading.BoundedSemaphore(8)


def set_request_budget(n: int) -> None:
    global _budget
    _budget = threading.BoundedSemaphore(max(1, n))


class ReplayBackend:
    """Serves recorded completions; pure and safe to share across threads."""

    def __init__(self, cassette_path: str | Path, model_id: str = "default"):
        self.model_id = model_id
        self.cassette_path = Path(cassette_path)
        self._records: dict[str, Completion] = {}
        if self.cassette_path.exists():
            with open(self.cassette_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    resp = obj["response"]
                    self._records[obj["request_hash"]] = Completion(
                        text=resp["text"],
                        input_tokens=int(resp.get("input_tokens", 0)),
                        output_tokens=int(resp.get("output_tokens", 0)),
                    )

    def complete(self, req: ChatRequest) -> Completion:
        key = request_hash(req, self.model_id)
        if key not in self._records:
            raise CassetteMiss(key)
        return self._records[key]


class LiveBackend:
    """One chat-completions HTTP call per request with greedy decoding."""

    retries = 3
    backoff_s = 0.5

    def __init__(self, spec: BackendSpec, session: Optional[requests.Session] = None):
        self.spec = spec
        self.model_id = spec.model_id
        self._session = session or requests.Session()
        if not os.environ.get(spec.credential_env_name or ""):
            raise MissingCredential(
                f"environment variable {spec.credential_env_name} is not set")

    def complete(self, req: ChatRequest) -> Completion:
        payload = {
            "model": self.spec.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "max_tokens": req.max_tokens,
        }
        if req.greedy:
            payload["temperature"] = 0
        headers = {
            "Authorization": f"Bearer {os.environ[self.spec.credential_env_name]}",
            "Content-Type": "application/json",
        }
        url = self.spec.endpoint_url.rstrip("/") + "/chat/completions"
        last_exc: Optional[Exception] = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(url, json=payload, headers=headers, timeout=120)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_exc = TransportError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise NonRetryableStatus(resp.status_code, resp.text)
            body = resp.json()
            usage = body.get("usage", {})
            return Completion(
                text=body["choices"][0]["message"]["content"],
                input_tokens=int(usage.get("prompt_tokens", 0)),
                output_tokens=int(usage.get("completion_tokens", 0)),
            )
        raise TransportError(f"request failed after {self.retries} attempts: {last_exc}")


class RecordingBackend:
    """Write-through wrapper: forwards to an inner backend, appends to a cassette."""

    def __init__(self, inner, cassette_path: str | Path):
        self.inner = inner
        self.model_id = getattr(inner, "model_id", "default")
        self.cassette_path = Path(cassette_path)
        self._lock = threading.Lock()
        self._seen: set[str] = set()
        if self.cassette_path.exists():
            with open(self.cassette_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._seen.add(json.loads(line)["request_hash"])

    def complete(self, req: ChatRequest) -> Completion:
        completion = self.inner.complete(req)
        key = request_hash(req, self.model_id)
        with self._lock:
            if key not in self._seen:
                self._seen.add(key)
                record = {
                    "request_hash": key,
                    "request": {
                        "model": self.model_id,
                        "messages": [
                            {"role": m.role, "content": m.content} for m in req.messages],
                        "greedy": req.greedy,
                        "max_tokens": req.max_tokens,
                    },
                    "response": {
                        "text": completion.text,
                        "input_tokens": completion.input_tokens,
                        "output_tokens": completion.output_tokens,
                    },
                }
                self.cassette_path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.cassette_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        return completion


def make_backend(spec):
    """Materialize a backend from its spec; backend instances pass through."""
    if hasattr(spec, "complete"):
        return spec
    if spec.kind == "replay":
        return ReplayBackend(spec.cassette_path, model_id=spec.model_id)
    backend = LiveBackend(spec)
    if spec.cassette_path:
        return RecordingBackend(backend, spec.cassette_path)
    return backend


def complete(backend, req: ChatRequest) -> Completion:
    """Issue one completion through the process-wide request budget."""
    backend = make_backend(backend)
    with _budget:
        return backend.complete(req)
