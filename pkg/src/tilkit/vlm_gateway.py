"""Backend-agnostic VLM access plus strict parsers for the role outputs.

A request is "encoded images + text in"; a backend returns raw model text.
Two backends ship: an HTTP chat-completions client and a deterministic
scripted backend for tests and offline runs. Parsers turn free-form model
text into typed verdicts using last-occurrence precedence, since
chain-of-thought answers reason first and conclude last.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

from .errors import (
    BackendUnavailableError,
    ConfigError,
    TestScriptError,
    UnparseableResponseError,
)

API_KEY_ENV = "TIL_VLM_API_KEY"

_ATTRIBUTE_RE = re.compile(r"\b(contact|separation|neither)\b", re.IGNORECASE)
_INTEGER_RE = re.compile(r"\b\d+\b")
_CHECK_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class VlmRequest:
    """One round-trip to the model: ordered PNG images plus a prompt."""

    images: tuple[bytes, ...]
    text: str
    temperature: float = 0.0
    max_tokens: int = 1024
    role: str = ""
    round: int = 1

    def __post_init__(self):
        if len(self.images) < 1:
            raise ConfigError("a request needs at least one image")
        if not self.text:
            raise ConfigError("a request needs non-empty text")

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.text.encode("utf-8"))
        for img in self.images:
            h.update(img)
        h.update(f"{self.temperature}|{self.max_tokens}".encode())
        return h.hexdigest()


@dataclass(frozen=True)
class VlmVerdict:
    """Parsed model output with the span of text that decided it."""

    kind: str  # "attribute" | "tile_index" | "check"
    value: object
    raw: str
    span: tuple[int, int]


class Backend(Protocol):
    def complete(self, request: VlmRequest) -> str: ...


class ScriptedBackend:
    """Deterministic backend replaying canned responses per role.

    Responses are consumed in call order within each role, so the key is
    effectively (role, call-count). Identical scripts give identical runs.
    """

    def __init__(self, scripts: dict[str, list[str]]):
        self._scripts = {role: list(lines) for role, lines in scripts.items()}
        self._cursor: dict[str, int] = {role: 0 for role in self._scripts}
        self.calls: list[tuple[str, int]] = []

    def complete(self, request: VlmRequest) -> str:
        role = request.role
        if role not in self._scripts:
            raise TestScriptError(f"no script for role {role!r}")
        i = self._cursor[role]
        if i >= len(self._scripts[role]):
            raise TestScriptError(f"script for role {role!r} exhausted after {i} calls")
        self._cursor[role] = i + 1
        self.calls.append((role, i + 1))
        return self._scripts[role][i]

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
            raise ConfigError(f"script file {path} must map role -> list of responses")
        return cls(data)


class HttpBackend:
    """Chat-completions client with bounded exponential-backoff retries."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_attempts: int = 3,
        retry_delay: float = 1.0,
        session=None,
    ):
        if not base_url:
            raise ConfigError("base_url is required for the HTTP backend")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.retry_delay = retry_delay
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not key:
            raise ConfigError(f"set {API_KEY_ENV} or pass api_key for the HTTP backend")
        self._key = key
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def complete(self, request: VlmRequest) -> str:
        payload = self._payload(request)
        headers = {"Authorization": f"Bearer {self._key}", "Content-Type": "application/json"}
        url = f"{self.base_url}/chat/completions"
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            if attempt > 0:
                time.sleep(self.retry_delay * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(url, json=payload, headers=headers, timeout=self.timeout)
            except Exception as exc:  # transport failure: retry
                last_error = f"transport error: {exc}"
                continue
            status = getattr(resp, "status_code", 0)
            if status == 200:
                try:
                    body = resp.json()
                    return body["choices"][0]["message"]["content"]
                except Exception as exc:
                    raise BackendUnavailableError(f"malformed response body: {exc}") from exc
            if status in (429,) or status >= 500:
                last_error = f"HTTP {status}"
                continue
            raise BackendUnavailableError(f"HTTP {status} from {url}")
        raise BackendUnavailableError(f"{self.max_attempts} attempts failed; last: {last_error}")

    def _payload(self, request: VlmRequest) -> dict:
        content: list[dict] = [{"type": "text", "text": request.text}]
        for img in request.images:
            b64 = base64.b64encode(img).decode("ascii")
            content.append(
                {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}
            )
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }


@dataclass
class VlmGateway:
    """Routes requests to a backend and audits every exchange as JSONL."""

    backend: Backend
    audit_path: Path | None = None
    history: list[tuple[VlmRequest, str]] = field(default_factory=list)

    def query(self, request: VlmRequest) -> str:
        response = self.backend.complete(request)
        self.history.append((request, response))
        if self.audit_path is not None:
            record = {
                "ts": datetime.now(timezone.utc).isoformat(),
                "role": request.role,
                "round": request.round,
                "request_sha256": request.digest(),
                "n_images": len(request.images),
                "response": response,
            }
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return response


def query(request: VlmRequest, backend: Backend) -> str:
    """One-shot query without audit plumbing."""
    return backend.complete(request)


def parse_attribute(text: str) -> VlmVerdict:
    """Last standalone contact / separation / neither wins."""
    matches = list(_ATTRIBUTE_RE.finditer(text))
    if not matches:
        raise UnparseableResponseError("no attribute keyword found", raw=text)
    m = matches[-1]
    return VlmVerdict(kind="attribute", value=m.group(1).lower(), raw=text, span=m.span())


def parse_tile_index(text: str, n_tiles: int) -> VlmVerdict:
    """Last standalone integer inside [1, n_tiles] wins; out-of-range ignored."""
    if n_tiles < 1:
        raise ConfigError(f"n_tiles must be >= 1, got {n_tiles}")
    hit = None
    for m in _INTEGER_RE.finditer(text):
        v = int(m.group(0))
        if 1 <= v <= n_tiles:
            hit = m
    if hit is None:
        raise UnparseableResponseError(f"no integer in [1, {n_tiles}] found", raw=text)
    return VlmVerdict(kind="tile_index", value=int(hit.group(0)), raw=text, span=hit.span())


def parse_check(text: str) -> VlmVerdict:
    """Last standalone yes/no wins: yes -> accept, no -> reject."""
    matches = list(_CHECK_RE.finditer(text))
    if not matches:
        raise UnparseableResponseError("no yes/no token found", raw=text)
    m = matches[-1]
    value = "accept" if m.group(1).lower() == "yes" else "reject"
    return VlmVerdict(kind="check", value=value, raw=text, span=m.span())
