"""Chat-completion backends: an OpenAI-compatible HTTP client and a replay store."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
import threading
import time
from abc import ABC, abstractmethod
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import httpx

from ontokg.errors import BackendError, ConfigError, PreconditionError

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 1e-5
DEFAULT_MAX_TOKENS = 25000
DEFAULT_MODEL = "mistralai/Mixtral-8x7B-Instruct-v0.1"

STAGE_TAGS = frozenset(
    {"cq_gen", "concept_extract", "ontology_build", "cq_answer", "kg_build", "judge_answer", "judge_kg"}
)


class FixtureMissingError(BackendError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no replay fixture for request fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class FixtureConflictError(BackendError):
    """A fixture already exists for this fingerprint with different text."""


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    model_name: str = DEFAULT_MODEL

    def __post_init__(self) -> None:
        if isinstance(self.temperature, bool) or not isinstance(self.temperature, (int, float)):
            raise ConfigError(f"temperature must be a number, got {self.temperature!r}")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ConfigError(f"temperature must be finite and >= 0, got {self.temperature!r}")
        if isinstance(self.max_tokens, bool) or not isinstance(self.max_tokens, int) or self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be a positive integer, got {self.max_tokens!r}")
        if not isinstance(self.model_name, str) or not self.model_name:
            raise ConfigError("model_name must be a non-empty string")


def default_params(config: Mapping[str, Any] | None = None) -> GenerationParams:
    """Generation defaults, with any keys present in ``config`` taking precedence."""
    config = dict(config or {})
    return GenerationParams(
        temperature=config.get("temperature", DEFAULT_TEMPERATURE),
        max_tokens=config.get("max_tokens", DEFAULT_MAX_TOKENS),
        model_name=config.get("model", config.get("model_name", DEFAULT_MODEL)),
    )


@dataclass(frozen=True)
class ChatRequest:
    user_text: str
    params: GenerationParams
    stage_tag: str
    system_text: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.user_text, str) or not self.user_text:
            raise PreconditionError("chat request user_text must be a non-empty string")
        if self.stage_tag not in STAGE_TAGS:
            raise PreconditionError(f"unknown stage tag {self.stage_tag!r}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    fingerprint: str


def canonical_request(request: ChatRequest) -> bytes:
    # stage_tag is deliberately excluded: identical prompts share one fixture.
    body = {
        "system": request.system_text,
        "user": request.user_text,
        "params": {
            "model": request.params.model_name,
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        },
    }
    return json.dumps(body, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def fingerprint(request: ChatRequest) -> str:
    return hashlib.sha256(canonical_request(request)).hexdigest()


def build_payload(request: ChatRequest) -> dict[str, Any]:
    """Body of a ``POST <base_url>/chat/completions`` call."""
    messages = []
    if request.system_text is not None:
        messages.append({"role": "system", "content": request.system_text})
    messages.append({"role": "user", "content": request.user_text})
    return {
        "model": request.params.model_name,
        "messages": messages,
        "temperature": request.params.temperature,
        "max_tokens": request.params.max_tokens,
    }


def request_from_payload(payload: Mapping[str, Any], stage_tag: str) -> ChatRequest:
    system_text = None
    user_text = ""
    for message in payload["messages"]:
        if message["role"] == "system":
            system_text = message["content"]
        elif message["role"] == "user":
            user_text = message["content"]
    params = GenerationParams(
        temperature=payload["temperature"], max_tokens=payload["max_tokens"], model_name=payload["model"]
    )
    return ChatRequest(user_text=user_text, params=params, stage_tag=stage_tag, system_text=system_text)


class Backend(ABC):
    backend_id: str = "abstract"

    @abstractmethod
    def complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


class OpenAICompatibleBackend(Backend):
    """Client for any server exposing the OpenAI ``/chat/completions`` route.

    Transport errors are retried with exponential backoff; HTTP errors are not.
    The number of concurrent in-flight requests is bounded by ``max_in_flight``.
    """

    def __init__(
        self,
        base_url: str,
        *,
        api_key: str | None = None,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float | None = None,
        retries: int = 3,
        backoff: float = 1.0,
        max_in_flight: int = 2,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not base_url:
            raise ConfigError("backend base_url is required for live mode")
        self.base_url = base_url.rstrip("/")
        self.backend_id = f"openai-compatible:{self.base_url}"
        self._api_key = api_key if api_key is not None else os.environ.get(api_key_env)
        self._retries = retries
        self._backoff = backoff
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        return headers

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = build_payload(request)
        url = f"{self.base_url}/chat/completions"
        attempt = 0
        while True:
            try:
                with self._slots:
                    response = self._client.post(url, json=payload, headers=self._headers())
                break
            except httpx.TransportError as exc:
                if attempt >= self._retries:
                    raise BackendError(
                        f"transport failure after {attempt + 1} attempts: {exc}", retryable=True
                    ) from exc
                delay = self._backoff * (2**attempt)
                logger.warning("transport error (%s), retrying in %.1fs", exc, delay)
                self._sleep(delay)
                attempt += 1

        if not 200 <= response.status_code < 300:
            raise BackendError(
                f"backend returned HTTP {response.status_code}: {response.text[:500]}",
                status=response.status_code,
            )
        try:
            text = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat-completions response: {exc}") from exc
        if not isinstance(text, str):
            raise BackendError("chat-completions response content is not a string")
        return ChatResponse(text=text, backend_id=self.backend_id, fingerprint=fingerprint(request))


class ReplayBackend(Backend):
    """Fixture store keyed by request fingerprint, one JSON file per fingerprint.

    With ``source`` set, misses are forwarded to that backend and recorded
    (record mode). Without it, a miss raises :class:`FixtureMissingError` and no
    other I/O happens.
    """

    def __init__(self, fixture_dir: str | os.PathLike[str], source: Backend | None = None):
        self.fixture_dir = Path(fixture_dir)
        self.source = source
        self.backend_id = "replay" if source is None else f"record:{source.backend_id}"
        self._lock = threading.Lock()

    def _path(self, fp: str) -> Path:
        return self.fixture_dir / f"{fp}.json"

    def lookup(self, request: ChatRequest) -> str | None:
        path = self._path(fingerprint(request))
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["response"]

    def record_fixture(self, request: ChatRequest, response_text: str) -> Path:
        fp = fingerprint(request)
        path = self._path(fp)
        with self._lock:
            if path.exists():
                existing = json.loads(path.read_text(encoding="utf-8"))["response"]
                if existing != response_text:
                    raise FixtureConflictError(f"fixture {fp} already recorded with different text")
                return path
            self.fixture_dir.mkdir(parents=True, exist_ok=True)
            record = {
                "fingerprint": fp,
                "request": json.loads(canonical_request(request)),
                "response": response_text,
            }
            data = json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
            fd, tmp = tempfile.mkstemp(dir=self.fixture_dir, prefix=".tmp-", suffix=".json")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(data)
            os.chmod(tmp, 0o644)
            os.replace(tmp, path)
        return path

    def complete(self, request: ChatRequest) -> ChatResponse:
        fp = fingerprint(request)
        text = self.lookup(request)
        if text is None:
            if self.source is None:
                raise FixtureMissingError(fp)
            text = self.source.complete(request).text
            self.record_fixture(request, text)
        return ChatResponse(text=text, backend_id=self.backend_id, fingerprint=fp)
