"""Run configuration: a JSON file validated at load, with paper defaults."""

from __future__ import annotations

import json
import os
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

from ontokg.answering import DEFAULT_DONT_KNOW_PATTERNS
from ontokg.corpus import DEFAULT_CHUNK_SIZE, DEFAULT_K, DEFAULT_OVERLAP
from ontokg.cq import DEFAULT_DOMAIN_PROMPT
from ontokg.errors import ConfigError
from ontokg.llm import GenerationParams
from ontokg.llm.backend import DEFAULT_MAX_TOKENS, DEFAULT_MODEL, DEFAULT_TEMPERATURE
from ontokg.ontology import DEFAULT_BASE_IRI, DEFAULT_BASE_PREFIX
from ontokg.prompts import PROMPT_VERSIONS

# Paths starting with this resolve inside the installed package's data directory.
PACKAGE_SCHEME = "package:"

BACKEND_KINDS = ("openai", "scripted")
BACKEND_MODES = ("live", "record", "replay")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "openai"
    mode: str = "live"
    base_url: str | None = None
    model: str = DEFAULT_MODEL
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout: float | None = None
    retries: int = 3
    context_window: int | None = None
    fixtures: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend.kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.mode not in BACKEND_MODES:
            raise ConfigError(f"backend.mode must be one of {BACKEND_MODES}, got {self.mode!r}")
        if self.mode in ("record", "replay") and not self.fixtures:
            raise ConfigError(f"backend.fixtures is required in {self.mode} mode")
        if self.kind == "openai" and self.mode != "replay" and not self.base_url:
            raise ConfigError("backend.base_url is required to reach an OpenAI-compatible server")
        if self.timeout is not None and not (isinstance(self.timeout, (int, float)) and self.timeout > 0):
            raise ConfigError(f"backend.timeout must be a positive number, got {self.timeout!r}")
        if isinstance(self.retries, bool) or not isinstance(self.retries, int) or self.retries < 0:
            raise ConfigError(f"backend.retries must be a non-negative integer, got {self.retries!r}")
        if self.context_window is not None and (
            isinstance(self.context_window, bool) or not isinstance(self.context_window, int) or self.context_window < 1
        ):
            raise ConfigError(f"backend.context_window must be a positive integer, got {self.context_window!r}")
        self.params()

    def params(self) -> GenerationParams:
        return GenerationParams(temperature=self.temperature, max_tokens=self.max_tokens, model_name=self.model)


@dataclass(frozen=True)
class PipelineConfig:
    corpus_dir: str
    backend: BackendConfig = field(default_factory=BackendConfig)
    chunk_size: int = DEFAULT_CHUNK_SIZE
    chunk_overlap: int = DEFAULT_OVERLAP
    retrieval_k: int = DEFAULT_K
    base_iri: str = DEFAULT_BASE_IRI
    base_prefix: str = DEFAULT_BASE_PREFIX
    foundation: str | None = None
    prompt_version: str = "v1"
    answer_version: str = "v1"
    concurrency: int = 2
    domain_prompt: str = DEFAULT_DOMAIN_PROMPT
    ground_truth: str | None = None
    dont_know_patterns: tuple[str, ...] = DEFAULT_DONT_KNOW_PATTERNS
    exclude_unlinked: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "dont_know_patterns", tuple(self.dont_know_patterns))
        for name in ("chunk_size", "retrieval_k", "concurrency"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.chunk_overlap, bool) or not isinstance(self.chunk_overlap, int):
            raise ConfigError(f"chunk_overlap must be an integer, got {self.chunk_overlap!r}")
        if not 0 <= self.chunk_overlap < self.chunk_size:
            raise ConfigError(f"need 0 <= chunk_overlap < chunk_size, got {self.chunk_overlap} and {self.chunk_size}")
        for name in ("prompt_version", "answer_version"):
            if getattr(self, name) not in PROMPT_VERSIONS:
                raise ConfigError(f"{name} must be one of {PROMPT_VERSIONS}, got {getattr(self, name)!r}")
        if not self.base_iri or self.base_iri[-1] not in "/#":
            raise ConfigError(f"base_iri must end in '/' or '#', got {self.base_iri!r}")
        if not self.corpus_dir:
            raise ConfigError("corpus_dir is required")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["dont_know_patterns"] = list(self.dont_know_patterns)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PipelineConfig:
        if not isinstance(data, Mapping):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        values = dict(data)
        backend = values.pop("backend", {}) or {}
        if not isinstance(backend, Mapping):
            raise ConfigError("backend must be a JSON object")
        backend_known = {f.name for f in fields(BackendConfig)}
        unknown = sorted(set(backend) - backend_known)
        if unknown:
            raise ConfigError(f"unknown backend keys: {', '.join(unknown)}")
        if "corpus_dir" not in values:
            raise ConfigError("corpus_dir is required")
        try:
            return cls(backend=BackendConfig(**backend), **values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **overrides: Any) -> PipelineConfig:
        """Apply non-``None`` overrides; keys prefixed ``backend_`` go to the backend block."""
        top = {k: v for k, v in overrides.items() if v is not None and not k.startswith("backend_")}
        backend = {k[len("backend_") :]: v for k, v in overrides.items() if v is not None and k.startswith("backend_")}
        try:
            return replace(self, backend=replace(self.backend, **backend), **top)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


PATH_FIELDS = ("corpus_dir", "foundation", "ground_truth")


def load_config(path: str | os.PathLike[str]) -> PipelineConfig:
    """Read a config file; relative paths in it are taken relative to the file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    config = PipelineConfig.from_dict(data)
    return rebase_paths(config, path.parent)


def _rebase(value: str | None, base: Path) -> str | None:
    if value is None or value.startswith(PACKAGE_SCHEME) or os.path.isabs(value):
        return value
    return os.path.normpath(base / value)


def rebase_paths(config: PipelineConfig, base: str | os.PathLike[str]) -> PipelineConfig:
    base = Path(base)
    changes = {name: _rebase(getattr(config, name), base) for name in PATH_FIELDS}
    fixtures = _rebase(config.backend.fixtures, base)
    return replace(config, backend=replace(config.backend, fixtures=fixtures), **changes)


def relativize_paths(config: PipelineConfig, root: str | os.PathLike[str]) -> PipelineConfig:
    """Rewrite paths under ``root`` relative to it, so snapshots do not depend on where the workspace lives."""
    root = Path(root).resolve()

    def rel(value: str | None) -> str | None:
        if value is None or value.startswith(PACKAGE_SCHEME):
            return value
        absolute = Path(value).resolve()
        try:
            return absolute.relative_to(root).as_posix()
        except ValueError:
            return str(absolute)

    changes = {name: rel(getattr(config, name)) for name in PATH_FIELDS}
    return replace(config, backend=replace(config.backend, fixtures=rel(config.backend.fixtures)), **changes)


def resolve_path(value: str, root: str | os.PathLike[str]) -> Path:
    if value.startswith(PACKAGE_SCHEME):
        return Path(str(resources.files("ontokg").joinpath("data", value[len(PACKAGE_SCHEME) :])))
    path = Path(value)
    return path if path.is_absolute() else Path(root) / path
