from __future__ import annotations

from pathlib import Path

from ontokg.corpus import count_tokens
from ontokg.errors import PreconditionError
from ontokg.llm import Backend, ChatRequest, ChatResponse, OpenAICompatibleBackend, ReplayBackend
from ontokg.llm.scripted import ScriptedBackend
from ontokg.pipeline.config import BackendConfig, resolve_path


class ContextWindowGuard(Backend):
    """Refuses prompts longer than the model's context window (whitespace tokens)."""

    def __init__(self, inner: Backend, context_window: int):
        self.inner = inner
        self.context_window = context_window
        self.backend_id = inner.backend_id

    def complete(self, request: ChatRequest) -> ChatResponse:
        size = count_tokens(request.user_text) + count_tokens(request.system_text or "")
        if size > self.context_window:
            raise PreconditionError(
                f"{request.stage_tag} prompt has {size} tokens, more than the context window of {self.context_window}"
            )
        return self.inner.complete(request)


def make_backend(config: BackendConfig, root: str | Path, max_in_flight: int = 2) -> Backend:
    if config.kind == "scripted":
        live: Backend | None = ScriptedBackend()
    elif config.mode == "replay":
        live = None
    else:
        live = OpenAICompatibleBackend(
            config.base_url,
            api_key_env=config.api_key_env,
            timeout=config.timeout,
            retries=config.retries,
            max_in_flight=max_in_flight,
        )
    if config.mode == "live":
        backend = live
    else:
        fixtures = resolve_path(config.fixtures, root)
        backend = ReplayBackend(fixtures, source=live if config.mode == "record" else None)
    if config.context_window is not None:
        backend = ContextWindowGuard(backend, config.context_window)
    return backend
