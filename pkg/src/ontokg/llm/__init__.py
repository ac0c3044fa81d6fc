from ontokg.llm.backend import (
    Backend,
    ChatRequest,
    ChatResponse,
    FixtureConflictError,
    FixtureMissingError,
    GenerationParams,
    OpenAICompatibleBackend,
    ReplayBackend,
    build_payload,
    default_params,
    fingerprint,
)

__all__ = [
    "Backend",
    "ChatRequest",
    "ChatResponse",
    "FixtureConflictError",
    "FixtureMissingError",
    "GenerationParams",
    "OpenAICompatibleBackend",
    "ReplayBackend",
    "build_payload",
    "default_params",
    "fingerprint",
]
