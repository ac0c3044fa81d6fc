"""Exception hierarchy shared by all pipeline stages.

Each top-level category carries the process exit code the CLI uses for it.
"""

from __future__ import annotations


class OntoKGError(Exception):
    exit_code = 1


class ConfigError(OntoKGError, ValueError):
    exit_code = 7


class PreconditionError(OntoKGError, ValueError):
    exit_code = 1


class OrderingError(OntoKGError):
    """A stage was invoked before the stages it depends on finished."""

    exit_code = 3


class CheckpointError(OntoKGError):
    """A human-in-the-loop artifact (CQ review or ground truth) is missing."""

    exit_code = 4


class BackendError(OntoKGError):
    exit_code = 5

    def __init__(self, message: str, *, status: int | None = None, retryable: bool = False):
        super().__init__(message)
        self.status = status
        self.retryable = retryable


class ParseError(OntoKGError, ValueError):
    """Model output or a human-edited file could not be parsed."""

    exit_code = 6

    def __init__(self, message: str, *, raw: str | None = None):
        super().__init__(message)
        self.raw = raw
