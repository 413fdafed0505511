"""Exception types raised by the casesim package."""
from __future__ import annotations

from typing import Optional


class CaseSimError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(CaseSimError, ValueError):
    pass


class CorpusError(CaseSimError, ValueError):
    """Malformed corpus input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GraphError(CaseSimError, ValueError):
    pass


class UnknownNodeError(GraphError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown node"


class WalkError(CaseSimError, ValueError):
    pass


class EmbeddingError(CaseSimError, ValueError):
    pass


class MissingIdError(EmbeddingError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing id"


class FusionError(CaseSimError, ValueError):
    pass


class EvaluationError(CaseSimError, ValueError):
    pass


class PipelineError(CaseSimError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
