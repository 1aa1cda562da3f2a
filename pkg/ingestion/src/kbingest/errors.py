"""Pipeline error types."""
from __future__ import annotations


class IngestError(Exception):
    """Base class for ingestion pipeline errors."""


class BackendUnavailable(IngestError):
    pass


class BackendTimeout(IngestError):
    pass


class UnparseableResponse(IngestError):
    """Raised when a model response cannot be parsed; carries the raw text."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class EmptyCaption(IngestError):
    pass


class GenerationFailure(IngestError):
    pass


class DimensionDrift(IngestError):
    pass
