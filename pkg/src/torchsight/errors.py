"""Exception hierarchy.

Everything raised on purpose derives from TorchsightError so the CLI can map
"our" failures to a clean exit without swallowing genuine bugs.
"""

from __future__ import annotations

from typing import Optional


class TorchsightError(Exception):
    """Base class for all deliberate failures."""


class TaxonomyError(TorchsightError):
    """Invalid taxonomy registry configuration."""


class LabelParseError(TorchsightError):
    """A label string failed validation against the registry."""

    def __init__(self, message: str, token: Optional[str] = None):
        super().__init__(message)
        self.token = token


class IngestError(TorchsightError):
    """A document could not be read or decoded."""


class BinaryDocumentError(IngestError):
    """The file is binary and no converter is registered for its format."""

    def __init__(self, message: str, detected_format: str = "unknown_binary"):
        super().__init__(message)
        self.detected_format = detected_format


class DiffParseError(IngestError):
    """A unified diff header could not be parsed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class PatternError(TorchsightError):
    """A detection pattern failed to compile or validate."""


class PolicyError(TorchsightError):
    """A configuration violates the local-only network policy."""


class InferenceError(TorchsightError):
    """The inference backend failed or returned an unusable response."""


class FindingsParseError(TorchsightError):
    """Model output did not contain a recoverable findings array."""

    def __init__(self, message: str, raw: Optional[str] = None):
        super().__init__(message)
        self.raw = raw


class ReportError(TorchsightError):
    """Report assembly or serialization failed."""


class DatasetError(TorchsightError):
    """A benchmark or training dataset record is malformed."""
