import re
from typing import Any, Dict, Optional


class CaptionEngineError(Exception):
    """
    Base class for every error raised by the caption engine.

    :param message: Human readable description of what went wrong.
    """

    def __init__(self, message: str = "An error occurred"):
        super().__init__(message)
        self.message = message

    @property
    def error_code(self) -> str:
        """Upper snake-case code derived from the class name, e.g. SHAPE_ERROR."""
        return re.sub(r"(?<!^)(?=[A-Z])", "_", self.__class__.__name__).upper()

    def to_dict(self) -> Dict[str, Any]:
        """Standardized error structure used in manifests and log lines."""
        return {
            "success": False,
            "message": self.message,
            "error_code": self.error_code,
        }


class InvalidInputError(CaptionEngineError):
    """Input values violate a precondition (non-finite, empty, unnormalized)."""


class ShapeError(CaptionEngineError):
    """Array dimensions do not agree."""


class InvalidConfigError(CaptionEngineError):
    """A configuration value is out of range."""


class InvalidTokenError(CaptionEngineError):
    """A token id or surface form is not in the vocabulary."""


class MalformedSequenceError(CaptionEngineError):
    """A token sequence is missing its START/STOP framing."""


class InconsistentTraceError(CaptionEngineError):
    """A forward trace does not belong to the tokens it is used with."""


class DivergenceError(CaptionEngineError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: Optional[str] = None):
        super().__init__(message or f"Training diverged at epoch {epoch}")
        self.epoch = epoch

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["epoch"] = self.epoch
        return data


class ParseError(CaptionEngineError):
    """A line of an input file could not be parsed."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SchemaError(CaptionEngineError):
    """A parsed record does not satisfy the dataset schema."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class DegenerateEmbeddingError(CaptionEngineError):
    """An embedding column has zero norm, so cosine similarity is undefined."""

    def __init__(self, token: str):
        super().__init__(f"Embedding of token {token!r} has zero norm")
        self.token = token


class CheckpointError(CaptionEngineError):
    """A checkpoint file is unreadable or was trained against another vocabulary."""


class UsageError(CaptionEngineError):
    """Command-line arguments are invalid."""
