"""Exception taxonomy shared across the package.

Every error carries a machine-readable ``code`` drawn from the published set
so the HTTP layer can map exceptions to structured error bodies without
string matching.
"""

from __future__ import annotations

from typing import Any

# Published machine codes. The HTTP facade never emits a code outside this set.
STEP_ORDER_VIOLATION = "STEP_ORDER_VIOLATION"
UNPARSEABLE = "UNPARSEABLE"
SERVICE_UNAVAILABLE = "SERVICE_UNAVAILABLE"
VALIDATION_FAILED = "VALIDATION_FAILED"
NOT_FOUND = "NOT_FOUND"
EMPTY_DOCUMENT = "EMPTY_DOCUMENT"
EMPTY_TREE = "EMPTY_TREE"

PUBLISHED_CODES = frozenset(
    {
        STEP_ORDER_VIOLATION,
        UNPARSEABLE,
        SERVICE_UNAVAILABLE,
        VALIDATION_FAILED,
        NOT_FOUND,
        EMPTY_DOCUMENT,
        EMPTY_TREE,
    }
)


class FmeaError(Exception):
    """Base class for all domain errors."""

    code: str = VALIDATION_FAILED

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ValidationFailedError(FmeaError):
    code = VALIDATION_FAILED


class NotFoundError(FmeaError):
    code = NOT_FOUND


class EmptyDocumentError(FmeaError):
    code = EMPTY_DOCUMENT


class EmptyTreeError(FmeaError):
    code = EMPTY_TREE


class StepOrderViolationError(FmeaError):
    code = STEP_ORDER_VIOLATION


class UnparseableResponseError(FmeaError):
    """Raised when no parsing rule extracts at least one item.

    Carries the raw service reply so callers can surface it to the user
    instead of guessing.
    """

    code = UNPARSEABLE

    def __init__(self, message: str, raw_response: str):
        super().__init__(message, details={"raw_response": raw_response})
        self.raw_response = raw_response


class ServiceUnavailableError(FmeaError):
    code = SERVICE_UNAVAILABLE


class TimeoutExceededError(ServiceUnavailableError):
    """Inference wall-clock budget exhausted."""


class ProviderUnavailableError(ServiceUnavailableError):
    """Embedding provider failed or cannot answer for the given input."""


class StorageUnavailableError(ServiceUnavailableError):
    """Backing store cannot be reached or written."""


class DimensionMismatchError(ValidationFailedError):
    """Vector dimension disagrees with the store or a peer vector."""


class ZeroVectorError(ValidationFailedError):
    """Cosine similarity is undefined for an all-zero vector."""


class IntegrityViolationError(ValidationFailedError):
    """Relational constraint violated while saving."""


class EmptyGoldError(ValidationFailedError):
    """Evaluation gold set is empty."""


class CaseFileInvalidError(ValidationFailedError):
    """Evaluation case file is missing, malformed, or empty."""
