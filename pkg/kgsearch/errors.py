"""Exceptions raised by the search engine."""

from enum import Enum
from typing import Optional


class KGSearchError(Exception):
    """Base exception for knowledge graph search errors."""

    pass


class ContractViolation(KGSearchError):
    """Exception for violated operation preconditions."""

    pass


class GraphParseError(KGSearchError):
    """Exception for malformed graph input rows."""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where = f"{where}{line}: "
        elif where:
            where = f"{where} "
        super().__init__(f"{where}{message}")


class GraphLoadError(KGSearchError):
    """Exception for graphs that cannot be loaded."""

    pass


class EmbeddingError(KGSearchError):
    """Exception for embedding lookup and persistence errors."""

    pass


class TrainingError(KGSearchError):
    """Exception for embedding training errors."""

    pass


class LibraryParseError(KGSearchError):
    """Exception for transformation library errors."""

    pass


class QueryValidationError(KGSearchError):
    """Exception for invalid query documents and configurations."""

    pass


class UnsupportedQueryShape(QueryValidationError):
    """Exception for queries that cannot be decomposed around one pivot."""

    pass


class OracleError(KGSearchError):
    """Exception for brute-force oracles exceeding their budget."""

    pass


class EvaluationError(KGSearchError):
    """Exception for evaluation input errors."""

    pass


class FixtureError(KGSearchError):
    """Exception for fixtures whose constraints cannot be satisfied."""

    pass


class ErrorType(Enum):
    """Classification of errors for CLI exit codes."""

    VALIDATION = "validation"  # Invalid query, config or library - exit 2
    INPUT = "input"  # Unreadable or malformed input files - exit 2
    RUNTIME = "runtime"  # Everything else - exit 1


def classify_error(exception: Exception) -> ErrorType:
    """Classify an exception raised while serving a command."""
    if isinstance(exception, (QueryValidationError, LibraryParseError, ContractViolation)):
        return ErrorType.VALIDATION
    elif isinstance(
        exception,
        (GraphParseError, GraphLoadError, EmbeddingError, EvaluationError, OSError),
    ):
        return ErrorType.INPUT
    else:
        return ErrorType.RUNTIME
