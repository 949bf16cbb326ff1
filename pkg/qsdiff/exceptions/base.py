"""Base exception classes and formatters for qsdiff.

This module provides the error definition value object, the base exception
every numerical failure derives from, and the formatters that turn an
exception into the dictionary written to the diagnostic stream.
"""

from abc import ABC, abstractmethod
from datetime import datetime, timezone
from typing import Any

from qsdiff.status import EXIT_INTERNAL


class ErrorFormatter(ABC):
    """Abstract base class for formatting exceptions into dictionaries."""

    @abstractmethod
    def format_error(self, exception: 'QsdError') -> dict[str, Any]:
        """Format exception into a dictionary."""


class DefaultFormatter(ErrorFormatter):
    """Default formatter: code, message, details, timestamp and exit code."""

    def format_error(self, exception: 'QsdError') -> dict[str, Any]:
        """Format a QsdError into a structured dictionary.

        Args:
            exception (QsdError): The exception instance to format.

        Returns:
            dict[str, Any]: Error details, exit code and timestamp.

        """
        return {
            'error': {
                'code': exception.error.code if exception.error else 'UNKNOWN_ERROR',
                'message': exception.message,
                'details': exception.details or {},
                'timestamp': datetime.now(tz=timezone.utc).isoformat(),
            },
            'exit_code': exception.exit_code,
        }


class SimpleFormatter(ErrorFormatter):
    """Minimal formatter returning only the error code and message."""

    def format_error(self, exception: 'QsdError') -> dict[str, Any]:
        """Format a QsdError into a code/message pair."""
        return {
            'code': exception.error.code if exception.error else 'UNKNOWN_ERROR',
            'message': exception.message,
        }


class ErrorDefinition:
    """Base error definition."""

    def __init__(self, message: str, code: str):
        """Initialize an ErrorDefinition with a message and error code.

        Args:
            message (str): The default error message.
            code (str): The error code.

        """
        self.message = message
        self.code = code


class QsdError(Exception):
    """Base class of every error raised by qsdiff."""

    exit_code: int = EXIT_INTERNAL
    _formatter: ErrorFormatter = DefaultFormatter()

    @classmethod
    def set_formatter(cls, formatter: ErrorFormatter) -> None:
        """Set the formatter used by ``to_dict`` for this class and subclasses.

        Args:
            formatter (ErrorFormatter): The formatter to use.

        """
        cls._formatter = formatter

    def __init__(
        self,
        message: str | None = None,
        error: ErrorDefinition | None = None,
        details: dict[str, Any] | None = None,
        formatter: ErrorFormatter | None = None,
    ):
        """Initialize a QsdError.

        Args:
            message (str | None): Specific message; defaults to the definition's.
            error (ErrorDefinition | None): The error definition.
            details (dict[str, Any] | None): Extra machine-readable context.
            formatter (ErrorFormatter | None): Per-instance formatter override.

        """
        self.error = error
        self.message = message or (error.message if error else 'Unknown error')
        self.details = details or {}
        self._instance_formatter = formatter
        super().__init__(self.message)

    def to_dict(self) -> dict[str, Any]:
        """Convert the exception into a structured dictionary."""
        formatter = self._instance_formatter or self._formatter
        return formatter.format_error(self)
