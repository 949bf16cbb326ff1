"""Concrete error classes raised by the numerical modules and the parser.

Each class fixes its error definition and the exit code the command line
reports when it escapes a subcommand.
"""

from typing import Any

from qsdiff.status import EXIT_INTERNAL, EXIT_PRECONDITION, EXIT_UNDETERMINED

from .base import QsdError
from .errors import ErrorDefinitions


class QuadratureFailure(QsdError):
    """Raised when an integral of a coefficient does not converge."""

    exit_code = EXIT_PRECONDITION

    def __init__(self, message: str | None = None, **details: Any):
        """Initialize with an optional message and keyword details."""
        super().__init__(message, ErrorDefinitions.QUADRATURE_FAILURE, details)


class InconclusiveTail(QsdError):
    """Raised when a tail diagnosis is needed but came out inconclusive."""

    exit_code = EXIT_UNDETERMINED

    def __init__(self, message: str | None = None, **details: Any):
        """Initialize with an optional message and keyword details."""
        super().__init__(message, ErrorDefinitions.INCONCLUSIVE_TAIL, details)


class IntegratorFailure(QsdError):
    """Raised when the ODE step controller gives up."""

    exit_code = EXIT_INTERNAL

    def __init__(self, message: str | None = None, **details: Any):
        """Initialize with an optional message and keyword details."""
        super().__init__(message, ErrorDefinitions.INTEGRATOR_FAILURE, details)


class NoConvergence(QsdError):
    """Raised when the eigenvalue has not stabilized at the x_max cap."""

    exit_code = EXIT_UNDETERMINED

    def __init__(self, message: str | None = None, **details: Any):
        """Initialize with an optional message and keyword details."""
        super().__init__(message, ErrorDefinitions.NO_CONVERGENCE, details)


class NotNormalizable(QsdError):
    """Raised when a density is requested from a non-integrable eigenfunction."""

    exit_code = EXIT_PRECONDITION

    def __init__(self, message: str | None = None, **details: Any):
        """Initialize with an optional message and keyword details."""
        super().__init__(message, ErrorDefinitions.NOT_NORMALIZABLE, details)


class PreconditionViolated(QsdError):
    """Raised when an operation is called outside its domain."""

    exit_code = EXIT_PRECONDITION

    def __init__(self, message: str | None = None, **details: Any):
        """Initialize with an optional message and keyword details."""
        super().__init__(message, ErrorDefinitions.PRECONDITION_VIOLATED, details)


class InsufficientSurvivors(QsdError):
    """Raised when a Monte Carlo estimator has too few surviving paths."""

    exit_code = EXIT_UNDETERMINED

    def __init__(self, message: str | None = None, **details: Any):
        """Initialize with an optional message and keyword details."""
        super().__init__(message, ErrorDefinitions.INSUFFICIENT_SURVIVORS, details)


class ModelSpecError(QsdError):
    """Raised when a model file cannot be turned into a model."""

    exit_code = EXIT_PRECONDITION

    def __init__(self, message: str | None = None, **details: Any):
        """Initialize with an optional message and keyword details."""
        super().__init__(message, ErrorDefinitions.MODEL_SPEC_ERROR, details)


class ParseError(QsdError):
    """Raised by the expression parser.

    Carries the byte offset of the offending token and the set of tokens
    that would have been accepted there.
    """

    exit_code = EXIT_PRECONDITION

    def __init__(
        self, message: str, offset: int, expected: set[str] | frozenset[str]
    ):
        """Initialize with the offset and the expected-token set."""
        self.offset = offset
        self.expected = frozenset(expected)
        super().__init__(
            message,
            ErrorDefinitions.PARSE_ERROR,
            {'offset': offset, 'expected': sorted(self.expected)},
        )


class StepTooCoarseWarning(UserWarning):
    """Emitted when the time step visibly biases boundary crossings."""
