"""qsdiff exceptions package.

This package provides the error definitions, the exception hierarchy and the
formatters used to report failures of the numerical modules and the CLI.
"""

from .base import (
    DefaultFormatter,
    ErrorDefinition,
    ErrorFormatter,
    QsdError,
    SimpleFormatter,
)
from .errors import ErrorDefinitions
from .numerical import (
    InconclusiveTail,
    InsufficientSurvivors,
    IntegratorFailure,
    ModelSpecError,
    NoConvergence,
    NotNormalizable,
    ParseError,
    PreconditionViolated,
    QuadratureFailure,
    StepTooCoarseWarning,
)

__all__ = [
    'DefaultFormatter',
    'ErrorDefinition',
    'ErrorDefinitions',
    'ErrorFormatter',
    'InconclusiveTail',
    'InsufficientSurvivors',
    'IntegratorFailure',
    'ModelSpecError',
    'NoConvergence',
    'NotNormalizable',
    'ParseError',
    'PreconditionViolated',
    'QsdError',
    'QuadratureFailure',
    'SimpleFormatter',
    'StepTooCoarseWarning',
]
