"""Standard error definitions for qsdiff."""

from .base import ErrorDefinition


class ErrorDefinitions:
    """Standard error definitions."""

    QUADRATURE_FAILURE = ErrorDefinition(
        message='Quadrature did not converge to tolerance',
        code='QUADRATURE_FAILURE',
    )
    INCONCLUSIVE_TAIL = ErrorDefinition(
        message='Improper integral could not be classified',
        code='INCONCLUSIVE_TAIL',
    )
    INTEGRATOR_FAILURE = ErrorDefinition(
        message='ODE integrator failed', code='INTEGRATOR_FAILURE'
    )
    NO_CONVERGENCE = ErrorDefinition(
        message='Eigenvalue estimate did not stabilize', code='NO_CONVERGENCE'
    )
    NOT_NORMALIZABLE = ErrorDefinition(
        message='Eigenfunction is not integrable against the speed measure',
        code='NOT_NORMALIZABLE',
    )
    PRECONDITION_VIOLATED = ErrorDefinition(
        message='Operation precondition violated', code='PRECONDITION_VIOLATED'
    )
    INSUFFICIENT_SURVIVORS = ErrorDefinition(
        message='Too few surviving paths for the estimator',
        code='INSUFFICIENT_SURVIVORS',
    )
    PARSE_ERROR = ErrorDefinition(
        message='Expression could not be parsed', code='PARSE_ERROR'
    )
    MODEL_SPEC_ERROR = ErrorDefinition(
        message='Invalid model specification', code='MODEL_SPEC_ERROR'
    )
