"""qsdiff - quasistationary behaviour of killed diffusions.

qsdiff decides whether a one-dimensional diffusion on (0, inf), killed at
rate kappa and at the boundary 0, converges to its quasistationary
distribution when conditioned on survival or escapes to infinity, and
checks the answer with a killed-path Monte Carlo.
"""

__version__ = '0.1.0'

# Model and expressions
from .config import Hints, ModelSpec, NumericsConfig, SimConfig, load_model_spec
from .expr import Expr, parse_expr
from .model import DiffusionModel, ScaleSpeedTable, build_scale_speed, classify_tail

# Boundary and spectral analysis
from .boundary import BoundaryClassification, classify_boundaries
from .spectral import (
    EigenResult,
    lambda0,
    lambda_n,
    pinsky_bounds,
    qsd_density,
    survival_asymptotic,
)

# Verdicts
from .verdict import HTransform, Outcome, TheoremTag, Verdict, decide, htransform

# Simulation
from .montecarlo import (
    SurvivorStats,
    compare_qsd,
    estimate_escape_rate,
    estimate_mortality,
    simulate,
)

# Common exceptions
from .exceptions import (
    InconclusiveTail,
    NoConvergence,
    NotNormalizable,
    ParseError,
    PreconditionViolated,
    QsdError,
)

__all__ = [
    'BoundaryClassification',
    'DiffusionModel',
    'EigenResult',
    'Expr',
    'HTransform',
    'Hints',
    'InconclusiveTail',
    'ModelSpec',
    'NoConvergence',
    'NotNormalizable',
    'NumericsConfig',
    'Outcome',
    'ParseError',
    'PreconditionViolated',
    'QsdError',
    'ScaleSpeedTable',
    'SimConfig',
    'SurvivorStats',
    'TheoremTag',
    'Verdict',
    'build_scale_speed',
    'classify_boundaries',
    'classify_tail',
    'compare_qsd',
    'decide',
    'estimate_escape_rate',
    'estimate_mortality',
    'htransform',
    'lambda0',
    'lambda_n',
    'load_model_spec',
    'parse_expr',
    'pinsky_bounds',
    'qsd_density',
    'simulate',
    'survival_asymptotic',
]
