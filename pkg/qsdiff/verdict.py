"""Quasilimiting verdicts and the h-transform.

``decide`` walks the classification: an entrance boundary at infinity or a
killing rate that stays above the bottom of the spectrum gives convergence
to the quasistationary distribution; a killing rate with a limit below the
bottom of the spectrum gives convergence when the unkilled process is
recurrent and escape to infinity when it is transient. Everything else is
reported as undetermined with the reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from qsdiff.boundary import (
    BoundaryClassification,
    InfinityBoundary,
    check_regular_zero,
    classify_boundaries,
)
from qsdiff.config import Hints
from qsdiff.exceptions import (
    InconclusiveTail,
    NoConvergence,
    NotNormalizable,
    PreconditionViolated,
)
from qsdiff.expr import constant_expr
from qsdiff.logging import get_logger
from qsdiff.model import (
    DiffusionModel,
    KappaLimits,
    SampledFunction,
    TabulatedCoefficient,
    build_scale_speed,
    tail_kappa_limits,
)
from qsdiff.spectral import EigenResult, lambda0, qsd_density, zero_kappa_eigenfunction
from qsdiff.status import EXIT_OK, EXIT_UNDETERMINED

logger = get_logger(__name__)

_CONSTANT_RTOL = 1e-9
H_TRANSFORM_X_MAX = 40.0


class Outcome(str, Enum):
    CONVERGES = 'converges'
    ESCAPES = 'escapes'
    UNDETERMINED = 'undetermined'


class TheoremTag(str, Enum):
    """Which criterion produced the verdict."""

    HIGH_KILLING = 'HighKilling'
    RECURRENT_LOW_KILLING = 'RecurrentLowKilling'
    TRANSIENT_LOW_KILLING = 'TransientLowKilling'
    ENTRANCE_BOUNDARY = 'EntranceBoundary'
    ZERO_KAPPA_COROLLARY = 'ZeroKappaCorollary'
    NONE = 'None'


@dataclass(frozen=True)
class Evidence:
    lambda0: float | None
    kappa_liminf: float
    kappa_limsup: float
    kappa_limit_exists: bool
    boundary: BoundaryClassification | None
    theorem_applied: TheoremTag = TheoremTag.NONE


@dataclass(frozen=True, eq=False)
class Verdict:
    """Convergence to the quasistationary distribution, escape, or undetermined.

    Converges carries ``qsd`` and ``mortality_rate = lambda0``; Escapes
    carries ``mortality_rate = K`` and ``escape_rate = lambda0 - K``;
    Undetermined carries ``reason``.
    """

    outcome: Outcome
    evidence: Evidence
    qsd: SampledFunction | None = None
    mortality_rate: float | None = None
    escape_rate: float | None = None
    reason: str | None = None
    notes: tuple[str, ...] = ()
    eigen: EigenResult | None = field(default=None, repr=False)

    @property
    def exit_code(self) -> int:
        return EXIT_UNDETERMINED if self.outcome is Outcome.UNDETERMINED else EXIT_OK


def _clearly_above(a: float, b: float, margin: float, tol: float) -> bool:
    """``a > b`` with a relative margin; infinite ``a`` beats any finite ``b``."""
    if math.isinf(a) or math.isinf(b):
        return a > b
    return a - b > margin * max(abs(a), abs(b)) + tol


class _Decision:
    """State shared by the steps of ``decide``."""

    def __init__(self, model: DiffusionModel):
        self.model = model
        self.notes: list[str] = []
        self.boundary: BoundaryClassification | None = None
        self.limits: KappaLimits = tail_kappa_limits(model)
        self.eigen: EigenResult | None = None

    def evidence(self, tag: TheoremTag = TheoremTag.NONE) -> Evidence:
        return Evidence(
            lambda0=self.eigen.lambda0 if self.eigen else None,
            kappa_liminf=self.limits.liminf_est,
            kappa_limsup=self.limits.limsup_est,
            kappa_limit_exists=self.limits.limit_exists,
            boundary=self.boundary,
            theorem_applied=tag,
        )

    def undetermined(self, reason: str) -> Verdict:
        return Verdict(
            Outcome.UNDETERMINED,
            self.evidence(),
            reason=reason,
            notes=tuple(self.notes),
            eigen=self.eigen,
        )

    def converges(self, tag: TheoremTag) -> Verdict:
        assert self.eigen is not None
        try:
            qsd = qsd_density(self.eigen)
        except NotNormalizable as exc:
            return self.undetermined(
                f'{tag.value} applies but the eigenfunction could not be shown '
                f'integrable ({exc.message})'
            )
        return Verdict(
            Outcome.CONVERGES,
            self.evidence(tag),
            qsd=qsd,
            mortality_rate=self.eigen.lambda0,
            notes=tuple(self.notes),
            eigen=self.eigen,
        )

    def escapes(self, tag: TheoremTag, limit: float) -> Verdict:
        assert self.eigen is not None
        return Verdict(
            Outcome.ESCAPES,
            self.evidence(tag),
            mortality_rate=limit,
            escape_rate=max(self.eigen.lambda0 - limit, 0.0),
            notes=tuple(self.notes),
            eigen=self.eigen,
        )


def decide(model: DiffusionModel) -> Verdict:
    """Classify the long-time behaviour of the conditioned process.

    Raises:
        PreconditionViolated: if 0 is not a regular boundary.

    """
    if not check_regular_zero(model):
        raise PreconditionViolated(
            '0 is not a regular boundary: the drift is not integrable there'
        )
    state = _Decision(model)
    cfg = model.numerics

    if model.killing_is_zero and model.alpha == 0:
        return _logged(state.undetermined('no killing mechanism'))

    try:
        table = build_scale_speed(model)
        state.boundary = classify_boundaries(model, table)
    except InconclusiveTail as exc:
        state.notes.append(f'boundary classification: {exc.message}')

    try:
        state.eigen = lambda0(model)
    except NoConvergence as exc:
        return _logged(state.undetermined(f'bottom of the spectrum: {exc.message}'))

    boundary = state.boundary
    if boundary is not None and boundary.at_infinity is InfinityBoundary.ENTRANCE:
        return _logged(state.converges(TheoremTag.ENTRANCE_BOUNDARY))

    lam = state.eigen.lambda0
    limits = state.limits
    if _clearly_above(limits.liminf_est, lam, cfg.margin, cfg.tol):
        if not limits.limit_exists and math.isfinite(limits.limsup_est):
            state.notes.append(
                'killing rate has no limit at infinity; the mortality rate is '
                'reported as lambda0, the formula for K assumes an existing limit'
            )
        return _logged(state.converges(TheoremTag.HIGH_KILLING))

    if limits.limit_exists and _clearly_above(lam, limits.limsup_est, cfg.margin, cfg.tol):
        if boundary is None:
            return _logged(state.undetermined('tail diagnosis inconclusive'))
        if boundary.recurrent_unkilled:
            return _logged(state.converges(TheoremTag.RECURRENT_LOW_KILLING))
        return _logged(
            state.escapes(TheoremTag.TRANSIENT_LOW_KILLING, float(limits.limit))
        )

    if model.killing_is_zero and boundary is not None and boundary.recurrent_unkilled:
        if lam > cfg.tol:
            return _logged(state.converges(TheoremTag.ZERO_KAPPA_COROLLARY))
        positive = zero_kappa_eigenfunction(table, model.alpha)
        if np.all(np.isfinite(positive.log_values[1:])):
            state.notes.append('lambda = 0 admits a positive solution')
        return _logged(state.escapes(TheoremTag.ZERO_KAPPA_COROLLARY, 0.0))

    if boundary is None:
        return _logged(state.undetermined('tail diagnosis inconclusive'))
    if limits.limit_exists:
        return _logged(
            state.undetermined(
                'K = lambda0 within tolerance; this case is open'
            )
        )
    return _logged(
        state.undetermined(
            'killing limit does not exist and neither strict inequality holds'
        )
    )


def _logged(verdict: Verdict) -> Verdict:
    logger.info(
        'verdict reached',
        extra={
            'outcome': verdict.outcome.value,
            'theorem': verdict.evidence.theorem_applied.value,
            'lambda0': verdict.evidence.lambda0,
            'reason': verdict.reason,
        },
    )
    return verdict


@dataclass(frozen=True)
class HTransform:
    """An h-transformed model; ``trivial`` means the input was recurrent and is returned as is."""

    model: DiffusionModel
    trivial: bool = False


def htransform(model: DiffusionModel, *, strict: bool = True) -> HTransform:
    """Condition a transient unkilled process on hitting 0.

    The new drift is ``b - 1 / (rho(x) (S(inf) - S(x)))``. It is tabulated
    on a grid and collapses to a constant expression when constant.

    Raises:
        PreconditionViolated: unless ``kappa = 0`` and 0 absorbs; and, when
            ``strict``, if the process is recurrent.
        InconclusiveTail: when the scale tail is unresolved.

    """
    if not model.killing_is_zero:
        raise PreconditionViolated('the h-transform needs kappa = 0')
    if not math.isinf(model.alpha):
        raise PreconditionViolated('the h-transform needs an absorbing boundary at 0')
    table = build_scale_speed(model, max(H_TRANSFORM_X_MAX, model.numerics.table_x_max))
    if not table.scale_tail.is_resolved:
        raise InconclusiveTail('scale tail is inconclusive')
    if table.scale_tail.is_infinite:
        if strict:
            raise PreconditionViolated(
                'the process is recurrent: absorption is certain and h = 1'
            )
        logger.warning('h-transform of a recurrent process is the identity')
        return HTransform(model, trivial=True)

    grid = table.grid
    log_rest = table.log_tail_from_grid('scale')
    with np.errstate(over='ignore'):
        correction = np.exp(-table.log_rho - log_rest)
    drift = np.asarray(model.b(grid), float) - correction

    # constancy is judged on the left half, away from the extrapolated tail
    checked = drift[grid <= 0.5 * table.x_max]
    mean = float(checked.mean())
    if np.max(np.abs(checked - mean)) <= _CONSTANT_RTOL * max(1.0, abs(mean)):
        new_drift = constant_expr(float(f'{mean:.12g}'))
    else:
        new_drift = TabulatedCoefficient(grid, drift)
    transformed = replace(
        model,
        drift=new_drift,
        hints=Hints(kappa_limit=model.hints.kappa_limit),
    )
    logger.info(
        'h-transform computed',
        extra={'tabulated': isinstance(new_drift, TabulatedCoefficient)},
    )
    return HTransform(transformed)
