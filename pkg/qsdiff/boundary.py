"""Boundary behaviour of the diffusion at 0 and at infinity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp

from qsdiff.exceptions import InconclusiveTail, PreconditionViolated, QuadratureFailure
from qsdiff.logging import get_logger
from qsdiff.model import (
    Confidence,
    DiffusionModel,
    ScaleSpeedTable,
    TailDiagnosis,
    TailVerdict,
    build_scale_speed,
    classify_tail,
    integrate_panels,
)

logger = get_logger(__name__)

_RTOL = 1e-10
_ATOL = 1e-10


class ZeroBoundary(str, Enum):
    REGULAR = 'regular'
    NOT_REGULAR = 'not_regular'


class InfinityBoundary(str, Enum):
    """Feller classification of infinity."""

    REGULAR = 'regular'
    EXIT = 'exit'
    ENTRANCE = 'entrance'
    NATURAL = 'natural'


@dataclass(frozen=True)
class FellerIntegrals:
    """``I = int_c^inf (M(y) - M(c)) / rho(y) dy`` and ``J = int_c^inf rho(y) (S(y) - S(c)) dy``."""

    accessibility: TailDiagnosis
    entrance: TailDiagnosis


@dataclass(frozen=True)
class BoundaryClassification:
    at_zero: ZeroBoundary
    at_infinity: InfinityBoundary
    accessible_at_infinity: bool
    recurrent_unkilled: bool
    integrals: FellerIntegrals
    scale_tail: TailDiagnosis
    speed_tail: TailDiagnosis


def check_regular_zero(model: DiffusionModel, epsilon: float = 1.0) -> bool:
    """Return whether 0 is a regular boundary.

    With the unit diffusion coefficient this holds exactly when the drift is
    integrable near 0; ``rho`` and ``1/rho`` are then bounded there.
    """
    try:
        value = integrate_panels(
            model.b,
            0.0,
            epsilon,
            tol=model.numerics.quad_tol,
            max_subdivisions=model.numerics.max_subdivisions,
        )
    except QuadratureFailure as exc:
        logger.info('drift is not integrable near 0', extra={'details': exc.details})
        return False
    return bool(np.all(np.isfinite(value)))


def _implied(verdict: TailVerdict, source: TailDiagnosis) -> TailDiagnosis:
    return TailDiagnosis(verdict, confidence=source.confidence)


class TailRatio:
    """``z -> log (int_z^inf g) / g(z)`` for ``g = rho`` or ``g = 1/rho``.

    The tail of ``g`` must be finite. The logarithm ``w`` of the ratio solves
    ``w' = -exp(-w) - 2 s b`` with ``s = +1`` for ``rho`` (``'speed'``) and
    ``s = -1`` for ``1/rho`` (``'scale'``). Integrated toward 0 the equation
    forgets its end value as fast as the tail of ``g`` decays. Up to the end
    of the table the end value is the tabulated tail; further out the
    integration starts at twice the largest abscissa from ``1 / (2 |b|)``.
    """

    def __init__(self, table: ScaleSpeedTable, which: str, start: float):
        beyond = table.log_speed_beyond if which == 'speed' else table.log_scale_beyond
        if beyond is None:
            raise PreconditionViolated(f'TailRatio needs a finite {which} tail')
        self._b = table.model.b
        self._sign = 1.0 if which == 'speed' else -1.0
        self._x_max = table.x_max
        self._w_end = beyond - self._sign * float(table.log_rho[-1])
        self._start = min(start, 0.5 * self._x_max)
        self._inside = None

    def _rhs(self, x: float, w: np.ndarray) -> list[float]:
        return [-math.exp(min(-w[0], 700.0)) - 2.0 * self._sign * float(self._b(x))]

    def _solve(self, lo: float, hi: float, w_hi: float):
        with np.errstate(all='ignore'):
            sol = solve_ivp(
                self._rhs,
                (hi, lo),
                [w_hi],
                method='LSODA',
                rtol=_RTOL,
                atol=_ATOL,
                dense_output=True,
            )
        if sol.status != 0:
            raise QuadratureFailure(
                f'Tail ratio integration failed: {sol.message}', interval=[lo, hi]
            )
        return sol.sol

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, float)
        out = np.empty(z.shape)
        inside = z <= self._x_max
        if inside.any():
            if self._inside is None:
                self._inside = self._solve(self._start, self._x_max, self._w_end)
            out[inside] = self._inside(z[inside])[0]
        if not inside.all():
            far = z[~inside]
            top = 2.0 * float(far.max())
            slope = max(-2.0 * self._sign * float(self._b(top)), 1.0 / top)
            out[~inside] = self._solve(float(far.min()), top, -math.log(slope))(far)[0]
        return out


def feller_integrals(table: ScaleSpeedTable, c: float = 1.0) -> FellerIntegrals:
    """Diagnose the two Feller integrals from ``c``.

    An infinite scale forces ``I = inf`` and an infinite speed forces
    ``J = inf``; both tails finite make both integrals finite. Otherwise the
    order of integration is swapped, ``I = int_c^inf rho(z) int_z^inf 1/rho``
    and ``J = int_c^inf (1/rho(z)) int_z^inf rho``, and the outer integral is
    diagnosed in log space. A tail that is itself inconclusive falls back to
    the cumulative primitive from ``c``.
    """
    numerics = table.model.numerics
    scale, speed = table.scale_tail, table.speed_tail
    log_rho = table.log_rho_fn

    def numeric(log_integrand) -> TailDiagnosis:
        try:
            return classify_tail(
                log_integrand,
                c,
                log_space=True,
                rel_tol=numerics.feller_rel_tol,
                numerics=numerics,
            )
        except QuadratureFailure as exc:
            logger.info('Feller integral left open', extra={'details': exc.details})
            return TailDiagnosis(TailVerdict.INCONCLUSIVE)

    if scale.is_infinite:
        accessibility = _implied(TailVerdict.INFINITE, scale)
    elif scale.is_finite and speed.is_finite:
        accessibility = _implied(TailVerdict.FINITE, scale)
    elif scale.is_finite:
        accessibility = numeric(TailRatio(table, 'scale', c))
    else:
        log_speed_c = table.log_speed_from(c)
        accessibility = numeric(
            lambda y: log_speed_c(y) - np.asarray(log_rho(y))
        )

    if speed.is_infinite:
        entrance = _implied(TailVerdict.INFINITE, speed)
    elif scale.is_finite and speed.is_finite:
        entrance = _implied(TailVerdict.FINITE, speed)
    elif speed.is_finite:
        entrance = numeric(TailRatio(table, 'speed', c))
    else:
        log_scale_c = table.log_scale_from(c)
        entrance = numeric(lambda y: log_scale_c(y) + np.asarray(log_rho(y)))
    return FellerIntegrals(accessibility, entrance)


def classify_infinity(
    table: ScaleSpeedTable, integrals: FellerIntegrals | None = None
) -> InfinityBoundary:
    """Classify infinity as regular, exit, entrance or natural.

    Raises:
        InconclusiveTail: when either Feller integral cannot be resolved.

    """
    integrals = integrals or feller_integrals(table)
    i_diag, j_diag = integrals.accessibility, integrals.entrance
    for name, diag in (('I', i_diag), ('J', j_diag)):
        if not diag.is_resolved:
            raise InconclusiveTail(
                f'Feller integral {name} at infinity is inconclusive',
                integral=name,
                cutoffs=list(diag.cutoffs_used),
            )
    if i_diag.is_finite:
        return InfinityBoundary.REGULAR if j_diag.is_finite else InfinityBoundary.EXIT
    return InfinityBoundary.ENTRANCE if j_diag.is_finite else InfinityBoundary.NATURAL


def is_recurrent(table: ScaleSpeedTable) -> bool:
    """The unkilled process is recurrent exactly when ``S(inf) = inf``.

    Raises:
        InconclusiveTail: when the scale tail is unresolved.

    """
    if not table.scale_tail.is_resolved:
        raise InconclusiveTail(
            'Scale tail is inconclusive',
            cutoffs=list(table.scale_tail.cutoffs_used),
        )
    return table.scale_tail.is_infinite


def classify_boundaries(
    model: DiffusionModel, table: ScaleSpeedTable | None = None
) -> BoundaryClassification:
    """Classify both boundaries and the recurrence of the unkilled process."""
    at_zero = (
        ZeroBoundary.REGULAR if check_regular_zero(model) else ZeroBoundary.NOT_REGULAR
    )
    table = table or build_scale_speed(model)
    integrals = feller_integrals(table)
    at_infinity = classify_infinity(table, integrals)
    result = BoundaryClassification(
        at_zero=at_zero,
        at_infinity=at_infinity,
        accessible_at_infinity=at_infinity
        in (InfinityBoundary.REGULAR, InfinityBoundary.EXIT),
        recurrent_unkilled=is_recurrent(table),
        integrals=integrals,
        scale_tail=table.scale_tail,
        speed_tail=table.speed_tail,
    )
    logger.info(
        'boundaries classified',
        extra={
            'at_zero': at_zero.value,
            'at_infinity': at_infinity.value,
            'recurrent': result.recurrent_unkilled,
            'declared': Confidence.DECLARED
            in (table.scale_tail.confidence, table.speed_tail.confidence),
        },
    )
    return result
