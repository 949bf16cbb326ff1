"""Bottom of the spectrum, eigenfunctions and related bounds.

Eigenvalues come from the oscillation characterization: ``phi(lambda, .)``
has a zero in ``(0, x_max]`` exactly when ``lambda`` lies above the bottom
of the spectrum of the problem truncated at ``x_max``. The eigen ODE

    phi'' = -2 b phi' + 2 (kappa - lambda) phi

is integrated in phase/radius form, ``phi = r sin(theta)`` and
``phi' = r cos(theta)``, so zeros are the crossings of ``theta`` through
multiples of pi and the amplitude is carried as ``log r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from qsdiff.exceptions import (
    IntegratorFailure,
    NoConvergence,
    NotNormalizable,
    PreconditionViolated,
)
from qsdiff.expr import ExpressionDomainError
from qsdiff.logging import get_logger
from qsdiff.model import (
    DiffusionModel,
    SampledFunction,
    ScaleSpeedTable,
    TailDiagnosis,
    classify_tail,
    graded_grid,
    log_integrate_panels,
    log_rho_primitive,
)

logger = get_logger(__name__)

_RTOL = 1e-10
_ATOL = 1e-10
# Largest log-gap between phi at the two bracket ends still trusted.
_RELIABLE_LOG_GAP = 1e-3
# Masses are diagnosed on at least [0, MASS_HORIZON].
MASS_HORIZON = 160.0
_BRACKET_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class PhiSolution:
    """Prüfer solution of the eigen ODE at one ``lambda``."""

    lam: float
    x_end: float
    zero_count: int
    first_zero: float | None
    grid: np.ndarray
    theta: np.ndarray
    log_r: np.ndarray

    @property
    def log_scale(self) -> float:
        return float(self.log_r.max()) if self.log_r.size else 0.0

    def scaled_values(self) -> np.ndarray:
        """``phi`` on the grid divided by ``exp(log_scale)``."""
        return np.sin(self.theta) * np.exp(self.log_r - self.log_scale)

    @property
    def log_phi(self) -> np.ndarray:
        """``log phi`` where ``phi`` is still positive (before its first zero), else -inf."""
        with np.errstate(divide='ignore', invalid='ignore'):
            positive = (self.theta > 0) & (self.theta < math.pi)
            return np.where(positive, self.log_r + np.log(np.sin(self.theta)), -np.inf)


def _prufer_rhs(model: DiffusionModel, lam: float):
    drift, killing = model.b, model.kappa

    def rhs(x: float, y: np.ndarray) -> list[float]:
        s, c = math.sin(y[0]), math.cos(y[0])
        b = float(drift(x))
        q = 2.0 * (float(killing(x)) - lam)
        return [c * c + 2.0 * b * s * c - q * s * s, (1.0 + q) * s * c - 2.0 * b * c * c]

    return rhs


def _initial_state(model: DiffusionModel) -> list[float]:
    phi0, dphi0 = model.initial_condition
    return [math.atan2(phi0, dphi0), 0.5 * math.log(phi0 * phi0 + dphi0 * dphi0)]


def _crossing(level: float, terminal: bool):
    def event(x: float, y: np.ndarray) -> float:
        return y[0] - level

    event.terminal = terminal
    event.direction = 1.0
    return event


def solve_phi(
    model: DiffusionModel,
    lam: float,
    x_max: float,
    *,
    grid: np.ndarray | None = None,
    stop_after: int | None = None,
) -> PhiSolution:
    """Integrate the eigen ODE at ``lam`` on ``[0, x_max]``.

    Args:
        model: The diffusion.
        lam: Spectral parameter.
        x_max: Right end of the integration.
        grid: Abscissae to sample ``theta`` and ``log r`` at.
        stop_after: Stop once ``phi`` has more than this many zeros.

    Raises:
        PreconditionViolated: if ``x_max <= 0``.
        IntegratorFailure: if the step controller gives up.

    """
    if not x_max > 0:
        raise PreconditionViolated('solve_phi needs x_max > 0', x_max=x_max)
    events = [_crossing(math.pi, terminal=False)]
    if stop_after is not None:
        events.append(_crossing((stop_after + 1) * math.pi, terminal=True))
    try:
        with np.errstate(all='ignore'):
            sol = solve_ivp(
                _prufer_rhs(model, lam),
                (0.0, x_max),
                _initial_state(model),
                method='LSODA',
                rtol=_RTOL,
                atol=_ATOL,
                events=events,
                dense_output=grid is not None,
                max_step=max(1.0, x_max / 64.0),
            )
    except ExpressionDomainError as exc:
        raise IntegratorFailure(str(exc), lam=lam, x_max=x_max) from exc
    if sol.status == -1 or not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegratorFailure(
            f'Eigen ODE integration failed: {sol.message}', lam=lam, x_max=x_max
        )

    theta_end = float(sol.y[0, -1])
    zero_count = int(max(theta_end, 0.0) // math.pi)
    if sol.status == 1 and stop_after is not None:
        zero_count = max(zero_count, stop_after + 1)
    first = sol.t_events[0]
    first_zero = float(first[0]) if first.size else None

    if grid is not None:
        sample_at = grid[grid <= sol.t[-1]]
        values = sol.sol(sample_at)
        theta, log_r = values[0], values[1]
    else:
        sample_at, theta, log_r = sol.t, sol.y[0], sol.y[1]
    return PhiSolution(
        lam=lam,
        x_end=float(sol.t[-1]),
        zero_count=zero_count,
        first_zero=first_zero,
        grid=sample_at,
        theta=theta,
        log_r=log_r,
    )


def _has_more_zeros(model: DiffusionModel, lam: float, n: int, x_max: float) -> bool:
    return solve_phi(model, lam, x_max, stop_after=n).zero_count > n


def _bisect(
    model: DiffusionModel, n: int, x_max: float, low: float, high: float, tol: float
) -> tuple[float, float]:
    while high - low > tol:
        mid = 0.5 * (low + high)
        if _has_more_zeros(model, mid, n, x_max):
            high = mid
        else:
            low = mid
    return low, high


def _initial_high(model: DiffusionModel, n: int, x_max: float) -> float:
    start = np.asarray(model.kappa(np.array([0.0, 1e-6])), float)
    high = max(1.0, float(start.max()))
    while not _has_more_zeros(model, high, n, x_max):
        high *= 2.0
        if high > _BRACKET_LIMIT:
            raise NoConvergence(
                'No zero of the eigenfunction found for any lambda', n=n, x_max=x_max
            )
    return high


@dataclass(frozen=True)
class Bisection:
    """Outcome of the eigenvalue search over the ``x_max`` schedule.

    When the estimates approach their limit geometrically, ``estimate`` is the
    extrapolated limit and ``bracket`` its uncertainty.
    """

    estimate: float
    bracket: tuple[float, float]
    x_max_used: float
    schedule: tuple[tuple[float, float], ...]


def eigenvalue_search(model: DiffusionModel, n: int, tol: float | None) -> Bisection:
    """Bisect the ``n``-th eigenvalue over the doubling ``x_max`` schedule.

    A level is final when it moved the estimate by at most ``10 tol``, when
    the geometric remainder of the steps is that small, or when two
    consecutive geometric extrapolations agree to ``10 tol``.
    """
    cfg = model.numerics
    tol = cfg.tol if tol is None else tol
    if not tol > 0:
        raise PreconditionViolated('eigenvalue tolerance must be > 0', tol=tol)
    if n < 0:
        raise PreconditionViolated('eigenvalue index must be >= 0', n=n)

    x_max = cfg.x_max_start
    high = _initial_high(model, n, x_max)
    low = 0.0
    schedule: list[tuple[float, float]] = []
    last_step: float | None = None
    extrapolated: float | None = None
    while True:
        if schedule:
            previous = schedule[-1][1]
            margin = 4.0 * max(last_step if last_step is not None else 0.25 * previous, tol)
            candidate = max(0.0, high - margin)
            low = 0.0 if _has_more_zeros(model, candidate, n, x_max) else candidate
        low, high = _bisect(model, n, x_max, low, high, tol)
        estimate = 0.5 * (low + high)
        schedule.append((x_max, estimate))
        logger.debug(
            'eigenvalue level',
            extra={'n': n, 'x_max': x_max, 'estimate': estimate},
        )

        if len(schedule) >= 2:
            step = abs(schedule[-2][1] - estimate)
            converged = step <= 10.0 * tol
            if not converged and last_step:
                ratio = step / last_step
                if ratio <= cfg.tail_finite_ratio:
                    remainder = step * ratio / (1.0 - ratio)
                    converged = remainder <= 10.0 * tol
                    limit = estimate - remainder
                    if (
                        not converged
                        and extrapolated is not None
                        and abs(limit - extrapolated) <= 10.0 * tol
                    ):
                        width = max(tol, abs(limit - extrapolated))
                        logger.debug(
                            'eigenvalue extrapolated',
                            extra={'n': n, 'x_max': x_max, 'limit': limit},
                        )
                        return Bisection(
                            limit, (limit - width, limit + width), x_max, tuple(schedule)
                        )
                    extrapolated = limit
                else:
                    extrapolated = None
            last_step = step
            if converged:
                return Bisection(estimate, (low, high), x_max, tuple(schedule))
        if 2.0 * x_max > cfg.x_max_cap * (1 + 1e-12):
            raise NoConvergence(
                'Eigenvalue estimate did not stabilize before the x_max cap',
                n=n,
                schedule=[list(item) for item in schedule],
            )
        x_max *= 2.0


def lambda_n(model: DiffusionModel, n: int, tol: float | None = None) -> float:
    """Return the ``n``-th eigenvalue, the threshold where ``phi`` gains its ``n+1``-th zero.

    Raises:
        NoConvergence: if the estimate does not settle before ``x_max_cap``.

    """
    return eigenvalue_search(model, n, tol).estimate


@dataclass(frozen=True, eq=False)
class EigenResult:
    """Bottom of the spectrum with its eigenfunction and masses.

    ``phi`` is kept in log form on a grid that may extend past ``x_max_used``
    through the decaying branch of the Riccati equation for ``phi'/phi``.
    """

    lambda0: float
    bracket: tuple[float, float]
    phi: SampledFunction
    log_rho: np.ndarray
    l1_mass: TailDiagnosis
    l2_mass: TailDiagnosis
    x_max_used: float
    x_reliable: float
    schedule: tuple[tuple[float, float], ...] = ()

    @property
    def grid(self) -> np.ndarray:
        return self.phi.grid


def _riccati_tail(
    model: DiffusionModel, lam: float, x_from: float, x_to: float, at: np.ndarray
) -> np.ndarray | None:
    """``log phi(x) - log phi(x_from)`` on ``at`` from the decaying branch, None on failure."""
    drift, killing = model.b, model.kappa
    b_end, k_end = float(drift(x_to)), float(killing(x_to))
    v_end = -b_end - math.sqrt(max(b_end * b_end + 2.0 * (k_end - lam), 0.0))

    def rhs(x: float, y: np.ndarray) -> list[float]:
        v = y[0]
        b = float(drift(x))
        return [-v * v - 2.0 * b * v + 2.0 * (float(killing(x)) - lam), v]

    try:
        with np.errstate(all='ignore'):
            sol = solve_ivp(
                rhs,
                (x_to, x_from),
                [v_end, 0.0],
                method='LSODA',
                rtol=_RTOL,
                atol=_ATOL,
                dense_output=True,
            )
            if sol.status != 0:
                return None
            w = sol.sol(at)[1] - sol.y[1, -1]
    except (ValueError, ArithmeticError):
        return None
    return w if np.all(np.isfinite(w)) else None


def _mass(
    grid: np.ndarray, log_values: np.ndarray, model: DiffusionModel
) -> TailDiagnosis:
    density = SampledFunction(grid, log_values)
    # The tail starts at the peak of the integrand, or three octaves short of
    # the horizon when the integrand has not come down from its peak there.
    peak = int(np.argmax(log_values))
    if log_values[-1] < log_values[peak] - 1.0:
        start = max(1.0, float(grid[peak]))
    else:
        start = max(1.0, float(grid[-1]) / 8.0)
    head = density.log_integral(0.0, start)
    tail = classify_tail(
        density.log_at,
        start,
        log_space=True,
        upper=float(grid[-1]),
        numerics=model.numerics,
    )
    return tail.plus(head)


def _eigenfunction(model: DiffusionModel, found: Bisection) -> EigenResult:
    low, high = found.bracket
    x_used = found.x_max_used
    inside = graded_grid(x_used)
    phi_low = solve_phi(model, low, x_used, grid=inside)
    phi_high = solve_phi(model, high, x_used, grid=inside)
    log_low, log_high = phi_low.log_phi, phi_high.log_phi
    count = min(log_low.size, log_high.size)

    with np.errstate(invalid='ignore'):
        trusted = (
            np.isfinite(log_low[:count])
            & np.isfinite(log_high[:count])
            & (np.abs(log_low[:count] - log_high[:count]) <= _RELIABLE_LOG_GAP)
        )
    trusted[0] = True
    untrusted = np.flatnonzero(~trusted)
    last = int(untrusted[0]) - 1 if untrusted.size else count - 1
    x_reliable = float(inside[last])

    horizon = min(
        max(x_used, MASS_HORIZON), max(MASS_HORIZON, 4.0 * x_reliable)
    )
    head = inside[: last + 1]
    log_phi = log_low[: last + 1]
    extension = graded_grid(horizon)
    beyond = extension[extension > x_reliable]
    grid = np.concatenate([head, beyond])
    if beyond.size:
        lam = 0.5 * (low + high)
        tail = _riccati_tail(model, lam, x_reliable, float(beyond[-1]), beyond)
        if tail is None:
            logger.info(
                'eigenfunction truncated where the bracket ends disagree',
                extra={'x_reliable': x_reliable},
            )
            grid = head
        else:
            log_phi = np.concatenate([log_phi, log_phi[-1] + tail])

    log_rho = log_rho_primitive(model, grid).values[: grid.size]
    result = EigenResult(
        lambda0=found.estimate,
        bracket=found.bracket,
        phi=SampledFunction(grid, log_phi),
        log_rho=log_rho,
        l1_mass=_mass(grid, log_phi + log_rho, model),
        l2_mass=_mass(grid, 2.0 * log_phi + log_rho, model),
        x_max_used=x_used,
        x_reliable=x_reliable,
        schedule=found.schedule,
    )
    logger.debug(
        'eigenfunction built',
        extra={
            'lambda0': result.lambda0,
            'x_reliable': x_reliable,
            'l1': result.l1_mass.verdict.value,
            'l2': result.l2_mass.verdict.value,
        },
    )
    return result


def lambda0(model: DiffusionModel, tol: float | None = None) -> EigenResult:
    """Return the bottom of the spectrum with ``phi(lambda0, .)`` and its masses.

    Raises:
        NoConvergence: if the estimate does not settle before ``x_max_cap``.

    """
    found = eigenvalue_search(model, 0, tol)
    logger.info(
        'lambda0 found',
        extra={'lambda0': found.estimate, 'x_max_used': found.x_max_used},
    )
    return _eigenfunction(model, found)


def qsd_density(e: EigenResult) -> SampledFunction:
    """Return the density ``phi rho / int phi rho`` on the eigenfunction grid.

    Raises:
        NotNormalizable: unless ``e.l1_mass`` is Finite.

    """
    if not e.l1_mass.is_finite:
        raise NotNormalizable(
            'phi(lambda0, .) is not integrable against the speed measure',
            l1_mass=e.l1_mass.verdict.value,
        )
    return SampledFunction(e.phi.grid, e.phi.log_values + e.log_rho).normalized()


def survival_asymptotic(e: EigenResult, x: float) -> float:
    """Return ``C(x)`` with ``P_x(tau > t) ~ C(x) exp(-lambda0 t)``.

    Raises:
        NotNormalizable: unless both masses have finite values.

    """
    if e.l1_mass.log_value is None or e.l2_mass.log_value is None:
        raise NotNormalizable(
            'survival asymptotics need finite L1 and L2 masses',
            l1_mass=e.l1_mass.verdict.value,
            l2_mass=e.l2_mass.verdict.value,
        )
    log_phi = float(e.phi.log_at(x))
    return math.exp(log_phi + e.l1_mass.log_value - e.l2_mass.log_value)


def zero_kappa_eigenfunction(table: ScaleSpeedTable, alpha: float) -> SampledFunction:
    """``R = 1/(1+alpha) + alpha/(1+alpha) S``, the positive solution at ``lambda = 0`` when ``kappa = 0``."""
    p0 = 1.0 if math.isinf(alpha) else alpha / (1.0 + alpha)
    with np.errstate(divide='ignore'):
        log_constant = np.log(1.0 - p0)
        log_values = np.logaddexp(log_constant, np.log(p0) + table.log_scale)
    return SampledFunction(table.grid, np.asarray(log_values, float))


def pinsky_bounds(table: ScaleSpeedTable) -> tuple[float, float]:
    """Return ``(1/(8A), 1/(2A))`` with ``A = sup_x (int_x^inf rho)(int_0^x 1/rho)``.

    Raises:
        PreconditionViolated: unless ``kappa = 0``, 0 absorbs, the unkilled
            process is recurrent and the speed tail is finite.

    """
    model = table.model
    if not (model.killing_is_zero and math.isinf(model.alpha)):
        raise PreconditionViolated(
            'Pinsky bounds need kappa = 0 and an absorbing boundary at 0'
        )
    if not table.scale_tail.is_infinite:
        raise PreconditionViolated('Pinsky bounds need certain absorption (recurrence)')
    if table.log_speed_beyond is None:
        raise PreconditionViolated('Pinsky bounds need a finite speed measure tail')

    grid = table.grid
    log_tail = table.log_tail_from_grid('speed')
    with np.errstate(invalid='ignore'):
        log_hardy = log_tail + table.log_scale
    log_hardy[0] = -np.inf
    best = int(np.argmax(log_hardy))
    log_a = float(log_hardy[best])

    if 0 < best < grid.size - 1:

        def negative_log_hardy(x: float) -> float:
            j = int(np.searchsorted(grid, x, side='left'))
            local = log_integrate_panels(
                table.log_rho_fn,
                x,
                grid[j],
                tol=model.numerics.quad_tol,
                max_subdivisions=model.numerics.max_subdivisions,
            )[0]
            return -float(np.logaddexp(local, log_tail[j]) + table.log_scale_at(x))

        refined = minimize_scalar(
            negative_log_hardy,
            bounds=(grid[best - 1], grid[best + 1]),
            method='bounded',
            options={'xatol': 1e-12},
        )
        log_a = max(log_a, -float(refined.fun))
    else:
        for k in range(1, 9):
            x = table.x_max * 2.0**k
            rest = classify_tail(
                table.log_rho_fn, x, log_space=True, numerics=model.numerics
            )
            if rest.log_value is None:
                break
            log_a = max(log_a, rest.log_value + float(table.log_scale_at(x)))

    a = math.exp(log_a)
    logger.debug('Pinsky constant', extra={'A': a})
    return 1.0 / (8.0 * a), 1.0 / (2.0 * a)
