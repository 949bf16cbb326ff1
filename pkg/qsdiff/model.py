"""Diffusion models and their scale/speed primitives.

A model is a drift ``b``, a killing rate ``kappa >= 0`` and the boundary
parameter ``alpha`` at 0. Everything downstream works with the scale density
``rho(x) = exp(2 * int_0^x b)`` in log space, because ``rho`` spans hundreds
of orders of magnitude for strong drifts.

Integrals are computed panel by panel with a pair of Gauss-Legendre rules
(10 and 21 nodes); a panel whose two estimates disagree is bisected. The
rule is vectorized over panels so a whole table costs a handful of calls of
the coefficient on numpy arrays.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from qsdiff.config import (
    VALIDATION_GRID,
    Hints,
    ModelSpec,
    NumericsConfig,
    TabulatedFunction,
    TailHint,
)
from qsdiff.exceptions import PreconditionViolated, QuadratureFailure
from qsdiff.expr import Expr, constant_expr, parse_expr
from qsdiff.logging import get_logger

logger = get_logger(__name__)

ArrayLike = float | np.ndarray
CoefficientFn = Callable[[ArrayLike], ArrayLike]

_T10, _W10 = np.polynomial.legendre.leggauss(10)
_T21, _W21 = np.polynomial.legendre.leggauss(21)
_MAX_DEPTH = 60
# Panels this many bisections deep only need the absolute tolerance.
_FINE_DEPTH = 30
# Right end of the geometric refinement toward 0 starts here.
GRID_FLOOR = 1e-6
# Sub-panels alive at once in one adaptive sweep.
_MAX_ACTIVE_PANELS = 1 << 18
# Relative slack on the finite-tail ratio threshold, for quadrature noise.
_RATIO_SLACK = 1e-6


# Panel quadrature ---------------------------------------------------------


def _nodes(lo: np.ndarray, hi: np.ndarray, t: np.ndarray) -> np.ndarray:
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return mid[:, None] + half[:, None] * t[None, :]


def _evaluate(f: CoefficientFn, lo: np.ndarray, hi: np.ndarray) -> tuple:
    coarse_nodes = _nodes(lo, hi, _T10)
    fine_nodes = _nodes(lo, hi, _T21)
    values = np.asarray(
        f(np.concatenate([coarse_nodes.ravel(), fine_nodes.ravel()])), float
    )
    split = coarse_nodes.size
    return (
        values[:split].reshape(coarse_nodes.shape),
        values[split:].reshape(fine_nodes.shape),
    )


def integrate_panels(
    f: CoefficientFn,
    a: ArrayLike,
    b: ArrayLike,
    *,
    tol: float = 1e-10,
    max_subdivisions: int = 4096,
) -> np.ndarray:
    """Integrate ``f`` over each panel ``[a_i, b_i]``.

    A sub-panel is accepted when the 10- and 21-point estimates agree to
    ``tol`` absolutely (its share of the panel's budget) or relatively.

    Raises:
        QuadratureFailure: if the integrand is not finite at a node or a
            panel needs more than the subdivision budget (a non-integrable
            singularity, typically at 0).

    """
    a_arr = np.atleast_1d(np.asarray(a, float))
    b_arr = np.broadcast_to(np.asarray(b, float), a_arr.shape).astype(float)
    total = np.zeros(a_arr.size)
    width = np.abs(b_arr - a_arr).ravel()
    width = np.where(width > 0, width, 1.0)

    lo, hi = a_arr.ravel().copy(), b_arr.ravel().copy()
    owner = np.arange(a_arr.size)
    depth = np.zeros(a_arr.size, dtype=int)
    budget = max_subdivisions * max(1, a_arr.size)
    while lo.size:
        with np.errstate(all='ignore'):
            coarse_vals, fine_vals = _evaluate(f, lo, hi)
        half = 0.5 * (hi - lo)
        coarse = half * (coarse_vals @ _W10)
        fine = half * (fine_vals @ _W21)
        if not np.all(np.isfinite(fine_vals)):
            bad = ~np.all(np.isfinite(fine_vals), axis=1)
            raise QuadratureFailure(
                'Integrand is not finite on the panel',
                panel=[float(lo[bad][0]), float(hi[bad][0])],
            )
        err = np.abs(fine - coarse)
        share = np.abs(hi - lo) / width[owner]
        done = (err <= np.maximum(tol * share, tol * np.abs(fine))) | (
            (depth >= _FINE_DEPTH) & (err <= tol)
        )
        np.add.at(total, owner[done], fine[done])

        todo = ~done
        if not todo.any():
            break
        budget -= int(todo.sum())
        if (
            budget < 0
            or 2 * int(todo.sum()) > _MAX_ACTIVE_PANELS
            or np.any(depth[todo] >= _MAX_DEPTH)
        ):
            worst = int(np.argmax(np.where(todo, err, -1.0)))
            raise QuadratureFailure(
                'Quadrature did not converge; the integrand is probably '
                'not integrable on the panel',
                panel=[float(lo[worst]), float(hi[worst])],
            )
        mid = 0.5 * (lo + hi)
        lo = np.concatenate([lo[todo], mid[todo]])
        hi = np.concatenate([mid[todo], hi[todo]])
        owner = np.tile(owner[todo], 2)
        depth = np.tile(depth[todo] + 1, 2)
    return total.reshape(a_arr.shape)


def log_integrate_panels(
    log_f: CoefficientFn,
    a: ArrayLike,
    b: ArrayLike,
    *,
    tol: float = 1e-10,
    max_subdivisions: int = 4096,
) -> np.ndarray:
    """Return ``log int_{a_i}^{b_i} exp(log_f)`` for each panel (``a_i <= b_i``).

    The same adaptive rule as ``integrate_panels`` run in log space, so
    integrands like ``exp(2 x^3 / 3)`` neither overflow nor underflow.
    """
    a_arr = np.atleast_1d(np.asarray(a, float))
    b_arr = np.broadcast_to(np.asarray(b, float), a_arr.shape).astype(float)
    total = np.full(a_arr.size, -np.inf)
    width = (b_arr - a_arr).ravel()
    if np.any(width < 0):
        raise ValueError('log_integrate_panels requires a <= b')
    width = np.where(width > 0, width, 1.0)
    log_w10, log_w21 = np.log(_W10), np.log(_W21)

    lo, hi = a_arr.ravel().copy(), b_arr.ravel().copy()
    owner = np.arange(a_arr.size)
    depth = np.zeros(a_arr.size, dtype=int)
    reference: np.ndarray | None = None
    budget = max_subdivisions * max(1, a_arr.size)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        while lo.size:
            coarse_vals, fine_vals = _evaluate(log_f, lo, hi)
            if np.any(np.isnan(fine_vals)) or np.any(fine_vals == np.inf):
                bad = ~np.all(np.isfinite(fine_vals) | (fine_vals == -np.inf), axis=1)
                raise QuadratureFailure(
                    'Log-integrand is not finite on the panel',
                    panel=[float(lo[bad][0]), float(hi[bad][0])],
                )
            log_half = np.log(0.5 * (hi - lo))
            coarse = logsumexp(coarse_vals + log_w10, axis=1) + log_half
            fine = logsumexp(fine_vals + log_w21, axis=1) + log_half
            if reference is None:
                reference = fine.copy()

            both_zero = (fine == -np.inf) & (coarse == -np.inf)
            rel = np.where(both_zero, 0.0, np.abs(np.expm1(coarse - fine)))
            share = (hi - lo) / width[owner]
            negligible = fine + np.log(rel) <= reference[owner] + np.log(tol * share)
            done = both_zero | (rel <= tol) | negligible
            np.logaddexp.at(total, owner[done], fine[done])

            todo = ~done
            if not todo.any():
                break
            budget -= int(todo.sum())
            if (
                budget < 0
                or 2 * int(todo.sum()) > _MAX_ACTIVE_PANELS
                or np.any(depth[todo] >= _MAX_DEPTH)
            ):
                worst = int(np.argmax(np.where(todo, rel, -1.0)))
                raise QuadratureFailure(
                    'Log-space quadrature did not converge',
                    panel=[float(lo[worst]), float(hi[worst])],
                )
            mid = 0.5 * (lo + hi)
            lo = np.concatenate([lo[todo], mid[todo]])
            hi = np.concatenate([mid[todo], hi[todo]])
            owner = np.tile(owner[todo], 2)
            depth = np.tile(depth[todo] + 1, 2)
    return total.reshape(a_arr.shape)


class Primitive:
    """Cumulative integral ``x -> int_{x0}^x f`` anchored on a grid.

    Values are exact (to quadrature tolerance) at the anchors; between
    anchors a local panel integral is added. Evaluating to the right of the
    last anchor extends the anchors geometrically, eight per doubling. With
    ``log_space=True`` the integrand and the result are logarithms.
    """

    _PER_DOUBLING = 8

    def __init__(
        self,
        integrand: CoefficientFn,
        anchors: Sequence[float] | np.ndarray,
        *,
        log_space: bool = False,
        tol: float = 1e-10,
        max_subdivisions: int = 4096,
    ):
        anchors = np.asarray(anchors, float)
        if anchors.ndim != 1 or anchors.size < 2 or np.any(np.diff(anchors) <= 0):
            raise ValueError('anchors must be a strictly increasing 1-d grid')
        self._f = integrand
        self._log_space = log_space
        self._tol = tol
        self._max_subdivisions = max_subdivisions
        self._anchors = anchors
        self._panels = self._integrate(anchors[:-1], anchors[1:])
        self._values = self._accumulate(self._zero, self._panels)

    @property
    def _zero(self) -> float:
        return -np.inf if self._log_space else 0.0

    @property
    def anchors(self) -> np.ndarray:
        return self._anchors

    @property
    def values(self) -> np.ndarray:
        """Cumulative values at the anchors."""
        return self._values

    @property
    def panels(self) -> np.ndarray:
        """Integrals over consecutive anchor panels (logs in log space)."""
        return self._panels

    def _integrate(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        rule = log_integrate_panels if self._log_space else integrate_panels
        return rule(
            self._f, a, b, tol=self._tol, max_subdivisions=self._max_subdivisions
        )

    def _accumulate(self, first: float, panels: np.ndarray) -> np.ndarray:
        if self._log_space:
            return np.logaddexp.accumulate(np.concatenate([[first], panels]))
        return first + np.concatenate([[0.0], np.cumsum(panels)])

    def _extend_to(self, x: float) -> None:
        last = self._anchors[-1]
        if x <= last:
            return
        start = last if last > 0 else 1.0
        doublings = max(1, math.ceil(math.log2(x / start)))
        count = doublings * self._PER_DOUBLING
        new = start * np.exp2(np.arange(1, count + 1) / self._PER_DOUBLING)
        new = new[new > last]
        panels = self._integrate(np.concatenate([[last], new[:-1]]), new)
        values = self._accumulate(self._values[-1], panels)[1:]
        self._panels = np.concatenate([self._panels, panels])
        self._values = np.concatenate([self._values, values])
        self._anchors = np.concatenate([self._anchors, new])

    def __call__(self, x: ArrayLike) -> ArrayLike:
        scalar = np.ndim(x) == 0
        xs = np.atleast_1d(np.asarray(x, float))
        if np.any(xs < self._anchors[0]):
            raise ValueError('Primitive evaluated left of its first anchor')
        self._extend_to(float(xs.max()))
        idx = np.searchsorted(self._anchors, xs, side='right') - 1
        idx = np.clip(idx, 0, self._anchors.size - 1)
        local = self._integrate(self._anchors[idx], xs)
        if self._log_space:
            with np.errstate(divide='ignore', invalid='ignore'):
                result = np.logaddexp(self._values[idx], local)
        else:
            result = self._values[idx] + local
        return float(result[0]) if scalar else result


# Sampled and tabulated functions -----------------------------------------


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """A positive function known through its logarithm on a grid.

    Between samples the logarithm is interpolated linearly; outside the grid
    the function is 0.
    """

    grid: np.ndarray
    log_values: np.ndarray

    @property
    def log_scale(self) -> float:
        finite = self.log_values[np.isfinite(self.log_values)]
        return float(finite.max()) if finite.size else 0.0

    @property
    def values(self) -> np.ndarray:
        with np.errstate(over='ignore'):
            return np.exp(self.log_values)

    def scaled_values(self) -> np.ndarray:
        """Samples divided by ``exp(log_scale)``, safe from overflow."""
        return np.exp(self.log_values - self.log_scale)

    def log_at(self, x: ArrayLike) -> ArrayLike:
        return np.interp(x, self.grid, self.log_values, left=-np.inf, right=-np.inf)

    def __call__(self, x: ArrayLike) -> ArrayLike:
        return np.exp(self.log_at(x))

    def log_integral(self, a: float | None = None, b: float | None = None) -> float:
        """Log of the trapezoid integral over ``[a, b]`` (whole grid by default)."""
        lo = self.grid[0] if a is None else max(a, self.grid[0])
        hi = self.grid[-1] if b is None else min(b, self.grid[-1])
        if hi <= lo:
            return -math.inf
        inside = (self.grid > lo) & (self.grid < hi)
        xs = np.concatenate([[lo], self.grid[inside], [hi]])
        logs = np.concatenate([[self.log_at(lo)], self.log_values[inside], [self.log_at(hi)]])
        shift = self.log_scale
        mass = integrate.trapezoid(np.exp(logs - shift), xs)
        with np.errstate(divide='ignore'):
            return float(np.log(mass) + shift)

    def integral(self, a: float | None = None, b: float | None = None) -> float:
        return math.exp(self.log_integral(a, b))

    def cumulative(self) -> np.ndarray:
        """Trapezoid cumulative integral at the grid points, scaled by ``exp(-log_scale)``."""
        return integrate.cumulative_trapezoid(self.scaled_values(), self.grid, initial=0.0)

    def normalized(self) -> SampledFunction:
        return SampledFunction(self.grid, self.log_values - self.log_integral())


class TabulatedCoefficient:
    """A coefficient given by samples: linear inside, constant outside."""

    def __init__(self, x: Sequence[float], y: Sequence[float]):
        self.x = np.asarray(x, float)
        self.y = np.asarray(y, float)
        self.source = TabulatedFunction(x=self.x.tolist(), y=self.y.tolist())

    @property
    def is_constant(self) -> bool:
        return bool(np.ptp(self.y) == 0)

    @property
    def constant_value(self) -> float | None:
        return float(self.y[0]) if self.is_constant else None

    def __call__(self, x: ArrayLike) -> ArrayLike:
        return np.interp(x, self.x, self.y)

    def __repr__(self) -> str:
        return f'TabulatedCoefficient({self.x.size} points)'


def coefficient_from_spec(value: str | TabulatedFunction) -> CoefficientFn:
    if isinstance(value, TabulatedFunction):
        return TabulatedCoefficient(value.x, value.y)
    return parse_expr(value)


def coefficient_constant(fn: CoefficientFn) -> float | None:
    """Return the constant value of a coefficient, None if it varies or is opaque."""
    if isinstance(fn, Expr | TabulatedCoefficient):
        return fn.constant_value
    return None


# Model -------------------------------------------------------------------


@dataclass(frozen=True)
class DiffusionModel:
    """Drift, killing rate and boundary parameter of a killed diffusion.

    ``alpha = 0`` reflects at 0, ``alpha = inf`` absorbs, anything between is
    an elastic boundary.
    """

    drift: CoefficientFn
    killing: CoefficientFn
    alpha: float
    hints: Hints = field(default_factory=Hints)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)

    def __post_init__(self) -> None:
        if not (self.alpha >= 0):
            raise PreconditionViolated('alpha must lie in [0, inf]', alpha=self.alpha)

    @classmethod
    def from_spec(cls, spec: ModelSpec) -> DiffusionModel:
        return cls(
            drift=coefficient_from_spec(spec.drift),
            killing=coefficient_from_spec(spec.kappa),
            alpha=spec.alpha,
            hints=spec.hints,
            numerics=spec.numerics,
        )

    @classmethod
    def from_expressions(
        cls,
        drift: str | float,
        kappa: str | float = '0',
        alpha: float | str = math.inf,
        **kwargs,
    ) -> DiffusionModel:
        """Build a model from expression strings, validating like a model file."""
        spec = ModelSpec(drift=str(drift), kappa=str(kappa), alpha=alpha, **kwargs)
        return cls.from_spec(spec)

    @property
    def p0(self) -> float:
        """``alpha / (1 + alpha)``, 1 for the absorbing boundary."""
        return 1.0 if math.isinf(self.alpha) else self.alpha / (1.0 + self.alpha)

    @property
    def initial_condition(self) -> tuple[float, float]:
        """``(phi(0), phi'(0)) = (1 / (1 + alpha), alpha / (1 + alpha))``."""
        return 1.0 - self.p0, self.p0

    def b(self, x: ArrayLike) -> ArrayLike:
        return self.drift(x)

    def kappa(self, x: ArrayLike) -> ArrayLike:
        return self.killing(x)

    @property
    def killing_is_zero(self) -> bool:
        """True when the killing rate is identically 0."""
        value = coefficient_constant(self.killing)
        if value is not None:
            return value == 0.0
        return bool(np.all(np.asarray(self.killing(VALIDATION_GRID)) == 0.0))

    def with_drift(self, drift: CoefficientFn) -> DiffusionModel:
        return replace(self, drift=drift)

    def with_killing(self, killing: CoefficientFn) -> DiffusionModel:
        return replace(self, killing=killing)

    def shifted_killing(self, c: float) -> DiffusionModel:
        """The model with killing rate ``kappa + c``."""
        killing = self.killing
        value = coefficient_constant(killing)
        if value is not None:
            return self.with_killing(constant_expr(value + c))
        return self.with_killing(lambda x: killing(x) + c)


def log_rho_primitive(model: DiffusionModel, grid: np.ndarray) -> Primitive:
    """``x -> log rho(x) = 2 int_0^x b`` anchored on ``grid`` (which starts at 0)."""
    drift = model.b
    return Primitive(
        lambda y: 2.0 * np.asarray(drift(y), float),
        grid,
        tol=model.numerics.quad_tol,
        max_subdivisions=model.numerics.max_subdivisions,
    )


def log_rho(model: DiffusionModel, xs: ArrayLike) -> np.ndarray:
    """Vectorized ``log rho`` at nonnegative abscissae in any order."""
    xs = np.asarray(xs, float)
    if np.any(xs < 0):
        raise PreconditionViolated('log_rho needs x >= 0')
    points, inverse = np.unique(np.concatenate([[0.0], xs.ravel()]), return_inverse=True)
    if points.size == 1:
        return np.zeros(xs.shape)
    values = log_rho_primitive(model, points).values
    return values[inverse[1:]].reshape(xs.shape)


def graded_grid(x_max: float, points_per_unit: int = 20, floor: float = GRID_FLOOR) -> np.ndarray:
    """Grid on ``[0, x_max]``: geometric down to ``floor`` near 0, then even.

    Beyond 100 the spacing turns geometric again so large ``x_max`` stays cheap.
    """
    knee = min(1.0, x_max)
    parts = [np.array([0.0])]
    if knee > floor:
        parts.append(np.geomspace(floor, knee, 61))
    else:
        parts.append(np.array([knee]))
    if x_max > 1.0:
        even_end = min(x_max, 100.0)
        count = max(2, int(math.ceil((even_end - 1.0) * points_per_unit)) + 1)
        parts.append(np.linspace(1.0, even_end, count))
        if x_max > 100.0:
            parts.append(np.geomspace(100.0, x_max, int(64 * math.log2(x_max / 100.0)) + 2))
    return np.unique(np.concatenate(parts))


# Tail diagnosis ----------------------------------------------------------


class TailVerdict(str, Enum):
    """Outcome of an improper-integral diagnosis."""

    FINITE = 'finite'
    INFINITE = 'infinite'
    INCONCLUSIVE = 'inconclusive'


class Confidence(str, Enum):
    """Whether a diagnosis came from a user hint or from the numbers."""

    DECLARED = 'declared'
    NUMERICAL = 'numerical'


@dataclass(frozen=True)
class TailDiagnosis:
    """Diagnosis of ``int_from^inf f``.

    Finite diagnoses keep the logarithm of the value so very large and very
    small masses survive.
    """

    verdict: TailVerdict
    log_value: float | None = None
    growth_exponent_estimate: float | None = None
    cutoffs_used: tuple[float, ...] = ()
    confidence: Confidence = Confidence.NUMERICAL

    @property
    def is_finite(self) -> bool:
        return self.verdict is TailVerdict.FINITE

    @property
    def is_infinite(self) -> bool:
        return self.verdict is TailVerdict.INFINITE

    @property
    def is_resolved(self) -> bool:
        return self.verdict is not TailVerdict.INCONCLUSIVE

    @property
    def value(self) -> float | None:
        if self.log_value is None:
            return None
        with np.errstate(over='ignore'):
            return float(np.exp(self.log_value))

    def plus(self, log_offset: float) -> TailDiagnosis:
        """Add ``exp(log_offset)`` to a finite value."""
        if self.log_value is None:
            return self
        return replace(self, log_value=float(np.logaddexp(self.log_value, log_offset)))


def _ratio(log_num: float, log_den: float) -> float:
    if log_num == -math.inf:
        return 0.0
    if log_den == -math.inf:
        return math.inf
    return math.exp(min(log_num - log_den, 700.0))


def classify_tail(
    integrand: CoefficientFn,
    start: float,
    hint: TailHint = 'auto',
    *,
    log_space: bool = False,
    upper: float = math.inf,
    rel_tol: float | None = None,
    numerics: NumericsConfig | None = None,
) -> TailDiagnosis:
    """Diagnose whether ``int_start^inf integrand`` is finite.

    Partial integrals are taken over the panels ``[start 2^k, start 2^(k+1)]``.
    Over the last three panels, increments that keep a ratio of at least
    ``tail_infinite_ratio`` mean Infinite; ratios of at most
    ``tail_finite_ratio`` with a geometric remainder below ``rel_tol`` of the
    partial sum mean Finite, and the remainder is added to the value. Panels
    beyond ``upper`` are never evaluated. A declared hint wins over the numbers.

    Args:
        integrand: Nonnegative function, or its logarithm when ``log_space``.
        start: Left end, > 0.
        hint: ``'finite'``, ``'infinite'`` or ``'auto'``.
        log_space: Whether ``integrand`` returns logarithms.
        upper: Largest abscissa the integrand may be evaluated at.
        rel_tol: Remainder tolerance; ``numerics.tail_rel_tol`` by default.
        numerics: Thresholds and budgets.

    """
    cfg = numerics or NumericsConfig()
    if not start > 0:
        raise PreconditionViolated('classify_tail needs start > 0', start=start)
    if hint == 'infinite':
        return TailDiagnosis(TailVerdict.INFINITE, confidence=Confidence.DECLARED)
    if hint == 'finite':
        try:
            numeric = classify_tail(
                integrand,
                start,
                'auto',
                log_space=log_space,
                upper=upper,
                rel_tol=rel_tol,
                numerics=cfg,
            )
        except QuadratureFailure:
            numeric = TailDiagnosis(TailVerdict.INCONCLUSIVE)
        return TailDiagnosis(
            TailVerdict.FINITE,
            log_value=numeric.log_value if numeric.is_finite else None,
            cutoffs_used=numeric.cutoffs_used,
            confidence=Confidence.DECLARED,
        )

    if log_space:
        log_f = integrand
    else:

        def log_f(y: ArrayLike) -> ArrayLike:
            with np.errstate(divide='ignore'):
                return np.log(np.maximum(np.asarray(integrand(y), float), 0.0))

    tolerance = cfg.tail_rel_tol if rel_tol is None else rel_tol
    cutoffs = [start]
    increments: list[float] = []
    for k in range(cfg.tail_k_max):
        lo, hi = start * 2.0**k, start * 2.0 ** (k + 1)
        if hi > upper * (1 + 1e-12):
            break
        increment = float(
            log_integrate_panels(
                log_f,
                lo,
                hi,
                tol=cfg.quad_tol,
                max_subdivisions=cfg.max_subdivisions,
            )[0]
        )
        cutoffs.append(hi)
        increments.append(increment)
        if len(increments) < 3:
            continue
        r1 = _ratio(increments[-2], increments[-3])
        r2 = _ratio(increments[-1], increments[-2])
        log_partial = float(logsumexp(increments))
        if min(r1, r2) >= cfg.tail_infinite_ratio:
            previous = float(logsumexp(increments[:-1]))
            exponent = (log_partial - previous) / math.log(2.0)
            logger.debug(
                'tail diagnosed infinite',
                extra={'start': start, 'cutoff': hi, 'ratios': (r1, r2)},
            )
            return TailDiagnosis(
                TailVerdict.INFINITE,
                growth_exponent_estimate=exponent,
                cutoffs_used=tuple(cutoffs),
            )
        if max(r1, r2) <= cfg.tail_finite_ratio * (1.0 + _RATIO_SLACK):
            r = max(r1, r2)
            with np.errstate(divide='ignore'):
                log_rest = increments[-1] + math.log(r / (1.0 - r)) if r > 0 else -math.inf
            if log_partial == -math.inf or log_rest <= math.log(tolerance) + log_partial:
                logger.debug(
                    'tail diagnosed finite',
                    extra={'start': start, 'cutoff': hi, 'ratios': (r1, r2)},
                )
                return TailDiagnosis(
                    TailVerdict.FINITE,
                    log_value=float(np.logaddexp(log_partial, log_rest)),
                    cutoffs_used=tuple(cutoffs),
                )
    logger.debug('tail inconclusive', extra={'start': start, 'cutoff': cutoffs[-1]})
    return TailDiagnosis(TailVerdict.INCONCLUSIVE, cutoffs_used=tuple(cutoffs))


# Scale and speed ---------------------------------------------------------


def eval_rho(model: DiffusionModel, x: float) -> float:
    """Return ``rho(x) = exp(2 int_0^x b)`` by adaptive quadrature.

    Raises:
        QuadratureFailure: when the drift is not integrable on ``[0, x]``.

    """
    return math.exp(min(log_eval_rho(model, x), 709.0))


def log_eval_rho(model: DiffusionModel, x: float) -> float:
    """Return ``log rho(x)`` with scipy's adaptive Gauss-Kronrod quadrature."""
    if x < 0:
        raise PreconditionViolated('eval_rho needs x >= 0', x=x)
    if x == 0:
        return 0.0
    tol = model.numerics.quad_tol
    out = integrate.quad(
        lambda s: float(model.b(s)), 0.0, x, epsabs=tol, epsrel=tol, limit=200,
        full_output=1,
    )
    if len(out) > 3 or not math.isfinite(out[0]):
        raise QuadratureFailure(
            f'Drift integral over [0, {x}] did not converge', x=x, abserr=out[1]
        )
    return 2.0 * out[0]


@dataclass(frozen=True, eq=False)
class ScaleSpeedTable:
    """Scale and speed of a model on a graded grid over ``[0, x_max]``.

    Arrays hold logarithms: ``log_rho``, ``log_scale`` (``log S``) and
    ``log_speed`` (``log M``). The tails beyond ``x_max`` are diagnosed;
    finite tail values are totals over ``[0, inf)``.
    """

    model: DiffusionModel
    grid: np.ndarray
    log_rho: np.ndarray
    log_scale: np.ndarray
    log_speed: np.ndarray
    log_scale_panels: np.ndarray
    log_speed_panels: np.ndarray
    scale_tail: TailDiagnosis
    speed_tail: TailDiagnosis
    log_scale_beyond: float | None
    log_speed_beyond: float | None
    log_rho_fn: Primitive
    log_scale_fn: Primitive
    log_speed_fn: Primitive

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])

    @property
    def rho(self) -> np.ndarray:
        with np.errstate(over='ignore'):
            return np.exp(self.log_rho)

    @property
    def scale_S(self) -> np.ndarray:  # noqa: N802
        with np.errstate(over='ignore'):
            return np.exp(self.log_scale)

    @property
    def speed_M(self) -> np.ndarray:  # noqa: N802
        with np.errstate(over='ignore'):
            return np.exp(self.log_speed)

    def log_rho_at(self, x: ArrayLike) -> ArrayLike:
        return self.log_rho_fn(x)

    def log_scale_at(self, x: ArrayLike) -> ArrayLike:
        return self.log_scale_fn(x)

    def log_speed_at(self, x: ArrayLike) -> ArrayLike:
        return self.log_speed_fn(x)

    def _anchors_from(self, c: float) -> np.ndarray:
        above = self.grid[self.grid > c]
        if above.size == 0:
            above = np.array([c * 2.0])
        return np.concatenate([[c], above])

    def log_speed_from(self, c: float) -> Primitive:
        """``y -> log (M(y) - M(c))`` for ``y >= c``."""
        return Primitive(
            self.log_rho_fn,
            self._anchors_from(c),
            log_space=True,
            tol=self.model.numerics.quad_tol,
            max_subdivisions=self.model.numerics.max_subdivisions,
        )

    def log_scale_from(self, c: float) -> Primitive:
        """``y -> log (S(y) - S(c))`` for ``y >= c``."""
        log_rho = self.log_rho_fn
        return Primitive(
            lambda y: -np.asarray(log_rho(y)),
            self._anchors_from(c),
            log_space=True,
            tol=self.model.numerics.quad_tol,
            max_subdivisions=self.model.numerics.max_subdivisions,
        )

    def log_tail_from_grid(self, which: str) -> np.ndarray:
        """``log int_{x_i}^inf`` of ``rho`` (``'speed'``) or ``1/rho`` (``'scale'``).

        Returns ``+inf`` entries when the tail is not finite.
        """
        panels = self.log_speed_panels if which == 'speed' else self.log_scale_panels
        beyond = self.log_speed_beyond if which == 'speed' else self.log_scale_beyond
        if beyond is None:
            return np.full(self.grid.size, np.inf)
        reverse = np.logaddexp.accumulate(np.concatenate([[beyond], panels[::-1]]))
        return reverse[::-1]


def build_scale_speed(
    model: DiffusionModel, x_max: float | None = None, tol: float | None = None
) -> ScaleSpeedTable:
    """Tabulate ``rho``, ``S`` and ``M`` on ``[0, x_max]`` and diagnose their tails.

    Raises:
        QuadratureFailure: near 0 when the drift, ``rho`` or ``1/rho`` is not
            integrable there.

    """
    numerics = model.numerics
    if tol is not None:
        numerics = numerics.model_copy(update={'quad_tol': tol})
        model = replace(model, numerics=numerics)
    x_max = numerics.table_x_max if x_max is None else x_max
    if not (x_max > 0 and numerics.quad_tol > 0):
        raise PreconditionViolated('build_scale_speed needs x_max > 0 and tol > 0')

    grid = graded_grid(x_max)
    log_rho_fn = log_rho_primitive(model, grid)
    common = {'tol': numerics.quad_tol, 'max_subdivisions': numerics.max_subdivisions}
    log_scale_fn = Primitive(
        lambda y: -np.asarray(log_rho_fn(y)), grid, log_space=True, **common
    )
    log_speed_fn = Primitive(log_rho_fn, grid, log_space=True, **common)
    n = grid.size
    log_rho = log_rho_fn.values[:n]
    log_scale = log_scale_fn.values[:n]
    log_speed = log_speed_fn.values[:n]

    scale_rest = classify_tail(
        lambda y: -np.asarray(log_rho_fn(y)),
        x_max,
        model.hints.scale_tail,
        log_space=True,
        numerics=numerics,
    )
    speed_rest = classify_tail(
        log_rho_fn, x_max, model.hints.speed_tail, log_space=True, numerics=numerics
    )
    table = ScaleSpeedTable(
        model=model,
        grid=grid,
        log_rho=log_rho,
        log_scale=log_scale,
        log_speed=log_speed,
        log_scale_panels=log_scale_fn.panels[: n - 1],
        log_speed_panels=log_speed_fn.panels[: n - 1],
        scale_tail=scale_rest.plus(float(log_scale[-1])),
        speed_tail=speed_rest.plus(float(log_speed[-1])),
        log_scale_beyond=scale_rest.log_value,
        log_speed_beyond=speed_rest.log_value,
        log_rho_fn=log_rho_fn,
        log_scale_fn=log_scale_fn,
        log_speed_fn=log_speed_fn,
    )
    logger.debug(
        'scale/speed table built',
        extra={
            'x_max': x_max,
            'points': n,
            'scale_tail': table.scale_tail.verdict.value,
            'speed_tail': table.speed_tail.verdict.value,
        },
    )
    return table


# Killing rate at infinity ------------------------------------------------


@dataclass(frozen=True)
class KappaLimits:
    """Estimates of ``liminf`` and ``limsup`` of the killing rate at infinity."""

    liminf_est: float
    limsup_est: float
    limit_exists: bool
    confidence: Confidence = Confidence.NUMERICAL
    window_minima: tuple[float, ...] = ()
    window_maxima: tuple[float, ...] = ()

    @property
    def limit(self) -> float | None:
        """The limit ``K`` when it exists."""
        if not self.limit_exists:
            return None
        return 0.5 * (self.liminf_est + self.limsup_est)


def _grows_without_bound(values: np.ndarray) -> bool:
    last = values[-3:]
    return bool(np.all(last > 0) and np.all(last[1:] >= 1.5 * last[:-1]))


def tail_kappa_limits(
    model: DiffusionModel, start: float = 1.0, samples_per_window: int = 2049
) -> KappaLimits:
    """Estimate ``liminf``/``limsup`` of ``kappa`` over windows ``[start 2^k, start 2^(k+1)]``.

    The last window gives the estimates; the limit exists when the last three
    windows agree within ``numerics.kappa_tol``. Minima or maxima growing
    geometrically over the last three windows are reported as ``inf``.
    """
    if not start > 0:
        raise PreconditionViolated('tail_kappa_limits needs start > 0', start=start)
    hint = model.hints.kappa_limit
    if isinstance(hint, float):
        return KappaLimits(hint, hint, True, Confidence.DECLARED)

    cfg = model.numerics
    minima, maxima = [], []
    for k in range(cfg.kappa_windows):
        xs = np.linspace(start * 2.0**k, start * 2.0 ** (k + 1), samples_per_window)
        values = np.asarray(model.kappa(xs), float)
        minima.append(float(values.min()))
        maxima.append(float(values.max()))
    mins, maxs = np.asarray(minima), np.asarray(maxima)

    liminf = math.inf if _grows_without_bound(mins) else float(mins[-1])
    limsup = math.inf if _grows_without_bound(maxs) else float(maxs[-1])
    last_lo, last_hi = mins[-3:].min(), maxs[-3:].max()
    scale = max(1.0, abs(last_hi))
    limit_exists = bool(
        math.isfinite(limsup) and last_hi - last_lo <= cfg.kappa_tol * scale
    )
    if hint == 'none':
        limit_exists = False
    return KappaLimits(
        liminf,
        limsup,
        limit_exists,
        Confidence.DECLARED if hint == 'none' else Confidence.NUMERICAL,
        tuple(minima),
        tuple(maxima),
    )
