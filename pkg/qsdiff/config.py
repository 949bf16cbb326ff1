"""Configuration models for qsdiff.

This module provides the pydantic models for the model file (``ModelSpec``),
the numerical tolerances (``NumericsConfig``), user hints about tails and the
killing limit (``Hints``) and the Monte Carlo run (``SimConfig``).
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
import orjson
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    ValidationError,
    field_validator,
    model_validator,
)

from qsdiff._utils import decode_float, encode_float
from qsdiff.exceptions import ModelSpecError, ParseError
from qsdiff.expr import ExpressionDomainError, parse_expr

InfFloat = Annotated[
    float,
    BeforeValidator(decode_float),
    PlainSerializer(encode_float, return_type=float | str, when_used='json'),
]
"""A float that reads and writes infinity as the string ``"inf"``."""

TailHint = Literal['finite', 'infinite', 'auto']

# Points where coefficients are checked when a model file is loaded.
VALIDATION_GRID = np.concatenate(
    [
        np.geomspace(1e-6, 1.0, 61),
        np.linspace(1.0, 100.0, 397)[1:],
        np.geomspace(100.0, 1e6, 41)[1:],
    ]
)


class TabulatedFunction(BaseModel):
    """A coefficient given by samples, interpolated linearly.

    Outside the table the first and last values are continued as constants.
    """

    model_config = ConfigDict(frozen=True)

    x: list[float] = Field(..., min_length=2, description='Strictly increasing abscissae')
    y: list[float] = Field(..., min_length=2, description='Values at the abscissae')

    @model_validator(mode='after')
    def validate_table(self) -> TabulatedFunction:
        """Check shape, ordering and finiteness."""
        if len(self.x) != len(self.y):
            raise ValueError('x and y must have the same length')
        xs, ys = np.asarray(self.x), np.asarray(self.y)
        if not np.all(np.diff(xs) > 0):
            raise ValueError('x must be strictly increasing')
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError('tabulated values must be finite')
        return self


Coefficient = str | TabulatedFunction


class Hints(BaseModel):
    """User assertions that override numerical diagnoses."""

    model_config = ConfigDict(frozen=True)

    kappa_limit: InfFloat | Literal['none'] | None = Field(
        default=None,
        description='Declared limit of the killing rate at infinity, "none" if it '
        'does not exist, absent to estimate it',
    )
    scale_tail: TailHint = Field(default='auto', description='Tail of the scale')
    speed_tail: TailHint = Field(default='auto', description='Tail of the speed')

    @field_validator('kappa_limit', mode='before')
    @classmethod
    def validate_kappa_limit(cls, v: Any) -> Any:
        """Accept "inf" and "none" strings."""
        if isinstance(v, str) and v.strip().lower() == 'none':
            return 'none'
        return decode_float(v)

    @field_validator('kappa_limit')
    @classmethod
    def validate_kappa_limit_sign(cls, v: Any) -> Any:
        """The killing rate is nonnegative, so is its limit."""
        if isinstance(v, float) and not v >= 0:
            raise ValueError('kappa_limit must be >= 0')
        return v


class NumericsConfig(BaseModel):
    """Tolerances and schedules of the numerical modules."""

    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=1e-8, gt=0, description='Eigenvalue bisection tolerance')
    quad_tol: float = Field(
        default=1e-10, gt=0, description='Absolute and relative quadrature tolerance'
    )
    x_max_start: float = Field(
        default=10.0, gt=0, description='First truncation point of the eigen ODE'
    )
    x_max_cap: float = Field(
        default=10240.0, gt=0, description='Largest truncation point of the eigen ODE'
    )
    table_x_max: float = Field(
        default=10.0, gt=0, description='Right end of the scale/speed table'
    )
    tail_k_max: int = Field(
        default=40, ge=3, le=60, description='Geometric doublings for tail diagnosis'
    )
    tail_finite_ratio: float = Field(
        default=0.5, gt=0, lt=1, description='Increment ratio declaring a finite tail'
    )
    tail_infinite_ratio: float = Field(
        default=0.9, gt=0, description='Increment ratio declaring an infinite tail'
    )
    tail_rel_tol: float = Field(
        default=1e-8, gt=0, description='Relative size of the extrapolated remainder'
    )
    feller_rel_tol: float = Field(
        default=1e-3,
        gt=0,
        lt=1,
        description='Remainder tolerance for the boundary classification integrals',
    )
    kappa_windows: int = Field(
        default=20, ge=3, le=60, description='Geometric windows for killing limits'
    )
    kappa_tol: float = Field(
        default=1e-6, gt=0, description='Agreement tolerance for the killing limit'
    )
    margin: float = Field(
        default=1e-4, gt=0, description='Relative margin for strict comparisons'
    )
    max_subdivisions: int = Field(
        default=4096, ge=16, description='Panel subdivision budget per integral'
    )

    @model_validator(mode='after')
    def validate_schedules(self) -> NumericsConfig:
        """Check that the ratio thresholds and x_max schedule are ordered."""
        if self.tail_finite_ratio >= self.tail_infinite_ratio:
            raise ValueError('tail_finite_ratio must be below tail_infinite_ratio')
        if self.x_max_start > self.x_max_cap:
            raise ValueError('x_max_start must not exceed x_max_cap')
        return self


class ModelSpec(BaseModel):
    """The model file: coefficients, boundary parameter, hints and numerics."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    drift: Coefficient = Field(..., description='Drift b(x)')
    kappa: Coefficient = Field(default='0', description='Killing rate kappa(x) >= 0')
    alpha: InfFloat = Field(
        ..., ge=0, description='Boundary parameter at 0: 0 reflects, "inf" absorbs'
    )
    hints: Hints = Field(default_factory=Hints)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)

    @field_validator('drift', 'kappa')
    @classmethod
    def validate_expression(cls, v: Coefficient) -> Coefficient:
        """Parse expression strings so syntax errors surface at load time."""
        if isinstance(v, str):
            try:
                parse_expr(v)
            except ParseError as exc:
                raise ValueError(
                    f'{exc.message} (offset {exc.offset})'
                ) from exc
        return v

    @model_validator(mode='after')
    def validate_coefficients(self) -> ModelSpec:
        """Check drift finiteness and killing nonnegativity on the grid."""
        for name in ('drift', 'kappa'):
            value = getattr(self, name)
            if isinstance(value, TabulatedFunction):
                values = np.asarray(value.y)
            else:
                try:
                    values = np.asarray(parse_expr(value)(VALIDATION_GRID), float)
                except ExpressionDomainError as exc:
                    raise ValueError(f'{name}: {exc}') from exc
            if not np.all(np.isfinite(values)):
                raise ValueError(f'{name} must be finite on the validation grid')
            if name == 'kappa' and np.any(values < 0):
                raise ValueError('kappa must be >= 0 on the validation grid')
        return self


class SimConfig(BaseModel):
    """Configuration of a killed-path Monte Carlo run."""

    model_config = ConfigDict(frozen=True)

    paths: int = Field(default=100_000, ge=1, description='Number of paths')
    t_final: float = Field(default=8.0, gt=0, description='Simulated horizon')
    dt: float = Field(default=1e-3, gt=0, description='Euler-Maruyama time step')
    seed: int = Field(default=0, ge=0, lt=2**64, description='Random seed')
    initial: list[tuple[float, float]] = Field(
        default_factory=lambda: [(1.0, 1.0)],
        min_length=1,
        description='Initial law as (point, weight) pairs',
    )
    bins: int | list[float] = Field(
        default=100, description='Bin count on [0, x_hi] or explicit bin edges'
    )
    x_hi: float | None = Field(
        default=None, gt=0, description='Right end of the histogram range'
    )
    record_times: list[float] | None = Field(
        default=None, description='Observation times; 16 even steps by default'
    )
    block_size: int = Field(
        default=8192, ge=1, description='Paths per random stream block'
    )
    max_workers: int | None = Field(default=None, ge=1)

    @field_validator('initial')
    @classmethod
    def validate_initial(
        cls, v: list[tuple[float, float]]
    ) -> list[tuple[float, float]]:
        """Support must be compact inside (0, inf); weights positive."""
        for point, weight in v:
            if not (math.isfinite(point) and point > 0):
                raise ValueError('initial points must be finite and > 0')
            if not (math.isfinite(weight) and weight > 0):
                raise ValueError('initial weights must be finite and > 0')
        return v

    @field_validator('bins')
    @classmethod
    def validate_bins(cls, v: int | list[float]) -> int | list[float]:
        """Bin count >= 1, or strictly increasing edges starting at 0 or above."""
        if isinstance(v, int):
            if v < 1:
                raise ValueError('bins must be >= 1')
            return v
        edges = np.asarray(v, float)
        if edges.size < 2 or not np.all(np.diff(edges) > 0) or edges[0] < 0:
            raise ValueError('bin edges must be increasing and nonnegative')
        return v

    @model_validator(mode='after')
    def validate_times(self) -> SimConfig:
        """Record times must be sorted, positive and within the horizon."""
        if self.record_times is not None:
            times = np.asarray(self.record_times, float)
            if times.size == 0:
                raise ValueError('record_times must not be empty')
            if np.any(np.diff(times) <= 0) or times[0] <= 0:
                raise ValueError('record_times must be positive and increasing')
            if times[-1] > self.t_final * (1 + 1e-12):
                raise ValueError('record_times must not exceed t_final')
        return self

    def resolved_record_times(self) -> np.ndarray:
        """Return the record times, defaulting to 16 even steps."""
        if self.record_times is not None:
            return np.asarray(self.record_times, float)
        return self.t_final * np.arange(1, 17) / 16.0


def load_model_spec(path: str | Path) -> ModelSpec:
    """Read and validate a model file.

    Raises:
        ModelSpecError: when the file is missing, not JSON, or invalid.

    """
    path = Path(path)
    try:
        raw = orjson.loads(path.read_bytes())
    except FileNotFoundError as exc:
        raise ModelSpecError(f'Model file not found: {path}', path=str(path)) from exc
    except orjson.JSONDecodeError as exc:
        raise ModelSpecError(f'Model file is not valid JSON: {exc}') from exc
    try:
        return ModelSpec.model_validate(raw)
    except ValidationError as exc:
        raise ModelSpecError(
            f'Invalid model file {path}: {exc.error_count()} error(s)',
            errors=[
                {'loc': list(err['loc']), 'msg': err['msg']} for err in exc.errors()
            ],
        ) from exc
