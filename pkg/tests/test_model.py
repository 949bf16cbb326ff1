"""Tests for models, panel quadrature, tails and the scale/speed table."""

import math

import numpy as np
import pytest

from qsdiff.config import Hints
from qsdiff.exceptions import PreconditionViolated, QuadratureFailure
from qsdiff.model import (
    Confidence,
    DiffusionModel,
    Primitive,
    SampledFunction,
    TabulatedCoefficient,
    TailVerdict,
    build_scale_speed,
    classify_tail,
    eval_rho,
    graded_grid,
    integrate_panels,
    log_integrate_panels,
    log_rho,
    tail_kappa_limits,
)


class TestPanelQuadrature:
    """Adaptive Gauss-Legendre panels."""

    def test_polynomial(self):
        """Test an integral the rule integrates exactly."""
        assert integrate_panels(lambda x: x**2, 0.0, 1.0)[0] == pytest.approx(1 / 3)

    def test_vectorized_over_panels(self):
        """Test several panels in one call."""
        a = np.array([0.0, 1.0, 2.0])
        result = integrate_panels(np.cos, a, a + 1.0)
        np.testing.assert_allclose(result, np.sin(a + 1.0) - np.sin(a), atol=1e-12)

    def test_integrable_singularity(self):
        """Test 1/sqrt(x) on [0, 1]."""
        value = integrate_panels(lambda x: 1 / np.sqrt(x), 0.0, 1.0, tol=1e-8)[0]
        assert value == pytest.approx(2.0, rel=1e-6)

    def test_not_integrable(self):
        """Test that 1/x on [0, 1] fails."""
        with pytest.raises(QuadratureFailure):
            integrate_panels(lambda x: 1 / x, 0.0, 1.0)

    def test_log_space(self):
        """Test the log-space rule against a closed form."""
        value = log_integrate_panels(lambda x: x, 0.0, 1.0)[0]
        assert value == pytest.approx(math.log(math.e - 1.0), rel=1e-10)

    def test_log_space_huge(self):
        """Test an integrand far beyond the float range."""
        # int_0^1000 e^{2x} = (e^{2000} - 1) / 2
        value = log_integrate_panels(lambda x: 2.0 * x, 0.0, 1000.0)[0]
        assert value == pytest.approx(2000.0 - math.log(2.0), rel=1e-12)

    def test_active_panels_are_capped(self):
        """Test that runaway subdivision fails instead of exhausting memory."""
        a = np.zeros(20_000)
        with pytest.raises(QuadratureFailure):
            integrate_panels(lambda x: np.sin(1e4 * x), a, a + 1.0)

    def test_log_space_requires_order(self):
        """Test that reversed panels are rejected."""
        with pytest.raises(ValueError, match='a <= b'):
            log_integrate_panels(lambda x: x, 1.0, 0.0)


class TestPrimitive:
    """Cumulative integrals on anchors."""

    def test_between_anchors(self):
        """Test evaluation between anchors."""
        primitive = Primitive(np.cos, [0.0, 1.0, 2.0])
        assert primitive(1.5) == pytest.approx(math.sin(1.5), abs=1e-12)

    def test_extends_lazily(self):
        """Test evaluation past the last anchor."""
        primitive = Primitive(np.cos, [0.0, 1.0, 2.0])
        assert primitive(9.0) == pytest.approx(math.sin(9.0), abs=1e-10)
        assert primitive.anchors[-1] >= 9.0

    def test_log_space(self):
        """Test a log-space primitive of exp(x)."""
        primitive = Primitive(lambda x: x, [0.0, 1.0], log_space=True)
        assert primitive(3.0) == pytest.approx(math.log(math.e**3 - 1.0), rel=1e-10)

    def test_left_of_anchors(self):
        """Test that evaluation left of the first anchor is rejected."""
        with pytest.raises(ValueError, match='left of its first anchor'):
            Primitive(np.cos, [1.0, 2.0])(0.5)

    def test_bad_anchors(self):
        """Test that anchors must increase."""
        with pytest.raises(ValueError, match='strictly increasing'):
            Primitive(np.cos, [0.0, 0.0, 1.0])


class TestSampledFunction:
    """Functions known on a grid through their logarithm."""

    def test_normalized(self):
        """Test normalization of x e^{-x} on a long grid."""
        grid = graded_grid(60.0)
        with np.errstate(divide='ignore'):
            density = SampledFunction(grid, np.log(grid) - grid).normalized()
        assert density.integral() == pytest.approx(1.0, rel=1e-9)
        assert density(1.0) == pytest.approx(math.exp(-1.0), rel=1e-3)

    def test_zero_outside_grid(self):
        """Test that the function vanishes beyond the grid."""
        sampled = SampledFunction(np.array([0.0, 1.0]), np.zeros(2))
        assert sampled(2.0) == 0.0

    def test_cumulative_increases(self):
        """Test that the cumulative integral is monotone."""
        grid = np.linspace(0.0, 5.0, 51)
        cumulative = SampledFunction(grid, -grid).cumulative()
        assert cumulative[0] == 0.0
        assert np.all(np.diff(cumulative) > 0)


class TestTabulatedCoefficient:
    """Tabulated coefficients."""

    def test_interpolation_and_extrapolation(self):
        """Test linear interpolation and constant continuation."""
        table = TabulatedCoefficient([0.0, 1.0], [0.0, 2.0])
        np.testing.assert_allclose(table(np.array([0.5, 3.0])), [1.0, 2.0])

    def test_constant(self):
        """Test detection of a constant table."""
        assert TabulatedCoefficient([0.0, 1.0], [-1.0, -1.0]).constant_value == -1.0
        assert TabulatedCoefficient([0.0, 1.0], [0.0, 1.0]).constant_value is None


class TestDiffusionModel:
    """Model construction and derived quantities."""

    def test_boundary_parameter(self, make_model):
        """Test the initial condition of the eigen equation."""
        assert make_model('0', alpha=math.inf).initial_condition == (0.0, 1.0)
        assert make_model('0', alpha=0.0).initial_condition == (1.0, 0.0)
        assert make_model('0', alpha=1.0).initial_condition == (0.5, 0.5)

    def test_negative_alpha(self, make_model):
        """Test that a negative alpha is a precondition violation."""
        with pytest.raises(PreconditionViolated):
            DiffusionModel(
                drift=make_model('0').drift, killing=make_model('0').killing, alpha=-1.0
            )

    def test_killing_is_zero(self, make_model):
        """Test detection of a vanishing killing rate."""
        assert make_model('0').killing_is_zero
        assert make_model('0', kappa='0 * x').killing_is_zero
        assert not make_model('0', kappa='x').killing_is_zero

    def test_shifted_killing_constant(self, make_model):
        """Test that shifting a constant killing rate stays symbolic."""
        shifted = make_model('0', kappa='1').shifted_killing(0.5)
        assert shifted.killing.constant_value == 1.5

    def test_shifted_killing_function(self, make_model):
        """Test shifting a varying killing rate."""
        shifted = make_model('0', kappa='x').shifted_killing(2.0)
        assert shifted.kappa(3.0) == pytest.approx(5.0)


class TestRho:
    """The scale density."""

    def test_log_rho_constant_drift(self, make_model):
        """Test log rho for b = -1."""
        xs = np.array([3.0, 0.0, 1.5])
        np.testing.assert_allclose(log_rho(make_model('-1'), xs), -2.0 * xs, atol=1e-12)

    def test_log_rho_strong_drift(self, make_model):
        """Test log rho where rho itself underflows."""
        value = log_rho(make_model('-x^2'), np.array([20.0]))[0]
        assert value == pytest.approx(-2.0 * 20.0**3 / 3.0, rel=1e-12)

    def test_eval_rho(self, make_model):
        """Test the scalar evaluation."""
        assert eval_rho(make_model('x'), 1.0) == pytest.approx(math.e, rel=1e-10)

    def test_cocycle(self, make_model):
        """Test rho(x) exp(2 int_x^y b) = rho(y)."""
        model = make_model('sin(x) - 0.3')
        x, y = 0.7, 2.9
        inner = integrate_panels(model.b, x, y)[0]
        assert eval_rho(model, x) * math.exp(2.0 * inner) == pytest.approx(
            eval_rho(model, y), rel=1e-9
        )

    def test_negative_abscissa(self, make_model):
        """Test that log_rho needs x >= 0."""
        with pytest.raises(PreconditionViolated):
            log_rho(make_model('0'), np.array([-1.0]))


class TestClassifyTail:
    """Improper integral diagnosis."""

    def test_power_law_finite(self):
        """Test int_1^inf x^-3 = 1/2."""
        diag = classify_tail(lambda x: x**-3.0, 1.0)
        assert diag.verdict is TailVerdict.FINITE
        assert diag.value == pytest.approx(0.5, rel=1e-7)

    def test_inverse_square_finite(self):
        """Test an x^-2 tail whose panel ratios sit just above one half."""
        diag = classify_tail(lambda x: x**-2.0 - 0.5 * x**-5.0, 1.0, rel_tol=1e-3)
        assert diag.is_finite
        assert diag.value == pytest.approx(0.875, rel=2e-3)

    def test_exponential_finite(self):
        """Test int_1^inf e^{-x} in log space."""
        diag = classify_tail(lambda x: -x, 1.0, log_space=True)
        assert diag.is_finite
        assert diag.value == pytest.approx(math.exp(-1.0), rel=1e-9)

    def test_harmonic_infinite(self):
        """Test that 1/x diverges."""
        diag = classify_tail(lambda x: 1.0 / x, 1.0)
        assert diag.is_infinite
        assert diag.growth_exponent_estimate is not None

    def test_explosive_infinite(self):
        """Test an integrand growing like e^{2 x^3 / 3}."""
        diag = classify_tail(lambda x: 2.0 * x**3 / 3.0, 1.0, log_space=True)
        assert diag.is_infinite

    def test_slow_decay_inconclusive(self):
        """Test that x^-1.5 is neither settled as finite nor as infinite."""
        diag = classify_tail(lambda x: x**-1.5, 1.0)
        assert diag.verdict is TailVerdict.INCONCLUSIVE
        assert not diag.is_resolved

    def test_upper_limits_panels(self):
        """Test that panels past the upper limit are not evaluated."""
        diag = classify_tail(lambda x: x**-1.5, 1.0, upper=64.0)
        assert diag.cutoffs_used[-1] <= 64.0

    def test_declared_infinite(self):
        """Test that an infinite hint wins."""
        diag = classify_tail(lambda x: -x, 1.0, 'infinite', log_space=True)
        assert diag.is_infinite
        assert diag.confidence is Confidence.DECLARED

    def test_declared_finite_keeps_value(self):
        """Test that a finite hint keeps the numeric value when there is one."""
        diag = classify_tail(lambda x: -x, 1.0, 'finite', log_space=True)
        assert diag.is_finite
        assert diag.confidence is Confidence.DECLARED
        assert diag.value == pytest.approx(math.exp(-1.0), rel=1e-9)

    def test_start_must_be_positive(self):
        """Test the start precondition."""
        with pytest.raises(PreconditionViolated):
            classify_tail(lambda x: x, 0.0)

    def test_plus(self):
        """Test adding a head to a finite tail."""
        diag = classify_tail(lambda x: x**-3.0, 1.0).plus(0.0)
        assert diag.value == pytest.approx(1.5, rel=1e-7)


class TestScaleSpeedTable:
    """Tabulated scale and speed."""

    def test_negative_drift(self, make_model):
        """Test b = -1: S infinite, M finite with total 1/2."""
        table = build_scale_speed(make_model('-1'))
        x = table.grid
        np.testing.assert_allclose(table.scale_S, np.expm1(2 * x) / 2, rtol=1e-9)
        np.testing.assert_allclose(table.speed_M, -np.expm1(-2 * x) / 2, rtol=1e-9)
        assert table.scale_tail.is_infinite
        assert table.speed_tail.value == pytest.approx(0.5, rel=1e-9)

    def test_positive_drift(self, make_model):
        """Test b = +1: S finite with total 1/2, M infinite."""
        table = build_scale_speed(make_model('1'))
        assert table.scale_tail.value == pytest.approx(0.5, rel=1e-9)
        assert table.speed_tail.is_infinite

    def test_tail_from_grid(self, make_model):
        """Test the speed tail beyond each grid point."""
        table = build_scale_speed(make_model('-1'))
        expected = np.log(np.exp(-2 * table.grid) / 2)
        np.testing.assert_allclose(table.log_tail_from_grid('speed'), expected, atol=1e-8)
        assert np.all(np.isinf(table.log_tail_from_grid('scale')))

    def test_evaluation_beyond_table(self, make_model):
        """Test the primitives past x_max."""
        table = build_scale_speed(make_model('-1'), x_max=5.0)
        assert table.log_scale_at(12.0) == pytest.approx(
            math.log(math.expm1(24.0) / 2), rel=1e-10
        )

    def test_hints_override(self, make_model):
        """Test that declared tails replace the numbers."""
        model = make_model('-1', hints=Hints(scale_tail='infinite', speed_tail='finite'))
        table = build_scale_speed(model)
        assert table.scale_tail.confidence is Confidence.DECLARED
        assert table.speed_tail.confidence is Confidence.DECLARED

    def test_bad_x_max(self, make_model):
        """Test the x_max precondition."""
        with pytest.raises(PreconditionViolated):
            build_scale_speed(make_model('0'), x_max=0.0)


class TestKappaLimits:
    """Killing rate at infinity."""

    def test_constant(self, make_model):
        """Test a constant killing rate."""
        limits = tail_kappa_limits(make_model('0', kappa='0.3'))
        assert limits.limit_exists
        assert limits.limit == pytest.approx(0.3)

    def test_decaying_to_limit(self, make_model):
        """Test a killing rate converging exponentially."""
        limits = tail_kappa_limits(make_model('0', kappa='1 + exp(-x)'))
        assert limits.limit == pytest.approx(1.0)

    def test_unbounded(self, make_model):
        """Test a killing rate growing to infinity."""
        limits = tail_kappa_limits(make_model('0', kappa='x'))
        assert math.isinf(limits.liminf_est)
        assert not limits.limit_exists

    def test_oscillating(self, make_model):
        """Test a killing rate without limit."""
        limits = tail_kappa_limits(make_model('0', kappa='2 + sin(x)'))
        assert not limits.limit_exists
        assert limits.liminf_est == pytest.approx(1.0, abs=1e-3)
        assert limits.limsup_est == pytest.approx(3.0, abs=1e-3)
        assert limits.limit is None

    def test_declared_limit(self, make_model):
        """Test a declared limit."""
        limits = tail_kappa_limits(make_model('0', kappa='x', hints=Hints(kappa_limit=2.0)))
        assert limits.confidence is Confidence.DECLARED
        assert limits.limit == 2.0

    def test_declared_no_limit(self, make_model):
        """Test the "none" hint."""
        limits = tail_kappa_limits(make_model('0', kappa='1', hints=Hints(kappa_limit='none')))
        assert not limits.limit_exists
