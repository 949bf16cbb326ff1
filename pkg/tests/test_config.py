"""Tests for model files and configuration models."""

import math

import orjson
import pytest
from pydantic import ValidationError

from qsdiff.config import (
    Hints,
    ModelSpec,
    NumericsConfig,
    SimConfig,
    TabulatedFunction,
    load_model_spec,
)
from qsdiff.exceptions import ModelSpecError


class TestModelSpec:
    """Validation of the model file."""

    def test_minimal(self):
        """Test defaults of a minimal model."""
        spec = ModelSpec(drift='-1', alpha='inf')
        assert spec.kappa == '0'
        assert math.isinf(spec.alpha)
        assert spec.hints == Hints()
        assert spec.numerics == NumericsConfig()

    def test_alpha_inf_round_trip(self):
        """Test that alpha = inf is written as the string sentinel."""
        spec = ModelSpec(drift='0', kappa='x', alpha=math.inf)
        dumped = spec.model_dump(mode='json')
        assert dumped['alpha'] == 'inf'
        assert math.isinf(ModelSpec.model_validate(dumped).alpha)

    def test_negative_alpha(self):
        """Test that alpha must be nonnegative."""
        with pytest.raises(ValidationError):
            ModelSpec(drift='0', alpha=-1.0)

    def test_negative_kappa_rejected(self):
        """Test that a killing rate negative on the grid is rejected."""
        with pytest.raises(ValidationError, match='kappa must be >= 0'):
            ModelSpec(drift='0', kappa='x - 1', alpha=0)

    def test_syntax_error_reported(self):
        """Test that parse errors surface at validation time."""
        with pytest.raises(ValidationError, match='offset'):
            ModelSpec(drift='x +', alpha=0)

    def test_undefined_drift_rejected(self):
        """Test that a drift undefined on the grid is rejected."""
        with pytest.raises(ValidationError, match='drift'):
            ModelSpec(drift='log(x - 1)', alpha=0)

    def test_unknown_key_rejected(self):
        """Test that unknown top-level keys are rejected."""
        with pytest.raises(ValidationError):
            ModelSpec(drift='0', alpha=0, diffusion='1')

    def test_tabulated_drift(self):
        """Test a tabulated drift."""
        spec = ModelSpec(drift={'x': [0.0, 1.0], 'y': [-1.0, -2.0]}, alpha=0)
        assert isinstance(spec.drift, TabulatedFunction)


class TestHints:
    """Hints accept the string sentinels."""

    def test_kappa_limit_none(self):
        """Test the "none" sentinel."""
        assert Hints(kappa_limit='None').kappa_limit == 'none'

    def test_kappa_limit_inf(self):
        """Test the "inf" sentinel."""
        assert math.isinf(Hints(kappa_limit='inf').kappa_limit)

    def test_kappa_limit_negative(self):
        """Test that a negative limit is rejected."""
        with pytest.raises(ValidationError):
            Hints(kappa_limit=-0.5)

    def test_tail_hint_values(self):
        """Test that tail hints are restricted."""
        with pytest.raises(ValidationError):
            Hints(scale_tail='maybe')


class TestNumericsConfig:
    """Numerical settings."""

    def test_ratio_order(self):
        """Test that the finite ratio must stay below the infinite ratio."""
        with pytest.raises(ValidationError, match='tail_finite_ratio'):
            NumericsConfig(tail_finite_ratio=0.8, tail_infinite_ratio=0.7)

    def test_schedule_order(self):
        """Test that the first truncation point may not exceed the cap."""
        with pytest.raises(ValidationError, match='x_max_start'):
            NumericsConfig(x_max_start=100.0, x_max_cap=50.0)

    def test_positive_tolerance(self):
        """Test that tolerances must be positive."""
        with pytest.raises(ValidationError):
            NumericsConfig(tol=0.0)


class TestTabulatedFunction:
    """Tabulated coefficients."""

    def test_unsorted(self):
        """Test that abscissae must increase."""
        with pytest.raises(ValidationError, match='strictly increasing'):
            TabulatedFunction(x=[0.0, 2.0, 1.0], y=[0.0, 0.0, 0.0])

    def test_length_mismatch(self):
        """Test that x and y must match."""
        with pytest.raises(ValidationError, match='same length'):
            TabulatedFunction(x=[0.0, 1.0], y=[0.0, 1.0, 2.0])


class TestSimConfig:
    """Simulation configuration."""

    def test_default_record_times(self):
        """Test the 16 evenly spaced default record times."""
        times = SimConfig(t_final=8.0).resolved_record_times()
        assert times.size == 16
        assert times[0] == 0.5
        assert times[-1] == 8.0

    def test_record_times_beyond_horizon(self):
        """Test that record times may not pass t_final."""
        with pytest.raises(ValidationError, match='t_final'):
            SimConfig(t_final=1.0, record_times=[0.5, 2.0])

    def test_record_times_sorted(self):
        """Test that record times must increase."""
        with pytest.raises(ValidationError, match='increasing'):
            SimConfig(t_final=2.0, record_times=[1.0, 0.5])

    def test_initial_inside_domain(self):
        """Test that starting points must lie in (0, inf)."""
        with pytest.raises(ValidationError, match='initial points'):
            SimConfig(initial=[(0.0, 1.0)])

    def test_bin_edges(self):
        """Test explicit bin edges."""
        assert SimConfig(bins=[0.0, 1.0, 3.0]).bins == [0.0, 1.0, 3.0]
        with pytest.raises(ValidationError, match='bin edges'):
            SimConfig(bins=[1.0, 0.5])


class TestLoadModelSpec:
    """Reading model files."""

    def test_load(self, write_model):
        """Test loading a valid file."""
        spec = load_model_spec(write_model('-1', hints={'kappa_limit': 0}))
        assert spec.drift == '-1'
        assert spec.hints.kappa_limit == 0.0

    def test_missing_file(self, tmp_path):
        """Test a missing file."""
        with pytest.raises(ModelSpecError, match='not found'):
            load_model_spec(tmp_path / 'absent.json')

    def test_not_json(self, tmp_path):
        """Test a file that is not JSON."""
        path = tmp_path / 'bad.json'
        path.write_text('{drift: ')
        with pytest.raises(ModelSpecError, match='not valid JSON'):
            load_model_spec(path)

    def test_invalid_model(self, tmp_path):
        """Test that validation errors are collected in the details."""
        path = tmp_path / 'bad.json'
        path.write_bytes(orjson.dumps({'drift': '0', 'kappa': '-1', 'alpha': 0}))
        with pytest.raises(ModelSpecError) as info:
            load_model_spec(path)
        assert info.value.details['errors']
        assert info.value.exit_code == 1
