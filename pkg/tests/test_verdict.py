"""Tests for verdicts and the h-transform."""

import numpy as np
import pytest

from qsdiff.exceptions import PreconditionViolated
from qsdiff.spectral import lambda_n
from qsdiff.status import EXIT_OK, EXIT_UNDETERMINED
from qsdiff.verdict import Outcome, TheoremTag, decide, htransform


class TestDecide:
    """Classification of the conditioned process."""

    def test_recurrent_low_killing(self, make_model):
        """Test b = -1 without killing."""
        verdict = decide(make_model('-1'))
        assert verdict.outcome is Outcome.CONVERGES
        assert verdict.evidence.theorem_applied is TheoremTag.RECURRENT_LOW_KILLING
        assert verdict.mortality_rate == pytest.approx(0.5, rel=1e-6)
        assert verdict.qsd is not None
        assert verdict.exit_code == EXIT_OK

    def test_weak_negative_drift(self, make_model):
        """Test b = -1/2, whose qsd x e^{-x/2} / 4 peaks away from 0."""
        verdict = decide(make_model('-0.5'))
        assert verdict.outcome is Outcome.CONVERGES
        assert verdict.evidence.theorem_applied is TheoremTag.RECURRENT_LOW_KILLING
        assert verdict.mortality_rate == pytest.approx(0.125, rel=1e-6)
        assert verdict.qsd(2.0) == pytest.approx(0.5 * np.exp(-1.0), rel=1e-2)

    def test_transient_escapes(self, make_model):
        """Test b = +1 without killing."""
        verdict = decide(make_model('1'))
        assert verdict.outcome is Outcome.ESCAPES
        assert verdict.evidence.theorem_applied is TheoremTag.TRANSIENT_LOW_KILLING
        assert verdict.mortality_rate == 0.0
        assert verdict.escape_rate == pytest.approx(0.5, abs=1e-6)
        assert verdict.qsd is None

    def test_entrance_boundary(self, make_model):
        """Test that b = -x^2 comes down from infinity."""
        verdict = decide(make_model('-x^2'))
        assert verdict.outcome is Outcome.CONVERGES
        assert verdict.evidence.theorem_applied is TheoremTag.ENTRANCE_BOUNDARY

    def test_high_killing(self, make_model):
        """Test a killing rate growing to infinity."""
        verdict = decide(make_model('0', kappa='x'))
        assert verdict.outcome is Outcome.CONVERGES
        assert verdict.evidence.theorem_applied is TheoremTag.HIGH_KILLING
        assert verdict.evidence.kappa_liminf == np.inf

    def test_borderline_is_undetermined(self, make_model):
        """Test a constant killing rate equal to lambda0."""
        verdict = decide(make_model('0', kappa='1', alpha=0.0))
        assert verdict.outcome is Outcome.UNDETERMINED
        assert 'open' in verdict.reason
        assert verdict.exit_code == EXIT_UNDETERMINED

    def test_no_killing_mechanism(self, make_model):
        """Test reflection at 0 without killing."""
        verdict = decide(make_model('-1', alpha=0.0))
        assert verdict.outcome is Outcome.UNDETERMINED
        assert verdict.reason == 'no killing mechanism'
        assert verdict.evidence.lambda0 is None

    def test_singular_zero(self, make_model):
        """Test that a drift like 1/x is rejected."""
        with pytest.raises(PreconditionViolated, match='regular'):
            decide(make_model('1 / x'))

    def test_inconclusive_tail_is_noted(self, make_model):
        """Test that an unresolved scale tail is carried as a note."""
        verdict = decide(make_model('0.75 / (1 + x)'))
        assert any('boundary classification' in note for note in verdict.notes)
        assert verdict.evidence.boundary is None


class TestHTransform:
    """Conditioning on absorption."""

    @pytest.mark.parametrize('mu', [1.0, 2.0])
    def test_constant_drift_flips(self, make_model, mu):
        """Test that b = +mu becomes b = -mu."""
        result = htransform(make_model(str(mu)))
        assert not result.trivial
        xs = np.linspace(0.01, 20.0, 200)
        np.testing.assert_allclose(np.asarray(result.model.b(xs), float), -mu, atol=1e-8)

    @pytest.mark.parametrize('mu', [1.0, 2.0])
    def test_bottom_of_spectrum_kept(self, make_model, mu):
        """Test that lambda0 is unchanged by the transform."""
        model = make_model(str(mu))
        transformed = htransform(model).model
        assert lambda_n(transformed, 0) == pytest.approx(lambda_n(model, 0), rel=1e-6)

    def test_recurrent_strict(self, make_model):
        """Test that strict mode rejects a recurrent process."""
        with pytest.raises(PreconditionViolated, match='recurrent'):
            htransform(make_model('-1'))

    def test_recurrent_lenient(self, make_model):
        """Test that lenient mode returns a recurrent process unchanged."""
        model = make_model('-1')
        result = htransform(model, strict=False)
        assert result.trivial
        assert result.model is model

    def test_killing_rejected(self, make_model):
        """Test that a killed process is rejected."""
        with pytest.raises(PreconditionViolated, match='kappa = 0'):
            htransform(make_model('1', kappa='0.5'))

    def test_reflection_rejected(self, make_model):
        """Test that a reflecting boundary is rejected."""
        with pytest.raises(PreconditionViolated, match='absorbing'):
            htransform(make_model('1', alpha=0.0))
