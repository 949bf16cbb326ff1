"""Tests for documents, JSON rendering and CSV output."""

import math

import numpy as np
import orjson
import pytest

from qsdiff.config import ModelSpec
from qsdiff.model import DiffusionModel, TabulatedCoefficient
from qsdiff.schemas import SCHEMAS, EigenDocument
from qsdiff.serialization import (
    finite_or_none,
    model_document,
    render_json,
    to_document,
    write_csv,
    write_json,
)
from qsdiff.spectral import lambda0
from qsdiff.verdict import decide


class TestDocuments:
    """Conversion of results to documents."""

    def test_escape_verdict(self, make_model):
        """Test the document of an escape verdict."""
        document = orjson.loads(render_json(decide(make_model('1'))))
        assert document['outcome'] == 'escapes'
        assert document['mortality_rate'] == 0.0
        assert document['escape_rate'] == pytest.approx(0.5, abs=1e-6)
        assert document['qsd'] is None
        assert document['evidence']['theorem_applied'] == 'TransientLowKilling'
        assert document['evidence']['boundary']['at_infinity'] == 'natural'

    def test_infinite_sentinel(self, make_model):
        """Test that infinite killing limits are written as "inf"."""
        document = orjson.loads(render_json(decide(make_model('0', kappa='x'))))
        assert document['evidence']['kappa_liminf'] == 'inf'
        assert document['outcome'] == 'converges'
        assert len(document['qsd']['x']) == len(document['qsd']['density'])

    def test_eigen_alias(self, make_model):
        """Test that the eigenvalue is written under "lambda"."""
        document = orjson.loads(render_json(lambda0(make_model('-1'))))
        assert document['lambda'] == pytest.approx(0.5, rel=1e-6)
        assert document['l1_mass']['verdict'] == 'finite'
        assert document['l2_mass']['verdict'] == 'infinite'
        assert EigenDocument.model_validate(document).lambda_ == document['lambda']

    def test_unknown_object(self):
        """Test that objects without a document are rejected."""
        with pytest.raises(TypeError, match='No document'):
            to_document(object())

    def test_nan_becomes_null(self):
        """Test the NaN mapping used in documents."""
        assert finite_or_none(math.nan) is None
        assert finite_or_none(None) is None
        assert finite_or_none(math.inf) == math.inf


class TestModelDocument:
    """Model files written back from models."""

    def test_expression_model(self, make_model, tmp_path):
        """Test that a written model file reloads to the same model."""
        model = make_model('-1 - x', kappa='x^2 / (1 + x)', alpha=2.5)
        path = write_json(model, tmp_path / 'model.json')
        spec = ModelSpec.model_validate(orjson.loads(path.read_bytes()))
        assert spec.drift == '-1 - x'
        assert spec.kappa == 'x^2 / (1 + x)'
        assert spec.alpha == 2.5
        reloaded = DiffusionModel.from_spec(spec)
        xs = np.linspace(0.0, 5.0, 11)
        np.testing.assert_allclose(reloaded.b(xs), model.b(xs))
        np.testing.assert_allclose(reloaded.kappa(xs), model.kappa(xs))

    def test_absorbing_sentinel(self, make_model):
        """Test that an absorbing boundary is written as "inf"."""
        document = orjson.loads(render_json(make_model('-1')))
        assert document['alpha'] == 'inf'
        assert ModelSpec.model_validate(document).alpha == math.inf

    def test_tabulated_model(self):
        """Test a tabulated drift."""
        spec = ModelSpec(drift={'x': [0.0, 1.0, 2.0], 'y': [-1.0, -2.0, -3.0]}, alpha='inf')
        model = DiffusionModel.from_spec(spec)
        assert isinstance(model.drift, TabulatedCoefficient)
        document = model_document(model)
        assert document.drift.x == [0.0, 1.0, 2.0]
        assert document.drift.y == [-1.0, -2.0, -3.0]


class TestSchemas:
    """JSON Schemas of the artifacts."""

    def test_names(self):
        """Test the registered schema names."""
        assert set(SCHEMAS) == {'model', 'verdict', 'eigen', 'survivor-stats', 'verify'}

    @pytest.mark.parametrize('name', sorted(SCHEMAS))
    def test_schema_has_properties(self, name):
        """Test that every schema lists its properties."""
        schema = SCHEMAS[name].model_json_schema()
        assert schema['type'] == 'object'
        assert schema['properties']


class TestCsv:
    """CSV columns."""

    def test_shortest_round_trip_floats(self, tmp_path):
        """Test float formatting in CSV rows."""
        path = write_csv(
            tmp_path / 'phi.csv', ['x', 'phi'], [np.array([0.0, 0.1]), np.array([1.0, 1 / 3])]
        )
        assert path.read_text().splitlines() == ['x,phi', '0.0,1.0', f'0.1,{1 / 3!r}']
