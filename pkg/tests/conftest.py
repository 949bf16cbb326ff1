"""Shared fixtures for the qsdiff test suite."""

import logging
import math

import orjson
import pytest

from qsdiff.exceptions import DefaultFormatter, QsdError
from qsdiff.logging import PACKAGE_LOGGER
from qsdiff.model import DiffusionModel


@pytest.fixture
def make_model():
    """Build a model from expression strings; absorbing at 0 by default."""

    def factory(drift, kappa='0', alpha=math.inf, **kwargs):
        return DiffusionModel.from_expressions(drift, kappa, alpha, **kwargs)

    return factory


@pytest.fixture
def write_model(tmp_path):
    """Write a model file and return its path."""

    def factory(drift, kappa='0', alpha='inf', name='model.json', **extra):
        path = tmp_path / name
        document = {'drift': drift, 'kappa': kappa, 'alpha': alpha, **extra}
        path.write_bytes(orjson.dumps(document))
        return path

    return factory


@pytest.fixture(autouse=True)
def _reset_package_state():
    yield
    QsdError.set_formatter(DefaultFormatter())
    package_logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in package_logger.handlers:
        handler.close()
    package_logger.handlers.clear()
    package_logger.propagate = True
    package_logger.setLevel(logging.NOTSET)
