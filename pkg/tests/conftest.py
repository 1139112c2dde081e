"""Test configuration and fixtures."""

import logging

import numpy as np
import pytest

from hatkit.core.config import get_settings
from hatkit.schemas.config import DataConfig, ModelDims
from hatkit.services.lattice import JointLattice
from hatkit.services.synth import generate_corpus
from hatkit.services.toy_model import init_params

# Configure logging
logging.basicConfig(level=logging.ERROR, force=True)


@pytest.fixture(autouse=True)
def test_settings(monkeypatch):
    """Single worker, quiet console; settings are re-read from the environment per test."""
    monkeypatch.setenv("HATKIT_JOBS", "1")
    monkeypatch.setenv("HATKIT_LOG_LEVEL", "WARNING")
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_lattice(rng):
    """Random lattice factory: make_lattice(T, labels, K)."""

    def factory(T, labels, K=4, scale=2.0):
        labels = tuple(labels)
        return JointLattice(logits=rng.standard_normal((T, len(labels) + 1, K)) * scale, labels=labels)

    return factory


@pytest.fixture
def tiny_dims():
    return ModelDims(vocab_size=3, d_h=4, d_e=3, d_p=4, d_j=5)


@pytest.fixture
def tiny_params(tiny_dims):
    return init_params(tiny_dims, seed=0)


@pytest.fixture
def tiny_data_config():
    return DataConfig(
        seed=0,
        vocab_size=3,
        num_train=6,
        num_dev=3,
        num_eval=3,
        T_range=(4, 6),
        U_range=(1, 3),
        noise_level=0.3,
        lm_corpus_size=50,
    )


@pytest.fixture
def tiny_corpus(tiny_data_config):
    return generate_corpus(tiny_data_config)


@pytest.fixture
def tiny_dataset(tiny_corpus):
    return tiny_corpus.splits["train"]


def central_difference(f, x, index, eps=1e-5):
    plus = x.copy()
    minus = x.copy()
    plus[index] += eps
    minus[index] -= eps
    return (f(plus) - f(minus)) / (2 * eps)
