import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest

from gradcf.data import prepare
from gradcf.engine import Hyperparameters
from gradcf.network import NeuralNet, train_network
from gradcf.synthetic import make_blobs, make_linear_teacher


@pytest.fixture(scope="session")
def blobs():
    """Bundled binary benchmark: micro-mode mixture, 4 cont + 5 cat features."""
    frame, schema = make_blobs(seed=0)
    dataset = prepare(frame, schema, seed=0)
    return dataset


@pytest.fixture(scope="session")
def blobs_model(blobs):
    net, accuracy = train_network(blobs, epochs=40, seed=0)
    assert accuracy["test"] >= 0.95
    return net


@pytest.fixture(scope="session")
def teacher():
    """Linear-sigmoid teacher with a known importance ordering."""
    frame, schema, weights = make_linear_teacher(seed=0)
    dataset = prepare(frame, schema, seed=0)
    net = NeuralNet([np.asarray(weights)[:, None]], [np.zeros(1)], "sigmoid")
    return dataset, net, np.asarray(weights)


@pytest.fixture
def fast_hp():
    """Small-budget hyperparameters for unit tests of the engine."""
    return Hyperparameters(max_iterations=200, max_perturbations=1, seed=0)
