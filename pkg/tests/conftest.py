import numpy as np
import pytest

from anderson1d.disorder import Bernoulli, DisorderSpec, Discrete, Uniform


@pytest.fixture
def free_spec():
    return DisorderSpec(Discrete((0.0,), (1.0,)), 0.0, 0)


@pytest.fixture
def bernoulli8():
    return DisorderSpec(Bernoulli(0.5), 8.0, 11)


@pytest.fixture
def uniform1():
    return DisorderSpec(Uniform(0.0, 1.0), 1.0, 5)


def dense_tridiag(diag):
    n = len(diag)
    return np.diag(diag) + np.eye(n, k=1) + np.eye(n, k=-1)
