import numpy as np
import pytest

from spanreg import tensor


@pytest.fixture
def double_precision():
    """Run a test at float64; gradient comparisons need the headroom."""
    old = tensor.precision()
    tensor.set_precision("double")
    yield
    tensor.set_precision(old)


@pytest.fixture
def single_precision():
    old = tensor.precision()
    tensor.set_precision("single")
    yield
    tensor.set_precision(old)


def rand(rng, *shape):
    return rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
