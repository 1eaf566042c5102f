import numpy as np
import pytest

from dotseg.network import new_model


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_model():
    return new_model(depth=2, width=4, seed=42)


@pytest.fixture
def tiny_image(rng):
    return rng.random((1, 3, 16, 16), dtype=np.float32)
