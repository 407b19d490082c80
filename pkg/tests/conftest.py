import numpy as np
import pytest

from lidarcal.geom import exp_so3


def random_rotation(rng) -> np.ndarray:
    """Uniform-ish random rotation from a random tangent vector."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, np.pi - 0.1)
    return exp_so3(axis * angle)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
