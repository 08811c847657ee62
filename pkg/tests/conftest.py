import numpy as np
import pytest

from steincv import gaussian_target


def random_spd(rng, d, jitter=0.5):
    A = rng.standard_normal((d, d))
    return A @ A.T / d + jitter * np.eye(d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def gaussian_2d():
    return gaussian_target([1.0, -2.0], [[2.0, 0.6], [0.6, 1.0]])

from hypothesis import settings

settings.register_profile("steincv", derandomize=True, deadline=None)
settings.load_profile("steincv")
