import numpy as np
import pytest

from wlboot.process import ArModelSpec

VAR2 = ArModelSpec(
    np.zeros(2),
    np.array([[[0.9, 0.0], [-0.5, -0.7]], [[-0.2, 0.0], [0.8, -0.1]]]),
    np.array([[1.0, 0.5], [0.5, 1.0]]),
)


def random_stable_model(rng, n=None, p=None, max_radius=0.95):
    """Random VAR(p) with spectral radius below ``max_radius``."""
    n = n or int(rng.integers(1, 4))
    p = p or int(rng.integers(1, 4))
    while True:
        phis = rng.normal(scale=0.4, size=(p, n, n))
        a = rng.normal(size=(n, n))
        model = ArModelSpec(rng.normal(size=n), phis, a @ a.T + 0.1 * np.eye(n))
        if model.spectral_radius < max_radius:
            return model


@pytest.fixture
def var2():
    return VAR2
