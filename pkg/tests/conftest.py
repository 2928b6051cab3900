import numpy as np
import pytest

from gpal._threads import limit_blas_threads
from gpal.gp import Hyperparameters

limit_blas_threads(1)


def random_theta(rng, ndim, noise=None):
    """Random but well-scaled hyperparameters for property tests."""
    return Hyperparameters(
        lengthscales=rng.uniform(0.3, 3.0, size=ndim),
        signal_variance=rng.uniform(0.5, 4.0),
        shape=rng.uniform(0.3, 5.0),
        noise_variance=rng.uniform(1e-4, 0.1) if noise is None else noise,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
