import numpy as np
import pytest

from pica.signal import generate_mixing_matrix, generate_sources, mix


@pytest.fixture(scope="session")
def mixture_20k():
    """4 synthetic sources, 20000 samples, seeded mixing."""
    S = generate_sources(4, 20000, seed=3)
    A = generate_mixing_matrix(4, seed=3)
    return S, A, mix(A, S)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
