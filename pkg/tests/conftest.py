import numpy as np
import pytest

from lca.activation import soft_threshold
from lca.model import Dictionary, Problem, dct_basis, generate_instance

BENCHMARK = dict(m=256, n=512, s=5, noise_std=0.0062, lam=0.025)


@pytest.fixture(scope="session")
def benchmark_instance():
    return generate_instance(seed=0, **BENCHMARK)


@pytest.fixture
def small_instance():
    return generate_instance(seed=7, m=4, n=8, s=2, noise_std=0.01, lam=0.1)


@pytest.fixture
def soft():
    return soft_threshold(0.025)


def orthonormal_problem(m=8, seed=0, lam=0.1):
    """DCT basis alone; y drawn at random."""
    rng = np.random.default_rng(seed)
    d = Dictionary(dct_basis(m))
    return Problem(d, rng.normal(scale=0.5, size=m), lam)
