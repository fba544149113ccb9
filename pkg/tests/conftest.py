import numpy as np
import pytest

from moddeconv import make_instance_1d, sample_ground_truth, synthesize_measurements
from moddeconv.seeding import derive_rng


def crandn(rng, *shape):
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z if shape else complex(z)


def random_tiny_sizes(rng):
    """Dimensions small enough for every dense oracle."""
    K = int(rng.integers(2, 5))
    M = int(rng.integers(2, 6))
    Q = int(rng.integers(K, 9))
    L = int(rng.integers(max(Q, M), 14))
    N = int(rng.integers(1, 3))
    return L, Q, M, K, N


def tiny_problem(seed, sigma=0.0):
    rng = derive_rng(seed, "tiny-problem")
    L, Q, M, K, N = random_tiny_sizes(rng)
    inst = make_instance_1d(L, Q, M, K, N, seed=int(rng.integers(2**31)))
    truth = sample_ground_truth(M, K, N, seed=int(rng.integers(2**31)))
    meas = synthesize_measurements(inst, truth, sigma=sigma,
                                   seed=int(rng.integers(2**31)))
    return inst, truth, meas


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
