import numpy as np
import pytest

from ftimm.machine import default_ftm7032


@pytest.fixture(scope="session")
def model():
    return default_ftm7032()


def random_matrices(shape, seed):
    """A, B, C uniform in [-1, 1], float32, fully determined by the seed."""
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, (shape.M, shape.K)).astype(np.float32)
    B = rng.uniform(-1.0, 1.0, (shape.K, shape.N)).astype(np.float32)
    C = rng.uniform(-1.0, 1.0, (shape.M, shape.N)).astype(np.float32)
    return A, B, C


def max_rel_err(out, ref):
    return float(np.max(np.abs(out - ref) / (1.0 + np.abs(ref))))
