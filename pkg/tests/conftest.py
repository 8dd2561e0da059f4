import numpy as np
import pytest

from zoguide.prng import derive_seed


class StubDirections:
    """Replaces the Gaussian stream with fixed vectors.

    ``by_index`` maps probe index ``i`` (seed ``derive_seed(base, i)``) to a
    vector; ``by_seed`` maps raw seeds directly.
    """

    def __init__(self, by_index=None, base=0, by_seed=None):
        self.table = {}
        for i, vec in (by_index or {}).items():
            self.table[derive_seed(base, i)] = np.asarray(vec, dtype=np.float64)
        for seed, vec in (by_seed or {}).items():
            self.table[seed] = np.asarray(vec, dtype=np.float64)
        self.calls = 0

    def __call__(self, seed, d):
        self.calls += 1
        vec = self.table[seed]
        assert vec.shape == (d,)
        return vec.copy()


def half_sq_norm(theta, batch=None):
    return 0.5 * float(np.dot(theta, theta))


def linear_loss(g):
    g = np.asarray(g, dtype=np.float64)
    return lambda theta, batch=None: float(np.dot(g, theta))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
