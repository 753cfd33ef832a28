import numpy as np
import pytest
import scipy.linalg


def inertia(A):
    """Independent Morse-index oracle: negative count of the LDL^T block diagonal.

    Sylvester's law makes the inertia of D equal to that of A, and the
    Bunch-Kaufman factorisation shares no code with the eigen-solver path.
    """
    _, d, _ = scipy.linalg.ldl(np.asarray(A, dtype=float))
    return int(np.sum(np.linalg.eigvalsh(d) < 0))


def random_symmetric(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) * scale
    return 0.5 * (a + a.T)


def random_invertible(rng, n, gap=1e-3):
    while True:
        a = random_symmetric(rng, n)
        if np.min(np.abs(np.linalg.eigvalsh(a))) > gap:
            return a


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
