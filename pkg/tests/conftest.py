import numpy as np
import pytest

from svlab import tensor as T


@pytest.fixture(autouse=True)
def nan_guard():
    """Run every test with the NaN debug check armed."""
    T.set_debug_nan(True)
    yield
    T.set_debug_nan(False)


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Finite-difference gradient oracle of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-8)
    return float(np.max(np.abs(a - b))) / scale
