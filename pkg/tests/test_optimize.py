import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiml.errors import ConvergenceError, FimlError
from fiml.optimize import LbfgsOptions, lbfgs


def rosenbrock(x):
    f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
    return f, g


def test_rosenbrock():
    res = lbfgs(rosenbrock, [-1.2, 1.0], LbfgsOptions(max_iterations=500, gtol=1e-9, gtol_rel=0))
    assert res.status == "gtol"
    assert np.allclose(res.x, [1, 1], atol=1e-6)


def test_monotone_history():
    res = lbfgs(rosenbrock, [-1.2, 1.0], LbfgsOptions(max_iterations=100))
    f = [h["f"] for h in res.history]
    assert all(b < a for a, b in zip(f, f[1:]))


def test_already_optimal_stops_at_zero():
    res = lbfgs(lambda x: (float(x.dot(x)), 2 * x), np.zeros(3))
    assert res.iterations == 0 and res.status == "gtol"


def test_wrong_gradient_raises():
    with pytest.raises(ConvergenceError):
        lbfgs(lambda x: (float(x.dot(x)), -2 * x), np.ones(3))


def test_failed_trials_are_rejected():
    calls = []

    def fg(x):
        calls.append(x.copy())
        if np.any(x < 0.5):
            raise FimlError("solver failed")
        return float(np.sum((x - 0.4) ** 2)), 2 * (x - 0.4)

    res = lbfgs(fg, np.ones(2), LbfgsOptions(max_iterations=20))
    assert np.all(res.x >= 0.5)
    assert res.fun < 0.72


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_convex_quadratic_reaches_minimum(n, seed):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    H = Q @ Q.T + n * np.eye(n)
    b = rng.standard_normal(n)
    res = lbfgs(lambda x: (0.5 * x @ H @ x - b @ x, H @ x - b), np.zeros(n),
                LbfgsOptions(max_iterations=500, gtol=1e-10, gtol_rel=0))
    assert np.allclose(res.x, np.linalg.solve(H, b), atol=1e-7)
