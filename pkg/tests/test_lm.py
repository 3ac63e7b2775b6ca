import numpy as np
import pytest

from qcrsim.lm import levenberg_marquardt, numeric_jacobian


def rosen(x):
    return np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])


def test_rosenbrock():
    res = levenberg_marquardt(rosen, np.array([-1.2, 1.0]), max_iter=200)
    assert res.converged
    assert res.x == pytest.approx([1.0, 1.0], abs=1e-8)


def test_cost_nonincreasing():
    res = levenberg_marquardt(rosen, np.array([-1.2, 1.0]), max_iter=200)
    h = np.array(res.cost_history)
    assert np.all(np.diff(h) <= 0)


def test_linear_least_squares_matches_lstsq():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    res = levenberg_marquardt(lambda x: a @ x - y, np.zeros(4))
    ref = np.linalg.lstsq(a, y, rcond=None)[0]
    assert res.x == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_exponential_fit():
    t = np.linspace(0, 5, 40)
    y = 2.0 * np.exp(-1.3 * t) + 0.5
    res = levenberg_marquardt(lambda p: p[0] * np.exp(-p[1] * t) + p[2] - y, np.array([1.0, 0.5, 0.0]))
    assert res.x == pytest.approx([2.0, 1.3, 0.5], rel=1e-7)


def test_numeric_jacobian():
    f = lambda x: np.array([x[0] ** 2 * x[1], np.sin(x[1])])
    x = np.array([1.5, 0.3])
    j = numeric_jacobian(f, x, f(x))
    assert j == pytest.approx(np.array([[2 * 1.5 * 0.3, 1.5**2], [0.0, np.cos(0.3)]]), rel=1e-7, abs=1e-9)


def test_bounds_boundary_minimum():
    res = levenberg_marquardt(lambda x: np.array([x[0] + 3.0]), np.array([1.0]),
                              bounds=(np.array([0.0]), np.array([10.0])))
    assert res.converged
    assert res.x[0] >= 0.0


def test_non_finite_start_rejected():
    with pytest.raises(ValueError):
        levenberg_marquardt(lambda x: np.array([np.nan]), np.array([1.0]))


def test_zero_residual_start():
    res = levenberg_marquardt(lambda x: x - 2.0, np.array([2.0]))
    assert res.converged and res.iterations == 0
