import math

import numpy as np
import pytest
from scipy import integrate

from qcrsim.errors import IntegrationError
from qcrsim.quadrature import NODES, W_GAUSS, W_KRONROD, integrate_batch, integrate_fixed


def test_rule_weights():
    assert W_KRONROD.sum() == pytest.approx(2.0, abs=1e-14)
    assert W_GAUSS.sum() == pytest.approx(2.0, abs=1e-14)
    # K21 integrates x^30 exactly, G10 integrates x^18
    assert (NODES**30) @ W_KRONROD == pytest.approx(2 / 31, rel=1e-12)
    assert (NODES**18) @ W_GAUSS == pytest.approx(2 / 19, rel=1e-12)


def test_polynomial_single_pass():
    res = integrate_batch(lambda x, o: x**5 - 3 * x**2, [np.array([0.0, 2.0])])
    assert res.value[0] == pytest.approx(64 / 6 - 8, rel=1e-14)
    assert res.n_intervals[0] == 1


def test_near_singular_peak():
    eps = 1e-12
    res = integrate_batch(lambda x, o: 1 / np.sqrt(np.abs(x - 1.0) + eps),
                          [np.array([0.0, 1.0, 3.0])], rtol=1e-10)
    exact = 2 * (math.sqrt(1 + eps) - math.sqrt(eps)) + 2 * (math.sqrt(2 + eps) - math.sqrt(eps))
    assert res.value[0] == pytest.approx(exact, rel=1e-9)


def test_batch_owners_independent():
    k = np.array([1.0, 5.0, 20.0])

    def f(x, o):
        return np.cos(k[o][:, None] * x)

    brk = [np.array([0.0, 3.0])] * 3
    batch = integrate_batch(f, brk, rtol=1e-10)
    for i in range(3):
        single = integrate_batch(lambda x, o: np.cos(k[i] * x), [brk[i]], rtol=1e-10)
        assert batch.value[i] == single.value[0]
        assert batch.value[i] == pytest.approx(math.sin(3 * k[i]) / k[i], rel=1e-9)


def test_against_scipy_quad():
    def f(x):
        return np.exp(-x * x) * np.log1p(x * x)
    ref = integrate.quad(f, -4, 4, epsabs=0, epsrel=1e-13)[0]
    res = integrate_batch(lambda x, o: f(x), [np.array([-4.0, 4.0])], rtol=1e-12)
    assert res.value[0] == pytest.approx(ref, rel=1e-11)
    assert res.error[0] <= 1e-12 * abs(res.value[0])


def test_fixed_partition_reuse():
    res = integrate_batch(lambda x, o: np.exp(-x), [np.array([0.0, 10.0])])
    again = integrate_fixed(lambda x, o: np.exp(-x), res.partition)
    assert again[0] == pytest.approx(res.value[0], rel=1e-14)


def test_errors():
    with pytest.raises(ValueError):
        integrate_batch(lambda x, o: x, [np.array([1.0, 0.0])])
    with pytest.raises(IntegrationError):
        integrate_batch(lambda x, o: np.sign(np.sin(1 / (x + 1e-300))), [np.array([0.0, 1.0])],
                        rtol=1e-14, max_intervals=50)
    with pytest.raises(IntegrationError):
        integrate_batch(lambda x, o: x * np.nan, [np.array([0.0, 1.0])])
