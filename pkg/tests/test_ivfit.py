import json
import math

import numpy as np
import pytest

from qcrsim.constants import E_CHARGE, K_B
from qcrsim.errors import DatasetError, ParseError
from qcrsim.ivfit import (FitOptions, IvDataset, fit_iv, initial_guess, load_fit_json,
                          load_iv_csv, model_sinis_current, save_fit_json, save_iv_csv,
                          synthetic_iv)
from qcrsim.physics import TABLE1_JUNCTION as T, nis_current

D = T.delta
TRUTH = np.array([T.r_t_nis, T.delta, T.gamma_dynes, T.t_n])
INIT = T.replace(r_t_nis=1.3 * T.r_t_nis, delta=1.3 * T.delta, gamma_dynes=1.3 * T.gamma_dynes,
                 t_n=1.3 * T.t_n)


def as_vec(jp):
    return np.array([jp.r_t_nis, jp.delta, jp.gamma_dynes, jp.t_n])


@pytest.fixture(scope="module")
def noiseless_fit():
    return fit_iv(synthetic_iv(T), INIT)


def test_dataset_invariants():
    with pytest.raises(DatasetError):
        IvDataset(np.arange(5.0), np.arange(5.0))
    with pytest.raises(DatasetError):
        IvDataset(np.ones(10), np.arange(10.0))
    with pytest.raises(DatasetError):
        IvDataset(np.arange(10.0), np.r_[np.arange(9.0), np.inf])
    ds = IvDataset.from_points([(k, 2 * k) for k in range(8)])
    assert len(ds) == 8


def test_model_zero_and_half_bias():
    assert model_sinis_current(0.0, T) == 0.0
    cold = T.replace(gamma_dynes=1e-9, t_n=0.005)
    v = 10 * D / E_CHARGE
    assert model_sinis_current(2 * v, cold) == pytest.approx(nis_current(v, cold), rel=1e-15)
    assert model_sinis_current(2 * v, cold) == pytest.approx(63.45e-9, rel=5e-3)


def test_onset_curvature_near_gap():
    v = np.linspace(1.5, 2.5, 2001) * D / E_CHARGE
    i = model_sinis_current(v, T)
    d2 = np.abs(np.gradient(np.gradient(i, v), v))
    v_peak = v[np.argmax(d2)]
    assert abs(v_peak - 2 * D / E_CHARGE) <= 4 * K_B * T.t_n / E_CHARGE


def test_noiseless_recovery(noiseless_fit):
    res = noiseless_fit
    assert res.converged
    assert np.all(np.abs(as_vec(res.params) / TRUTH - 1) < 5e-3)
    assert res.residual_rms >= 0


def test_covariance_psd(noiseless_fit):
    res = fit_iv(synthetic_iv(T, noise=0.01, seed=3), INIT)
    c = res.covariance
    assert np.allclose(c, c.T)
    assert np.all(np.linalg.eigvalsh(c / np.outer(res.stderr, res.stderr)) > -1e-9)
    assert np.all(np.diag(c) >= 0)


def test_noisy_recovery_within_three_sigma():
    res = fit_iv(synthetic_iv(T, noise=0.01, seed=0), INIT)
    assert res.converged
    z = (as_vec(res.params) - TRUTH) / res.stderr
    assert np.all(np.abs(z) < 3)


def test_cost_nonincreasing_within_passes():
    res = fit_iv(synthetic_iv(T, noise=0.01, seed=1), INIT)
    h = np.array(res.cost_history)
    # a reweighting pass restarts the sequence with new weights
    drops = np.diff(h)
    assert np.sum(drops > 0) <= FitOptions().reweight


def test_zero_currents_not_converged():
    v = np.linspace(-1e-3, 1e-3, 21)
    res = fit_iv(IvDataset(v, np.zeros_like(v)))
    assert not res.converged
    T.replace()  # params still satisfy the invariants
    assert res.params.gamma_dynes < 1 and res.params.r_t_nis > 0


def test_no_subgap_points_flags_gamma():
    full = synthetic_iv(T, n_points=201)
    keep = np.abs(full.voltage) >= D / E_CHARGE * 1.2
    res = fit_iv(IvDataset(full.voltage[keep], full.current[keep]), INIT)
    assert res.gamma_unbounded
    assert math.isinf(res.covariance[2, 2])
    assert res.to_dict()["covariance"][2][2] is None


def test_stderr_scales_inverse_sqrt_n():
    a = fit_iv(synthetic_iv(T, n_points=101, noise=0.01, seed=11), INIT)
    b = fit_iv(synthetic_iv(T, n_points=404, noise=0.01, seed=11), INIT)
    ratio = a.stderr / b.stderr
    assert np.all(np.abs(ratio / 2 - 1) < 0.3)


def test_initial_guess_heuristic():
    g = initial_guess(synthetic_iv(T))
    assert g.r_t_nis == pytest.approx(T.r_t_nis, rel=0.1)
    assert g.delta == pytest.approx(T.delta, rel=0.1)
    assert g.gamma_dynes == 1e-4 and g.t_n == 0.1


def test_fit_without_init():
    res = fit_iv(synthetic_iv(T))
    assert res.converged
    assert np.all(np.abs(as_vec(res.params) / TRUTH - 1) < 5e-3)


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    ds = IvDataset(rng.normal(size=1000), rng.normal(size=1000) * 1e-9)
    path = tmp_path / "iv.csv"
    save_iv_csv(ds, path, "comment")
    back = load_iv_csv(path)
    assert np.array_equal(back.voltage, ds.voltage)
    assert np.array_equal(back.current, ds.current)


def test_csv_errors(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("voltage_V,current_A\n")
    with pytest.raises(DatasetError):
        load_iv_csv(p)
    p.write_text("# c\nvoltage_V,current_A\n1,2\n3,abc\n")
    with pytest.raises(ParseError) as exc:
        load_iv_csv(p)
    assert exc.value.line == 4 and ":4:" in str(exc.value)
    p.write_text("volts,amps\n1,2\n")
    with pytest.raises(ParseError):
        load_iv_csv(p)
    with pytest.raises(DatasetError) as exc:
        load_iv_csv(tmp_path / "missing.csv")
    assert "missing.csv" in str(exc.value)


def test_fit_json(tmp_path, noiseless_fit):
    path = tmp_path / "fit.json"
    save_fit_json(noiseless_fit, path)
    doc = load_fit_json(path)
    assert set(doc) == {"r_t_nis_ohm", "delta_ev", "gamma_dynes", "t_n_k", "covariance",
                        "residual_rms_a", "converged", "iterations"}
    assert doc["delta_ev"] == pytest.approx(220e-6, rel=5e-3)
    json.loads(path.read_text())


def test_uniform_weighting_option():
    res = fit_iv(synthetic_iv(T), INIT, FitOptions(weighting="uniform"))
    assert res.converged
    with pytest.raises(ValueError):
        fit_iv(synthetic_iv(T), INIT, FitOptions(weighting="bogus"))


@pytest.mark.slow
def test_identifiability_random_truths():
    rng = np.random.default_rng(2024)
    from qcrsim.physics import JunctionParams
    for _ in range(20):
        r = 10 ** rng.uniform(math.log10(5e3), math.log10(2e5))
        d = rng.uniform(100e-6, 400e-6)
        g = 10 ** rng.uniform(-6, -2)
        t = rng.uniform(0.05, 0.5)
        truth = JunctionParams.from_ev(r, d, g, t)
        f = np.exp(rng.uniform(-math.log(2), math.log(2), 4))
        init = JunctionParams.from_ev(r * f[0], d * f[1], g * f[2], t * f[3])
        res = fit_iv(synthetic_iv(truth), init)
        assert res.converged, res.message
        assert np.all(np.abs(as_vec(res.params) / as_vec(truth) - 1) < 5e-3)
