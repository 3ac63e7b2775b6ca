import json

import numpy as np
import pytest

from qcrsim import __version__
from qcrsim.cli import main
from qcrsim.config import table1_config, table1_path
from qcrsim.ivfit import load_iv_csv, save_iv_csv, synthetic_iv, IvDataset
from qcrsim.physics import TABLE1_JUNCTION as T
from qcrsim.rates import read_rate_csv


def run(*args):
    return main([str(a) for a in args])


def header(path):
    return path.read_text().splitlines()[0]


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_usage_error_exit_one():
    with pytest.raises(SystemExit) as exc:
        main(["rates", "--vmin", "0"])
    assert exc.value.code == 1


def test_fit_iv_roundtrip(tmp_path):
    iv = tmp_path / "iv.csv"
    assert run("synth-iv", "--output", iv) == 0
    out = tmp_path / "fit.json"
    assert run("fit-iv", "--input", iv, "--output", out) == 0
    doc = json.loads(out.read_text())
    for key, ref in [("r_t_nis_ohm", 34.5e3), ("delta_ev", 220e-6), ("gamma_dynes", 5e-4),
                     ("t_n_k", 0.28)]:
        assert doc[key] == pytest.approx(ref, rel=5e-3)
    assert __version__ in doc["provenance"]
    assert __version__ in header(iv)


def test_fit_iv_with_init(tmp_path):
    iv = tmp_path / "iv.csv"
    run("synth-iv", "--output", iv)
    init = tmp_path / "init.json"
    init.write_text(json.dumps({"r_t_nis_ohm": 40e3, "delta_ev": 250e-6, "gamma_dynes": 3e-4,
                                "t_n_k": 0.35}))
    assert run("fit-iv", "--input", iv, "--init", init, "--output", tmp_path / "f.json") == 0


def test_fit_iv_missing_file(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run("fit-iv", "--input", missing, "--output", tmp_path / "f.json") == 1
    assert str(missing) in capsys.readouterr().err


def test_fit_iv_all_zero(tmp_path):
    iv = tmp_path / "z.csv"
    v = np.linspace(-1e-3, 1e-3, 21)
    save_iv_csv(IvDataset(v, np.zeros_like(v)), iv)
    assert run("fit-iv", "--input", iv, "--output", tmp_path / "f.json") == 2


def test_rates_calibrated(tmp_path):
    out = tmp_path / "r.csv"
    assert run("rates", "--vmin", 0, "--vmax", 1.2, "--units", "gap", "--points", 241,
               "--calibrate-t1", 4.31e-6, "--output", out) == 0
    tab = read_rate_csv(out)
    assert abs(tab.t1[0] - 4.31e-6) / 4.31e-6 < 1e-9
    jp = table1_config().junction_params()
    from qcrsim.constants import E_CHARGE
    f0 = table1_config().qubit.f0_hz
    from qcrsim.constants import H_PLANCK
    window = tab.v_qcr <= 2 * jp.delta / E_CHARGE + H_PLANCK * f0 / E_CHARGE
    assert np.all(np.diff(tab.t1[window]) <= 0)
    assert "config_sha256=" + table1_config().digest() in header(out)


def test_rates_bad_ranges(tmp_path):
    assert run("rates", "--vmin", 0, "--vmax", 1e-3, "--points", 1, "--output", tmp_path / "r") == 1
    assert run("rates", "--vmin", 1e-3, "--vmax", 0, "--points", 5, "--output", tmp_path / "r") == 1


def test_rates_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        run("rates", "--vmin", 0, "--vmax", 5e-4, "--points", 41, "--output", p)
    assert a.read_bytes() == b.read_bytes()


def test_bad_config(tmp_path, capsys):
    cfg = json.loads(table1_path().read_text())
    cfg["junction"]["bogus"] = 1
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert run("rates", "--config", p, "--vmin", 0, "--vmax", 1e-3, "--points", 3,
               "--output", tmp_path / "r.csv") == 1
    assert "bogus" in capsys.readouterr().err


def test_transient_zero_amplitude(tmp_path):
    out = tmp_path / "t.csv"
    assert run("transient", "--amplitude", 0, "--length", 40e-9, "--output", out) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=2)
    assert np.all(data[:, 1] == 0) and np.all(data[:, 2] == 0)


def test_transient_droop(tmp_path):
    out = tmp_path / "t.csv"
    assert run("transient", "--amplitude", 0.8, "--length", 40e-9, "--output", out) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=2)
    cfg = table1_config()
    amp = 0.8 * 2 * cfg.junction_params().delta / 1.602176634e-19
    t_end = cfg.pulse.start_s + 40e-9 - cfg.pulse.rise_time_s
    k = np.flatnonzero(data[:, 0] == t_end)[0]
    droop = 1 - (data[k, 1] + data[k, 2]) / amp
    assert abs(droop - (1 - np.exp(-40 / 500))) < 0.01


def small_config(tmp_path, amps, lengths):
    cfg = json.loads(table1_path().read_text())
    cfg["reset"]["amplitudes_frac_2delta"] = amps
    cfg["reset"]["lengths"] = lengths
    p = tmp_path / "small.json"
    p.write_text(json.dumps(cfg))
    return p


def test_reset_sweep_single_cell(tmp_path):
    cfg = small_config(tmp_path, [0.57], [80e-9])
    assert run("reset-sweep", "--config", cfg, "--output-dir", tmp_path / "o") == 0
    rows = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
    assert rows[1] == "amplitude_frac_2delta,length_s,p_e_end,p_e_readout"
    from qcrsim.config import load_config
    from qcrsim.reset import run_reset_protocol
    rec = run_reset_protocol(load_config(cfg).reset_config(), 0.57, 80e-9)
    assert float(rows[2].split(",")[2]) == rec.p_e_end


def test_reset_sweep_partial_exit_three(tmp_path, monkeypatch):
    import qcrsim.reset as rmod
    from qcrsim.errors import SolverError

    def boom(*a, **k):
        raise SolverError("forced", 0.0)

    monkeypatch.setattr(rmod, "run_reset_protocol", boom)
    cfg = small_config(tmp_path, [0.57], [80e-9])
    assert run("reset-sweep", "--config", cfg, "--output-dir", tmp_path / "o") == 3
    doc = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert doc["partial"] is True and doc["min_p_e"] is None


def test_reset_sweep_threads_env(tmp_path, monkeypatch):
    cfg = small_config(tmp_path, [0.57, 0.77], [10e-9, 30e-9])
    run("reset-sweep", "--config", cfg, "--output-dir", tmp_path / "a")
    monkeypatch.setenv("QCRSIM_THREADS", "2")
    run("reset-sweep", "--config", cfg, "--output-dir", tmp_path / "b")
    for name in ("sweep.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_iv_seeded(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("synth-iv", "--noise", 0.01, "--seed", 3, "--output", a)
    run("synth-iv", "--noise", 0.01, "--seed", 3, "--output", b)
    assert a.read_bytes() == b.read_bytes()
    assert len(load_iv_csv(a)) == 101
