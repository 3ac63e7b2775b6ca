"""``qcrsim`` command-line entry point.

Exit codes: 0 ok, 1 usage or I/O error, 2 fit did not converge,
3 sweep finished with failed cells.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import RunConfig, load_config, table1_path
from .constants import E_CHARGE
from .errors import QcrError
from .ivfit import (FitOptions, fit_iv, load_iv_csv, save_fit_json, save_iv_csv, synthetic_iv)
from .physics import JunctionParams
from .rates import calibrate_kappa, t1_qcr_curve, write_rate_csv
from .reset import sweep_protocol
from .transient import PulseSpec, instantaneous_t1, simulate_transient, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage, which would collide with "not converged"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _provenance(command: str, digest: str) -> str:
    return f"qcrsim {__version__} command={command} config_sha256={digest}"


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _config(args) -> RunConfig:
    path = args.config or table1_path()
    try:
        return load_config(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except ValidationError as exc:
        raise UsageError(f"invalid config {path}:\n{exc}") from exc


def _parse_init(path) -> JunctionParams:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read init file {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return JunctionParams.from_ev(doc["r_t_nis_ohm"], doc["delta_ev"], doc["gamma_dynes"],
                                      doc["t_n_k"])
    except KeyError as exc:
        raise UsageError(f"{path}: missing key {exc}") from exc


def cmd_fit_iv(args) -> int:
    data = load_iv_csv(args.input)
    init = _parse_init(args.init) if args.init else None
    res = fit_iv(data, init, FitOptions(max_iter=args.max_iter))
    digest = _file_digest(args.input)
    save_fit_json(res, args.output,
                  {"provenance": _provenance("fit-iv", digest), "message": res.message,
                   "gamma_unbounded": res.gamma_unbounded})
    if not res.converged:
        print(f"fit did not converge: {res.message}", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def _volts(value, units, cfg: RunConfig):
    if units == "gap":
        return value * 2 * cfg.junction_params().delta / E_CHARGE
    return value


def cmd_rates(args) -> int:
    cfg = _config(args)
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    vmin, vmax = _volts(args.vmin, args.units, cfg), _volts(args.vmax, args.units, cfg)
    if not vmax > vmin:
        raise UsageError("--vmax must exceed --vmin")
    p = cfg.qubit_params()
    quad = cfg.quad()
    if args.calibrate_t1 is not None:
        p = p.replace(kappa=calibrate_kappa(p, args.calibrate_t1, quad))
    table = t1_qcr_curve(np.linspace(vmin, vmax, args.points), p, quad)
    write_rate_csv(table, args.output, _provenance("rates", cfg.digest()) + f" kappa={p.kappa!r}")
    return EXIT_OK


def cmd_transient(args) -> int:
    cfg = _config(args)
    if args.length <= 0:
        raise UsageError("--length must be positive")
    p = cfg.qubit_params()
    quad = cfg.quad()
    calib = args.calibrate_t1 if args.calibrate_t1 is not None else cfg.reset.calibrate_t1_off_s
    if calib is not None:
        p = p.replace(kappa=calibrate_kappa(p, calib, quad))
    pulse = PulseSpec.from_gap_fraction(args.amplitude, p.jp, args.length,
                                        cfg.pulse.start_s, cfg.pulse.rise_time_s)
    horizon = cfg.pulse.horizon_s or pulse.end + max(args.length, 20e-9)
    n = cfg.numerics
    trace = simulate_transient(pulse, cfg.circuit_params(), horizon, n.ode_rtol, n.max_step_s,
                               quad=quad)
    rates = instantaneous_t1(trace, p, quad, n.rate_method)
    write_trace_csv(trace, rates, args.output, _provenance("transient", cfg.digest()))
    return EXIT_OK


def cmd_reset_sweep(args) -> int:
    cfg = _config(args)
    out = args.output_dir or cfg.output_dir
    res = sweep_protocol(cfg.reset_config(), args.workers)
    res.write(out, _provenance("reset-sweep", cfg.digest()))
    if res.partial:
        for key, msg in res.failures.items():
            print(f"cell {key} failed: {msg}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_synth_iv(args) -> int:
    cfg = _config(args)
    seed = cfg.seed if args.seed is None else args.seed
    data = synthetic_iv(cfg.junction_params(), args.points, args.span, args.noise, seed, cfg.quad())
    save_iv_csv(data, args.output,
                _provenance("synth-iv", cfg.digest()) + f" noise={args.noise!r} seed={seed}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qcrsim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qcrsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fit-iv", help="fit Dynes parameters to a SINIS I-V curve")
    s.add_argument("--input", required=True, help="CSV with header voltage_V,current_A")
    s.add_argument("--init", help="JSON initial guess (same keys as the output)")
    s.add_argument("--output", required=True)
    s.add_argument("--max-iter", type=int, default=100)
    s.set_defaults(func=cmd_fit_iv)

    s = sub.add_parser("rates", help="QCR-induced qubit rates versus bias")
    s.add_argument("--config", help="run config JSON (default: packaged table1.json)")
    s.add_argument("--vmin", type=float, required=True)
    s.add_argument("--vmax", type=float, required=True)
    s.add_argument("--points", type=int, required=True)
    s.add_argument("--units", choices=["V", "gap"], default="V",
                   help="bias in volts or as a fraction of 2*delta/e")
    s.add_argument("--calibrate-t1", type=float, help="scale rates so T1(V=0) equals this (s)")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_rates)

    s = sub.add_parser("transient", help="junction voltages and rates during one pulse")
    s.add_argument("--config")
    s.add_argument("--amplitude", type=float, required=True, help="fraction of 2*delta/e")
    s.add_argument("--length", type=float, required=True, help="pulse length (s)")
    s.add_argument("--calibrate-t1", type=float,
                   help="override reset.calibrate_t1_off_s from the config")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_transient)

    s = sub.add_parser("reset-sweep", help="amplitude x length reset sweep")
    s.add_argument("--config")
    s.add_argument("--output-dir", help="default: output_dir from the config")
    s.add_argument("--workers", type=int, help="default: QCRSIM_THREADS or 1")
    s.set_defaults(func=cmd_reset_sweep)

    s = sub.add_parser("synth-iv", help="write a synthetic SINIS I-V curve")
    s.add_argument("--config")
    s.add_argument("--points", type=int, default=101)
    s.add_argument("--span", type=float, default=3.0, help="half-range in units of 2*delta/e")
    s.add_argument("--noise", type=float, default=0.0, help="relative Gaussian noise")
    s.add_argument("--seed", type=int, help="default: seed from the config")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_synth_iv)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qcrsim: {exc}", file=sys.stderr)
    except (QcrError, ValueError, OSError) as exc:
        print(f"qcrsim: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
