"""Qubit population under QCR reset pulses.

The excited-state probability obeys
``dP/dt = -(G10 + G01 + G_int) P + G01``, integrated exactly on each
interval of the transient grid with the rates averaged over the interval.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateError, QcrError
from .lm import levenberg_marquardt
from .physics import DEFAULT_QUAD, QuadOptions
from .rates import QcrQubitParams, qubit_rates
from .transient import (CircuitParams, PulseSpec, TransientTrace, instantaneous_t1,
                        simulate_transient)


@dataclass(frozen=True)
class RateSchedule:
    t: np.ndarray
    gamma10: np.ndarray
    gamma01: np.ndarray

    @classmethod
    def constant(cls, gamma10, gamma01, horizon, n=2):
        t = np.linspace(0.0, horizon, max(n, 2)) if horizon > 0 else np.array([0.0, 1e-30])
        return cls(t, np.full(t.size, float(gamma10)), np.full(t.size, float(gamma01)))


@dataclass(frozen=True)
class PopulationCurve:
    t: np.ndarray
    p_e: np.ndarray

    def at(self, t):
        return float(np.interp(t, self.t, self.p_e))


def propagate_population(schedule: RateSchedule, extra_down_rate: float, p0: float,
                         horizon: float) -> PopulationCurve:
    """Excited population on the schedule's grid over ``[0, horizon]``."""
    if not 0.0 <= p0 <= 1.0:
        raise ValueError("p0 must lie in [0, 1]")
    if not extra_down_rate >= 0:
        raise ValueError("extra_down_rate must be nonnegative")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    t = np.asarray(schedule.t, dtype=float)
    g10 = np.asarray(schedule.gamma10, dtype=float)
    g01 = np.asarray(schedule.gamma01, dtype=float)
    if t.size == 0 or t[0] > 0 or t[-1] < horizon:
        raise ValueError("rate schedule does not cover [0, horizon]")
    if np.any(np.diff(t) <= 0):
        raise ValueError("rate schedule times must be strictly increasing")
    if np.any(g10 < 0) or np.any(g01 < 0) or not (np.all(np.isfinite(g10)) and np.all(np.isfinite(g01))):
        raise ValueError("rates must be finite and nonnegative")
    if horizon == 0:
        return PopulationCurve(np.array([0.0]), np.array([float(p0)]))

    inner = (t > 0) & (t < horizon)
    grid = np.concatenate([[0.0], t[inner], [horizon]])
    r10 = np.interp(grid, t, g10)
    r01 = np.interp(grid, t, g01)
    dt = np.diff(grid)
    m10 = 0.5 * (r10[1:] + r10[:-1])
    m01 = 0.5 * (r01[1:] + r01[:-1])
    gtot = m10 + m01 + extra_down_rate
    decay = np.exp(-gtot * dt)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_ss = np.where(gtot > 0, m01 / gtot, 0.0)
    p = np.empty(grid.size)
    p[0] = p0
    for k in range(dt.size):
        p[k + 1] = p_ss[k] + (p[k] - p_ss[k]) * decay[k]
    return PopulationCurve(grid, p)


@dataclass(frozen=True)
class ResetConfig:
    """Reset protocol: pi pulse ends at t = 0, the QCR pulse starts at
    ``pulse_start`` and readout happens at ``readout_delay``."""

    p: QcrQubitParams
    cp: CircuitParams
    intrinsic_t1: float = 1.74e-6
    p0: float = 1.0
    readout_delay: float = 400e-9
    amplitudes: tuple = (0.37, 0.57, 0.77)
    lengths: tuple = tuple(np.geomspace(2e-9, 350e-9, 20).tolist())
    pulse_start: float = 0.0
    rise_time: float = 0.5e-9
    tol: float = 1e-6
    max_step: Optional[float] = 0.5e-9
    rate_method: str = "auto"
    quad: QuadOptions = DEFAULT_QUAD

    def __post_init__(self):
        if not self.intrinsic_t1 > 0:
            raise ValueError("intrinsic_t1 must be positive")
        if not 0 <= self.p0 <= 1:
            raise ValueError("p0 must lie in [0, 1]")
        if not self.readout_delay > 0:
            raise ValueError("readout_delay must be positive")
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        for length in self.lengths:
            if not 0 < length <= self.readout_delay - self.pulse_start:
                raise ValueError(f"pulse length {length} must lie in (0, readout_delay]")
        if any(not math.isfinite(a) for a in self.amplitudes):
            raise ValueError("amplitudes must be finite")

    def intrinsic_down_rate(self) -> float:
        """Extra down-rate making the QCR-off lifetime equal ``intrinsic_t1``."""
        g10, g01 = qubit_rates(0.0, self.p, self.quad)
        return max(0.0, 1.0 / self.intrinsic_t1 - (g10 + g01))


@dataclass
class ResetRecord:
    amplitude: float
    length: float
    curve: PopulationCurve
    p_e_end: float
    p_e_readout: float
    trace: Optional[TransientTrace] = None


def run_reset_protocol(cfg: ResetConfig, amplitude: float, length: float,
                       trace: Optional[TransientTrace] = None, keep_trace: bool = False) -> ResetRecord:
    """One protocol shot.  ``amplitude`` is a fraction of 2 delta / e.

    A supplied ``trace`` replaces the circuit simulation (forced junction
    voltages); it must cover ``[0, readout_delay]``.
    """
    pulse = PulseSpec.from_gap_fraction(amplitude, cfg.p.jp, length, cfg.pulse_start, cfg.rise_time)
    try:
        if trace is None:
            trace = simulate_transient(pulse, cfg.cp, cfg.readout_delay, cfg.tol, cfg.max_step,
                                       quad=cfg.quad)
        rates = instantaneous_t1(trace, cfg.p, cfg.quad, cfg.rate_method)
        sched = RateSchedule(rates.t, rates.gamma10, rates.gamma01)
        curve = propagate_population(sched, cfg.intrinsic_down_rate(), cfg.p0, cfg.readout_delay)
    except QcrError as exc:
        raise type(exc)(f"amplitude {amplitude}, length {length}: {exc}") from exc
    return ResetRecord(amplitude, length, curve, curve.at(pulse.end), float(curve.p_e[-1]),
                       trace if keep_trace else None)


@dataclass
class ExpFit:
    t1: float
    offset: float
    amplitude: float
    t1_stderr: float
    offset_stderr: float


def fit_exponential(t, p_e) -> ExpFit:
    """Least-squares fit of ``offset + amplitude * exp(-t / t1)``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(p_e, dtype=float)
    if t.size < 5 or t.size != y.size:
        raise ValueError("need at least 5 matching (t, p) samples")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    order = np.argsort(t)
    t, y = t[order], y[order]
    span = np.ptp(y)
    if span <= 1e-12 or y[0] <= y[-1]:
        raise DegenerateError("data do not decay; exponential fit is degenerate")

    a0 = y.min() - 0.01 * span
    b0 = y[0] - a0
    z = np.log(np.clip((y - a0) / b0, 1e-12, None))
    slope = np.polyfit(t - t[0], z, 1)[0]
    tau0 = -1.0 / slope if slope < 0 else np.ptp(t) / 3
    tau0 = float(np.clip(tau0, np.ptp(t) * 1e-3, np.ptp(t) * 1e3))

    def resid(x):
        a, b, log_tau = x
        return a + b * np.exp(-(t - t[0]) / math.exp(log_tau)) - y

    res = levenberg_marquardt(resid, np.array([a0, b0, math.log(tau0)]), max_iter=200,
                              cost_floor=0.5 * t.size * (1e-14) ** 2)
    a, b, log_tau = res.x
    if not (b > 0 and np.isfinite(log_tau)):
        raise DegenerateError("fit did not find a decaying exponential")
    tau = math.exp(log_tau)
    dof = max(t.size - 3, 1)
    s2 = float(res.residuals @ res.residuals) / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.inf)
    # the fitted amplitude refers to t[0]; report it at t = 0
    amp0 = b * math.exp(t[0] / tau)
    return ExpFit(tau, float(a), float(amp0), float(tau * math.sqrt(max(cov[2, 2], 0.0))),
                  float(math.sqrt(max(cov[0, 0], 0.0))))


@dataclass
class ResetSweepResult:
    amplitudes: np.ndarray
    lengths: np.ndarray
    p_e_end: np.ndarray
    p_e_readout: np.ndarray
    failures: dict = field(default_factory=dict)
    fits: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def summary(self) -> dict:
        m = np.where(np.isfinite(self.p_e_end), self.p_e_end, np.inf)
        best, where = None, None
        if np.isfinite(m).any():
            i, j = np.unravel_index(int(np.argmin(m)), m.shape)
            best = float(m[i, j])
            where = {"amplitude": float(self.amplitudes[i]), "length": float(self.lengths[j])}
        return {
            "min_p_e": best,
            "argmin": where,
            "fits": self.fits,
            "partial": self.partial,
            "failures": {f"{a},{l}": msg for (a, l), msg in self.failures.items()},
        }

    def write(self, out_dir, header_comment: Optional[str] = None):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "sweep.csv").open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["amplitude_frac_2delta", "length_s", "p_e_end", "p_e_readout"])
            for i, a in enumerate(self.amplitudes):
                for j, length in enumerate(self.lengths):
                    w.writerow([repr(float(a)), repr(float(length)),
                                repr(float(self.p_e_end[i, j])), repr(float(self.p_e_readout[i, j]))])
        doc = self.summary()
        if header_comment:
            doc = {"provenance": header_comment, **doc}
        (out / "summary.json").write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def _cell(args):
    cfg, a, length = args
    try:
        rec = run_reset_protocol(cfg, a, length)
        return rec.p_e_end, rec.p_e_readout, None
    except QcrError as exc:
        return math.nan, math.nan, str(exc)


def default_workers() -> int:
    env = os.environ.get("QCRSIM_THREADS")
    if env:
        return max(1, int(env))
    return 1


def sweep_protocol(cfg: ResetConfig, workers: Optional[int] = None) -> ResetSweepResult:
    """Run every (amplitude, length) cell; results are index-ordered and do
    not depend on the number of workers."""
    if not cfg.amplitudes or not cfg.lengths:
        raise ValueError("sweep grid is empty")
    workers = default_workers() if workers is None else max(1, int(workers))
    jobs = [(cfg, a, length) for a in cfg.amplitudes for length in cfg.lengths]
    if workers == 1:
        results = [_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, jobs))
    na, nl = len(cfg.amplitudes), len(cfg.lengths)
    p_end = np.array([r[0] for r in results]).reshape(na, nl)
    p_ro = np.array([r[1] for r in results]).reshape(na, nl)
    failures = {}
    for (_, a, length), r in zip(jobs, results):
        if r[2] is not None:
            failures[(a, length)] = r[2]
    lengths = np.array(cfg.lengths)
    fits = []
    for i, a in enumerate(cfg.amplitudes):
        ok = np.isfinite(p_end[i])
        entry = {"amplitude": a, "t1_eff_s": None, "stderr_s": None}
        if ok.sum() >= 5:
            try:
                f = fit_exponential(lengths[ok], np.clip(p_end[i][ok], 0, 1))
                entry.update(t1_eff_s=f.t1, stderr_s=f.t1_stderr)
            except (DegenerateError, ValueError):
                pass
        fits.append(entry)
    return ResetSweepResult(np.array(cfg.amplitudes), lengths, p_end, p_ro, failures, fits)
