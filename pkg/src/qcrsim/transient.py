"""Control-pulse distortion through the bias tee, the on-chip RC filter and
the nonlinear SINIS junctions.

Circuit (node names used throughout)::

    v_s --||-- a --R_f-- b --[NIS1]-- i --[NIS2]-- gnd
          C_bt   |         |            |
                R_s       C_f         C_isl
                 |         |            |
                gnd       gnd          gnd

Each NIS junction is its quasiparticle current in parallel with ``c_nis``.
The state is (u, v_b, v_i) with ``u`` the bias-tee capacitor voltage;
node a carries no capacitance so ``v_a = v_s - u``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .constants import E_CHARGE, K_B
from .errors import SolverError
from .physics import (DEFAULT_QUAD, TABLE1_JUNCTION, JunctionParams, QuadOptions,
                      nis_conductance, nis_current)
from .rates import QcrQubitParams, junction_rates


@dataclass(frozen=True)
class CircuitParams:
    c_bias_tee: float = 10e-9
    r_source: float = 50.0
    r_filter: float = 50.0
    c_filter: float = 10.6e-12
    c_nis: float = 3.5e-15
    c_island: float = 39.4e-15
    jp: JunctionParams = TABLE1_JUNCTION

    def __post_init__(self):
        for name in ("c_bias_tee", "r_source", "r_filter", "c_filter", "c_nis", "c_island"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")

    @property
    def filter_cutoff(self) -> float:
        return 1.0 / (2 * math.pi * self.r_filter * self.c_filter)

    @property
    def bias_tee_tau(self) -> float:
        return self.r_source * self.c_bias_tee

    @classmethod
    def for_qubit(cls, p: QcrQubitParams, **kw) -> "CircuitParams":
        """Defaults with the junction and capacitances taken from ``p``;
        the island sees C_g plus the coupling capacitor (qubit node as ground)."""
        kw.setdefault("c_nis", p.c_nis)
        kw.setdefault("c_island", p.c_g + p.c_c)
        return cls(jp=p.jp, **kw)

    def replace(self, **changes) -> "CircuitParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class PulseSpec:
    """Square source pulse on ``[start, start + length]`` with linear edges
    of ``rise_time`` (capped at half the length) inside that window."""

    amplitude: float
    length: float
    start: float = 0.0
    rise_time: float = 0.5e-9

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("pulse length must be positive")
        if not self.rise_time >= 0:
            raise ValueError("rise_time must be nonnegative")
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        if not self.start >= 0:
            raise ValueError("pulse start must be nonnegative")

    @classmethod
    def from_gap_fraction(cls, fraction, jp: JunctionParams, length, start=0.0, rise_time=0.5e-9):
        """Pulse whose amplitude is ``fraction * 2 delta / e``."""
        return cls(fraction * 2 * jp.delta / E_CHARGE, length, start, rise_time)

    @property
    def end(self) -> float:
        return self.start + self.length

    @property
    def edge(self) -> float:
        return min(self.rise_time, 0.5 * self.length)

    def breakpoints(self):
        r = self.edge
        pts = [self.start, self.start + r, self.end - r, self.end]
        return sorted(set(pts))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        r = self.edge
        if r == 0:
            out = np.where((t >= self.start) & (t < self.end), self.amplitude, 0.0)
        else:
            up = np.clip((t - self.start) / r, 0.0, 1.0)
            down = np.clip((self.end - t) / r, 0.0, 1.0)
            out = self.amplitude * np.minimum(up, down)
        return out if out.ndim else float(out)


@dataclass
class TransientTrace:
    t: np.ndarray
    v_j1: np.ndarray
    v_j2: np.ndarray
    v_nodes: dict
    solver_stats: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        if len(self.v_j1) != n or len(self.v_j2) != n:
            raise ValueError("trace arrays differ in length")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trace time grid must be strictly increasing")
        if not (np.all(np.isfinite(self.v_j1)) and np.all(np.isfinite(self.v_j2))):
            raise ValueError("trace voltages must be finite")

    @classmethod
    def constant(cls, t, v_j1, v_j2):
        t = np.asarray(t, dtype=float)
        return cls(t, np.full(t.size, float(v_j1)), np.full(t.size, float(v_j2)), {})


class JunctionTable:
    """Cubic Hermite table of one junction's I(V) and dI/dV.

    Both columns come from quadrature; beyond the table the current is
    continued linearly with the edge conductance.
    """

    def __init__(self, jp: JunctionParams, v_max: float, quad: QuadOptions = DEFAULT_QUAD,
                 points_per_kt: float = 8.0):
        scale = min(K_B * jp.t_n, jp.delta) / E_CHARGE
        self.v_max = float(max(v_max, 4 * jp.delta / E_CHARGE))
        n = int(math.ceil(self.v_max / scale * points_per_kt)) + 1
        v = np.linspace(0.0, self.v_max, n)
        i = nis_current(v, jp, quad)
        g = nis_conductance(v, jp, quad)
        vv = np.concatenate([-v[:0:-1], v])
        ii = np.concatenate([-i[:0:-1], i])
        gg = np.concatenate([g[:0:-1], g])
        self._spline = CubicHermiteSpline(vv, ii, gg)
        self._dspline = self._spline.derivative()
        self._i_edge = float(i[-1])
        self._g_edge = float(g[-1])
        self.jp = jp

    def current(self, v):
        v = np.asarray(v, dtype=float)
        a = np.abs(v)
        inner = self._spline(np.clip(v, -self.v_max, self.v_max))
        outer = np.sign(v) * (self._i_edge + self._g_edge * (a - self.v_max))
        return np.where(a <= self.v_max, inner, outer)

    def conductance(self, v):
        v = np.asarray(v, dtype=float)
        inner = self._dspline(np.clip(v, -self.v_max, self.v_max))
        return np.where(np.abs(v) <= self.v_max, inner, self._g_edge)


def _system(pulse: PulseSpec, cp: CircuitParams, table: JunctionTable):
    cb, rs, rf = cp.c_bias_tee, cp.r_source, cp.r_filter
    m = np.array([[cp.c_filter + cp.c_nis, -cp.c_nis],
                  [-cp.c_nis, 2 * cp.c_nis + cp.c_island]])
    minv = np.linalg.inv(m)
    spline = table._spline
    dspline = table._dspline
    vmax = table.v_max

    def cur(v):
        if -vmax <= v <= vmax:
            return float(spline(v))
        return float(table.current(v))

    def cond(v):
        if -vmax <= v <= vmax:
            return float(dspline(v))
        return table._g_edge

    def rhs(t, y):
        u, vb, vi = y
        va = pulse(t) - u
        i1 = cur(vb - vi)
        i2 = cur(vi)
        du = (va / rs + (va - vb) / rf) / cb
        qb = (va - vb) / rf - i1
        qi = i1 - i2
        return np.array([du, minv[0, 0] * qb + minv[0, 1] * qi, minv[1, 0] * qb + minv[1, 1] * qi])

    def jac(t, y):
        u, vb, vi = y
        g1 = cond(vb - vi)
        g2 = cond(vi)
        d_rhs = np.array([[-1.0 / rf, -1.0 / rf - g1, g1],
                          [0.0, g1, -g1 - g2]])
        out = np.empty((3, 3))
        out[0] = [-(1.0 / rs + 1.0 / rf) / cb, -1.0 / (rf * cb), 0.0]
        out[1:] = minv @ d_rhs
        return out

    return rhs, jac


def simulate_transient(pulse: PulseSpec, cp: CircuitParams, horizon: float, tol: float = 1e-6,
                       max_step: Optional[float] = None, table: Optional[JunctionTable] = None,
                       quad: QuadOptions = DEFAULT_QUAD) -> TransientTrace:
    """Integrate the circuit from rest at t = 0 to ``horizon`` (Radau IIA)."""
    if not horizon >= pulse.end:
        raise ValueError("horizon must cover the whole pulse")
    if not tol > 0:
        raise ValueError("tol must be positive")
    vscale = max(abs(pulse.amplitude), 1e-9)
    if table is None:
        table = JunctionTable(cp.jp, 1.25 * abs(pulse.amplitude), quad)
    rhs, jac = _system(pulse, cp, table)
    edges = [0.0] + [b for b in pulse.breakpoints() if 0.0 < b < horizon] + [horizon]
    edges = sorted(set(edges))
    ts = [np.array([0.0])]
    ys = [np.zeros((3, 1))]
    y0 = np.zeros(3)
    stats = {"nfev": 0, "njev": 0, "nlu": 0, "steps": 0, "segments": 0}
    kw = {} if max_step is None else {"max_step": max_step}
    for a, b in zip(edges[:-1], edges[1:]):
        if pulse.amplitude == 0.0:
            tt = np.array([a, b])
            yy = np.zeros((3, 2))
        else:
            sol = solve_ivp(rhs, (a, b), y0, method="Radau", jac=jac, rtol=tol,
                            atol=tol * vscale, first_step=min(1e-12, (b - a) / 4), **kw)
            if sol.status != 0:
                t_fail = float(sol.t[-1]) if sol.t.size else a
                raise SolverError(f"transient integration failed: {sol.message}", t_fail)
            tt, yy = sol.t, sol.y
            stats["nfev"] += sol.nfev
            stats["njev"] += sol.njev
            stats["nlu"] += sol.nlu
            if not np.all(np.isfinite(yy)):
                bad = int(np.argmax(~np.all(np.isfinite(yy), axis=0)))
                raise SolverError("non-finite circuit state", float(tt[bad]))
        stats["steps"] += tt.size - 1
        stats["segments"] += 1
        ts.append(tt[1:])
        ys.append(yy[:, 1:])
        y0 = yy[:, -1].copy()
    t = np.concatenate(ts)
    y = np.concatenate(ys, axis=1)
    u, vb, vi = y
    vs = pulse(t)
    nodes = {"v_s": vs, "v_a": vs - u, "v_b": vb, "v_i": vi, "u_bias_tee": u}
    return TransientTrace(t, vb - vi, vi.copy(), nodes, stats)


def charge_residuals(trace: TransientTrace, cp: CircuitParams, table: JunctionTable) -> dict:
    """Mismatch between the charge change on each capacitive node and the
    trapezoid-integrated current flowing into it, relative to peak charge."""
    t = trace.t
    n = trace.v_nodes
    va, vb, vi, u = n["v_a"], n["v_b"], n["v_i"], n["u_bias_tee"]
    i1 = table.current(vb - vi)
    i2 = table.current(vi)
    i_bt = va / cp.r_source + (va - vb) / cp.r_filter
    q = {
        "bias_tee": cp.c_bias_tee * u,
        "node_b": cp.c_filter * vb + cp.c_nis * (vb - vi),
        "island": cp.c_island * vi + cp.c_nis * (vi - vb) + cp.c_nis * vi,
    }
    inflow = {"bias_tee": i_bt, "node_b": (va - vb) / cp.r_filter - i1, "island": i1 - i2}
    out = {}
    for k in q:
        scale = max(np.max(np.abs(q[k])), 1e-300)
        integ = np.concatenate([[0.0], np.cumsum(0.5 * (inflow[k][1:] + inflow[k][:-1]) * np.diff(t))])
        out[k] = float(np.max(np.abs((q[k] - q[k][0]) - integ)) / scale)
    return out


@dataclass
class T1Series:
    t: np.ndarray
    gamma10: np.ndarray
    gamma01: np.ndarray

    @property
    def t1(self):
        return 1.0 / (self.gamma10 + self.gamma01)


def _interp_rates(vabs, p: QcrQubitParams, quad, n_grid):
    vmax = float(np.max(vabs))
    grid = np.linspace(0.0, vmax, n_grid)
    g10, g01 = junction_rates(grid, p, quad)
    s10 = CubicSpline(grid, np.log(g10))
    s01 = CubicSpline(grid, np.log(g01))
    return np.exp(s10(vabs)), np.exp(s01(vabs))


def instantaneous_t1(trace: TransientTrace, p: QcrQubitParams, quad: QuadOptions = DEFAULT_QUAD,
                     method: str = "auto", n_grid: int = 257) -> T1Series:
    """Qubit rates along a trace, summing the two junction contributions.

    ``method='direct'`` runs quadrature at every distinct junction voltage;
    ``'interp'`` splines log-rates on an ``n_grid`` table; ``'auto'`` picks
    direct when there are at most ``n_grid`` distinct voltages.
    """
    v = np.abs(np.concatenate([trace.v_j1, trace.v_j2]))
    uniq, inv = np.unique(v, return_inverse=True)
    if method == "auto":
        method = "direct" if uniq.size <= n_grid else "interp"
    if method == "direct":
        g10, g01 = junction_rates(uniq, p, quad)
    elif method == "interp":
        g10, g01 = _interp_rates(uniq, p, quad, n_grid)
    else:
        raise ValueError(f"unknown method {method!r}")
    g10 = g10[inv]
    g01 = g01[inv]
    n = trace.t.size
    return T1Series(trace.t.copy(), g10[:n] + g10[n:], g01[:n] + g01[n:])


TRACE_HEADER = ["t_s", "v_j1_V", "v_j2_V", "gamma10_hz", "gamma01_hz", "t1_s"]


def write_trace_csv(trace: TransientTrace, rates: T1Series, path, header_comment: Optional[str] = None):
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for row in zip(trace.t, trace.v_j1, trace.v_j2, rates.gamma10, rates.gamma01, rates.t1):
            w.writerow([repr(float(x)) for x in row])
