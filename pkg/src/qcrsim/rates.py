"""Qubit relaxation and excitation rates induced by the QCR.

Each junction contributes photon-absorbing and photon-emitting tunneling in
both directions.  With per-junction bias ``v_j``, qubit energy ``E_q = h f0``
and dimensionless coupling ``rho = pi alpha^2 Z_r / R_K``::

    Gamma10_j = kappa rho [F(E_q + e v_j) + F(E_q - e v_j)]
    Gamma01_j = kappa rho [F(-E_q + e v_j) + F(-E_q - e v_j)]

The SINIS total is the sum over the two junctions; a symmetric bias splits
the control voltage equally.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .constants import E_CHARGE, H_PLANCK, HBAR, R_K
from .errors import CalibrationError, DegenerateError
from .physics import DEFAULT_QUAD, TABLE1_JUNCTION, JunctionParams, QuadOptions, rate_f


@dataclass(frozen=True)
class QcrQubitParams:
    jp: JunctionParams
    c_c: float
    c_g: float
    c_nis: float
    c_q: float
    z_r: float
    f0: float
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("c_c", "c_g", "c_nis", "c_q", "z_r", "f0", "kappa"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")

    @property
    def alpha(self) -> float:
        """Capacitive division from the qubit node onto the island."""
        return self.c_c / (self.c_c + self.c_g + 2 * self.c_nis)

    @property
    def rho(self) -> float:
        return math.pi * self.alpha**2 * self.z_r / R_K

    @property
    def e_q(self) -> float:
        return H_PLANCK * self.f0

    def replace(self, **changes) -> "QcrQubitParams":
        return replace(self, **changes)


TABLE1_QUBIT = QcrQubitParams(
    jp=TABLE1_JUNCTION, c_c=15e-15, c_g=24.4e-15, c_nis=3.5e-15, c_q=97e-15,
    z_r=179.0, f0=9.18e9,
)


@dataclass(frozen=True)
class RateTable:
    v_qcr: np.ndarray
    gamma10: np.ndarray
    gamma01: np.ndarray
    t1: np.ndarray

    def __post_init__(self):
        n = len(self.v_qcr)
        if not (len(self.gamma10) == len(self.gamma01) == len(self.t1) == n):
            raise ValueError("rate table columns must have equal length")
        if np.any(np.asarray(self.gamma10) < 0) or np.any(np.asarray(self.gamma01) < 0):
            raise ValueError("rates must be nonnegative")
        total = np.asarray(self.gamma10) + np.asarray(self.gamma01)
        if np.any(np.abs(np.asarray(self.t1) * total - 1) > 1e-12):
            raise ValueError("t1 inconsistent with the rates")

    def __len__(self):
        return len(self.v_qcr)

    def to_csv(self, path, header_comment: Optional[str] = None):
        write_rate_csv(self, path, header_comment)


def junction_rates(v_j, p: QcrQubitParams, quad: QuadOptions = DEFAULT_QUAD):
    """Rates (Gamma10, Gamma01) contributed by a single junction at bias ``v_j``."""
    v = np.atleast_1d(np.asarray(v_j, dtype=float)).ravel()
    ev = E_CHARGE * v
    eq = p.e_q
    # F(+-E_q + e v) and F(+-E_q - e v) evaluated in one batch
    args = np.concatenate([eq + ev, eq - ev, -eq + ev, -eq - ev])
    f = rate_f(args, p.jp, quad).reshape(4, v.size)
    scale = p.kappa * p.rho
    g10 = scale * (f[0] + f[1])
    g01 = scale * (f[2] + f[3])
    if np.ndim(v_j) == 0:
        return float(g10[0]), float(g01[0])
    shape = np.shape(v_j)
    return g10.reshape(shape), g01.reshape(shape)


def qubit_rates(v_qcr, p: QcrQubitParams, quad: QuadOptions = DEFAULT_QUAD):
    """Total (Gamma10, Gamma01) for a symmetric SINIS at control voltage ``v_qcr``."""
    half = np.abs(np.asarray(v_qcr, dtype=float)) / 2
    g10, g01 = junction_rates(half, p, quad)
    return g10 + g10, g01 + g01


def t1_qcr_curve(v_grid, p: QcrQubitParams, quad: QuadOptions = DEFAULT_QUAD) -> RateTable:
    v = np.sort(np.asarray(v_grid, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("voltage grid is empty")
    if not np.all(np.isfinite(v)):
        raise ValueError("voltage grid must be finite")
    g10, g01 = qubit_rates(v, p, quad)
    return RateTable(v, g10, g01, 1.0 / (g10 + g01))


def residual_population(p: QcrQubitParams, v: float = 0.0, quad: QuadOptions = DEFAULT_QUAD) -> float:
    """Steady-state excited population Gamma01 / (Gamma01 + Gamma10) at bias ``v``.

    kappa cancels in the ratio, so the rates are evaluated at kappa = 1 and the
    result is bit-identical for every kappa.
    """
    g10, g01 = qubit_rates(v, p.replace(kappa=1.0), quad)
    total = g10 + g01
    if not total > 0:
        raise DegenerateError("both QCR rates vanish; residual population undefined")
    return g01 / total


def onoff_ratio_estimate(p: QcrQubitParams) -> float:
    """Low-temperature static on/off ratio sqrt(delta / (2 pi hbar f0 gamma_D^2))."""
    jp = p.jp
    return math.sqrt(jp.delta / (2 * math.pi * HBAR * p.f0 * jp.gamma_dynes**2))


def calibrate_kappa(p: QcrQubitParams, target_t1_off: float, quad: QuadOptions = DEFAULT_QUAD) -> float:
    """Return the kappa that makes the zero-bias QCR lifetime equal ``target_t1_off``.

    Rates are linear in kappa, so the answer is closed-form.  ``p`` is not
    modified; apply the result with ``p.replace(kappa=...)``.
    """
    if not target_t1_off > 0:
        raise ValueError("target_t1_off must be positive")
    g10, g01 = qubit_rates(0.0, p.replace(kappa=1.0), quad)
    total = g10 + g01
    if not total > 0:
        raise CalibrationError("model rate at zero bias is zero; kappa cannot be calibrated")
    return 1.0 / (total * target_t1_off)


RATE_HEADER = ["v_qcr_V", "gamma10_hz", "gamma01_hz", "t1_s"]


def write_rate_csv(table: RateTable, path, header_comment: Optional[str] = None):
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(RATE_HEADER)
        for row in zip(table.v_qcr, table.gamma10, table.gamma01, table.t1):
            w.writerow([repr(float(x)) for x in row])


def read_rate_csv(path) -> RateTable:
    rows = []
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if header != RATE_HEADER:
        raise ValueError(f"unexpected rate table header {header}")
    for r in reader:
        rows.append([float(x) for x in r])
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return RateTable(*arr.T)
