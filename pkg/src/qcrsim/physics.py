"""NIS tunnel-junction kernels: Dynes density of states, Fermi occupation,
quasiparticle current and the single-direction tunneling rate.

Energies are joules at the interface.  Integrals are evaluated in units of
the gap (x = eps / delta) so that the quadrature works on O(1) numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .constants import E_CHARGE, EV, K_B
from .quadrature import Partition, integrate_batch, integrate_fixed


@dataclass(frozen=True)
class JunctionParams:
    """One NIS junction.  ``delta`` is in joules; see :meth:`from_ev`."""

    r_t_nis: float
    delta: float
    gamma_dynes: float
    t_n: float
    t_s: Optional[float] = None

    def __post_init__(self):
        if not self.r_t_nis > 0:
            raise ValueError(f"r_t_nis must be positive, got {self.r_t_nis}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0 < self.gamma_dynes < 1:
            raise ValueError(f"gamma_dynes must lie in (0, 1), got {self.gamma_dynes}")
        if not self.t_n > 0:
            raise ValueError(f"t_n must be positive, got {self.t_n}")
        if self.t_s is not None and not self.t_s > 0:
            raise ValueError(f"t_s must be positive, got {self.t_s}")

    @classmethod
    def from_ev(cls, r_t_nis, delta_ev, gamma_dynes, t_n, t_s=None):
        return cls(float(r_t_nis), float(delta_ev) * EV, float(gamma_dynes), float(t_n),
                   None if t_s is None else float(t_s))

    @property
    def delta_ev(self) -> float:
        return self.delta / EV

    @property
    def t_super(self) -> float:
        return self.t_n if self.t_s is None else self.t_s

    def replace(self, **changes) -> "JunctionParams":
        return replace(self, **changes)


#: junction values of the measured sample (single junction of the SINIS pair)
TABLE1_JUNCTION = JunctionParams.from_ev(34.5e3, 220e-6, 5e-4, 0.28)


@dataclass(frozen=True)
class QuadOptions:
    """Integration settings.

    The energy window is ``[-E_cut, E_cut]`` with
    ``E_cut = max(gap_cutoff * delta, |E| + thermal_cutoff * k_B * T)``.
    """

    rtol: float = 1e-9
    atol: float = 1e-30
    gap_cutoff: float = 30.0
    thermal_cutoff: float = 30.0


DEFAULT_QUAD = QuadOptions()


def dynes_dos_x(x, gamma):
    """Dynes density of states at reduced energy ``x = eps/delta``."""
    z = np.abs(np.asarray(x, dtype=float)) + 1j * gamma
    return np.abs(np.real(z / np.sqrt(z * z - 1.0)))


def dynes_dos(eps, jp: JunctionParams):
    """Dynes-broadened BCS density of states, normalised to the normal state."""
    out = dynes_dos_x(np.asarray(eps, dtype=float) / jp.delta, jp.gamma_dynes)
    return out if out.ndim else float(out)


def fermi(eps, t):
    """Fermi occupation ``1/(1+exp(eps/(k_B t)))``; saturates instead of overflowing."""
    if not t > 0:
        raise ValueError("temperature must be positive")
    out = expit(-np.asarray(eps, dtype=float) / (K_B * t))
    return out if out.ndim else float(out)


def _expit_diff(a, b, d):
    """expit(a) - expit(b) without cancellation when a is close to b.

    ``d`` must equal ``a - b`` but be computed without subtracting them.
    """
    near = np.abs(d) < 1.0
    # exact identity: sinh(d/2) / (2 cosh(a/2) cosh(b/2)); cosh overflow only
    # happens where the difference is zero to double precision
    with np.errstate(over="ignore"):
        close = np.sinh(0.5 * np.where(near, d, 0.0)) / (2.0 * np.cosh(0.5 * a) * np.cosh(0.5 * b))
    if near.all():
        return close
    return np.where(near, close, expit(a) - expit(b))


def _breaks(shift, theta_n, theta_s, gamma, quad: QuadOptions):
    """Break points in reduced energy for an integrand with Fermi steps at 0
    (superconductor side) and at ``shift`` (normal side)."""
    theta = max(theta_n, theta_s)
    xcut = max(quad.gap_cutoff, abs(shift) + quad.thermal_cutoff * theta)
    pts = [-xcut, xcut, 0.0, shift, -1.0, 1.0]
    g = gamma
    while g < 0.5:
        pts += [1.0 - g, 1.0 + g, -1.0 - g, -1.0 + g]
        g *= 10.0
    for c, th in ((0.0, theta_s), (shift, theta_n)):
        for k in (10.0, 40.0):
            pts += [c - k * th, c + k * th]
    p = np.unique(np.clip(np.array(pts), -xcut, xcut))
    return p


def _thetas(jp: JunctionParams):
    return K_B * jp.t_n / jp.delta, K_B * jp.t_super / jp.delta


def current_integrals_x(u, jp: JunctionParams, quad: QuadOptions = DEFAULT_QUAD,
                        partition: Optional[Partition] = None, return_partition=False,
                        dos_cache: Optional[dict] = None):
    """Reduced current integral ``int n(x) [f_N(x-u) - f_S(x)] dx`` for u >= 0.

    With ``partition`` the adaptive search is skipped and the given intervals
    are used as a fixed rule.  ``dos_cache`` (a dict owned by the caller)
    then memoises the density of states on that rule's nodes per gamma.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    th_n, th_s = _thetas(jp)
    g = jp.gamma_dynes

    def dos(x):
        if dos_cache is None or partition is None:
            return dynes_dos_x(x, g)
        # holding the partition itself keeps its identity from being reused
        if dos_cache.get("partition") is not partition or dos_cache.get("gamma") != g:
            dos_cache.update(partition=partition, gamma=g, dos=dynes_dos_x(x, g))
        return dos_cache["dos"]

    def integrand(x, owner):
        uu = u[owner][:, None]
        d = uu / th_n + x * (1.0 / th_s - 1.0 / th_n)
        return dos(x) * _expit_diff((uu - x) / th_n, -x / th_s, d)

    if partition is not None:
        return integrate_fixed(integrand, partition)
    brk = [_breaks(ui, th_n, th_s, g, quad) for ui in u]
    res = integrate_batch(integrand, brk, quad.rtol, quad.atol)
    return (res.value, res.partition) if return_partition else res.value


def conductance_integrals_x(u, jp: JunctionParams, quad: QuadOptions = DEFAULT_QUAD):
    """Reduced differential conductance ``int n(x) (-d f_N/dx)(x-u) dx``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    th_n, th_s = _thetas(jp)
    g = jp.gamma_dynes

    def integrand(x, owner):
        s = (x - u[owner][:, None]) / th_n
        return dynes_dos_x(x, g) * expit(s) * expit(-s) / th_n

    brk = [_breaks(ui, th_n, th_s, g, quad) for ui in u]
    return integrate_batch(integrand, brk, quad.rtol, quad.atol).value


def rate_integrals_x(e, jp: JunctionParams, quad: QuadOptions = DEFAULT_QUAD):
    """Reduced rate integral ``int n(x) f_N(x-e) [1 - f_S(x)] dx``."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    th_n, th_s = _thetas(jp)
    g = jp.gamma_dynes

    def integrand(x, owner):
        ee = e[owner][:, None]
        return dynes_dos_x(x, g) * expit((ee - x) / th_n) * expit(x / th_s)

    brk = [_breaks(ei, th_n, th_s, g, quad) for ei in e]
    return integrate_batch(integrand, brk, quad.rtol, quad.atol).value


def _scalar_or_array(arr, like):
    return arr.reshape(np.shape(like)) if np.ndim(like) else float(arr[0])


def nis_current(v, jp: JunctionParams, quad: QuadOptions = DEFAULT_QUAD):
    """Quasiparticle current (A) through one NIS junction biased at ``v`` volts."""
    v_arr = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    u = np.abs(v_arr) * E_CHARGE / jp.delta
    out = np.zeros_like(u)
    nz = u > 0
    if nz.any():
        uniq, inv = np.unique(u[nz], return_inverse=True)
        out[nz] = current_integrals_x(uniq, jp, quad)[inv]
    out = np.sign(v_arr) * out * jp.delta / (E_CHARGE * jp.r_t_nis)
    return _scalar_or_array(out, v)


def nis_conductance(v, jp: JunctionParams, quad: QuadOptions = DEFAULT_QUAD):
    """Differential conductance dI/dV (S) of one NIS junction."""
    v_arr = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    u = np.abs(v_arr) * E_CHARGE / jp.delta
    uniq, inv = np.unique(u, return_inverse=True)
    out = conductance_integrals_x(uniq, jp, quad)[inv] / jp.r_t_nis
    return _scalar_or_array(out, v)


def rate_f(e_total, jp: JunctionParams, quad: QuadOptions = DEFAULT_QUAD):
    """Normalised single-direction tunneling rate (1/s) when ``e_total`` joules
    are available to the tunneling electron."""
    e_arr = np.atleast_1d(np.asarray(e_total, dtype=float)).ravel() / jp.delta
    uniq, inv = np.unique(e_arr, return_inverse=True)
    out = rate_integrals_x(uniq, jp, quad)[inv] * jp.delta / (E_CHARGE**2 * jp.r_t_nis)
    return _scalar_or_array(out, e_total)
