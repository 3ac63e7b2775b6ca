"""Junction parameter extraction from SINIS current-voltage data."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .constants import E_CHARGE, EV
from .errors import DatasetError, IntegrationError, ParseError
from .lm import levenberg_marquardt, numeric_jacobian
from .physics import DEFAULT_QUAD, JunctionParams, QuadOptions, current_integrals_x, nis_current

PARAM_ORDER = ("r_t_nis", "delta", "gamma_dynes", "t_n")

# the search may wander eight decades from the start in any parameter
_MAX_LOG_EXCURSION = 8 * np.log(10.0)


@dataclass(frozen=True)
class IvDataset:
    voltage: np.ndarray
    current: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.voltage, dtype=float).ravel()
        i = np.asarray(self.current, dtype=float).ravel()
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "current", i)
        if v.size != i.size:
            raise DatasetError("voltage and current arrays differ in length")
        if v.size < 8:
            raise DatasetError(f"an I-V dataset needs at least 8 points, got {v.size}")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(i))):
            raise DatasetError("dataset contains non-finite values")
        if np.all(v == v[0]):
            raise DatasetError("all voltages are equal")

    @classmethod
    def from_points(cls, points, meta=None):
        arr = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], dict(meta or {}))

    @property
    def points(self):
        return list(zip(self.voltage.tolist(), self.current.tolist()))

    def __len__(self):
        return self.voltage.size


@dataclass
class IvFitResult:
    params: JunctionParams
    covariance: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool
    message: str = ""
    gamma_unbounded: bool = False
    cost_history: list = field(default_factory=list)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    def to_dict(self) -> dict:
        p = self.params
        cov = [[_finite_or_none(x) for x in row] for row in np.asarray(self.covariance)]
        return {
            "r_t_nis_ohm": p.r_t_nis,
            "delta_ev": p.delta_ev,
            "gamma_dynes": p.gamma_dynes,
            "t_n_k": p.t_n,
            "covariance": cov,
            "residual_rms_a": self.residual_rms,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 100
    ftol: float = 1e-10
    gtol: float = 1e-12
    step: float = 1e-6
    covariance: str = "sandwich"
    mu0: float = 0.1
    # residuals are divided by |I| + floor_frac * max|I|; "uniform" divides by max|I| only
    weighting: str = "relative"
    floor_frac: float = 1e-6
    reweight: int = 1
    quad: QuadOptions = DEFAULT_QUAD


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def model_sinis_current(v, jp: JunctionParams, quad: QuadOptions = DEFAULT_QUAD):
    """Current through two identical NIS junctions in series at total bias ``v``."""
    return nis_current(np.asarray(v, dtype=float) / 2, jp, quad)


class _SinisModel:
    """SINIS current on a fixed voltage set, optionally on a frozen partition."""

    def __init__(self, v, quad: QuadOptions):
        half = np.abs(np.asarray(v, dtype=float)) / 2
        self.sign = np.sign(v)
        self.half, self.inv = np.unique(half, return_inverse=True)
        self.nz = self.half > 0
        self.quad = quad
        self._dos = {}

    def __call__(self, jp: JunctionParams, partition=None, return_partition=False):
        u = self.half[self.nz] * E_CHARGE / jp.delta
        out = np.zeros(self.half.size)
        part = None
        if u.size:
            if partition is None and return_partition:
                vals, part = current_integrals_x(u, jp, self.quad, return_partition=True)
            else:
                vals = current_integrals_x(u, jp, self.quad, partition=partition, dos_cache=self._dos)
            out[self.nz] = vals
        cur = self.sign * out[self.inv] * jp.delta / (E_CHARGE * jp.r_t_nis)
        return (cur, part) if return_partition else cur


class _Coords:
    """Search coordinates: logs of R_T, delta and T_N, and gamma / gamma_init.

    Gamma stays linear because the current is nearly linear in it; in log
    space the cost goes flat as gamma -> 0 and a search that wanders there
    cannot come back.
    """

    def __init__(self, init: JunctionParams, step: float):
        self.g0 = init.gamma_dynes
        t0 = self.encode(init)
        lo = t0 - _MAX_LOG_EXCURSION
        hi = t0 + _MAX_LOG_EXCURSION
        # keep central differences inside 0 < gamma < 1
        lo[2] = 2 * step
        hi[2] = 0.999999 / self.g0 - 2 * step
        self.theta0, self.bounds = t0, (lo, hi)

    def encode(self, jp: JunctionParams):
        return np.array([math.log(jp.r_t_nis), math.log(jp.delta), jp.gamma_dynes / self.g0,
                         math.log(jp.t_n)])

    def decode(self, theta) -> JunctionParams:
        with np.errstate(over="ignore"):
            r, d, t = np.exp([theta[0], theta[1], theta[3]])
        return JunctionParams(float(r), float(d), float(theta[2] * self.g0), float(t))

    def scale(self, theta):
        """d(physical) / d(theta) for each parameter."""
        jp = self.decode(theta)
        return np.array([jp.r_t_nis, jp.delta, self.g0, jp.t_n])


def initial_guess(data: IvDataset) -> JunctionParams:
    """Heuristic start: ohmic slope for R_T, max-curvature bias for the gap."""
    order = np.argsort(data.voltage)
    v = data.voltage[order]
    i = data.current[order]
    vmax = np.max(np.abs(v))
    hi = np.abs(v) >= 0.7 * vmax
    if hi.sum() >= 2 and np.ptp(v[hi]) > 0:
        slope = abs(np.polyfit(v[hi], i[hi], 1)[0])
    else:
        slope = abs(np.polyfit(v, i, 1)[0])
    r_t = 1.0 / (2.0 * slope) if slope > 0 else 1e5
    vv, idx = np.unique(v, return_index=True)
    ii = i[idx]
    delta = 200e-6 * EV
    if vv.size >= 5:
        d2 = np.abs(np.gradient(np.gradient(ii, vv), vv))
        v_curv = abs(vv[int(np.argmax(d2))])
        if v_curv > 0:
            delta = v_curv * E_CHARGE / 2
    return JunctionParams(r_t, delta, 1e-4, 0.1)


def fit_iv(data: IvDataset, init: Optional[JunctionParams] = None,
           opts: FitOptions = FitOptions()) -> IvFitResult:
    """Least-squares fit of the symmetric SINIS model to ``data``."""
    if init is None:
        init = initial_guess(data)
    v, i_meas = data.voltage, data.current
    scale = float(np.max(np.abs(i_meas)))
    if scale == 0.0:
        cov = np.diag(np.full(4, np.inf))
        return IvFitResult(init, cov, 0.0, 0, False, "all currents are zero; nothing to fit")

    if opts.weighting not in ("relative", "uniform"):
        raise ValueError(f"unknown weighting {opts.weighting!r}")
    model = _SinisModel(v, opts.quad)

    def solve(start: JunctionParams, sigma):
        coords = _Coords(start, opts.step)

        def resid(theta, partition=None):
            try:
                return (model(coords.decode(theta), partition) - i_meas) / sigma
            except (IntegrationError, ValueError, FloatingPointError):
                return np.full(v.size, np.inf)

        def jac(theta, r):
            # differences on a partition frozen at theta are smooth to roundoff
            _, part = model(coords.decode(theta), return_partition=True)
            return numeric_jacobian(lambda t: resid(t, part), theta, r, opts.step)

        res = levenberg_marquardt(resid, coords.theta0, jac=jac, step=opts.step,
                                  max_iter=opts.max_iter, ftol=opts.ftol, gtol=opts.gtol,
                                  mu0=opts.mu0, bounds=coords.bounds,
                                  cost_floor=0.5 * v.size * (10 * opts.quad.rtol) ** 2)
        return res, coords

    floor = opts.floor_frac * scale
    if opts.weighting == "uniform":
        res, coords = solve(init, np.full(v.size, scale))
        passes = [res]
    else:
        # first pass weights by the data; later passes by the fitted model so
        # the weights stop correlating with the noise
        res, coords = solve(init, np.abs(i_meas) + floor)
        passes = [res]
        for _ in range(opts.reweight):
            if not res.converged:
                break
            sigma = np.abs(model(coords.decode(res.x))) + floor
            res, coords = solve(coords.decode(res.x), sigma)
            passes.append(res)
    params = coords.decode(res.x)
    n, k = v.size, 4
    # weighted residuals and Jacobian: the estimator is weighted least squares
    r = res.residuals
    jac = res.jac
    jtj = jac.T @ jac
    try:
        inv = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(jtj)
    if opts.covariance == "sandwich":
        meat = (jac * (r**2)[:, None]).T @ jac
        cov_theta = inv @ meat @ inv * n / (n - k)
    else:
        cov_theta = inv * float(r @ r) / (n - k)
    cov_theta = 0.5 * (cov_theta + cov_theta.T)
    d = coords.scale(res.x)
    cov = cov_theta * np.outer(d, d)
    gamma_unbounded = not np.any(np.abs(v) < params.delta / E_CHARGE)
    if gamma_unbounded:
        cov[2, :] = cov[:, 2] = 0.0
        cov[2, 2] = np.inf
    rms = float(np.sqrt(np.mean((model(params) - i_meas) ** 2)))
    iterations = sum(p.iterations for p in passes)
    history = [c for p in passes for c in p.cost_history]
    return IvFitResult(params, cov, rms, iterations, res.converged, res.message,
                       gamma_unbounded, history)


def synthetic_iv(jp: JunctionParams, n_points=101, span=3.0, noise=0.0, seed=None,
                 quad: QuadOptions = DEFAULT_QUAD) -> IvDataset:
    """Model data on ``v in [-span, span] * 2 delta / e`` with optional
    multiplicative Gaussian noise of relative size ``noise``."""
    v = np.linspace(-span, span, n_points) * 2 * jp.delta / E_CHARGE
    i = model_sinis_current(v, jp, quad)
    if noise:
        rng = np.random.default_rng(seed)
        i = i * (1.0 + noise * rng.standard_normal(i.size))
    return IvDataset(v, i, {"source": "synthetic", "noise": noise, "seed": seed})


IV_HEADER = ["voltage_V", "current_A"]


def load_iv_csv(path) -> IvDataset:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror or exc}") from exc
    header_seen = False
    volts, amps = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if not header_seen:
            if fields != IV_HEADER:
                raise ParseError(f"expected header {','.join(IV_HEADER)}, got {line!r}", path, lineno)
            header_seen = True
            continue
        if len(fields) != 2:
            raise ParseError(f"expected 2 fields, got {len(fields)}", path, lineno)
        try:
            vv, ii = float(fields[0]), float(fields[1])
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", path, lineno) from None
        volts.append(vv)
        amps.append(ii)
    if not header_seen:
        raise ParseError("missing header", path, 1)
    if not volts:
        raise DatasetError(f"{path}: dataset is empty")
    return IvDataset(np.array(volts), np.array(amps), {"source": str(path)})


def save_iv_csv(data: IvDataset, path, header_comment: Optional[str] = None):
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(IV_HEADER)
        for vv, ii in zip(data.voltage, data.current):
            w.writerow([repr(float(vv)), repr(float(ii))])


def save_fit_json(result: IvFitResult, path, extra: Optional[dict] = None):
    doc = result.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def load_fit_json(path) -> dict:
    return json.loads(Path(path).read_text())
