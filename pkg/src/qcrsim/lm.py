"""Levenberg-Marquardt least squares with a central-difference Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    jac: np.ndarray
    residuals: np.ndarray
    iterations: int
    nfev: int
    converged: bool
    message: str
    cost_history: list = field(default_factory=list)


def numeric_jacobian(fun, x, r0=None, step=1e-6):
    """Central differences with absolute step ``step`` in every coordinate.

    For log-parameterised problems an absolute step is a relative step in
    the physical parameter.
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        dx = np.zeros_like(x)
        dx[k] = step
        cols.append((fun(x + dx) - fun(x - dx)) / (2 * step))
    return np.column_stack(cols)


def _gauss_newton(jmat, r, g, a):
    try:
        gn = np.linalg.lstsq(jmat, -r, rcond=None)[0]
    except np.linalg.LinAlgError:
        return None, np.inf
    return gn, -(g @ gn) - 0.5 * gn @ a @ gn


def levenberg_marquardt(fun, x0, *, jac=None, step=1e-6, max_iter=100, ftol=1e-10, gtol=1e-12,
                        mu0=1e-3, mu_max=1e16, cost_floor=0.0, gn_tol=1e-6,
                        bounds=None) -> LMResult:
    """Minimise ``0.5 * sum(fun(x)**2)``, optionally inside a box.

    Convergence is declared when an accepted step lowers the cost by less than
    ``ftol`` relative (confirmed by the undamped Gauss-Newton model predicting
    a relative gain below ``gn_tol``), when the scaled gradient norm drops
    below ``gtol``, or when the cost reaches ``cost_floor`` (the accuracy of
    the residual evaluation).  ``jac(x, r)`` overrides the default
    central-difference Jacobian of ``fun``.

    With ``bounds=(lo, hi)`` trial points are projected onto the box and
    coordinates held at a bound by the gradient are frozen; all tests then
    apply to the free coordinates.  Rejected steps never change ``x``, so the
    accepted cost sequence is nonincreasing.  A non-finite residual marks a
    trial point as rejected.
    """
    x = np.asarray(x0, dtype=float).copy()
    if bounds is None:
        lo = np.full(x.size, -np.inf)
        hi = np.full(x.size, np.inf)
    else:
        lo = np.broadcast_to(np.asarray(bounds[0], float), x.shape).copy()
        hi = np.broadcast_to(np.asarray(bounds[1], float), x.shape).copy()
        if np.any(lo > hi):
            raise ValueError("lower bound above upper bound")
        x = np.clip(x, lo, hi)
    if jac is None:
        def jac(x, r):
            return numeric_jacobian(fun, x, r, step)

    r = np.asarray(fun(x), dtype=float)
    nfev = 1
    cost = 0.5 * float(r @ r)
    history = [cost]
    if not np.isfinite(cost):
        raise ValueError("residuals are not finite at the initial point")
    if cost <= cost_floor:
        j0 = jac(x, r)
        return LMResult(x, cost, j0, r, 0, nfev + 2 * x.size, True, "zero residual", history)

    def free_set(g):
        pinned = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        return ~pinned

    def finished(jmat, g, free):
        jf = jmat[:, free]
        _, gain = _gauss_newton(jf, r, g[free], jf.T @ jf)
        if gain <= gn_tol * cost:
            if free.all():
                return "relative cost decrease below tolerance"
            return "minimum on the search-box boundary"
        return None

    mu = mu0
    nu = 2.0
    it = 0
    converged = False
    message = "iteration limit reached"
    jmat = None
    small_decrease = False
    while it < max_iter:
        jmat = jac(x, r)
        nfev += 2 * x.size
        if not np.all(np.isfinite(jmat)):
            message = "Jacobian not finite at the current point"
            break
        g = jmat.T @ r
        free = free_set(g)
        if cost <= cost_floor:
            converged, message = True, "cost at evaluation-accuracy floor"
            break
        if not free.any():
            converged, message = True, "minimum on the search-box boundary"
            break
        jf = jmat[:, free]
        gf = g[free]
        a = jf.T @ jf
        diag = np.maximum(np.diag(a), 1e-300)
        if np.max(np.abs(gf) / np.sqrt(diag)) <= gtol * np.sqrt(2 * cost):
            converged = True
            message = "gradient below tolerance" if free.all() else "minimum on the search-box boundary"
            break
        if small_decrease:
            done = finished(jmat, g, free)
            if done:
                converged, message = True, done
                break
        small_decrease = False
        it += 1
        accepted = False
        while True:
            try:
                df = np.linalg.solve(a + mu * np.diag(diag), -gf)
            except np.linalg.LinAlgError:
                df = None
            if df is not None:
                delta = np.zeros_like(x)
                delta[free] = df
                x_new = np.clip(x + delta, lo, hi)
                r_new = np.asarray(fun(x_new), dtype=float)
                nfev += 1
                cost_new = 0.5 * float(r_new @ r_new)
                d = x_new - x
                predicted = -(g @ d) - 0.5 * float(np.sum((jmat @ d) ** 2))
                if np.isfinite(cost_new) and cost_new < cost:
                    gain = (cost - cost_new) / predicted if predicted > 0 else 1.0
                    rel = (cost - cost_new) / cost
                    x, r, cost = x_new, r_new, cost_new
                    history.append(cost)
                    mu *= max(1 / 3, 1 - (2 * gain - 1) ** 3)
                    nu = 2.0
                    accepted = True
                    small_decrease = rel < ftol
                    break
            mu *= nu
            nu *= 2
            if mu > mu_max:
                break
        if not accepted:
            # no downhill step at any damping: a minimum to working precision
            # only if the undamped model predicts nothing left to gain
            done = "cost at evaluation-accuracy floor" if cost <= cost_floor else finished(jmat, g, free)
            converged = done is not None
            message = done or "stalled"
            break
    return LMResult(x, cost, jmat if jmat is not None else jac(x, r),
                    r, it, nfev, converged, message, history)
