"""Shared fitting primitives: log-linear decay fits and Gaussian peak fits.

Kept free of domain types so both the noise engine and the spectroscopy
pipeline can use them without importing each other.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .constants import FIT_FLOOR, FIT_MIN_POINTS

__all__ = [
    "FitError",
    "NonDecayingError",
    "InsufficientPointsError",
    "NoConvergenceError",
    "LinearDecayFit",
    "log_linear_fit",
    "envelope_indices",
    "gaussian_model",
    "fit_gaussian_mixture",
]


class FitError(RuntimeError):
    """Base class for fit failures; carries a diagnostics dict."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NonDecayingError(FitError):
    """Fitted slope is non-negative: nothing decays on the fit window."""


class InsufficientPointsError(FitError):
    """Too few samples above the noise floor to attempt a fit."""


class NoConvergenceError(FitError):
    """Iterative fit hit its iteration cap; best parameters so far attached."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.best = best


class LinearDecayFit(NamedTuple):
    slope: float           # d ln(y) / dt, negative for decay
    intercept: float       # ln(amplitude)
    r_squared: float
    n_used: int
    slope_stderr: float


def log_linear_fit(
    t, y, stderr=None, floor: float = FIT_FLOOR, min_points: int = FIT_MIN_POINTS
) -> LinearDecayFit:
    """Ordinary least squares of ln(y) against t over samples with y > floor.

    If per-point standard errors are supplied, the slope uncertainty is
    propagated from them (delta method on ln y); otherwise it falls back to
    the classic residual-based OLS estimate.  Raises NonDecayingError when the
    fitted slope is >= 0 and InsufficientPointsError when fewer than
    min_points samples clear the floor.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mask = y > floor
    n = int(mask.sum())
    if n < min_points:
        raise InsufficientPointsError(
            f"only {n} samples above floor {floor}, need {min_points}",
            {"n_above_floor": n, "floor": floor, "y_max": float(y.max(initial=0.0))},
        )
    tt, yy = t[mask], np.log(y[mask])
    tbar = tt.mean()
    sxx = ((tt - tbar) ** 2).sum()
    if sxx == 0.0:
        raise InsufficientPointsError("all admissible samples share one time", {})
    slope = ((tt - tbar) * (yy - yy.mean())).sum() / sxx
    intercept = yy.mean() - slope * tbar
    resid = yy - (intercept + slope * tt)
    ss_tot = ((yy - yy.mean()) ** 2).sum()
    r2 = 1.0 - resid @ resid / ss_tot if ss_tot > 0 else 0.0
    if stderr is not None:
        sig = np.asarray(stderr, dtype=np.float64)[mask] / y[mask]
        slope_var = (((tt - tbar) / sxx) ** 2 * sig**2).sum()
    else:
        dof = max(n - 2, 1)
        slope_var = (resid @ resid / dof) / sxx
    if slope >= 0:
        raise NonDecayingError(
            f"fitted slope {slope:.3e} is not a decay",
            {"slope": float(slope), "n_used": n, "r_squared": float(r2)},
        )
    return LinearDecayFit(float(slope), float(intercept), float(r2), n, float(np.sqrt(slope_var)))


def envelope_indices(y, floor: float = FIT_FLOOR) -> np.ndarray:
    """Indices of local maxima of y above the floor (envelope samples).

    For an oscillating decay these pick out the envelope; for a monotonic
    decay there are none and the caller should fall back to all samples.
    """
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 3:
        return np.array([], dtype=np.intp)
    interior = (y[1:-1] >= y[:-2]) & (y[1:-1] >= y[2:]) & (y[1:-1] > floor)
    return np.flatnonzero(interior) + 1


def gaussian_model(params, x):
    """Sum of Gaussians a_i * exp(-(x - mu_i)^2 / (2 w_i^2)); params flat [a, mu, w]*k."""
    p = np.asarray(params, dtype=np.float64).reshape(-1, 3)
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for a, mu, w in p:
        out += a * np.exp(-((x - mu) ** 2) / (2.0 * w * w))
    return out


def _gaussian_jacobian(params, x):
    p = np.asarray(params, dtype=np.float64).reshape(-1, 3)
    cols = []
    for a, mu, w in p:
        z = (x - mu) / w
        g = np.exp(-0.5 * z * z)
        cols.append(g)                      # d/da
        cols.append(a * g * z / w)          # d/dmu
        cols.append(a * g * z * z / w)      # d/dw
    return np.column_stack(cols)


def _lm_minimize(p0, x, y, max_iter):
    """Damped Gauss-Newton (Levenberg-Marquardt) on the Gaussian mixture model."""
    p = np.asarray(p0, dtype=np.float64).copy()
    r = gaussian_model(p, x) - y
    cost = r @ r
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        jac = _gaussian_jacobian(p, x)
        jtj = jac.T @ jac
        g = jac.T @ r
        stepped = False
        for _ in range(25):
            damped = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-12))
            try:
                delta = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_try = p + delta
            r_try = gaussian_model(p_try, x) - y
            c_try = r_try @ r_try
            if c_try < cost:
                rel = (cost - c_try) / max(cost, 1e-300)
                p, r, cost = p_try, r_try, c_try
                lam = max(lam / 3.0, 1e-12)
                stepped = True
                if rel < 1e-12 or np.abs(delta).max() < 1e-12:
                    converged = True
                break
            lam *= 10.0
        if not stepped or converged:
            converged = converged or not stepped  # stall == local optimum
            break
    return p, cost, converged


def fit_gaussian_mixture(x, y, n_components, max_iter=200):
    """Multi-start LM fit of 1 or 2 Gaussians; returns (params, cost, converged).

    Starts are data-driven: the main peak with a half-max width estimate,
    plus deterministic perturbations; for two components the second start
    splits the dominant peak or seeds from the residual's peak.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    span = x.max() - x.min() if len(x) > 1 else 1.0
    i0 = int(np.argmax(y))
    a0, mu0 = float(y[i0]), float(x[i0])
    above = np.flatnonzero(y > 0.5 * a0)
    w0 = (x[above[-1]] - x[above[0]]) / 2.355 if len(above) > 1 else span / 4.0
    w0 = max(w0, span / 50.0, 1e-9)

    starts = []
    if n_components == 1:
        starts.append([a0, mu0, w0])
        starts.append([a0, mu0, 2.0 * w0])
        starts.append([0.8 * a0, mu0 + 0.25 * span, w0])
        starts.append([0.8 * a0, mu0 - 0.25 * span, w0])
    else:
        # residual after the main peak often localizes the second component
        r = y - gaussian_model([a0, mu0, w0], x)
        i1 = int(np.argmax(r))
        starts.append([a0, mu0, w0, max(float(r[i1]), 0.1 * a0), float(x[i1]), w0])
        starts.append([a0, mu0 - w0, w0, a0, mu0 + w0, w0])
        starts.append([0.7 * a0, mu0, 0.7 * w0, 0.5 * a0, mu0 + 0.3 * span, w0])
        starts.append([0.7 * a0, mu0, 0.7 * w0, 0.5 * a0, mu0 - 0.3 * span, w0])

    best = None
    for p0 in starts:
        p, cost, conv = _lm_minimize(np.asarray(p0), x, y, max_iter)
        if best is None or cost < best[1] - 1e-15 * (1 + best[1]):
            best = (p, cost, conv)
    p, cost, conv = best
    # sign conventions: the model is even in w, and a<0 means a failed fit
    p = p.reshape(-1, 3)
    p[:, 2] = np.abs(p[:, 2])
    p = p[np.argsort(p[:, 1])].reshape(-1)
    return p, cost, conv
