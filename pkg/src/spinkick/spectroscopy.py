"""Noise spectroscopy: decay curves under CPMG, T2 fits, and the spectral
density S(omega) = pi^2 / (4 T2) probed at omega = pi / tau.

The sweep treats every tau point as an independent experiment with its own
derived seed, fits the cycle-boundary magnetization to an exponential, and
inverts to S(omega).  A closed-form variant replaces the Monte Carlo ensemble
with the exact averaged kick map for theory overlays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import FIT_FLOOR, FIT_MIN_POINTS
from ._fit import (
    FitError,
    InsufficientPointsError,
    NoConvergenceError,
    NonDecayingError,
    envelope_indices,
    fit_gaussian_mixture,
    gaussian_model,
    log_linear_fit,
)
from .core import RelaxationParams, SpinSystem, tensor, transverse_init
from .kicks import KickParams, SuperopCoeffs
from .rng import derive_seed
from .sequences import (
    DDParams,
    Timeline,
    build_timeline,
    coherence_cycle_matrix,
    run_timeline_ensemble,
    signed_kick_phases,
)

__all__ = [
    "DecayCurve",
    "ExpFit",
    "SpectralPoint",
    "SpectralProfile",
    "GaussianFit",
    "AllPointsFailed",
    "simulate_decay",
    "fit_exponential",
    "spectral_density",
    "sweep_spectrum",
    "cory_model_spectrum",
    "subtract_baseline",
    "fit_gaussians",
    "NonDecayingError",
    "InsufficientPointsError",
    "NoConvergenceError",
]

#: below this many pi pulses per decay run the narrow-filter reading of the
#: T2 -> S(omega) inversion is shaky; sweeps warn but proceed
MIN_PULSES_FOR_FILTER = 50


class AllPointsFailed(RuntimeError):
    """Every tau point of a sweep failed to fit; carries the gap list."""

    def __init__(self, message, gaps):
        super().__init__(message)
        self.gaps = gaps


@dataclass
class DecayCurve:
    """Ensemble-averaged transverse magnetization at cycle boundaries."""

    times: np.ndarray
    m_x: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.m_x = np.asarray(self.m_x, dtype=np.float64)
        self.stderr = np.asarray(self.stderr, dtype=np.float64)
        if not (len(self.times) == len(self.m_x) == len(self.stderr)):
            raise ValueError("times, m_x, stderr must have equal length")
        if len(self.times) < 1:
            raise ValueError("empty decay curve")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        slack = 1e-9 + 10.0 * self.stderr[0]
        if abs(self.m_x[0] - 1.0) > slack:
            raise ValueError(f"m_x(0) = {self.m_x[0]} is not 1 within tolerance")


@dataclass(frozen=True)
class ExpFit:
    """Exponential decay fit m_x ~ A exp(-t/T2)."""

    t2: float
    amplitude: float
    r_squared: float
    n_points_used: int
    t2_stderr: float

    def __post_init__(self):
        if not self.t2 > 0:
            raise ValueError(f"fitted t2 must be positive, got {self.t2}")


@dataclass(frozen=True)
class SpectralPoint:
    omega: float       # rad/s, = pi / tau
    s_value: float     # 1/s
    provenance: str    # total | kicks_only | baseline
    stderr: float = 0.0
    tau: float = 0.0   # the probing inter-pulse spacing (s)

    def __post_init__(self):
        if self.s_value < 0:
            raise ValueError(f"spectral density must be >= 0, got {self.s_value}")


@dataclass
class SpectralProfile:
    """S(omega) samples sorted by increasing omega, plus any failed points."""

    points: list[SpectralPoint]
    provenance: str
    gaps: list[dict] = field(default_factory=list)

    def __post_init__(self):
        omegas = [p.omega for p in self.points]
        if any(b <= a for a, b in zip(omegas, omegas[1:])):
            raise ValueError("profile omegas must be strictly increasing")

    @property
    def omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.points])

    @property
    def s_values(self) -> np.ndarray:
        return np.array([p.s_value for p in self.points])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([p.stderr for p in self.points])


@dataclass(frozen=True)
class GaussianFit:
    """1- or 2-component Gaussian fit of a spectral profile."""

    components: tuple  # of (amplitude, center, width)
    residual_norm: float
    converged: bool = True

    def __post_init__(self):
        for a, mu, w in self.components:
            if a < 0:
                raise ValueError(f"component amplitude must be >= 0, got {a}")
            if not w > 0:
                raise ValueError(f"component width must be positive, got {w}")


def simulate_decay(
    sys: SpinSystem,
    dd: DDParams | None,
    kicks: KickParams | None = None,
    relax: RelaxationParams | None = None,
    n_cycles: int = 32,
    n_traj: int = 1000,
    t_c: float | None = None,
    rho_e0: np.ndarray | None = None,
    backend: str | None = None,
) -> DecayCurve:
    """Ensemble magnetization decay through a repeated cycle.

    The cycle merges the decoupling schedule (dd) and the kick train; with no
    dd, t_c sets the sampling period.  Without kicks the evolution is
    deterministic and collapses to a single trajectory.
    """
    if dd is None and t_c is None:
        raise ValueError("with dd=None an explicit t_c is required")
    cycle = dd.resolved_cycle_time() if dd is not None else t_c
    timeline = build_timeline(dd, kicks, cycle, n_cycles)
    if rho_e0 is None:
        rho_e0 = 0.5 * np.eye(2, dtype=np.complex128)
    rho0 = tensor(transverse_init(), rho_e0)
    times, mx, _ = run_timeline_ensemble(
        rho0, sys, timeline, relax, n_traj=n_traj, backend=backend
    )
    mean = mx.mean(axis=0)
    n_run = mx.shape[0]
    if n_run > 1:
        stderr = mx.std(axis=0, ddof=1) / np.sqrt(n_run)
    else:
        stderr = np.zeros_like(mean)
    return DecayCurve(times, mean, stderr)


def fit_exponential(curve: DecayCurve) -> ExpFit:
    """Log-linear least squares of ln(m_x) over samples above the fit floor.

    T2 = -1/slope.  The T2 uncertainty propagates the per-point Monte Carlo
    errors when the curve has them, else the OLS residual estimate.
    """
    stderr = curve.stderr if np.any(curve.stderr > 0) else None
    fit = log_linear_fit(curve.times, curve.m_x, stderr=stderr)
    t2 = -1.0 / fit.slope
    return ExpFit(
        t2=t2,
        amplitude=float(np.exp(fit.intercept)),
        r_squared=fit.r_squared,
        n_points_used=fit.n_used,
        t2_stderr=fit.slope_stderr / fit.slope**2,
    )


def spectral_density(t2: float) -> float:
    """Noise spectral density probed by an equidistant pi train: pi^2/(4 T2)."""
    if not t2 > 0:
        raise ValueError(f"t2 must be positive, got {t2}")
    return float(np.pi**2 / (4.0 * t2))


def _warn_if_few_pulses(n_cycles, n_pulses):
    if n_cycles * n_pulses < MIN_PULSES_FOR_FILTER:
        warnings.warn(
            f"{n_cycles * n_pulses} pi pulses per run is below "
            f"{MIN_PULSES_FOR_FILTER}; the narrow-filter T2->S inversion is "
            "only approximate",
            stacklevel=3,
        )


def sweep_spectrum(
    sys: SpinSystem,
    kicks: KickParams | None,
    tau_grid,
    n_pulses: int = 7,
    dd_kind: str = "cpmg",
    n_cycles: int = 16,
    n_traj: int = 500,
    relax: RelaxationParams | None = None,
    provenance: str = "total",
    profile_index: int = 0,
    backend: str | None = None,
) -> SpectralProfile:
    """Scan S(omega) over omega = pi/tau by Monte Carlo decay + fit per tau.

    Each tau point runs as an independent experiment seeded by
    (kicks.seed, 1, profile_index, point index), so the sweep is a
    deterministic parallel map.  Fit failures become gaps; if every point
    fails the sweep raises AllPointsFailed.
    """
    tau_grid = np.asarray(tau_grid, dtype=np.float64)
    if len(tau_grid) == 0 or not (tau_grid > 0).all():
        raise ValueError("tau_grid must be non-empty and positive")
    if len(np.unique(tau_grid)) != len(tau_grid):
        raise ValueError("tau_grid values must be distinct")
    _warn_if_few_pulses(n_cycles, n_pulses)
    points, gaps = [], []
    for i, tau in enumerate(tau_grid):
        dd = DDParams(kind=dd_kind, n_pulses=n_pulses, tau=float(tau))
        kp = None
        if kicks is not None:
            kp = replace(kicks, seed=derive_seed(kicks.seed, 1, profile_index, i))
        omega = np.pi / tau
        try:
            curve = simulate_decay(
                sys, dd, kp, relax, n_cycles=n_cycles, n_traj=n_traj, backend=backend
            )
            fit = fit_exponential(curve)
        except FitError as err:
            gaps.append(
                {"tau": float(tau), "omega": float(omega), "reason": type(err).__name__}
            )
            continue
        s = spectral_density(fit.t2)
        s_err = spectral_density(fit.t2) * fit.t2_stderr / fit.t2
        points.append(SpectralPoint(float(omega), s, provenance, float(s_err), float(tau)))
    if not points:
        raise AllPointsFailed("no tau point produced a decay fit", gaps)
    points.sort(key=lambda p: p.omega)
    gaps.sort(key=lambda g: g["omega"])
    return SpectralProfile(points, provenance, gaps)


def cory_model_spectrum(
    sys: SpinSystem,
    theta: float,
    gamma_rate: float,
    tau_grid,
    n_pulses: int = 7,
    dd_kind: str = "cpmg",
    floor: float = FIT_FLOOR,
    max_cycles: int = 1 << 15,
) -> SpectralProfile:
    """Deterministic S(omega) profile from the exact averaged kick map.

    For each tau the per-cycle closed-form map (kick steps with signed
    conditional phases) is iterated until the coherence envelope clears the
    fit floor, then fitted exactly like the Monte Carlo route.  Only the
    fixed-y kick ensemble has this closed form.
    """
    tau_grid = np.asarray(tau_grid, dtype=np.float64)
    if len(tau_grid) == 0 or not (tau_grid > 0).all():
        raise ValueError("tau_grid must be non-empty and positive")
    coeffs = SuperopCoeffs.from_theta(theta)
    kp = KickParams(theta=theta, gamma_rate=gamma_rate, phase_mode="fixed_y", seed=0)
    points, gaps = [], []
    for tau in tau_grid:
        dd = DDParams(kind=dd_kind, n_pulses=n_pulses, tau=float(tau))
        t_c = dd.resolved_cycle_time()
        timeline = build_timeline(dd, kp, t_c, 1)
        psis, tail_psi, end_sign = signed_kick_phases(timeline, sys)
        m_plus = coherence_cycle_matrix(coeffs, psis, tail_psi)
        m_minus = m_plus.conj() if end_sign < 0 else m_plus
        f = _iterate_cycles(m_plus, m_minus, floor, max_cycles)
        omega = np.pi / tau
        times = np.arange(len(f)) * t_c
        mag = np.abs(f)
        idx = envelope_indices(mag, floor)
        if len(idx) < FIT_MIN_POINTS:
            idx = np.flatnonzero(mag > floor)
        try:
            fit = log_linear_fit(times[idx], mag[idx], floor=floor)
        except FitError as err:
            gaps.append(
                {"tau": float(tau), "omega": float(omega), "reason": type(err).__name__}
            )
            continue
        t2 = -1.0 / fit.slope
        points.append(
            SpectralPoint(float(omega), spectral_density(t2), "total", 0.0, float(tau))
        )
    if not points:
        raise AllPointsFailed("closed-form sweep produced no decaying point", gaps)
    points.sort(key=lambda p: p.omega)
    gaps.sort(key=lambda g: g["omega"])
    return SpectralProfile(points, "total", gaps)


def _iterate_cycles(m_plus, m_minus, floor, max_cycles):
    """Cycle-boundary f values; cycle parity alternates the map when the
    pulse count is odd (the sign state flips each cycle)."""
    v = np.array([0.5, 0.5], dtype=np.complex128)
    f = [1.0 + 0.0j]
    env = 1.0
    n = 0
    while n < max_cycles:
        m = m_plus if n % 2 == 0 else m_minus
        v = m @ v
        n += 1
        val = v.sum()
        f.append(val)
        if n % 64 == 0:
            env = np.abs(f[-64:]).max()
            if env < floor:
                break
    return np.array(f)


def subtract_baseline(total: SpectralProfile, baseline: SpectralProfile) -> SpectralProfile:
    """Pointwise kicks-only profile: total minus baseline, clamped at zero.

    Points are matched by omega; a baseline gap (e.g. the no-kick run did not
    decay at that omega) counts as baseline zero.  Uncertainties add in
    quadrature.
    """
    base_by_omega = {round(p.omega, 9): p for p in baseline.points}
    points = []
    for p in total.points:
        b = base_by_omega.get(round(p.omega, 9))
        s_b, e_b = (b.s_value, b.stderr) if b is not None else (0.0, 0.0)
        s = max(p.s_value - s_b, 0.0)
        err = float(np.hypot(p.stderr, e_b))
        points.append(SpectralPoint(p.omega, s, "kicks_only", err, p.tau))
    return SpectralProfile(points, "kicks_only", list(total.gaps))


def fit_gaussians(profile: SpectralProfile, n_components: int = 1) -> GaussianFit:
    """Fit the profile with 1 or 2 Gaussian components (local damped
    Gauss-Newton with multi-start).

    Raises NoConvergenceError (best parameters attached) if no start
    converges within the iteration budget; warns when the fitted width
    degenerates to much wider than the sampled band.
    """
    if n_components not in (1, 2):
        raise ValueError(f"n_components must be 1 or 2, got {n_components}")
    x, y = profile.omegas, profile.s_values
    need = 3 * n_components + 2
    if len(x) < need:
        raise ValueError(f"need at least {need} points for {n_components} component(s)")
    params, cost, converged = fit_gaussian_mixture(x, y, n_components)
    comps = tuple(tuple(map(float, row)) for row in params.reshape(-1, 3))
    span = x.max() - x.min()
    for a, mu, w in comps:
        if w > 10.0 * span:
            warnings.warn(
                f"degenerate Gaussian width {w:.3g} (sampled band {span:.3g}); "
                "the profile is too flat to localize a peak",
                stacklevel=2,
            )
    if any(a < 0 for a, _, _ in comps):
        raise NoConvergenceError(
            "fit ended with a negative amplitude", best=params, diagnostics={"cost": cost}
        )
    if not converged:
        raise NoConvergenceError(
            "iteration budget exhausted", best=params, diagnostics={"cost": cost}
        )
    return GaussianFit(comps, float(np.sqrt(cost)), converged)
