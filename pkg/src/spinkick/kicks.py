"""Random-kick dephasing engine.

A train of instantaneous small random rotations ("kicks") on the environment
qubit, interleaved with free sz(x)sz evolution, dephases the system qubit.
This module provides the stochastic trajectory picture (sampling, single
trajectories, Monte Carlo ensemble averages) and the exact deterministic
counterpart: the ensemble-averaged step map on the environment state, whose
iterated trace gives the decoherence factor in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .constants import FIT_FLOOR, FIT_MIN_POINTS, THETA_SERIES_CUTOFF, TOLS
from ._fit import (
    InsufficientPointsError,
    LinearDecayFit,
    NonDecayingError,
    envelope_indices,
    log_linear_fit,
)
from .core import SpinSystem, check_state, evolve, free_propagator, tensor, transverse_init

__all__ = [
    "KickParams",
    "DecoherenceSeries",
    "SuperopCoeffs",
    "RatePoint",
    "gamma_of_theta",
    "sample_kick",
    "kick_rotation",
    "trajectory_propagate",
    "monte_carlo_f",
    "superop_step",
    "coherence_step_matrix",
    "closed_form_f",
    "t2_of_kick_rate",
]

_PHASE_MODES = ("fixed_y", "uniform_phase")


@dataclass(frozen=True)
class KickParams:
    """Kick ensemble parameters.

    theta: half-range of the kick angle (radians).  fixed_y draws the angle
    uniformly on [-theta, theta] about the y axis; uniform_phase draws the
    magnitude on [0, theta] and the rotation-axis phase on [0, 2pi).
    gamma_rate: kick rate in kicks per second (interval delta = 1/gamma_rate).
    """

    theta: float
    gamma_rate: float
    phase_mode: str = "fixed_y"
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.theta <= np.pi):
            raise ValueError(f"theta must be in (0, pi], got {self.theta}")
        if not self.gamma_rate > 0:
            raise ValueError(f"gamma_rate must be positive, got {self.gamma_rate}")
        if self.phase_mode not in _PHASE_MODES:
            raise ValueError(
                f"phase_mode must be one of {_PHASE_MODES}, got {self.phase_mode!r}"
            )

    @property
    def delta(self) -> float:
        """Inter-kick interval in seconds."""
        return 1.0 / self.gamma_rate


@dataclass
class DecoherenceSeries:
    """Sampled decoherence factor f(m) at the kick instants.

    times[m] = m * delta; f_values[m] is the complex factor multiplying the
    system's 01 coherence; stderr holds per-point Monte Carlo standard errors
    (zeros for the closed form).
    """

    times: np.ndarray
    f_values: np.ndarray
    source: str
    stderr: np.ndarray = field(default=None)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.f_values = np.asarray(self.f_values, dtype=np.complex128)
        if self.source not in ("monte_carlo", "closed_form"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.stderr is None:
            self.stderr = np.zeros_like(self.times)
        if len(self.times) != len(self.f_values):
            raise ValueError("times and f_values length mismatch")
        if len(self.times) == 0 or abs(self.f_values[0] - 1.0) > 1e-9:
            raise ValueError("series must start at f(0) = 1")
        over = np.abs(self.f_values).max() - 1.0
        if over > TOLS.coherence_overshoot:
            raise ValueError(f"|f| exceeds 1 by {over:.3e}")

    def magnitude(self) -> np.ndarray:
        return np.abs(self.f_values)


def gamma_of_theta(theta: float) -> float:
    """Averaging factor gamma = sin(2 theta) / (2 theta) of the kick ensemble.

    gamma = 1 means the kicks average to nothing (no added decoherence);
    gamma = 0 (theta = pi/2) is the fastest dephasing the model can produce.
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    if theta < THETA_SERIES_CUTOFF:
        x2 = (2.0 * theta) ** 2
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    return float(np.sin(2.0 * theta) / (2.0 * theta))


@dataclass(frozen=True)
class SuperopCoeffs:
    """Weights of the averaged step map: c + d = 1, c - d = gamma."""

    c: float
    d: float
    gamma_theta: float

    @classmethod
    def from_theta(cls, theta: float) -> "SuperopCoeffs":
        g = gamma_of_theta(theta)
        return cls(c=0.5 * (1.0 + g), d=0.5 * (1.0 - g), gamma_theta=g)

    def __post_init__(self):
        if abs(self.c + self.d - 1.0) > 1e-12 or abs(self.c - self.d - self.gamma_theta) > 1e-12:
            raise ValueError("coefficients must satisfy c + d = 1 and c - d = gamma")
        if not (0.0 <= self.d <= 1.0):
            raise ValueError(f"d out of range [0, 1]: {self.d}")


def kick_rotation(eps: float, phi: float | None = None) -> np.ndarray:
    """2x2 environment rotation for one kick.

    phi None: rotation exp(-i eps sy).  Otherwise rotation by eps about the
    axis cos(phi) x + sin(phi) y.
    """
    ce, se = np.cos(eps), np.sin(eps)
    if phi is None:
        return np.array([[ce, -se], [se, ce]], dtype=np.complex128)
    return np.array(
        [[ce, -1j * se * np.exp(-1j * phi)], [-1j * se * np.exp(1j * phi), ce]],
        dtype=np.complex128,
    )


def sample_kick(params: KickParams, rng_stream: np.random.Generator) -> np.ndarray:
    """Draw one kick and return it as a 4x4 unitary acting on the environment."""
    if params.phase_mode == "fixed_y":
        eps = rng_stream.uniform(-params.theta, params.theta)
        k = kick_rotation(eps)
    else:
        eps = rng_stream.uniform(0.0, params.theta)
        phi = rng_stream.uniform(0.0, 2.0 * np.pi)
        k = kick_rotation(eps, phi)
    return np.kron(np.eye(2, dtype=np.complex128), k)


def trajectory_propagate(
    rho0: np.ndarray,
    sys: SpinSystem,
    params: KickParams,
    n_kicks: int,
    rng_stream: np.random.Generator,
) -> np.ndarray:
    """One random realization: alternate free evolution over delta and a kick.

    Reference implementation built from the checked core operations; the
    vectorized backends are tested against it.  Kick angles for the whole
    trajectory are drawn up front (eps vector, then phi vector), the shared
    draw-order contract of this package.
    """
    if n_kicks < 0:
        raise ValueError(f"n_kicks must be >= 0, got {n_kicks}")
    rho = np.asarray(rho0, dtype=np.complex128).copy()
    if n_kicks == 0:
        return rho
    eps = rng_stream.uniform(
        *((-params.theta, params.theta) if params.phase_mode == "fixed_y" else (0.0, params.theta)),
        size=n_kicks,
    )
    phi = None
    if params.phase_mode == "uniform_phase":
        phi = rng_stream.uniform(0.0, 2.0 * np.pi, size=n_kicks)
    u_free = free_propagator(sys, params.delta)
    eye2 = np.eye(2, dtype=np.complex128)
    for m in range(n_kicks):
        rho = evolve(rho, u_free)
        k = kick_rotation(eps[m], None if phi is None else phi[m])
        rho = evolve(rho, np.kron(eye2, k))
    return rho


def monte_carlo_f(
    rho_e0: np.ndarray,
    sys: SpinSystem,
    params: KickParams,
    n_kicks: int,
    n_traj: int,
    backend: str | None = None,
) -> DecoherenceSeries:
    """Ensemble-averaged decoherence factor from n_traj random realizations.

    The system starts in (I + sx)/2 so its 01 coherence starts at 1/2 and
    f(m) = 2 <0| rho_bar^s(m) |1>.  Each trajectory consumes an independent
    counter-based stream keyed by (seed, trajectory index); the average is a
    fixed-order pairwise reduction, so the result is bitwise reproducible.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    if n_kicks < 0:
        raise ValueError(f"n_kicks must be >= 0, got {n_kicks}")
    rho_e0 = np.asarray(rho_e0, dtype=np.complex128)
    check_state(rho_e0)
    rho0 = tensor(transverse_init(), rho_e0)
    from .backends import get_backend

    kern = get_backend(backend)
    eps, phi = _rng.draw_kick_angles(params.seed, n_traj, n_kicks, params.theta, params.phase_mode)
    from .core import free_phases

    per_traj = kern.coherence_series(rho0, free_phases(sys, params.delta), eps, phi)
    f_mean = per_traj.mean(axis=0)
    if n_traj > 1:
        var = per_traj.real.var(axis=0, ddof=1) + per_traj.imag.var(axis=0, ddof=1)
    else:
        var = np.zeros(n_kicks + 1)
    stderr = np.sqrt(var / n_traj)
    times = np.arange(n_kicks + 1) * params.delta
    return DecoherenceSeries(times, f_mean, "monte_carlo", stderr)


def superop_step(
    rho_e: np.ndarray, coeffs: SuperopCoeffs, sys: SpinSystem, delta: float
) -> np.ndarray:
    """One application of the kick-averaged step map on the environment state.

    O(rho) = c UK rho UK + d sy UK rho UK sy  with  UK = exp(-i pi J delta sz / 2).
    UK appears on both sides without the adjoint: the ensemble average acts on
    the environment factor multiplying the system's 01 coherence, which picks
    up the conditional phase with the same sign from the left and the right.
    The map is deliberately neither trace-preserving nor Hermiticity-
    preserving; its iterated trace is the decoherence factor.
    """
    rho_e = np.asarray(rho_e, dtype=np.complex128)
    if rho_e.shape != (2, 2):
        raise ValueError(f"expected a 2x2 environment operator, got {rho_e.shape}")
    half = np.exp(-0.5j * np.pi * sys.j * delta)
    uk = np.diag([half, np.conj(half)])
    sy = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
    core = uk @ rho_e @ uk
    return coeffs.c * core + coeffs.d * (sy @ core @ sy)


def coherence_step_matrix(coeffs: SuperopCoeffs, psi: float) -> np.ndarray:
    """2x2 map of the environment diagonal (x, y) across one kick interval.

    psi is the net conditional phase pi*J*(signed time) accumulated since the
    previous kick; sign flips come from system pi pulses.  Iterating this
    matrix and summing the components reproduces the step map's trace without
    carrying full matrices.
    """
    em = np.exp(-1j * psi)
    ep = np.conj(em)
    c, d = coeffs.c, coeffs.d
    return np.array([[c * em, d * ep], [d * em, c * ep]], dtype=np.complex128)


def _f_series_fixed(coeffs: SuperopCoeffs, psi: float, v0: np.ndarray, n: int) -> np.ndarray:
    """f(m) for m = 0..n under a constant step matrix, via eigendecomposition.

    Falls back to direct iteration near an eigenvalue degeneracy, where the
    eigenvector basis is ill-conditioned.
    """
    m_step = coherence_step_matrix(coeffs, psi)
    lam, vec = np.linalg.eig(m_step)
    if abs(lam[0] - lam[1]) > 1e-9 * max(1.0, abs(lam[0]), abs(lam[1])):
        a = np.linalg.solve(vec, v0)
        w = vec.sum(axis=0) * a
        powers = lam[None, :] ** np.arange(n + 1)[:, None]
        return powers @ w
    f = np.empty(n + 1, dtype=np.complex128)
    v = v0.astype(np.complex128).copy()
    f[0] = v.sum()
    for m in range(n):
        v = m_step @ v
        f[m + 1] = v.sum()
    return f


def closed_form_f(
    rho_e0: np.ndarray,
    sys: SpinSystem,
    theta: float,
    delta: float,
    n_kicks: int,
) -> DecoherenceSeries:
    """Exact ensemble-averaged decoherence factor for the y-kick model.

    Valid for environment states diagonal in the sz basis: the averaged step
    map then closes on the two diagonal entries, and f(m) is their sum after
    m steps.  This is the deterministic oracle for monte_carlo_f in fixed_y
    mode.
    """
    rho_e0 = np.asarray(rho_e0, dtype=np.complex128)
    check_state(rho_e0)
    off = max(abs(rho_e0[0, 1]), abs(rho_e0[1, 0]))
    if off > TOLS.entry_eq:
        raise ValueError(
            f"closed form needs an environment state diagonal in sz (off-diagonal {off:.3e})"
        )
    if n_kicks < 0:
        raise ValueError(f"n_kicks must be >= 0, got {n_kicks}")
    coeffs = SuperopCoeffs.from_theta(theta)
    v0 = np.array([rho_e0[0, 0], rho_e0[1, 1]], dtype=np.complex128)
    f = _f_series_fixed(coeffs, np.pi * sys.j * delta, v0, n_kicks)
    times = np.arange(n_kicks + 1) * delta
    return DecoherenceSeries(times, f, "closed_form")


@dataclass
class RatePoint:
    """One point of a decoherence-rate sweep: rate = 1/T2 at a given kick rate."""

    gamma_rate: float
    rate: float
    status: str  # ok | non_decaying | insufficient
    fit: LinearDecayFit | None = None


def t2_of_kick_rate(
    sys: SpinSystem,
    theta: float,
    gamma_rates,
    rho_e0: np.ndarray | None = None,
    floor: float = FIT_FLOOR,
    max_kicks: int = 1 << 17,
) -> list[RatePoint]:
    """Decoherence rate 1/T2 as a function of kick rate, from the closed form.

    For each kick rate the window grows until the envelope of |f| decays
    below the fit floor (or a cap).  The fit runs on the local maxima of |f|
    (the envelope; |f| passes through zero when the conditional phase is not
    refocused), falling back to all above-floor samples for monotonic decay.
    Non-decaying points are reported with status instead of raising.
    """
    gamma_rates = np.asarray(gamma_rates, dtype=np.float64)
    if len(gamma_rates) == 0 or not (gamma_rates > 0).all():
        raise ValueError("gamma_rates must be positive")
    if np.any(np.diff(gamma_rates) <= 0):
        raise ValueError("gamma_rates must be strictly ascending")
    if rho_e0 is None:
        rho_e0 = 0.5 * np.eye(2, dtype=np.complex128)
    else:
        rho_e0 = np.asarray(rho_e0, dtype=np.complex128)
        check_state(rho_e0)
        if max(abs(rho_e0[0, 1]), abs(rho_e0[1, 0])) > TOLS.entry_eq:
            raise ValueError("rate sweep needs an environment state diagonal in sz")
    coeffs = SuperopCoeffs.from_theta(theta)
    v0 = np.array([rho_e0[0, 0], rho_e0[1, 1]], dtype=np.complex128)

    points = []
    for g in gamma_rates:
        delta = 1.0 / g
        n = 256
        while True:
            mag = np.abs(_f_series_fixed(coeffs, np.pi * sys.j * delta, v0, n))
            tail = mag[-max(1, n // 16):].max()
            if tail < floor or n >= max_kicks:
                break
            n *= 4
        if tail > 0.98:
            # envelope never came down: revival-locked or effectively unitary
            points.append(RatePoint(float(g), float("nan"), "non_decaying"))
            continue
        idx = envelope_indices(mag, floor)
        if len(idx) < FIT_MIN_POINTS:
            idx = np.flatnonzero(mag > floor)
        times = idx * delta
        try:
            fit = log_linear_fit(times, mag[idx], floor=floor)
        except NonDecayingError:
            points.append(RatePoint(float(g), float("nan"), "non_decaying"))
            continue
        except InsufficientPointsError:
            points.append(RatePoint(float(g), float("nan"), "insufficient"))
            continue
        points.append(RatePoint(float(g), -fit.slope, "ok", fit))
    return points
