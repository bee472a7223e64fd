"""Pulse schedules and timelines: CPMG/UDD pi-pulse trains on the system
qubit merged with kick trains on the environment qubit.

A Timeline describes one cycle of instantaneous events plus a repetition
count.  Kick events carry no angles -- those are sampled per realization at
simulation time.  simulate_timeline is the single-trajectory reference
implementation built from the checked core operations; run_timeline_ensemble
compiles the cycle once and drives the vectorized backends.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .constants import TOLS
from .core import (
    RelaxationParams,
    SpinSystem,
    free_phases,
    system_coherence,
    transverse_magnetization,
)
from .kicks import KickParams, kick_rotation

__all__ = [
    "PulseEvent",
    "Timeline",
    "DDParams",
    "cpmg_times",
    "udd_times",
    "build_timeline",
    "simulate_timeline",
    "run_timeline_ensemble",
    "compile_cycle",
    "pulse_unitary",
]


def cpmg_times(n_pulses: int, t_c: float) -> np.ndarray:
    """Equidistant pi-pulse instants t_j = (2j-1) t_c / (2N), j = 1..N.

    Centered placement (half-spacing delays at both cycle edges); the signed
    free-evolution intervals then cancel exactly each cycle, refocusing the
    static sz(x)sz coupling for every N.
    """
    if n_pulses < 1:
        raise ValueError(f"n_pulses must be >= 1, got {n_pulses}")
    if not t_c > 0:
        raise ValueError(f"t_c must be positive, got {t_c}")
    j = np.arange(1, n_pulses + 1)
    return (2 * j - 1) * t_c / (2 * n_pulses)


def udd_times(n_pulses: int, t_c: float) -> np.ndarray:
    """Uhrig instants t_j = t_c sin^2[pi j / (2(N+1))], j = 1..N.

    The upper half is built by reflection and an odd-N midpoint is pinned to
    t_c/2, so the exact identities t_j + t_{N+1-j} = t_c hold to the last bit
    and N = 1 collapses to the Hahn echo at exactly t_c/2.
    """
    if n_pulses < 1:
        raise ValueError(f"n_pulses must be >= 1, got {n_pulses}")
    if not t_c > 0:
        raise ValueError(f"t_c must be positive, got {t_c}")
    j = np.arange(1, n_pulses + 1)
    t = t_c * np.sin(np.pi * j / (2.0 * (n_pulses + 1))) ** 2
    half = n_pulses // 2
    if half:
        t[-half:] = t_c - t[half - 1 :: -1]
    if n_pulses % 2:
        t[half] = 0.5 * t_c
    return t


@dataclass(frozen=True)
class PulseEvent:
    """One instantaneous event inside a cycle.

    axis: rotation-axis phase in the xy plane (radians); angle: rotation
    angle.  Either may be None for kick events, meaning "sampled per
    realization".
    """

    time: float
    target: str  # 'system' | 'environment'
    axis: float | None
    angle: float | None

    def __post_init__(self):
        if self.target not in ("system", "environment"):
            raise ValueError(f"bad event target {self.target!r}")
        if self.time < 0:
            raise ValueError(f"event time must be >= 0, got {self.time}")
        if self.angle is not None and not np.isfinite(self.angle):
            raise ValueError("pulse angle must be finite")


_TARGET_RANK = {"system": 0, "environment": 1}


@dataclass(frozen=True)
class DDParams:
    """Decoupling-sequence parameters.

    Give the cycle length either directly (cycle_time) or via the CPMG
    inter-pulse spacing tau with t_c = N tau (also accepted for UDD, where
    tau is just a length scale).  pulse_axis 0 is x; angle_error eta makes
    every pi pulse rotate by pi (1 + eta).
    """

    kind: str  # 'cpmg' | 'udd'
    n_pulses: int
    cycle_time: float | None = None
    tau: float | None = None
    pulse_axis: float = 0.0
    angle_error: float = 0.0

    def __post_init__(self):
        if self.kind not in ("cpmg", "udd"):
            raise ValueError(f"kind must be 'cpmg' or 'udd', got {self.kind!r}")
        if self.n_pulses < 1:
            raise ValueError(f"n_pulses must be >= 1, got {self.n_pulses}")
        if (self.cycle_time is None) == (self.tau is None):
            raise ValueError("give exactly one of cycle_time or tau")
        if self.cycle_time is not None and not self.cycle_time > 0:
            raise ValueError("cycle_time must be positive")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")

    def resolved_cycle_time(self) -> float:
        return self.cycle_time if self.cycle_time is not None else self.n_pulses * self.tau

    def pulse_times(self) -> np.ndarray:
        t_c = self.resolved_cycle_time()
        if self.kind == "cpmg":
            return cpmg_times(self.n_pulses, t_c)
        return udd_times(self.n_pulses, t_c)


@dataclass(frozen=True)
class Timeline:
    """One cycle of time-sorted events, repeated n_cycles times.

    kick_params travels with the timeline because kick events defer their
    angle draws to simulation time.
    """

    cycle_time: float
    events: tuple[PulseEvent, ...]
    n_cycles: int
    kick_params: KickParams | None = None

    def __post_init__(self):
        if not self.cycle_time > 0:
            raise ValueError("cycle_time must be positive")
        if self.n_cycles < 1:
            raise ValueError(f"n_cycles must be >= 1, got {self.n_cycles}")
        last = -1.0
        last_target = None
        for ev in self.events:
            if ev.time > self.cycle_time * (1 + 1e-12):
                raise ValueError(f"event at {ev.time} beyond cycle_time {self.cycle_time}")
            if ev.time < last:
                raise ValueError("events must be sorted ascending by time")
            if ev.time == last and ev.target == last_target:
                raise ValueError(f"coincident events on the same target at t={ev.time}")
            last, last_target = ev.time, ev.target

    def n_kicks_per_cycle(self) -> int:
        return sum(1 for ev in self.events if ev.target == "environment")

    def to_text(self) -> str:
        """Plain-text event list for inspection and golden files."""
        lines = [
            f"cycle_time_s={self.cycle_time:.17g}",
            f"n_cycles={self.n_cycles}",
            "time_s target axis_rad angle_rad",
        ]
        for ev in self.events:
            axis = "random" if ev.axis is None else f"{ev.axis:.17g}"
            angle = "random" if ev.angle is None else f"{ev.angle:.17g}"
            lines.append(f"{ev.time:.17g} {ev.target} {axis} {angle}")
        return "\n".join(lines) + "\n"


def build_timeline(
    dd: DDParams | None,
    kicks: KickParams | None,
    t_c: float,
    n_cycles: int,
) -> Timeline:
    """Merge a pi-pulse schedule and a kick train into one cycle.

    Kicks sit at k*delta from the cycle start for k = 1..floor(t_c/delta);
    a kick landing exactly at t_c is kept.  Coincident system/environment
    events are ordered system first (they commute; the order is fixed for
    determinism).  With neither dd nor kicks the cycle is bare free
    evolution, which just samples the coupling phase at the boundaries.
    """
    if not t_c > 0:
        raise ValueError(f"t_c must be positive, got {t_c}")
    events = []
    if dd is not None:
        resolved = dd.resolved_cycle_time()
        if abs(resolved - t_c) > 1e-12 * max(t_c, resolved):
            raise ValueError(
                f"dd cycle time {resolved} conflicts with requested t_c {t_c}"
            )
        angle = np.pi * (1.0 + dd.angle_error)
        for t in dd.pulse_times():
            events.append(PulseEvent(float(t), "system", dd.pulse_axis, angle))
    if kicks is not None:
        delta = kicks.delta
        n_k = int(np.floor(t_c / delta + 1e-9))
        if n_k == 0:
            warnings.warn(
                f"kick interval {delta} exceeds cycle time {t_c}: no kicks scheduled",
                stacklevel=2,
            )
        axis = np.pi / 2 if kicks.phase_mode == "fixed_y" else None
        for k in range(1, n_k + 1):
            # k*delta can overshoot t_c by one ulp when delta divides t_c
            events.append(PulseEvent(min(k * delta, t_c), "environment", axis, None))
    events.sort(key=lambda ev: (ev.time, _TARGET_RANK[ev.target]))
    return Timeline(t_c, tuple(events), n_cycles, kicks)


def pulse_unitary(axis: float, angle: float) -> np.ndarray:
    """2x2 rotation by `angle` about the xy-plane axis at phase `axis`."""
    half = 0.5 * angle
    c, s = np.cos(half), np.sin(half)
    return np.array(
        [[c, -1j * s * np.exp(-1j * axis)], [-1j * s * np.exp(1j * axis), c]],
        dtype=np.complex128,
    )


def _relax_offdiag_factors(relax: RelaxationParams | None, dt: float) -> np.ndarray:
    """Elementwise intrinsic-T2 multiplier for a 4x4 state over duration dt.

    The same constants damp each qubit independently: entry (i, j) shrinks by
    exp(-dt/T2) once per qubit whose index differs between i and j.
    """
    f = np.ones((4, 4))
    if relax is None or relax.t2_intrinsic is None or dt == 0.0:
        return f
    g2 = np.exp(-dt / relax.t2_intrinsic)
    zs = np.array([0, 0, 1, 1])
    ze = np.array([0, 1, 0, 1])
    f *= np.where(zs[:, None] != zs[None, :], g2, 1.0)
    f *= np.where(ze[:, None] != ze[None, :], g2, 1.0)
    return f


def _relax_t1_factor(relax: RelaxationParams | None, dt: float) -> float:
    if relax is None or relax.t1 is None or dt == 0.0:
        return 1.0
    return float(np.exp(-dt / relax.t1))


def _t1_mix_joint(rho: np.ndarray, g_sys: float, g_env: float) -> np.ndarray:
    """Population relaxation toward I/2 on each qubit of a 4x4 state."""
    out = rho.copy()
    if g_sys != 1.0:
        a = out[0:2, 0:2].copy()
        b = out[2:4, 2:4].copy()
        out[0:2, 0:2] = 0.5 * ((a + b) + (a - b) * g_sys)
        out[2:4, 2:4] = 0.5 * ((a + b) - (a - b) * g_sys)
    if g_env != 1.0:
        for s in range(2):
            for s2 in range(2):
                a = out[2 * s, 2 * s2]
                b = out[2 * s + 1, 2 * s2 + 1]
                out[2 * s, 2 * s2] = 0.5 * ((a + b) + (a - b) * g_env)
                out[2 * s + 1, 2 * s2 + 1] = 0.5 * ((a + b) - (a - b) * g_env)
    return out


@dataclass(frozen=True)
class CompiledCycle:
    """One timeline cycle lowered to arrays for the ensemble kernels."""

    ev_pm: np.ndarray      # (n_ev, 4, 4) segment phase (+T2) multipliers
    ev_kind: np.ndarray    # (n_ev,) int8: 0 kick, 1 system pulse
    ev_mat: np.ndarray     # (n_ev, 2, 2) pulse unitaries (identity rows for kicks)
    tail_pm: np.ndarray    # (4, 4) closing segment multiplier
    t1_sys: np.ndarray     # (n_ev + 1,) per-segment population factors
    t1_env: np.ndarray
    use_t1: bool
    n_kicks_per_cycle: int


def compile_cycle(
    timeline: Timeline, sys: SpinSystem, relax: RelaxationParams | None = None
) -> CompiledCycle:
    """Precompute per-segment phase multipliers and event matrices."""
    events = timeline.events
    n_ev = len(events)
    ev_pm = np.empty((n_ev, 4, 4), dtype=np.complex128)
    ev_kind = np.zeros(n_ev, dtype=np.int8)
    ev_mat = np.empty((n_ev, 2, 2), dtype=np.complex128)
    t1_sys = np.ones(n_ev + 1)
    t1_env = np.ones(n_ev + 1)
    prev = 0.0
    for i, ev in enumerate(events):
        dt = ev.time - prev
        ph = free_phases(sys, dt)
        ev_pm[i] = (ph[:, None] * ph.conj()[None, :]) * _relax_offdiag_factors(relax, dt)
        g1 = _relax_t1_factor(relax, dt)
        t1_sys[i] = g1
        t1_env[i] = g1
        if ev.target == "environment":
            ev_kind[i] = 0
            ev_mat[i] = np.eye(2)
        else:
            ev_kind[i] = 1
            ev_mat[i] = pulse_unitary(ev.axis, ev.angle)
        prev = ev.time
    dt = timeline.cycle_time - prev
    ph = free_phases(sys, dt)
    tail_pm = (ph[:, None] * ph.conj()[None, :]) * _relax_offdiag_factors(relax, dt)
    g1 = _relax_t1_factor(relax, dt)
    t1_sys[n_ev] = g1
    t1_env[n_ev] = g1
    use_t1 = relax is not None and relax.t1 is not None
    return CompiledCycle(
        ev_pm, ev_kind, ev_mat, tail_pm, t1_sys, t1_env, use_t1, timeline.n_kicks_per_cycle()
    )


def simulate_timeline(
    rho0: np.ndarray,
    sys: SpinSystem,
    timeline: Timeline,
    relax: RelaxationParams | None = None,
    rng_stream: np.random.Generator | None = None,
) -> np.ndarray:
    """One realization, sampled at cycle boundaries; reference implementation.

    Piecewise: free phases over each segment, then intrinsic relaxation for
    that segment, then the instantaneous event.  Kick angles for the whole
    run are drawn up front from rng_stream (eps vector, then phi vector --
    the package-wide draw-order contract).  Returns (n_cycles+1, 4, 4)
    including the initial state.
    """
    rho = np.asarray(rho0, dtype=np.complex128).copy()
    if rho.shape != (4, 4):
        raise ValueError(f"expected a 4x4 joint state, got {rho.shape}")
    nk_cycle = timeline.n_kicks_per_cycle()
    total_kicks = nk_cycle * timeline.n_cycles
    eps = phi = None
    if total_kicks:
        kp = timeline.kick_params
        if kp is None:
            raise ValueError("timeline has kick events but no kick_params")
        if rng_stream is None:
            raise ValueError("timeline has kick events; an rng_stream is required")
        if kp.phase_mode == "fixed_y":
            eps = rng_stream.uniform(-kp.theta, kp.theta, size=total_kicks)
        else:
            eps = rng_stream.uniform(0.0, kp.theta, size=total_kicks)
            phi = rng_stream.uniform(0.0, 2.0 * np.pi, size=total_kicks)

    out = np.empty((timeline.n_cycles + 1, 4, 4), dtype=np.complex128)
    out[0] = rho
    eye2 = np.eye(2, dtype=np.complex128)
    kick_idx = 0
    for cyc in range(timeline.n_cycles):
        prev = 0.0
        for ev in timeline.events:
            rho = _free_relax_step(rho, sys, relax, ev.time - prev)
            if ev.target == "environment":
                k = kick_rotation(eps[kick_idx], None if phi is None else phi[kick_idx])
                u = np.kron(eye2, k)
                kick_idx += 1
            else:
                u = np.kron(pulse_unitary(ev.axis, ev.angle), eye2)
            rho = u @ rho @ u.conj().T
            prev = ev.time
        rho = _free_relax_step(rho, sys, relax, timeline.cycle_time - prev)
        out[cyc + 1] = rho
    return out


def _free_relax_step(rho, sys, relax, dt):
    ph = free_phases(sys, dt)
    rho = rho * (ph[:, None] * ph.conj()[None, :])
    if relax is not None:
        rho = rho * _relax_offdiag_factors(relax, dt)
        g1 = _relax_t1_factor(relax, dt)
        rho = _t1_mix_joint(rho, g1, g1)
    return rho


def run_timeline_ensemble(
    rho0: np.ndarray,
    sys: SpinSystem,
    timeline: Timeline,
    relax: RelaxationParams | None = None,
    n_traj: int = 1,
    backend: str | None = None,
):
    """Ensemble evolution through a timeline on the selected backend.

    Returns (times, mx, finals): cycle-boundary instants (n_cycles+1,),
    per-trajectory transverse magnetization (n_traj, n_cycles+1) and final
    joint states (n_traj, 4, 4).  A timeline without kicks is deterministic,
    so the ensemble collapses to a single trajectory.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    rho0 = np.asarray(rho0, dtype=np.complex128)
    compiled = compile_cycle(timeline, sys, relax)
    nk_cycle = compiled.n_kicks_per_cycle
    times = np.arange(timeline.n_cycles + 1) * timeline.cycle_time
    if nk_cycle == 0:
        traj = simulate_timeline(rho0, sys, timeline, relax)
        mx = np.array([[transverse_magnetization(r) for r in traj]])
        return times, mx, traj[-1][None, :, :].copy()
    kp = timeline.kick_params
    eps, phi = _rng.draw_kick_angles(
        kp.seed, n_traj, nk_cycle * timeline.n_cycles, kp.theta, kp.phase_mode
    )
    from .backends import get_backend

    kern = get_backend(backend)
    mx, finals = kern.timeline_ensemble(
        rho0,
        compiled.ev_pm,
        compiled.ev_kind,
        compiled.ev_mat,
        compiled.tail_pm,
        compiled.t1_sys,
        compiled.t1_env,
        compiled.use_t1,
        eps,
        phi,
        timeline.n_cycles,
    )
    return times, mx, finals


def signed_kick_phases(timeline: Timeline, sys: SpinSystem) -> tuple[np.ndarray, float, int]:
    """Net conditional phases of one cycle, signed by the pi-pulse flips.

    Walking one cycle with sign +1 at the start, the sz(x)sz phase pi*J*dt
    accumulates with a sign flipped by every system pi pulse; each kick
    closes an interval.  Returns (psi per kick, closing tail phase after the
    last kick, end-of-cycle sign).  Exact when the pulses are ideal pi
    rotations about an xy axis; this is the closed form's view of a timeline.
    """
    psis = []
    sign = 1
    acc = 0.0
    prev = 0.0
    for ev in timeline.events:
        acc += sign * np.pi * sys.j * (ev.time - prev)
        prev = ev.time
        if ev.target == "environment":
            psis.append(acc)
            acc = 0.0
        else:
            sign = -sign
    tail = acc + sign * np.pi * sys.j * (timeline.cycle_time - prev)
    return np.array(psis), tail, sign


def coherence_cycle_matrix(coeffs, psis: np.ndarray, tail_psi: float) -> np.ndarray:
    """2x2 closed-form map of the environment diagonal across one full cycle.

    Product of one averaged kick step per signed phase (time order), closed
    by the pure phase of the kick-free tail segment.  For a cycle starting
    with flipped sign, use the complex conjugate of this matrix.
    """
    from .kicks import coherence_step_matrix

    m = np.eye(2, dtype=np.complex128)
    for psi in psis:
        m = coherence_step_matrix(coeffs, psi) @ m
    tail = np.diag([np.exp(-1j * tail_psi), np.exp(1j * tail_psi)])
    return tail @ m
