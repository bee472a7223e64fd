"""Pure-numpy ensemble kernels: trajectories batched along the leading axis.

Joint states are held as (T, 2, 2, 2, 2) arrays indexed (traj, s, e, s', e')
so the flat 4x4 index is 2s+e.  Free evolution and intrinsic T2 are a single
elementwise multiply; kicks and pulses are two-stage batched contractions
(left factor, then right factor) matching the loop order of the numba
backend.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _kick_matrices(eps, phi):
    """Batched 2x2 kick rotations, shape (..., 2, 2)."""
    ce, se = np.cos(eps), np.sin(eps)
    k = np.empty(eps.shape + (2, 2), dtype=np.complex128)
    if phi is None:
        k[..., 0, 0] = ce
        k[..., 0, 1] = -se
        k[..., 1, 0] = se
        k[..., 1, 1] = ce
    else:
        k[..., 0, 0] = ce
        k[..., 0, 1] = -1j * se * np.exp(-1j * phi)
        k[..., 1, 0] = -1j * se * np.exp(1j * phi)
        k[..., 1, 1] = ce
    return k


def _apply_kick(st, k):
    """st <- (1 (x) k) st (1 (x) k)^dagger, batched over trajectories."""
    tmp = np.einsum("teb,tsbuv->tseuv", k, st)
    return np.einsum("tseuv,tfv->tseuf", tmp, k.conj())


def _apply_pulse(st, p):
    """st <- (p (x) 1) st (p (x) 1)^dagger with one fixed 2x2 pulse."""
    tmp = np.einsum("sa,taebf->tsebf", p, st)
    return np.einsum("tsebf,ub->tseuf", tmp, p.conj())


def _apply_t1(st, g_sys, g_env):
    if g_sys != 1.0:
        a = st[:, 0, :, 0, :]
        b = st[:, 1, :, 1, :]
        tot = a + b
        dev = (a - b) * g_sys
        st[:, 0, :, 0, :] = 0.5 * (tot + dev)
        st[:, 1, :, 1, :] = 0.5 * (tot - dev)
    if g_env != 1.0:
        a = st[:, :, 0, :, 0]
        b = st[:, :, 1, :, 1]
        tot = a + b
        dev = (a - b) * g_env
        st[:, :, 0, :, 0] = 0.5 * (tot + dev)
        st[:, :, 1, :, 1] = 0.5 * (tot - dev)
    return st


def _coherence(st):
    return 2.0 * (st[:, 0, 0, 1, 0] + st[:, 0, 1, 1, 1])


def coherence_series(rho0, phase4, eps, phi):
    """Kicks-only decoherence factor per trajectory.

    rho0: (4,4) joint start state; phase4: per-interval free phases (4,);
    eps/phi: (T, n) kick angles (phi None in fixed-y mode).  Returns complex
    (T, n+1): f at every kick index including 0.
    """
    n_traj, n = eps.shape
    pm = (phase4[:, None] * phase4.conj()[None, :]).reshape(2, 2, 2, 2)
    st = np.broadcast_to(rho0.reshape(2, 2, 2, 2), (n_traj, 2, 2, 2, 2)).copy()
    out = np.empty((n_traj, n + 1), dtype=np.complex128)
    out[:, 0] = _coherence(st)
    kmats = _kick_matrices(eps, phi)
    for m in range(n):
        st *= pm
        st = _apply_kick(st, kmats[:, m])
        out[:, m + 1] = _coherence(st)
    return out


def timeline_ensemble(
    rho0, ev_pm, ev_kind, ev_mat, tail_pm, t1_sys, t1_env, use_t1, eps, phi, n_cycles
):
    """Evolve an ensemble through n_cycles of a compiled cycle.

    ev_pm[i] is the elementwise free-evolution (+ intrinsic T2) multiplier for
    the segment ending at event i; ev_kind[i] is 0 for an environment kick
    (angles consumed in order from eps/phi) and 1 for the fixed system pulse
    ev_mat[i]; tail_pm closes the cycle.  t1_sys/t1_env hold per-segment
    population-relaxation factors, applied only when use_t1.

    Returns (mx, finals): transverse magnetization at the n_cycles+1 cycle
    boundaries, shape (T, n_cycles+1), and the final joint states (T, 4, 4).
    """
    n_traj = eps.shape[0]
    n_ev = len(ev_kind)
    nk_cycle = int((ev_kind == 0).sum())
    ev_pm5 = ev_pm.reshape(n_ev, 2, 2, 2, 2)
    tail5 = tail_pm.reshape(2, 2, 2, 2)
    st = np.broadcast_to(rho0.reshape(2, 2, 2, 2), (n_traj, 2, 2, 2, 2)).copy()
    mx = np.empty((n_traj, n_cycles + 1), dtype=np.float64)
    mx[:, 0] = _coherence(st).real
    kmats = _kick_matrices(eps, phi) if eps.shape[1] else None
    for cyc in range(n_cycles):
        kick_idx = cyc * nk_cycle
        for i in range(n_ev):
            st *= ev_pm5[i]
            if use_t1:
                _apply_t1(st, t1_sys[i], t1_env[i])
            if ev_kind[i] == 0:
                st = _apply_kick(st, kmats[:, kick_idx])
                kick_idx += 1
            else:
                st = _apply_pulse(st, ev_mat[i])
        st *= tail5
        if use_t1:
            _apply_t1(st, t1_sys[n_ev], t1_env[n_ev])
        mx[:, cyc + 1] = _coherence(st).real
    return mx, st.reshape(n_traj, 4, 4).copy()
