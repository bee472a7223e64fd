"""Jit-compiled ensemble kernels, parallel over trajectories.

Same contract as numpy_backend; every trajectory writes only its own output
slot, so results are independent of the thread count.  The small 4x4 updates
are hand-unrolled over the two tensor factors (environment index is the fast
one: flat index 2s+e) in the same left-then-right association the numpy
backend uses.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

NAME = "numba"


@njit(cache=True)
def _kick_inplace(st, buf, k00, k01, k10, k11):
    # left factor: rows mix within each system block
    for a in range(2):
        for col in range(4):
            x0 = st[2 * a, col]
            x1 = st[2 * a + 1, col]
            buf[2 * a, col] = k00 * x0 + k01 * x1
            buf[2 * a + 1, col] = k10 * x0 + k11 * x1
    # right factor (conjugated): columns mix within each system block
    for row in range(4):
        for b in range(2):
            y0 = buf[row, 2 * b]
            y1 = buf[row, 2 * b + 1]
            st[row, 2 * b] = y0 * np.conj(k00) + y1 * np.conj(k01)
            st[row, 2 * b + 1] = y0 * np.conj(k10) + y1 * np.conj(k11)


@njit(cache=True)
def _pulse_inplace(st, buf, p00, p01, p10, p11):
    # left factor: rows mix across system blocks at fixed environment index
    for e in range(2):
        for col in range(4):
            x0 = st[e, col]
            x1 = st[2 + e, col]
            buf[e, col] = p00 * x0 + p01 * x1
            buf[2 + e, col] = p10 * x0 + p11 * x1
    for row in range(4):
        for e in range(2):
            y0 = buf[row, e]
            y1 = buf[row, 2 + e]
            st[row, e] = y0 * np.conj(p00) + y1 * np.conj(p01)
            st[row, 2 + e] = y0 * np.conj(p10) + y1 * np.conj(p11)


@njit(cache=True)
def _t1_inplace(st, g_sys, g_env):
    if g_sys != 1.0:
        for e in range(2):
            for e2 in range(2):
                a = st[e, e2]
                b = st[2 + e, 2 + e2]
                tot = a + b
                dev = (a - b) * g_sys
                st[e, e2] = 0.5 * (tot + dev)
                st[2 + e, 2 + e2] = 0.5 * (tot - dev)
    if g_env != 1.0:
        for s in range(2):
            for s2 in range(2):
                a = st[2 * s, 2 * s2]
                b = st[2 * s + 1, 2 * s2 + 1]
                tot = a + b
                dev = (a - b) * g_env
                st[2 * s, 2 * s2] = 0.5 * (tot + dev)
                st[2 * s + 1, 2 * s2 + 1] = 0.5 * (tot - dev)


@njit(cache=True)
def _kick_entries_y(eps):
    ce = np.cos(eps)
    se = np.sin(eps)
    return ce + 0j, -se + 0j, se + 0j, ce + 0j


@njit(cache=True)
def _kick_entries_phase(eps, phi):
    ce = np.cos(eps)
    se = np.sin(eps)
    ph = np.exp(1j * phi)
    return ce + 0j, -1j * se * np.conj(ph), -1j * se * ph, ce + 0j


@njit(parallel=True, cache=True)
def _coherence_kernel(rho0, pm, eps, phi, use_phi, out):
    n_traj, n = eps.shape
    for t in prange(n_traj):
        st = rho0.copy()
        buf = np.empty((4, 4), np.complex128)
        out[t, 0] = 2.0 * (st[0, 2] + st[1, 3])
        for m in range(n):
            for r in range(4):
                for c in range(4):
                    st[r, c] *= pm[r, c]
            if use_phi:
                k00, k01, k10, k11 = _kick_entries_phase(eps[t, m], phi[t, m])
            else:
                k00, k01, k10, k11 = _kick_entries_y(eps[t, m])
            _kick_inplace(st, buf, k00, k01, k10, k11)
            out[t, m + 1] = 2.0 * (st[0, 2] + st[1, 3])


@njit(parallel=True, cache=True)
def _timeline_kernel(
    rho0, ev_pm, ev_kind, ev_mat, tail_pm, t1s, t1e, use_t1, eps, phi, use_phi, n_cycles, mx, finals
):
    n_traj = eps.shape[0]
    n_ev = ev_kind.shape[0]
    nk_cycle = 0
    for i in range(n_ev):
        if ev_kind[i] == 0:
            nk_cycle += 1
    for t in prange(n_traj):
        st = rho0.copy()
        buf = np.empty((4, 4), np.complex128)
        mx[t, 0] = 2.0 * (st[0, 2].real + st[1, 3].real)
        for cyc in range(n_cycles):
            kidx = cyc * nk_cycle
            for i in range(n_ev):
                for r in range(4):
                    for c in range(4):
                        st[r, c] *= ev_pm[i, r, c]
                if use_t1:
                    _t1_inplace(st, t1s[i], t1e[i])
                if ev_kind[i] == 0:
                    if use_phi:
                        k00, k01, k10, k11 = _kick_entries_phase(eps[t, kidx], phi[t, kidx])
                    else:
                        k00, k01, k10, k11 = _kick_entries_y(eps[t, kidx])
                    _kick_inplace(st, buf, k00, k01, k10, k11)
                    kidx += 1
                else:
                    _pulse_inplace(
                        st, buf, ev_mat[i, 0, 0], ev_mat[i, 0, 1], ev_mat[i, 1, 0], ev_mat[i, 1, 1]
                    )
            for r in range(4):
                for c in range(4):
                    st[r, c] *= tail_pm[r, c]
            if use_t1:
                _t1_inplace(st, t1s[n_ev], t1e[n_ev])
            mx[t, cyc + 1] = 2.0 * (st[0, 2].real + st[1, 3].real)
        for r in range(4):
            for c in range(4):
                finals[t, r, c] = st[r, c]


def _dummy_phi():
    return np.zeros((1, 1), dtype=np.float64)


def coherence_series(rho0, phase4, eps, phi):
    """Kicks-only decoherence factor per trajectory; see numpy_backend."""
    pm = phase4[:, None] * phase4.conj()[None, :]
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    out = np.empty((eps.shape[0], eps.shape[1] + 1), dtype=np.complex128)
    use_phi = phi is not None
    phi_arr = np.ascontiguousarray(phi, dtype=np.float64) if use_phi else _dummy_phi()
    _coherence_kernel(
        np.ascontiguousarray(rho0, dtype=np.complex128),
        np.ascontiguousarray(pm),
        eps,
        phi_arr,
        use_phi,
        out,
    )
    return out


def timeline_ensemble(
    rho0, ev_pm, ev_kind, ev_mat, tail_pm, t1_sys, t1_env, use_t1, eps, phi, n_cycles
):
    """Compiled-cycle ensemble evolution; see numpy_backend for the contract."""
    n_traj = eps.shape[0]
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    use_phi = phi is not None
    phi_arr = np.ascontiguousarray(phi, dtype=np.float64) if use_phi else _dummy_phi()
    mx = np.empty((n_traj, n_cycles + 1), dtype=np.float64)
    finals = np.empty((n_traj, 4, 4), dtype=np.complex128)
    _timeline_kernel(
        np.ascontiguousarray(rho0, dtype=np.complex128),
        np.ascontiguousarray(ev_pm, dtype=np.complex128),
        np.ascontiguousarray(ev_kind, dtype=np.int8),
        np.ascontiguousarray(ev_mat, dtype=np.complex128),
        np.ascontiguousarray(tail_pm, dtype=np.complex128),
        np.ascontiguousarray(t1_sys, dtype=np.float64),
        np.ascontiguousarray(t1_env, dtype=np.float64),
        use_t1,
        eps,
        phi_arr,
        use_phi,
        n_cycles,
        mx,
        finals,
    )
    return mx, finals
