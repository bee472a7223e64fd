"""Pulse schedules, timeline assembly, and the signed-phase closed form."""

import numpy as np
import numpy.testing as npt
import pytest

from spinkick.core import SpinSystem, tensor, transverse_init
from spinkick.kicks import KickParams, SuperopCoeffs, closed_form_f
from spinkick.sequences import (
    DDParams,
    PulseEvent,
    Timeline,
    build_timeline,
    coherence_cycle_matrix,
    cpmg_times,
    pulse_unitary,
    run_timeline_ensemble,
    signed_kick_phases,
    udd_times,
)

RHO0 = tensor(transverse_init(), 0.5 * np.eye(2, dtype=complex))

# Uhrig instants for N = 7, t_c = 28 ms
UDD7_28MS = [
    0.0010656865448419853,
    0.0041005050633883345,
    0.0086424319468887418,
    0.014,
    0.019357568053111257,
    0.023899494936611667,
    0.026934313455158017,
]


# ----------------------------------------------------------------------
# pulse instants

def test_cpmg_small_cases():
    npt.assert_allclose(cpmg_times(1, 1.0), [0.5])
    npt.assert_allclose(cpmg_times(2, 1.0), [0.25, 0.75])


def test_cpmg_seven_pulse_spacing():
    # t_c = N tau with tau = 3.2 ms: pulses at odd multiples of tau/2
    t = cpmg_times(7, 22.4e-3)
    npt.assert_allclose(t, (2 * np.arange(1, 8) - 1) * 1.6e-3, rtol=1e-15)
    npt.assert_allclose(np.diff(t), 3.2e-3, rtol=1e-15)


def test_udd_small_cases():
    npt.assert_allclose(udd_times(1, 1.0), [0.5])
    npt.assert_allclose(udd_times(2, 1.0), [0.25, 0.75])  # N = 2 coincides with CPMG
    npt.assert_allclose(udd_times(7, 28e-3), UDD7_28MS, rtol=1e-15)


@pytest.mark.parametrize("fn", [cpmg_times, udd_times])
@pytest.mark.parametrize("n", [1, 2, 5, 12, 33])
def test_pulse_times_interior_and_increasing(fn, n):
    t = fn(n, 7.3e-3)
    assert (t > 0).all() and (t < 7.3e-3).all()
    assert (np.diff(t) > 0).all()


@pytest.mark.parametrize("n", [1, 3, 8, 13])
def test_udd_mirror_symmetry(n):
    t = udd_times(n, 1.0)
    npt.assert_allclose(t + t[::-1], 1.0, atol=1e-12)


def test_single_pulse_sequences_coincide():
    npt.assert_allclose(cpmg_times(1, 5e-3), udd_times(1, 5e-3), atol=1e-15)


@pytest.mark.parametrize("fn", [cpmg_times, udd_times])
def test_pulse_times_validate(fn):
    with pytest.raises(ValueError):
        fn(0, 1.0)
    with pytest.raises(ValueError):
        fn(3, 0.0)


# ----------------------------------------------------------------------
# parameter containers

def test_ddparams_tau_resolution():
    dd = DDParams(kind="cpmg", n_pulses=7, tau=3.2e-3)
    assert dd.resolved_cycle_time() == pytest.approx(22.4e-3, rel=1e-15)
    npt.assert_allclose(dd.pulse_times(), cpmg_times(7, 22.4e-3), rtol=1e-15)


def test_ddparams_validation():
    with pytest.raises(ValueError):
        DDParams(kind="carr", n_pulses=2, cycle_time=1e-3)
    with pytest.raises(ValueError):
        DDParams(kind="cpmg", n_pulses=0, cycle_time=1e-3)
    with pytest.raises(ValueError):
        DDParams(kind="cpmg", n_pulses=2, cycle_time=1e-3, tau=5e-4)
    with pytest.raises(ValueError):
        DDParams(kind="udd", n_pulses=2)


def test_pulse_event_validation():
    with pytest.raises(ValueError):
        PulseEvent(1e-3, "spectator", 0.0, np.pi)
    with pytest.raises(ValueError):
        PulseEvent(-1e-9, "system", 0.0, np.pi)
    with pytest.raises(ValueError):
        PulseEvent(1e-3, "system", 0.0, np.inf)


def test_timeline_validation():
    ev = PulseEvent(2e-3, "system", 0.0, np.pi)
    with pytest.raises(ValueError):
        Timeline(1e-3, (ev,), 1)  # event beyond the cycle
    with pytest.raises(ValueError):
        Timeline(5e-3, (ev, PulseEvent(1e-3, "system", 0.0, np.pi)), 1)  # unsorted
    with pytest.raises(ValueError):
        Timeline(5e-3, (ev, ev), 1)  # coincident on one target
    with pytest.raises(ValueError):
        Timeline(5e-3, (ev,), 0)


def test_pulse_unitary_properties():
    for axis in (0.0, np.pi / 2, 1.2):
        for angle in (np.pi, np.pi * 1.02, 0.3):
            u = pulse_unitary(axis, angle)
            npt.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-14)
    x, y, z = (np.array(m) for m in (
        [[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]))
    ux = pulse_unitary(0.0, np.pi)
    npt.assert_allclose(ux @ x @ ux.conj().T, x, atol=1e-14)
    npt.assert_allclose(ux @ z @ ux.conj().T, -z, atol=1e-14)
    uy = pulse_unitary(np.pi / 2, np.pi)
    npt.assert_allclose(uy @ y @ uy.conj().T, y, atol=1e-14)
    npt.assert_allclose(uy @ x @ uy.conj().T, -x, atol=1e-14)


# ----------------------------------------------------------------------
# timeline assembly

def test_build_timeline_event_counts():
    kicks = KickParams(theta=0.1, gamma_rate=25e3, seed=0)
    dd = DDParams(kind="cpmg", n_pulses=7, tau=3.2e-3)
    t_c = 22.4e-3
    assert build_timeline(None, kicks, t_c, 1).n_kicks_per_cycle() == 560
    only_dd = build_timeline(dd, None, t_c, 1)
    assert len(only_dd.events) == 7
    both = build_timeline(dd, kicks, t_c, 1)
    assert len(both.events) == 567
    # the last kick lands exactly on the cycle boundary and is kept
    assert both.events[-1].time == t_c


def test_build_timeline_orders_system_before_coincident_kick():
    kicks = KickParams(theta=0.1, gamma_rate=1e3, seed=0)
    dd = DDParams(kind="cpmg", n_pulses=1, cycle_time=4e-3)  # pulse at 2 ms = kick 2
    tl = build_timeline(dd, kicks, 4e-3, 1)
    coincident = [ev for ev in tl.events if ev.time == 2e-3]
    assert [ev.target for ev in coincident] == ["system", "environment"]


def test_build_timeline_pulse_angle_carries_error():
    dd = DDParams(kind="udd", n_pulses=3, cycle_time=6e-3, angle_error=0.02)
    tl = build_timeline(dd, None, 6e-3, 1)
    for ev in tl.events:
        assert ev.angle == pytest.approx(np.pi * 1.02, rel=1e-15)


def test_build_timeline_conflicting_cycle_time():
    dd = DDParams(kind="cpmg", n_pulses=2, cycle_time=4e-3)
    with pytest.raises(ValueError):
        build_timeline(dd, None, 5e-3, 1)


def test_build_timeline_warns_when_no_kick_fits():
    kicks = KickParams(theta=0.1, gamma_rate=100.0, seed=0)  # delta = 10 ms
    with pytest.warns(UserWarning):
        tl = build_timeline(None, kicks, 2e-3, 1)
    assert tl.n_kicks_per_cycle() == 0


def test_timeline_text_golden():
    kicks = KickParams(theta=0.1, gamma_rate=1e3, seed=0)
    dd = DDParams(kind="cpmg", n_pulses=1, cycle_time=2e-3)
    tl = build_timeline(dd, kicks, 2e-3, 2)
    assert tl.to_text() == (
        "cycle_time_s=0.002\n"
        "n_cycles=2\n"
        "time_s target axis_rad angle_rad\n"
        "0.001 system 0 3.1415926535897931\n"
        "0.001 environment 1.5707963267948966 random\n"
        "0.002 environment 1.5707963267948966 random\n"
    )


def test_uniform_phase_kicks_have_random_axis():
    kicks = KickParams(theta=0.1, gamma_rate=1e3, phase_mode="uniform_phase", seed=0)
    tl = build_timeline(None, kicks, 2e-3, 1)
    assert all(ev.axis is None for ev in tl.events)


# ----------------------------------------------------------------------
# echo physics

def test_bare_evolution_oscillates_at_coupling_frequency():
    sys = SpinSystem(j=125.0)
    t_c = 1.7e-3
    tl = build_timeline(None, None, t_c, 6)
    times, mx, _ = run_timeline_ensemble(RHO0, sys, tl)
    npt.assert_allclose(mx[0], np.cos(np.pi * sys.j * times), atol=1e-12)


@pytest.mark.parametrize("kind", ["cpmg", "udd"])
@pytest.mark.parametrize("n", [1, 2, 7, 16])
def test_pi_train_refocuses_static_coupling(kind, n):
    rng = np.random.default_rng(5 + n)
    sys = SpinSystem(j=float(rng.uniform(10, 500)))
    dd = DDParams(kind=kind, n_pulses=n, cycle_time=20e-3)
    tl = build_timeline(dd, None, 20e-3, 4)
    _, mx, _ = run_timeline_ensemble(RHO0, sys, tl)
    npt.assert_allclose(mx[0], 1.0, atol=1e-10)


@pytest.mark.parametrize("kind", ["cpmg", "udd"])
def test_total_signed_phase_vanishes(kind):
    """Zeroth-order filter property: the signed dwell times cancel per cycle."""
    sys = SpinSystem(j=313.0)
    for n in range(1, 13):
        dd = DDParams(kind=kind, n_pulses=n, cycle_time=11e-3)
        tl = build_timeline(dd, None, 11e-3, 1)
        psis, tail, end_sign = signed_kick_phases(tl, sys)
        assert psis.size == 0
        assert tail == pytest.approx(0.0, abs=1e-12 * np.pi * sys.j * 11e-3)
        assert end_sign == (1 if n % 2 == 0 else -1)


def test_signed_phases_kicks_only():
    sys = SpinSystem(j=215.0)
    kicks = KickParams(theta=0.1, gamma_rate=25e3, seed=0)
    tl = build_timeline(None, kicks, 22.4e-3, 1)
    psis, tail, end_sign = signed_kick_phases(tl, sys)
    npt.assert_allclose(psis, np.pi * sys.j * 4e-5, rtol=1e-9)
    assert tail == pytest.approx(0.0, abs=1e-9)
    assert end_sign == 1


def test_signed_phases_flip_at_coincident_pulse():
    # pulse at 2 ms sits between the phase accumulation and the kick there
    sys = SpinSystem(j=100.0)
    kicks = KickParams(theta=0.1, gamma_rate=1e3, seed=0)
    dd = DDParams(kind="cpmg", n_pulses=1, cycle_time=4e-3)
    tl = build_timeline(dd, kicks, 4e-3, 1)
    psis, tail, end_sign = signed_kick_phases(tl, sys)
    unit = np.pi * sys.j * 1e-3
    npt.assert_allclose(psis, [unit, unit, -unit, -unit], atol=1e-12)
    assert tail == pytest.approx(0.0, abs=1e-12)
    assert end_sign == -1


def test_coincident_pulse_and_kick_commute():
    k = np.kron(np.eye(2), pulse_unitary(np.pi / 2, 0.37))
    p = np.kron(pulse_unitary(0.0, np.pi), np.eye(2))
    npt.assert_allclose(k @ p, p @ k, atol=1e-12)


# ----------------------------------------------------------------------
# closed-form cycle map

def test_cycle_matrix_reproduces_plain_kick_series():
    sys = SpinSystem(j=215.0)
    theta, delta, nk = 0.3, 4e-5, 25
    coeffs = SuperopCoeffs.from_theta(theta)
    m_cyc = coherence_cycle_matrix(coeffs, np.full(nk, np.pi * sys.j * delta), 0.0)
    series = closed_form_f(0.5 * np.eye(2, dtype=complex), sys, theta, delta, 4 * nk)
    v = np.array([0.5, 0.5], dtype=complex)
    for cyc in range(1, 5):
        v = m_cyc @ v
        assert v.sum() == pytest.approx(series.f_values[cyc * nk], abs=1e-12)


def test_cycle_matrix_predicts_kicked_cpmg_ensemble():
    """Monte Carlo mean m_x tracks the signed-phase closed form within 3 sigma."""
    sys = SpinSystem(j=215.0)
    kicks = KickParams(theta=np.deg2rad(2), gamma_rate=25e3, seed=97)
    dd = DDParams(kind="cpmg", n_pulses=7, tau=3.2e-3)
    t_c = dd.resolved_cycle_time()
    n_cycles = 6
    tl = build_timeline(dd, kicks, t_c, n_cycles)
    _, mx, _ = run_timeline_ensemble(RHO0, sys, tl, n_traj=3000)
    mean = mx.mean(axis=0)
    sem = mx.std(axis=0, ddof=1) / np.sqrt(mx.shape[0])

    psis, tail, end_sign = signed_kick_phases(tl, sys)
    m_cyc = coherence_cycle_matrix(SuperopCoeffs.from_theta(kicks.theta), psis, tail)
    v = np.array([0.5, 0.5], dtype=complex)
    for cyc in range(n_cycles):
        step = m_cyc if (end_sign == 1 or cyc % 2 == 0) else np.conj(m_cyc)
        v = step @ v
        f = v.sum()
        assert abs(f.imag) < 1e-12
        assert abs(mean[cyc + 1] - f.real) < 3.0 * sem[cyc + 1] + 1e-12


def test_kicks_degrade_echo():
    sys = SpinSystem(j=215.0)
    dd = DDParams(kind="cpmg", n_pulses=7, tau=3.2e-3)
    t_c = dd.resolved_cycle_time()
    kicks = KickParams(theta=np.deg2rad(2), gamma_rate=25e3, seed=7)
    quiet = build_timeline(dd, None, t_c, 8)
    noisy = build_timeline(dd, kicks, t_c, 8)
    _, mx_q, _ = run_timeline_ensemble(RHO0, sys, quiet)
    _, mx_n, _ = run_timeline_ensemble(RHO0, sys, noisy, n_traj=400)
    assert mx_q[0, -1] == pytest.approx(1.0, abs=1e-10)
    assert mx_n.mean(axis=0)[-1] < 0.9
