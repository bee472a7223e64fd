"""Cross-checks between the numba and numpy trajectory kernels."""

import numpy as np
import numpy.testing as npt
import pytest

from spinkick.backends import (
    available_backends,
    default_backend_name,
    get_backend,
    set_jobs,
)
from spinkick.core import (
    RelaxationParams,
    SpinSystem,
    free_phases,
    tensor,
    transverse_init,
    transverse_magnetization,
)
from spinkick.kicks import KickParams, trajectory_propagate
from spinkick.rng import draw_kick_angles, trajectory_stream
from spinkick.sequences import (
    DDParams,
    build_timeline,
    run_timeline_ensemble,
    simulate_timeline,
)

numba = pytest.importorskip("numba")

RHO0 = tensor(transverse_init(), 0.5 * np.eye(2, dtype=complex))


def _f_of(rho4):
    # decoherence factor: twice the environment-traced 01 coherence
    return 2.0 * (rho4[0, 2] + rho4[1, 3])


def test_both_backends_available():
    names = available_backends()
    assert "numpy" in names and "numba" in names


def test_default_backend_env_override(monkeypatch):
    monkeypatch.setenv("SPINKICK_BACKEND", "numpy")
    assert default_backend_name() == "numpy"
    assert get_backend().__name__.endswith("numpy_backend")
    monkeypatch.delenv("SPINKICK_BACKEND")
    assert default_backend_name() == "numba"


def test_get_backend_rejects_unknown():
    with pytest.raises(ValueError):
        get_backend("fortran")


def test_set_jobs_validates_and_clamps():
    with pytest.raises(ValueError):
        set_jobs(0)
    assert set_jobs(1) == 1
    assert set_jobs(10 ** 6) <= numba.config.NUMBA_NUM_THREADS


@pytest.mark.parametrize("mode", ["fixed_y", "uniform_phase"])
def test_coherence_series_backends_agree(mode):
    sys = SpinSystem(j=215.0, nu_s=3.0, nu_e=-7.0)
    delta = 4e-5
    eps, phi = draw_kick_angles(5, 12, 40, 0.7, mode)
    ph = free_phases(sys, delta)
    a = get_backend("numpy").coherence_series(RHO0, ph, eps, phi)
    b = get_backend("numba").coherence_series(RHO0, ph, eps, phi)
    assert a.shape == b.shape == (12, 41)
    npt.assert_allclose(a, b, atol=1e-13)


@pytest.mark.parametrize("mode", ["fixed_y", "uniform_phase"])
@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_coherence_series_matches_dense_reference(backend, mode):
    """Kernel rows equal full density-matrix propagation trajectory by trajectory."""
    sys = SpinSystem(j=143.0)
    params = KickParams(theta=0.5, gamma_rate=2.5e4, phase_mode=mode, seed=61)
    n, n_traj = 15, 4
    eps, phi = draw_kick_angles(params.seed, n_traj, n, params.theta, mode)
    series = get_backend(backend).coherence_series(
        RHO0, free_phases(sys, params.delta), eps, phi
    )
    for t in range(n_traj):
        rho = trajectory_propagate(RHO0, sys, params, n, trajectory_stream(params.seed, t))
        assert series[t, -1] == pytest.approx(_f_of(rho), abs=1e-13)
    npt.assert_allclose(series[:, 0], 1.0, atol=1e-14)


def _kicked_timeline(seed=19, mode="fixed_y"):
    dd = DDParams(kind="cpmg", n_pulses=4, cycle_time=4e-3, pulse_axis=np.pi / 2)
    kicks = KickParams(theta=0.3, gamma_rate=5e3, phase_mode=mode, seed=seed)
    return build_timeline(dd, kicks, 4e-3, n_cycles=3)


@pytest.mark.parametrize("relax", [None, RelaxationParams(t1=0.05, t2_intrinsic=0.03)])
def test_timeline_ensemble_backends_agree(relax):
    sys = SpinSystem(j=215.0)
    tl = _kicked_timeline()
    t_a, mx_a, fin_a = run_timeline_ensemble(RHO0, sys, tl, relax, n_traj=9, backend="numpy")
    t_b, mx_b, fin_b = run_timeline_ensemble(RHO0, sys, tl, relax, n_traj=9, backend="numba")
    npt.assert_array_equal(t_a, t_b)
    npt.assert_allclose(mx_a, mx_b, atol=1e-13)
    npt.assert_allclose(fin_a, fin_b, atol=1e-13)


@pytest.mark.parametrize("mode", ["fixed_y", "uniform_phase"])
@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_timeline_ensemble_matches_reference(backend, mode):
    sys = SpinSystem(j=215.0, nu_s=-4.0)
    relax = RelaxationParams(t1=0.08, t2_intrinsic=0.05)
    tl = _kicked_timeline(seed=23, mode=mode)
    _, mx, finals = run_timeline_ensemble(RHO0, sys, tl, relax, n_traj=3, backend=backend)
    for t in range(3):
        traj = simulate_timeline(RHO0, sys, tl, relax, trajectory_stream(23, t))
        npt.assert_allclose(
            mx[t], [transverse_magnetization(r) for r in traj], atol=1e-12
        )
        npt.assert_allclose(finals[t], traj[-1], atol=1e-12)


def test_no_kick_timeline_collapses_to_one_row():
    sys = SpinSystem(j=100.0)
    dd = DDParams(kind="udd", n_pulses=3, cycle_time=6e-3)
    tl = build_timeline(dd, None, 6e-3, n_cycles=4)
    times, mx, finals = run_timeline_ensemble(RHO0, sys, tl, None, n_traj=500)
    assert mx.shape == (1, 5)
    assert finals.shape == (1, 4, 4)
    npt.assert_allclose(times, np.arange(5) * 6e-3, atol=1e-15)


def test_trajectory_slots_independent_of_ensemble_size():
    """Row t depends only on (seed, t): growing the ensemble changes nothing."""
    sys = SpinSystem(j=215.0)
    tl = _kicked_timeline(seed=37)
    for backend in ("numpy", "numba"):
        _, mx_small, fin_small = run_timeline_ensemble(
            RHO0, sys, tl, None, n_traj=5, backend=backend
        )
        _, mx_big, fin_big = run_timeline_ensemble(
            RHO0, sys, tl, None, n_traj=16, backend=backend
        )
        npt.assert_array_equal(mx_small, mx_big[:5])
        npt.assert_array_equal(fin_small, fin_big[:5])


def test_numba_bitwise_stable_across_job_counts():
    sys = SpinSystem(j=215.0)
    tl = _kicked_timeline(seed=41)
    set_jobs(1)
    _, mx_1, fin_1 = run_timeline_ensemble(RHO0, sys, tl, None, n_traj=32, backend="numba")
    set_jobs(4)
    _, mx_4, fin_4 = run_timeline_ensemble(RHO0, sys, tl, None, n_traj=32, backend="numba")
    npt.assert_array_equal(mx_1, mx_4)
    npt.assert_array_equal(fin_1, fin_4)
