"""Decay fitting, the T2 -> S(omega) inversion, and profile post-processing."""

import warnings

import numpy as np
import numpy.testing as npt
import pytest

from spinkick._fit import (
    FitError,
    InsufficientPointsError,
    NoConvergenceError,
    NonDecayingError,
    gaussian_model,
)
from spinkick.core import RelaxationParams, SpinSystem
from spinkick.kicks import KickParams
from spinkick.sequences import DDParams
from spinkick.spectroscopy import (
    AllPointsFailed,
    DecayCurve,
    SpectralPoint,
    SpectralProfile,
    cory_model_spectrum,
    fit_exponential,
    fit_gaussians,
    simulate_decay,
    spectral_density,
    subtract_baseline,
    sweep_spectrum,
)

SYS = SpinSystem(j=215.0)


def _profile(x, y, provenance="total"):
    pts = [SpectralPoint(float(a), float(b), provenance) for a, b in zip(x, y)]
    return SpectralProfile(pts, provenance)


# ----------------------------------------------------------------------
# exponential fitting

def test_fit_exponential_exact_curve():
    t = np.linspace(0.0, 2.0, 20)
    curve = DecayCurve(t, np.exp(-t / 0.5), np.zeros_like(t))
    fit = fit_exponential(curve)
    assert fit.t2 == pytest.approx(0.5, rel=1e-9)
    assert fit.amplitude == pytest.approx(1.0, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_exponential_noisy_recovery_rate():
    rng = np.random.default_rng(11)
    t = np.linspace(0.0, 1.5, 25)
    misses = 0
    for _ in range(100):
        m = np.exp(-t / 0.5) * (1.0 + 0.01 * rng.standard_normal(t.size))
        curve = DecayCurve(t, m, np.full_like(t, 0.01))
        if abs(fit_exponential(curve).t2 - 0.5) > 0.01:  # 2 %
            misses += 1
    assert misses <= 8  # ~95 % of fits inside the 2 % band


def test_fit_exponential_flat_curve_raises():
    t = np.linspace(0.0, 1.0, 12)
    curve = DecayCurve(t, np.ones_like(t), np.zeros_like(t))
    with pytest.raises(NonDecayingError):
        fit_exponential(curve)


def test_fit_exponential_too_few_points():
    t = np.array([0.0, 0.1, 0.2])
    curve = DecayCurve(t, np.exp(-t / 0.05), np.zeros_like(t))
    with pytest.raises(InsufficientPointsError):
        fit_exponential(curve)


def test_decay_curve_validation():
    t = np.array([0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        DecayCurve(t, np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        DecayCurve(np.arange(3.0), np.array([0.2, 0.1, 0.05]), np.zeros(3))
    with pytest.raises(ValueError):
        DecayCurve(np.arange(3.0), np.ones(2), np.zeros(2))


def test_spectral_density_value():
    assert spectral_density(1.0) == pytest.approx(np.pi**2 / 4.0, rel=1e-15)
    assert spectral_density(2.0) == pytest.approx(np.pi**2 / 8.0, rel=1e-15)
    with pytest.raises(ValueError):
        spectral_density(0.0)


# ----------------------------------------------------------------------
# simulated decay

def test_intrinsic_dephasing_sets_the_echo_envelope():
    relax = RelaxationParams(t2_intrinsic=0.12)
    dd = DDParams(kind="cpmg", n_pulses=7, tau=3.2e-3)
    curve = simulate_decay(SYS, dd, relax=relax, n_cycles=10)
    npt.assert_allclose(curve.m_x, np.exp(-curve.times / 0.12), atol=1e-10)
    assert fit_exponential(curve).t2 == pytest.approx(0.12, rel=1e-9)


def test_simulate_decay_requires_some_cycle_length():
    with pytest.raises(ValueError):
        simulate_decay(SYS, None)


def test_sweep_flat_profile_from_intrinsic_relaxation():
    """A frequency-independent mechanism reads out as a flat S(omega)."""
    t2i = 0.1
    prof = sweep_spectrum(
        SYS, None, [2e-3, 3e-3, 4e-3], relax=RelaxationParams(t2_intrinsic=t2i)
    )
    assert prof.provenance == "total"
    assert prof.gaps == []
    npt.assert_allclose(prof.s_values, np.pi**2 / (4.0 * t2i), rtol=1e-6)
    npt.assert_allclose(prof.omegas, np.pi / np.array([4e-3, 3e-3, 2e-3]), rtol=1e-12)
    npt.assert_allclose([p.tau for p in prof.points], [4e-3, 3e-3, 2e-3], rtol=1e-12)


def test_sweep_all_points_failing_raises_with_gaps():
    # 4 cycles give 5 boundary samples, below the 8-point fit minimum
    with pytest.warns(UserWarning, match="pi pulses per run"):
        with pytest.raises(AllPointsFailed) as exc:
            sweep_spectrum(
                SYS,
                None,
                [2e-3, 4e-3],
                n_cycles=4,
                relax=RelaxationParams(t2_intrinsic=0.1),
            )
    gaps = exc.value.gaps
    assert [g["reason"] for g in gaps] == ["InsufficientPointsError"] * 2
    assert sorted(g["tau"] for g in gaps) == [2e-3, 4e-3]


def test_sweep_validates_grid():
    with pytest.raises(ValueError):
        sweep_spectrum(SYS, None, [])
    with pytest.raises(ValueError):
        sweep_spectrum(SYS, None, [1e-3, -2e-3])
    with pytest.raises(ValueError):
        sweep_spectrum(SYS, None, [1e-3, 1e-3])


def test_sweep_warns_below_filter_pulse_budget():
    with pytest.warns(UserWarning, match="pi pulses per run"):
        sweep_spectrum(
            SYS,
            None,
            [2e-3],
            n_pulses=5,
            n_cycles=9,
            relax=RelaxationParams(t2_intrinsic=0.1),
        )


def test_sweep_is_bitwise_deterministic():
    kicks = KickParams(theta=np.deg2rad(1), gamma_rate=25e3, seed=13)
    kwargs = dict(n_traj=80, n_cycles=12)
    a = sweep_spectrum(SYS, kicks, [2.8e-3, 4e-3], **kwargs)
    b = sweep_spectrum(SYS, kicks, [2.8e-3, 4e-3], **kwargs)
    npt.assert_array_equal(a.s_values, b.s_values)
    npt.assert_array_equal(a.stderrs, b.stderrs)


def test_sweep_profiles_are_seeded_independently():
    kicks = KickParams(theta=np.deg2rad(1), gamma_rate=25e3, seed=13)
    kwargs = dict(n_traj=80, n_cycles=12)
    a = sweep_spectrum(SYS, kicks, [4e-3], profile_index=0, **kwargs)
    b = sweep_spectrum(SYS, kicks, [4e-3], profile_index=1, **kwargs)
    assert a.s_values[0] != b.s_values[0]


# ----------------------------------------------------------------------
# closed-form profile

def test_cory_model_agrees_with_monte_carlo():
    theta, rate = np.deg2rad(2), 25e3
    kicks = KickParams(theta=theta, gamma_rate=rate, phase_mode="fixed_y", seed=29)
    mc = sweep_spectrum(SYS, kicks, [4e-3], n_traj=1500, n_cycles=24)
    cf = cory_model_spectrum(SYS, theta, rate, [4e-3])
    assert abs(mc.s_values[0] - cf.s_values[0]) < 3.0 * mc.stderrs[0] + 1e-9


def test_cory_model_grows_with_kick_angle():
    taus = [2e-3, 2.8e-3, 4e-3]
    profiles = [
        cory_model_spectrum(SYS, np.deg2rad(deg), 25e3, taus) for deg in (0.5, 1.0, 2.0)
    ]
    for small, large in zip(profiles, profiles[1:]):
        assert (large.s_values > small.s_values).all()


def test_cory_model_validates_grid():
    with pytest.raises(ValueError):
        cory_model_spectrum(SYS, 0.1, 25e3, [])


# ----------------------------------------------------------------------
# baseline subtraction

def test_subtract_baseline_pointwise():
    x = [100.0, 200.0, 300.0]
    total = _profile(x, [5.0, 2.0, 1.0])
    base = SpectralProfile(
        [
            SpectralPoint(100.0, 1.5, "baseline", 0.3),
            SpectralPoint(300.0, 4.0, "baseline", 0.0),
        ],
        "baseline",
    )
    out = subtract_baseline(total, base)
    assert out.provenance == "kicks_only"
    npt.assert_allclose(out.s_values, [3.5, 2.0, 0.0])  # missing -> 0, negative clamped
    assert out.points[0].stderr == pytest.approx(0.3)
    assert all(p.provenance == "kicks_only" for p in out.points)


def test_subtract_baseline_quadrature_errors():
    total = SpectralProfile([SpectralPoint(50.0, 4.0, "total", 0.4)], "total")
    base = SpectralProfile([SpectralPoint(50.0, 1.0, "baseline", 0.3)], "baseline")
    out = subtract_baseline(total, base)
    assert out.points[0].stderr == pytest.approx(0.5)


# ----------------------------------------------------------------------
# Gaussian peak extraction

def test_fit_gaussians_exact_single_component():
    x = np.linspace(500.0, 3000.0, 40)
    prof = _profile(x, gaussian_model([20.0, 1500.0, 300.0], x))
    fit = fit_gaussians(prof, 1)
    a, mu, w = fit.components[0]
    assert a == pytest.approx(20.0, rel=1e-6)
    assert mu == pytest.approx(1500.0, rel=1e-6)
    assert w == pytest.approx(300.0, rel=1e-6)
    assert fit.residual_norm < 1e-6


@pytest.mark.parametrize(
    "level, tol_a, tol_mu, tol_w", [(0.01, 0.02, 0.01, 0.03), (0.05, 0.08, 0.02, 0.08)]
)
def test_fit_gaussians_noisy_single_component(level, tol_a, tol_mu, tol_w):
    rng = np.random.default_rng(3)
    x = np.linspace(500.0, 3000.0, 40)
    y = gaussian_model([20.0, 1500.0, 300.0], x) + level * 20.0 * rng.standard_normal(x.size)
    prof = _profile(x, np.clip(y, 0.0, None))
    a, mu, w = fit_gaussians(prof, 1).components[0]
    assert a == pytest.approx(20.0, rel=tol_a)
    assert mu == pytest.approx(1500.0, rel=tol_mu)
    assert w == pytest.approx(300.0, rel=tol_w)


def test_fit_gaussians_two_components():
    rng = np.random.default_rng(17)
    x = np.linspace(500.0, 3000.0, 40)
    y = gaussian_model([15.0, 1200.0, 200.0, 8.0, 2200.0, 350.0], x)
    y = y + 0.01 * 15.0 * rng.standard_normal(x.size)
    prof = _profile(x, np.clip(y, 0.0, None))
    comps = sorted(fit_gaussians(prof, 2).components, key=lambda c: c[1])
    npt.assert_allclose(comps[0], [15.0, 1200.0, 200.0], rtol=0.05)
    npt.assert_allclose(comps[1], [8.0, 2200.0, 350.0], rtol=0.05)


def test_fit_gaussians_warns_on_degenerate_width():
    x = np.linspace(1000.0, 1400.0, 20)
    prof = _profile(x, gaussian_model([5.0, 1200.0, 4e4], x))
    with pytest.warns(UserWarning, match="degenerate Gaussian width"):
        fit_gaussians(prof, 1)


def test_fit_gaussians_input_checks():
    x = np.linspace(0.0, 1.0, 6)
    prof = _profile(x, np.ones_like(x))
    with pytest.raises(ValueError):
        fit_gaussians(prof, 3)
    with pytest.raises(ValueError):
        fit_gaussians(prof, 2)  # 2 components need 8 points


def test_no_convergence_error_carries_best_params():
    err = NoConvergenceError("stuck", best=np.arange(3.0), diagnostics={"cost": 1.0})
    assert isinstance(err, FitError)
    npt.assert_array_equal(err.best, np.arange(3.0))
    assert err.diagnostics["cost"] == 1.0


# ----------------------------------------------------------------------
# containers

def test_spectral_profile_requires_sorted_omegas():
    with pytest.raises(ValueError):
        SpectralProfile(
            [SpectralPoint(2.0, 1.0, "total"), SpectralPoint(1.0, 1.0, "total")],
            "total",
        )


def test_spectral_point_rejects_negative_density():
    with pytest.raises(ValueError):
        SpectralPoint(1.0, -0.5, "total")
