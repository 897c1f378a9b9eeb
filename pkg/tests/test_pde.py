import numpy as np
import pytest

from bcpp import pde
from bcpp.errors import ConfigurationError
from bcpp.profiles import DensityProfile, TestFunction


def test_constant_profile_is_fixed_point():
    prof = DensityProfile("constant_bump", 2, height=0.7, radius=50.0)
    v = pde.heat_solution(prof, 0.5, np.array([0.3, -0.2]), 0.7)
    assert v == pytest.approx(0.7, abs=1e-10)


def test_zero_time_shortcut():
    prof = DensityProfile("gaussian_bump", 2, width=0.5)
    pts = np.array([[0.1, 0.2], [1.0, -0.5]])
    assert np.array_equal(pde.heat_solution(prof, 0.0, pts, 0.7), prof(pts))


def test_negative_time_rejected():
    prof = DensityProfile("gaussian_bump", 1)
    with pytest.raises(ConfigurationError):
        pde.heat_solution(prof, -0.1, np.array([0.0]), 0.7)


def test_gaussian_closed_form():
    d, lam, t, sig = 2, 0.7, 0.5, 0.5
    prof = DensityProfile("gaussian_bump", d, width=sig)
    pts = np.array([[0.0, 0.0], [0.3, -0.4], [1.0, 0.7], [-1.5, 0.2]])
    got = pde.heat_solution(prof, t, pts, lam, order=48)
    s2 = sig**2 + 2 * lam * t
    want = (sig**2 / s2) ** (d / 2) * np.exp(-0.5 * np.sum(pts**2, axis=1) / s2)
    assert np.abs(got - want).max() < 1e-8


def test_heat_equation_residual_by_finite_differences():
    prof = DensityProfile("gaussian_bump", 2, width=0.5)
    lam, t, h = 0.7, 0.5, 3e-3
    for u in (np.array([0.2, -0.3]), np.array([0.5, 0.1])):
        rho = lambda tt, uu: pde.heat_solution(prof, tt, uu, lam, order=32)
        dt = (rho(t + h, u) - rho(t - h, u)) / (2 * h)
        lap = 0.0
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            lap += (rho(t, u + e) - 2 * rho(t, u) + rho(t, u - e)) / h**2
        assert abs(dt - lam * lap) < 1e-5


def test_maximum_principle_at_quadrature_level():
    prof = DensityProfile("smooth_box", 2, height=1.2, radius=1.0)
    pts = np.random.default_rng(0).uniform(-2, 2, size=(100, 2))
    for t in (0.1, 0.6):
        v = pde.heat_solution(prof, t, pts, 0.7, order=32)
        assert np.all(v >= -1e-10)
        assert np.all(v <= 1.2 + 1e-10)


def test_quadrature_order_convergence():
    prof = DensityProfile("gaussian_bump", 2, width=0.5)
    pts = np.array([[0.2, 0.1], [0.8, -0.3]])
    a = pde.heat_solution(prof, 0.4, pts, 0.7, order=48)
    b = pde.heat_solution(prof, 0.4, pts, 0.7, order=96)
    assert np.abs(a - b).max() < 1e-8


def test_fd_solver_zero_time_samples_profile():
    prof = DensityProfile("gaussian_bump", 1, width=0.5)
    sol = pde.fd_heat_solver(prof, 0.0, 0.7, 0.1, 4.0)
    assert np.array_equal(sol.values, prof(sol.points()).reshape(sol.values.shape))


def test_fd_agreement_with_explicit():
    prof = DensityProfile("gaussian_bump", 1, width=0.5)
    h = 0.02
    sol = pde.fd_heat_solver(prof, 0.5, 0.7, h, 6.0)
    expl = pde.heat_solution(prof, 0.5, sol.points(), 0.7, order=48)
    assert np.abs(expl - sol.values.reshape(-1)).max() < max(1e-3, 3 * h**2)


def test_fd_agreement_d2():
    prof = DensityProfile("gaussian_bump", 2, width=0.5)
    h = 0.05
    sol = pde.fd_heat_solver(prof, 0.3, 0.7, h, 5.0)
    expl = pde.heat_solution(prof, 0.3, sol.points(), 0.7, order=32)
    assert np.abs(expl - sol.values.reshape(-1)).max() < max(1e-3, 3 * h**2)


def test_fd_mass_conserved_on_zero_flux_box():
    prof = DensityProfile("gaussian_bump", 1, width=0.5)
    h = 0.05
    sol = pde.fd_heat_solver(prof, 0.5, 0.7, h, 6.0)
    mass0 = prof(sol.points()).sum() * h
    mass1 = sol.values.sum() * h
    assert abs(mass1 - mass0) / mass0 < 1e-3


def test_fd_box_too_small():
    prof = DensityProfile("gaussian_bump", 2, width=0.5)
    with pytest.raises(ConfigurationError):
        pde.fd_heat_solver(prof, 0.5, 0.7, 0.05, 2.0)


def test_fd_semigroup_restart():
    prof = DensityProfile("gaussian_bump", 1, width=0.5)
    h = 0.02
    full = pde.fd_heat_solver(prof, 0.4, 0.7, h, 6.0)

    class _Reuse:
        d = 1
        support_radius = 2.0  # effective: the restarted data is ~0 past here

        def __call__(self, pts):
            idx = np.rint((np.asarray(pts).reshape(-1) + 6.0) / h).astype(int)
            return half.values[np.clip(idx, 0, len(half.values) - 1)]

    half = pde.fd_heat_solver(prof, 0.2, 0.7, h, 6.0)
    restarted = pde.fd_heat_solver(_Reuse(), 0.2, 0.7, h, 6.0)
    assert np.abs(restarted.values - full.values).max() < 5e-4


def test_weak_residual_zero_at_zero_time():
    prof = DensityProfile("gaussian_bump", 1, width=0.5)
    G = TestFunction("cosine_bump", 1)
    assert pde.weak_residual(prof, G, 0.0, 0.7) == 0.0


def test_weak_residual_small_for_true_solution():
    prof = DensityProfile("gaussian_bump", 1, width=0.5)
    G = TestFunction("cosine_bump", 1)
    assert abs(pde.weak_residual(prof, G, 0.5, 0.7)) < 1e-4


def test_weak_residual_detects_wrong_rate():
    prof = DensityProfile("gaussian_bump", 1, width=0.5)
    G = TestFunction("cosine_bump", 1)
    assert abs(pde.weak_residual(prof, G, 0.5, 0.7, time_term_rate=1.4)) > 1e-2


def test_integrate_against_matches_closed_form():
    # gaussian rho integrated against a bump: compare a refined quadrature
    prof = DensityProfile("gaussian_bump", 2, width=0.5)
    G = TestFunction("cosine_bump", 2)
    a = pde.integrate_against(prof, G, 0.05, 0.6)
    b = pde.integrate_against(prof, G, 0.05, 0.6, space_order=56, gh_order=40)
    assert a == pytest.approx(b, abs=1e-9)
