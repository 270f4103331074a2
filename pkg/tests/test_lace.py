import math

import numpy as np
import pytest

from plateau import enumeration as en
from plateau.lace import (
    convolution_residual,
    decompose,
    mass_identity_check,
    pi_from_g,
    pi_series,
    resummed_two_point,
    solve_lambda_mu,
)
from plateau.srw import GreenParams, green_series, mass_m0


def series(d, beta, nmax):
    return en.enumerate_two_point(en.WsawParams(d, beta, nmax))


@pytest.fixture(scope="module")
def d2():
    return series(2, 0.3, 10)


def test_beta_zero_collapse():
    s = series(3, 0.0, 8)
    z = 0.5 / 6
    pis = pi_series(s)
    assert np.max(np.abs(pis.coeffs)) < 1e-10
    sol = decompose(s, z, box=8, pis=pis)
    assert sol.lam == pytest.approx(1.0, abs=1e-10)
    assert sol.mu == pytest.approx(z, abs=1e-10)
    assert np.max(np.abs(sol.E.values)) < 1e-10
    assert np.max(np.abs(sol.f.values)) < 1e-10


def test_resummed_beta_zero_is_srw():
    s = series(2, 0.0, 6)
    z = 0.2
    G = resummed_two_point(s, z, box=10, grid=64)
    p = GreenParams(2, z, box=30, nmax=400)
    for x in [(0, 0), (1, 0), (3, 2), (8, 1)]:
        assert G[x] == pytest.approx(green_series(p, x).value, abs=1e-10)


def test_series_inversion_reproduces_delta(d2):
    pis = pi_series(d2)
    assert convolution_residual(d2, pis, 0.5 / 4) <= 1e-8


def test_pi_starts_at_order_two(d2):
    pis = pi_series(d2)
    assert np.all(pis.coeffs[:2] == 0)
    # pi_2(0) = -beta * (number of two-step returns) per the first self-intersection
    assert pis.coeffs[2][0, 0] == pytest.approx(-0.3 * 4, rel=1e-10)


def test_pi_from_g_reports(d2):
    res = pi_from_g(d2, 0.15, grid=32)
    assert res.pi.octant
    assert res.sensitivity >= 0
    assert res.moment0 == pytest.approx(res.pi.total(), rel=1e-12)


def test_solve_lambda_mu_beta_zero():
    z, d = 0.1, 2
    chi = 1 / (1 - 4 * z)
    lam, mu = solve_lambda_mu(0.0, 0.0, chi, z, d)
    assert lam == pytest.approx(1.0)
    assert mu == pytest.approx(z)


def test_e_moments_vanish(d2):
    for z in (0.1, 0.15, 0.2):
        sol = decompose(d2, z, box=10)
        r0, r2, scale = sol.e_moment_residuals
        assert abs(r0) <= 1e-10 * scale and abs(r2) <= 1e-10 * scale
        assert 0 < sol.lam < 2
        assert 0 < sol.mu_omega < 1
        assert sol.f_route_residual <= 1e-8


def test_tilted_decomposition(d2):
    z = 0.15
    sol = decompose(d2, z, box=10, m=0.2)
    assert sol.f.values.shape == (21, 21)
    assert sol.f_sup_weighted >= 0


def test_mass_identity_beta_zero_d1():
    s = series(1, 0.0, 12)
    rep = mass_identity_check(s, [0.2, 0.3, 0.35], window=(4, 10), box=20)
    for z, m, ex, left, right in zip(rep.zs, rep.masses, rep.exact_masses, rep.lhs, rep.rhs):
        assert left == pytest.approx(1 - 2 * z, abs=1e-10)
        assert ex == pytest.approx(mass_m0(1, z), rel=1e-8)
        assert 2 * z * (math.cosh(ex) - 1) == pytest.approx(left, rel=1e-8)
    assert max(rep.residuals) < 1e-3


@pytest.fixture(scope="module")
def d5():
    return series(5, 0.1, 10)


def test_d5_pi_decay_and_mass_identity(d5):
    pis = pi_series(d5)
    zc = en.zc_estimate(d5).value
    t = pis.table(0.09)
    ax = np.array([abs(t[(n, 0, 0, 0, 0)]) for n in range(1, 8)])
    ns = np.arange(1, 8)
    resolved = ax > 1e-16
    slope = np.polyfit(np.log(ns[resolved]), np.log(ax[resolved]), 1)[0]
    assert slope <= -(5 - 2)
    rep = mass_identity_check(d5, np.linspace(0.07, 0.9 * zc, 5), window=(6, 14), box=20,
                              pis=pis)
    assert len(rep.residuals) == 5 and max(rep.residuals) <= 0.2
    assert abs(rep.omega_limit - 10) <= 10 * 0.1 * 10
    assert abs(rep.amplitude_derivative - 1) <= 10 * 0.1
