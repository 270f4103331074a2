import math

import numpy as np
import pytest

from plateau.srw import (
    GreenParams,
    fit_heat_kernel,
    fit_massive_decay,
    fourier_error_budget,
    green_bessel,
    green_closed_form_1d,
    green_fourier,
    green_series,
    infrared_check,
    mass_m0,
    step_ladder,
)
from plateau.lattice import canonical_points

# High-precision references from the Bessel integral evaluated with mpmath
# at 30 digits (d=2, x=0 also equals (2/pi) K(k=a)).
MPMATH = [
    (2, 0.5, (0, 0), 1.07318200714936437505),
    (2, 0.9, (3, 1), 0.06964652993759833657),
    (3, 0.9, (1, 0, 0), 0.25899291110484430416),
    (3, 0.9, (2, 1, 1), 0.02616608113339164649),
    (5, 0.6, (1, 1, 0, 0, 0), 0.00875326024125931759),
]
# Return-probability constants 1/(1-p) at criticality.
WATSON_D3 = 1.5163860591519780
CRITICAL_D5 = 1.1563081248402318


def test_one_dimensional_closed_form():
    p = GreenParams.from_mu_omega(1, 0.5, box=40, nmax=200)
    v0 = green_series(p, (0,))
    assert v0.value == pytest.approx(1.154701, abs=1e-6)
    assert abs(v0.value - 1 / math.sqrt(0.75)) <= v0.error_bound + 1e-15
    assert green_series(p, (1,)).value == pytest.approx(0.309401, abs=1e-6)
    assert green_closed_form_1d(0.5, 1) == pytest.approx(0.3094010767585030, rel=1e-14)


def test_zero_fugacity_is_delta():
    for d in (1, 3):
        p = GreenParams(d, 0.0, box=3, nmax=5, grid=8)
        assert green_series(p, (0,) * d).value == 1.0
        assert green_series(p, (1,) + (0,) * (d - 1)).value == 0.0
        assert green_fourier(p, (0,) * d) == pytest.approx(1.0, abs=1e-14)
        assert green_fourier(p, (1,) + (0,) * (d - 1)) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("d,a,x,ref", MPMATH)
def test_routes_match_mpmath(d, a, x, ref):
    assert green_bessel(d, a, x) == pytest.approx(ref, rel=1e-10)
    box = max(20, int(40 / -math.log(a)) // 4)
    p = GreenParams.from_mu_omega(d, a, box=min(box, 30), nmax=400)
    v = green_series(p, x)
    assert abs(v.value - ref) <= v.error_bound + 1e-12 * ref


def test_critical_constants():
    assert green_bessel(3, 1.0, (0, 0, 0)) == pytest.approx(WATSON_D3, rel=1e-10)
    assert green_bessel(5, 1.0, (0,) * 5) == pytest.approx(CRITICAL_D5, rel=1e-10)


def test_fourier_route_within_budget_d2():
    p = GreenParams.from_mu_omega(2, 0.5, box=30, nmax=200, grid=64)
    s = green_series(p, (0, 0))
    f = green_fourier(p, (0, 0))
    assert abs(s.value - f) <= s.error_bound + fourier_error_budget(p, (0, 0))


def test_mass_examples():
    assert mass_m0(3, 1 / 6) == 0.0
    assert mass_m0(1, 0.25) == pytest.approx(math.acosh(2), rel=1e-14)
    c0, c1 = green_closed_form_1d(0.5, 0), green_closed_form_1d(0.5, 1)
    assert math.log(c1 / c0) == pytest.approx(-1.31696, abs=1e-5)
    for d in (1, 3):
        for a in (0.999, 0.9999):
            mu = a / (2 * d)
            assert mass_m0(d, mu) ** 2 / (1 / mu - 2 * d) == pytest.approx(1.0, abs=2e-3)


def test_massive_decay_fit_d3():
    p = GreenParams.from_mu_omega(3, 0.9, box=34, nmax=600)
    fit = fit_massive_decay(p, window=(10, 30))
    m0 = mass_m0(3, 0.9 / 6)
    assert abs(fit.rate - m0) <= 0.05 * m0
    assert abs(fit.power - 1.0) <= 0.3


def test_critical_power_law_d3():
    ns = np.arange(10, 31)
    vals = [green_bessel(3, 1.0, (n, 0, 0)) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(vals), 1)[0]
    assert abs(-slope - 1.0) <= 0.2


def test_heat_kernel_examples():
    d, N = 2, 40
    ladder = step_ladder(d, N, N)
    pts = canonical_points(d, N)
    l1 = pts.sum(axis=1)
    ell = pts.max(axis=1)
    ns = np.arange(N + 1)
    odd = (ns[:, None] + l1[None, :]) % 2 == 1
    assert np.all(ladder[odd] == 0)
    assert np.all(ladder[ns[:, None] < ell[None, :]] == 0)
    # local CLT for even n: D^{*n}(0) ~ 2 (d / (2 pi n))^{d/2}
    diag = np.array([n ** (d / 2) * ladder[n, 0] for n in range(20, N + 1, 2)])
    assert np.all(np.abs(np.diff(diag)) < 0.01 * diag[-1])
    assert diag[-1] == pytest.approx(2 / math.pi, rel=0.02)
    fit = fit_heat_kernel(d, (4, 30))
    assert 0 < fit.amplitude < math.inf
    assert fit.rate > 0


def test_infrared_examples():
    mu = 0.99 / 6
    rep = infrared_check(3, mu, 0.0)
    assert rep.a_hat_at_zero.real == pytest.approx(1 - 0.99, abs=1e-14)
    m0 = mass_m0(3, mu)
    assert abs(1 - 0.99 * math.cosh(m0) / 3 - 0.99 * 2 / 3) < 1e-12
    rep = infrared_check(3, mu, 2 / 3 * m0)
    assert rep.c_lower > 0
    assert all(np.isfinite(v) for v in rep.derivative_constants.values())
    with pytest.raises(ValueError):
        infrared_check(3, mu, m0)


def test_parameter_validation():
    with pytest.raises(ValueError):
        GreenParams(0, 0.1)
    with pytest.raises(ValueError):
        GreenParams(2, 0.3)
