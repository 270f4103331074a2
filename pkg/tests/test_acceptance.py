"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line, collected in the "acceptance
criteria" section of the pytest summary.  Criterion 10 is long-running and
carries the ``extended`` marker; deselect it with ``-m "not extended"``.
"""

import itertools
import math

import numpy as np
import pytest

from plateau import cli
from plateau import enumeration as en
from plateau import io as pio
from plateau.lace import convolution_residual, decompose, mass_identity_check, pi_series
from plateau.lattice import canonical_points
from plateau.mc import WindowSpec, plateau_scan, sample_two_point, window_susceptibility
from plateau.srw import (
    GreenParams,
    fit_massive_decay,
    fourier_error_budget,
    green_closed_form_1d,
    green_fourier,
    green_series,
    mass_m0,
)
from plateau.torus import (
    plateau_check_srw,
    torus_green_solve,
    torus_green_table,
    torus_green_unfold,
)


def _srw_params(d, a, radius):
    """Grid, box and length cutoff sized from the mass so both budgets stay small."""
    m0 = mass_m0(d, a / (2 * d))
    grid = int(2 * math.ceil((radius + 36 / m0) / 2))
    box = int(radius + math.ceil(14 / m0))
    nmax = int(math.ceil(math.log(1e-17 * (1 - a)) / math.log(a)))
    return GreenParams.from_mu_omega(d, a, box=box, nmax=nmax, grid=grid)


def test_c01_srw_cross_route(criterion):
    worst, worst_1d = 0.0, 0.0
    for d in (1, 2, 3, 5):
        for a in (0.3, 0.6, 0.9, 0.95):
            p = _srw_params(d, a, 10)
            c0 = green_fourier(p, (0,) * d)
            for x in canonical_points(d, 10):
                x = tuple(int(c) for c in x)
                s = green_series(p, x)
                f = green_fourier(p, x)
                budget = s.error_bound + fourier_error_budget(p, x, c0)
                worst = max(worst, abs(s.value - f) / budget)
                if d == 1:
                    worst_1d = max(worst_1d, abs(s.value - green_closed_form_1d(a, x[0])))
    criterion(worst <= 1.0 and worst_1d <= 1e-8,
              f"max |series-fourier|/budget = {worst:.3g}, 1-d closed-form error = {worst_1d:.2g}")


def test_c02_mass_closed_form(criterion):
    details, ok = [], True
    for a in (0.8, 0.9, 0.95):
        m0 = mass_m0(3, a / 6)
        box = 30 + math.ceil(25 / m0)
        nmax = int(math.ceil(math.log(1e-17 * (1 - a)) / math.log(a)))
        fit = fit_massive_decay(GreenParams.from_mu_omega(3, a, box=box, nmax=nmax),
                                window=(10, 30))
        rel = abs(fit.rate - m0) / m0
        dp = abs(fit.power - 1.0)
        ok &= rel <= 0.05 and dp <= 0.3
        details.append(f"a={a}: rate err {rel:.3%}, power {fit.power:.3f}")
    criterion(ok, "; ".join(details))


def test_c03_torus_three_routes(criterion):
    ok, notes = True, []
    for d, r, a in ((1, 3, 0.5), (2, 6, 0.8), (3, 8, 0.9)):
        z = a / (2 * d)
        tab = torus_green_table(d, r, z)
        sol = torus_green_solve(d, r, z)
        fs = float(np.max(np.abs(tab - sol)))
        un = 0.0
        for x in itertools.product(range(r), repeat=d):
            u = torus_green_unfold(d, r, z, x, shell_cutoff=4)
            un = max(un, abs(u.value - tab[x]) / (u.tail_bound + u.route_bound + 1e-14))
        chi_err = abs(tab.sum() - 1 / (1 - a)) * (1 - a)
        ok &= fs <= 1e-10 and un <= 1.0 and chi_err <= 1e-13
        notes.append(f"({d},{r},{a}): |F-S|={fs:.1g}, unfold/budget={un:.6g}, sum rel err={chi_err:.1g}")
    d1 = torus_green_table(1, 3, 0.25)
    ok &= bool(np.allclose(d1, [1.2, 0.4, 0.4], rtol=0, atol=1e-15))
    criterion(ok, "; ".join(notes))


def test_c04_srw_plateau(criterion):
    reports = [plateau_check_srw(3, r, 1 / 6 - r ** -2.0, c3=1.0) for r in (8, 16, 32)]
    lo = min(rep.scaled_min for rep in reports)
    hi = max(rep.scaled_max for rep in reports)
    ok = all(rep.verdict == "pass" for rep in reports) and 0 < lo and hi / lo <= 50
    d4 = plateau_check_srw(4, 8, 1 / 8 - 8 ** -2.0)
    ok &= d4.verdict == "report-only" and d4.weakened_lower is not None
    mins = ", ".join(f"r={rep.r}: [{rep.scaled_min:.3g}, {rep.scaled_max:.3g}]" for rep in reports)
    criterion(ok, f"{mins}; max/min = {hi / lo:.3g}; d=4 weakened bound {d4.weakened_lower:.3g}")


def test_c05_enumeration_oracle(criterion):
    mismatches = []
    for d in (1, 2, 3):
        for period in (None, 3, 4):
            brute = en.brute_force_counts(d, 8, period)
            strict = {k: v for k, v in brute.items() if k[2] == 0}
            for beta, want in ((0.3, brute), (1.0, strict)):
                s = en.enumerate_two_point(en.WsawParams(d, beta, 8, period))
                if en.table_as_counts(s) != want:
                    mismatches.append((d, period, beta))
    small = []
    for beta in (0.3, 1.0):
        s = en.enumerate_two_point(en.WsawParams(1, beta, 3))
        q = 1 - beta
        small.append(math.isclose(s.coefficient(2, (0,)), 2 * q, abs_tol=1e-15))
        small.append(math.isclose(s.coefficient(3, (1,)), 2 * q + q * q, abs_tol=1e-15))
    criterion(not mismatches and all(small),
              f"18 (d, geometry, beta) tables vs brute force, mismatches: {mismatches or 'none'}")


def test_c06_unfolding(criterion):
    reports = [en.unfolding_check(d, r, 8) for d in (1, 2) for r in (3, 4)]
    walks = sum(rep.walks for rep in reports)
    ok = all(rep.ok for rep in reports)
    bad = [v for rep in reports for v in rep.violations]
    criterion(ok, f"{walks} torus walks, violations: {bad or 'none'}")


def _mc_grid():
    cases = [(d, r, b) for d in (1, 2) for r in (3, 4, 5) for b in (0.0, 0.3, 0.8)]
    return cases + [(2, 5, 0.5), (2, 4, 1.0)]


def test_c07_mc_unbiased(criterion):
    a = 0.4
    worst = 0.0
    where = None
    for i, (d, r, beta) in enumerate(_mc_grid()):
        z = a / (2 * d)
        est = sample_two_point(d, r, beta, z, 1_000_000, seed=100 + i, shards=2)
        if beta == 0.0:
            ref = torus_green_table(d, r, z)
            tail = 0.0
        else:
            nmax = 22 if d == 1 else 14
            ex = en.torus_two_point(d, r, beta, nmax)
            ref = ex.values(z).reshape((r,) * d)
            tail = a ** (nmax + 1) / (1 - a)
        for x in est.sites():
            e = est[x]
            if e.stderr == 0:
                continue
            zs = max(abs(e.mean - ref[x]) - tail, 0.0) / e.stderr
            if zs > worst:
                worst, where = zs, (d, r, beta, x)
    criterion(worst < 4, f"20 cases at z Omega = 0.4, worst |z-score| = {worst:.2f} at {where}")


@pytest.fixture(scope="module")
def d5_series():
    return en.enumerate_two_point(en.WsawParams(5, 0.1, 10))


def test_c08_lace_identities(criterion):
    notes = []
    ok = True
    # beta = 0 collapse
    s0 = en.enumerate_two_point(en.WsawParams(5, 0.0, 6))
    z = 0.5 / 10
    sol0 = decompose(s0, z, box=8)
    pis0 = pi_series(s0)
    collapse = max(abs(sol0.lam - 1), abs(sol0.mu - z), float(np.max(np.abs(pis0.coeffs))),
                   float(np.max(np.abs(sol0.f.values))))
    ok &= collapse <= 1e-10
    notes.append(f"beta=0 collapse {collapse:.1g}")
    # rebuilt G * F = delta
    for d, nmax in ((2, 12), (5, 8)):
        s = en.enumerate_two_point(en.WsawParams(d, 0.3, nmax))
        res = convolution_residual(s, pi_series(s), 0.5 / (2 * d))
        ok &= res <= 1e-8
        notes.append(f"G*F residual d={d}: {res:.1g}")
    # E moments across a regime grid
    worst = 0.0
    for d, nmax in ((2, 12), (5, 8)):
        for beta in (0.1, 0.3):
            s = en.enumerate_two_point(en.WsawParams(d, beta, nmax))
            pis = pi_series(s)
            zc = en.zc_estimate(s).value
            for frac in (0.3, 0.5, 0.7, 0.9):
                sol = decompose(s, frac * zc, box=8, pis=pis)
                r0, r2, scale = sol.e_moment_residuals
                worst = max(worst, abs(r0) / scale, abs(r2) / scale)
    ok &= worst <= 1e-10
    notes.append(f"E-moment residual {worst:.1g}")
    criterion(ok, "; ".join(notes))


def test_c09_order_beta(criterion, d5_series):
    beta, omega = 0.1, 10
    s = d5_series
    zc = en.zc_estimate(s)
    pis = pi_series(s)
    lam_dev, pi_abs = 0.0, 0.0
    for z in (0.08, 0.09, 0.1, 0.995 * zc.value):
        sol = decompose(s, z, box=8, pis=pis)
        lam_dev = max(lam_dev, abs(sol.lam - 1))
        pi_abs = max(pi_abs, pis.abs_sum(z))
    zgrid = np.linspace(0.07, 0.9 * zc.value, 5)
    rep = mass_identity_check(s, zgrid, window=(6, 14), box=20, pis=pis)
    A = rep.amplitude_fit
    shift = zc.value - 1 / omega
    ok = (lam_dev <= 10 * beta and pi_abs <= 10 * beta and abs(A - 1) <= 10 * beta
          and 0 <= shift <= 10 * beta / omega)
    criterion(ok, f"|lambda-1| <= {lam_dev:.3g}, sum|Pi| <= {pi_abs:.3g}, A = {A:.4f}, "
                  f"zc - 1/Omega = {shift:.3g} (zc = {zc.value:.5f} +- {zc.uncertainty:.1g})")


@pytest.mark.extended
def test_c10_scaling_window(criterion):
    beta, d = 0.2, 5
    s = en.enumerate_two_point(en.WsawParams(d, beta, 10))
    zc = en.zc_estimate(s).value
    rep = window_susceptibility(d, beta, [6, 8, 10], zc, 1_000_000, seed=1, shards=4)
    r = 8
    z = WindowSpec(r, beta, "window", zc=zc).resolve(d)
    scan = plateau_scan(d, r, beta, z, 1_000_000, seed=2, shards=4, survival=1 - r ** -2.5)
    level = scan.scaled_plateau
    ok = bool(rep.passed) and 1 / 50 <= level <= 50
    criterion(ok, f"slope {rep.slope:.3f} +- {rep.slope_err:.2g} (target {d / 2} +- 0.75); "
                  f"B r^d / chi = {level:.3g} at r = {r}")


DETERMINISTIC = [
    ["srw", "--dim", "3", "--mu-omega", "0.9", "--box", "40", "--nmax", "400", "--radius", "4",
     "--fit-window", "10:30", "--plot", "on"],
    ["torus-srw", "--dim", "2", "--period", "6", "--z-omega", "0.8", "--route", "unfold"],
    ["torus-srw", "--dim", "3", "--period", "8", "--p", "2", "--check", "plateau", "--plot", "on"],
    ["wsaw", "--dim", "2", "--beta", "0.4", "--nmax", "9", "--observable", "series"],
    ["wsaw", "--dim", "3", "--beta", "0.4", "--nmax", "8", "--observable", "zc"],
    ["lace", "--dim", "2", "--beta", "0.3", "--z", "0.12", "--nmax", "10"],
]
STOCHASTIC = [
    ["wsaw-mc", "--dim", "2", "--period", "5", "--beta", "0.5", "--z", "0.1",
     "--samples", "40000", "--shards", "3", "--seed", "17"],
    ["torus-srw", "--dim", "2", "--period", "4", "--z", "0.1", "--route", "mc",
     "--samples", "40000", "--shards", "2", "--seed", "5"],
]


def _outputs(path):
    man = pio.read_json(path / "manifest.json")
    return {name: (path / name).read_bytes() for name in man["outputs"]}


def test_c11_determinism(criterion, tmp_path):
    bad = []
    for i, argv in enumerate(DETERMINISTIC + STOCHASTIC):
        a, b, c = tmp_path / f"{i}a", tmp_path / f"{i}b", tmp_path / f"{i}c"
        assert cli.main(argv + ["--out-dir", str(a)]) == 0
        assert cli.main(["rerun", str(a / "manifest.json"), "--out-dir", str(b)]) == 0
        assert cli.main(argv + ["--out-dir", str(c)]) == 0
        if not (_outputs(a) == _outputs(b) == _outputs(c)):
            bad.append(argv[0])
    criterion(not bad, f"{len(DETERMINISTIC)} deterministic and {len(STOCHASTIC)} seeded runs "
                       f"replayed from manifests, mismatches: {bad or 'none'}")
