import math

import numpy as np
import pytest

from plateau import enumeration as en
from plateau.mc import WindowSpec, plateau_scan, sample_two_point, window_susceptibility
from plateau.torus import torus_green_table


def test_beta_zero_matches_srw_torus():
    d, r, z = 2, 3, 0.1
    est = sample_two_point(d, r, 0.0, z, 200_000, seed=11, shards=2)
    tab = torus_green_table(d, r, z)
    for x in est.sites():
        assert abs(est[x].zscore(tab[x])) < 4


def test_matches_enumeration_small():
    d, r, beta, z = 1, 4, 0.3, 0.2
    ex = en.torus_two_point(d, r, beta, 20)
    vals = ex.values(z)
    est = sample_two_point(d, r, beta, z, 200_000, seed=5)
    for i, p in enumerate(ex.points):
        assert abs(est[tuple(p)].zscore(vals[i])) < 4


def test_fixed_length_estimator():
    d, r, beta, z, ncut = 1, 3, 0.5, 0.3, 6
    ex = en.torus_two_point(d, r, beta, ncut)
    est = sample_two_point(d, r, beta, z, 200_000, seed=2, estimator="fixed", ncut=ncut)
    vals = ex.values(z)
    for i, p in enumerate(ex.points):
        assert abs(est[tuple(p)].zscore(vals[i])) < 4
    with pytest.raises(ValueError):
        sample_two_point(d, r, beta, z, 10, seed=2, estimator="fixed")


def test_estimator_choice_is_explicit():
    with pytest.raises(ValueError):
        sample_two_point(2, 4, 0.2, 0.26, 100, seed=0)
    with pytest.raises(ValueError):
        sample_two_point(2, 4, 0.2, 0.25, 100, seed=0)
    est = sample_two_point(2, 4, 0.2, 0.25, 1000, seed=0, survival=0.9)
    assert est.chi.mean > 0


def test_weights_and_errors():
    est = sample_two_point(2, 4, 0.5, 0.1, 50_000, seed=9)
    assert 0 < est.min_weight <= 1
    assert est.zero_weights == 0
    assert np.all(est.n_eff <= est.samples)
    est0 = sample_two_point(2, 4, 0.0, 0.1, 50_000, seed=9)
    assert est0.min_weight == 1.0


def test_zero_z_is_delta():
    est = sample_two_point(2, 3, 0.4, 0.0, 1000, seed=1)
    assert est[(0, 0)].mean == 1.0 and est[(0, 0)].stderr == 0.0
    assert est.mean.sum() == 1.0


def test_reproducible_given_seed_and_shards():
    a = sample_two_point(2, 4, 0.3, 0.1, 30_000, seed=4, shards=3)
    b = sample_two_point(2, 4, 0.3, 0.1, 30_000, seed=4, shards=3, workers=2)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.stderr, b.stderr)
    c = sample_two_point(2, 4, 0.3, 0.1, 30_000, seed=5, shards=3)
    assert not np.array_equal(a.mean, c.mean)


def test_window_spec():
    z = WindowSpec(6, 0.2, "window", zc=0.1, c4=1.0).resolve(5)
    assert z == pytest.approx(0.1 - math.sqrt(0.2) * 6 ** -2.5)
    with pytest.raises(ValueError):
        WindowSpec(6, 0.2, "window", zc=0.1).resolve(4)
    assert WindowSpec(6, 0.2, "fixed", value=0.05).resolve(3) == 0.05
    assert WindowSpec(6, 0.2, "power", zc=0.1, c=0.5, p=2).resolve(3) == pytest.approx(
        0.1 - 0.5 / 36)


def test_window_beta_zero_control():
    rep = window_susceptibility(5, 0.0, [6, 8, 10], 0.1, 100, seed=0)
    assert rep.slope == pytest.approx(2.5, abs=1e-9)
    assert rep.passed


def test_window_fewer_than_three_sizes():
    rep = window_susceptibility(5, 0.0, [6, 8], 0.1, 100, seed=0)
    assert not rep.asserted and rep.passed is None


def test_plateau_scan_subcritical():
    rep = plateau_scan(3, 6, 0.3, 0.02, 100_000, seed=3)
    assert rep.verdict != "flat"
    assert rep.monotone
    assert abs(rep.scaled_plateau) < 0.02
