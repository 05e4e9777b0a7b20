import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from sixvertex.core import InvalidParameterError, derive_seeds
from sixvertex.hydro import (
    TailProfile,
    density_rho,
    dominance_check,
    empirical_density,
    fan_point,
    flux_phi,
    ks_critical,
    ks_statistic,
    limit_shape_g,
    speed_cdf,
    speed_density,
    speed_quantile,
    tail_counts,
    tail_profile,
    write_reference_csv,
)
from sixvertex.quadrant import exact_height_distribution

KAPPA = 1.75
kappas = st.floats(1.05, 10.0)


def test_frozen_reference_values():
    # sqrt(k) (sqrt(k) - 1) / (k - 1), (sqrt(k) - 1)^2 / (k - 1), 1 / (sqrt(k) + 1)
    assert speed_cdf(1.0, KAPPA) == pytest.approx(0.569499, abs=1e-6)
    assert limit_shape_g(1.0, 1.0, KAPPA) == pytest.approx(0.138998, abs=1e-6)
    assert density_rho(1.0, 1.0, KAPPA) == pytest.approx(0.430501, abs=1e-6)
    assert flux_phi(0.5, KAPPA) == pytest.approx(0.63636, abs=5e-6)
    assert flux_phi(0.4, KAPPA) == pytest.approx(0.53846, abs=5e-6)


def test_flux_makes_one_vertex_stationary():
    """Bernoulli(rho) from below and Bernoulli(phi) from the left give the same
    output densities, for every (b1, b2) with the right kappa."""
    for b1, b2 in [(0.3, 0.6), (0.2, 0.5), (0.1, 0.8)]:
        k = (1 - b1) / (1 - b2)
        for rho in (0.1, 0.4, 0.9):
            phi = flux_phi(rho, k)
            top = rho * phi + rho * (1 - phi) * b1 + (1 - rho) * phi * (1 - b2)
            assert top == pytest.approx(rho, abs=1e-14)


@given(kappas, st.floats(0.0, 1.0))
def test_flux_range(k, rho):
    assert 0.0 <= flux_phi(rho, k) <= 1.0
    assert flux_phi(rho, k) >= rho - 1e-15


def test_regimes():
    assert fan_point(0.5, KAPPA).regime == "packed"
    assert fan_point(1.0, KAPPA).regime == "fan"
    assert fan_point(2.0, KAPPA).regime == "empty"
    with pytest.raises(InvalidParameterError):
        fan_point(1.0, 0.8)


@given(kappas, st.floats(0.01, 3.0))
def test_g_slope_is_minus_density(k, x):
    h = 1e-6
    slope = (limit_shape_g(x + h, 1.0, k) - limit_shape_g(x - h, 1.0, k)) / (2 * h)
    assert slope == pytest.approx(-density_rho(x, 1.0, k), abs=1e-4)


@given(kappas, st.floats(0.0, 5.0), st.floats(0.1, 5.0), st.floats(0.1, 10.0))
def test_g_homogeneous(k, x, y, lam):
    assert limit_shape_g(lam * x, lam * y, k) == pytest.approx(lam * limit_shape_g(x, y, k), rel=1e-9, abs=1e-12)


def test_g_boundaries_and_shock():
    assert limit_shape_g(0.2, 1.0, KAPPA) == pytest.approx(0.8)
    assert limit_shape_g(2.0, 1.0, KAPPA) == 0.0
    assert limit_shape_g(0.3, 1.0, 0.5, shock=True) == pytest.approx(0.7)
    assert density_rho(0.3, 1.0, 0.5, shock=True) == 1.0
    with pytest.raises(InvalidParameterError):
        limit_shape_g(0.3, 1.0, KAPPA, shock=True)
    with pytest.raises(InvalidParameterError):
        limit_shape_g(-1.0, 1.0, KAPPA)


def test_g_matches_exact_height_mean(ref):
    """H(M, N) / N from the transfer matrix approaches g as the box grows."""
    gaps = []
    for n in (4, 8, 12):
        d = exact_height_distribution(ref, n, n)
        gaps.append(abs(d.mean() / n - limit_shape_g(1.0, 1.0, ref.kappa)))
    assert gaps[0] > gaps[1] > gaps[2]


@given(kappas)
def test_speed_law_consistency(k):
    total = integrate.quad(lambda x: speed_density(x, k), 1 / k, k)[0]
    assert total == pytest.approx(1.0, abs=1e-8)
    mean = integrate.quad(lambda x: x * speed_density(x, k), 1 / k, k)[0]
    assert mean == pytest.approx(1.0, abs=1e-8)
    for u in (0.0, 0.3, 0.9, 1.0):
        assert speed_cdf(speed_quantile(u, k), k) == pytest.approx(u, abs=1e-12)
    assert speed_cdf(0.5 / k, k) == 0.0 and speed_cdf(2 * k, k) == 1.0


@given(kappas, st.floats(0.05, 12.0))
def test_speed_tail_is_density(k, mu):
    # P[speed >= mu] is the step density at mu
    assert 1 - speed_cdf(mu, k) == pytest.approx(density_rho(mu, 1.0, k), abs=1e-12)


def test_ks_matches_scipy():
    rng = np.random.default_rng(0)
    x = speed_quantile(rng.random(500), KAPPA)
    ref = stats.kstest(x, lambda v: speed_cdf(v, KAPPA)).statistic
    assert ks_statistic(x, lambda v: speed_cdf(v, KAPPA)) == pytest.approx(ref, abs=1e-14)
    assert ks_critical(800) == pytest.approx(1.6276 / math.sqrt(800), rel=0.02)
    with pytest.raises(ValueError):
        ks_statistic([], lambda v: v)


def test_ks_self_test_calibrated():
    rng = np.random.default_rng(1)
    n, crit = 400, ks_critical(400)
    below = sum(ks_statistic(speed_quantile(rng.random(n), KAPPA), lambda v: speed_cdf(v, KAPPA)) < crit
                for _ in range(100))
    assert below >= 98


def test_dominance_check():
    assert tail_counts([0, 1, 1, 3], 4).tolist() == [4, 3, 1, 1, 0]
    rep = dominance_check([100, 50, 25, 10], 100, 0.5, k_max=3)
    assert rep.passed
    assert rep.bound == (1.0, 0.5, 0.25, 0.125)
    bad = dominance_check([100, 90, 80, 70], 100, 0.5, k_max=3)
    assert not bad.passed
    assert [r["ok"] for r in bad.rows()] == [True, False, False, False]
    with pytest.raises(ValueError):
        dominance_check([0], 0, 0.5)


def test_tail_profile_log_drop():
    tp = TailProfile(10, 10, 100, 1.0, (1.0, 2.0, 3.0), (0.2, 0.05, 0.01), (0.1, 0.0, 0.0))
    assert tp.log_drop("upper") == pytest.approx(math.log(20))
    assert tp.log_drop("lower") == math.inf
    assert tp.monotone()
    empty = TailProfile(10, 10, 100, 1.0, (1.0, 3.0), (0.0, 0.0), (0.0, 0.0))
    assert math.isnan(empty.log_drop("upper"))


def test_tail_profile_runs(ref):
    tp = tail_profile(ref, 100, 1.0, 200, 3)
    assert tp.X == 100 and tp.n == 200 and tp.monotone()
    with pytest.raises(InvalidParameterError):
        tail_profile(ref, 100, 3.0, 10, 3)


def test_empirical_density_small(ref):
    pts = empirical_density(ref, 100, [1.0], 5, 100, 2)
    assert abs(pts[0].empirical - pts[0].reference) < 0.1
    assert pts[0].x == 100


def test_reference_csv(tmp_path):
    p = tmp_path / "ref.csv"
    write_reference_csv(p, KAPPA, n=11)
    rows = p.read_text().splitlines()
    assert rows[0] == "mu,g,rho,speed_density,speed_cdf" and len(rows) == 12
