import math

import numpy as np
import pytest

from sixvertex.core import InvalidParameterError, ModelParams, NEG_INF
from sixvertex.quadrant import CapacityError
from sixvertex import tracking as tr


def test_fan_required():
    with pytest.raises(InvalidParameterError):
        tr.second_class_speeds(ModelParams(0.6, 0.3), 10, 4, 1)


def test_trajectory_moves_right_by_steps(ref):
    traj = tr.track_second_class(ref, 200, 5)
    assert traj.positions[0] == 1 and traj.T == 200
    assert np.all(np.diff(traj.positions) >= 0)
    with pytest.raises(ValueError):
        tr.track_second_class(ref, 0, 5)


def test_speed_reference_mean_is_one(ref):
    assert tr.speed_mean_reference(ref.kappa) == pytest.approx(1.0, abs=1e-9)


def test_speeds_job_invariant(ref):
    a = tr.second_class_speeds(ref, 50, 130, 3).speeds
    b = tr.second_class_speeds(ref, 50, 130, 3, jobs=3).speeds
    assert np.array_equal(a, b)


@pytest.mark.parametrize("t,x", [(1, 1), (1, 2), (1, 3), (2, 2), (2, 3)])
def test_weak_identity_exact(ref, t, x):
    lhs, rhs = tr.weak_identity_exact(ref, t, x)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_weak_identity_exact_value(ref):
    # class 1 from the left is the smaller class at (1, 1): it turns up w.p. 1 - b2,
    # sending the class-2 arrow right
    assert tr.weak_identity_exact(ref, 1, 2)[0] == pytest.approx(1 - ref.b2)


def test_weak_identity_monte_carlo(ref):
    r = tr.weak_identity_check(ref, 20, 20, 4000, 9)
    assert abs(r.z) < 4.5
    assert tr.WeakIdentityResult(1, 1, 10, 0.5, 0.5).z == 0.0


def test_domination_exact_one_row(ref):
    law = tr.domination_exact(ref, 1)
    assert sum(law.values()) == pytest.approx(1.0)
    assert law[1] == pytest.approx((1 - ref.b2) * ref.b1)
    dual = tr.domination_exact(ref, 2, dual=True)
    assert sum(dual.values()) == pytest.approx(1.0)


@pytest.mark.parametrize("dual", [False, True])
def test_domination_matches_exact_at_one_row(ref, dual):
    n = 20_000
    exact = tr.domination_exact(ref, 2, dual=dual)
    fn = tr.dual_geo_domination if dual else tr.geo_domination
    res = fn(ref, 2, 1, n, 4)
    pmf = res.pmf(3)
    for k, p in exact.items():
        assert abs(pmf[k] - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-12


@pytest.mark.parametrize("env", ["step", "empty", "bernoulli(0.5)"])
def test_domination_environments(ref, env):
    res = tr.geo_domination(ref, 4, 30, 2000, 1, env=env)
    assert res.report.passed
    assert res.L.min() >= 0 and res.L.max() <= 4


def test_domination_validation(ref):
    with pytest.raises(ValueError):
        tr.geo_domination(ref, 0, 10, 10, 1)
    with pytest.raises(InvalidParameterError):
        tr.geo_domination(ref, 2, 10, 10, 1, env="wedge")


def test_domination_job_invariant(ref):
    a = tr.dual_geo_domination(ref, 3, 20, 1500, 2).L
    b = tr.dual_geo_domination(ref, 3, 20, 1500, 2, jobs=4).L
    assert np.array_equal(a, b)


def test_permutation_snapshot(ref):
    snap = tr.packed_speed_snapshot(ref, 10, (-5, 5), 3)
    assert snap.pi.size == 11
    for c, x in snap.inverse.items():
        if x is not None and -5 <= x <= 5:
            assert snap.pi[x + 5] == c
    assert tr.packed_speed_snapshot(ref, 0, (-2, 2), 3).pi.tolist() == [-2, -1, 0, 1, 2]


@pytest.mark.parametrize("N", [1, 2])
def test_color_symmetry_exact(ref, N):
    fwd, bwd = tr.color_position_exact(ref, N, 2)
    assert np.max(np.abs(fwd - bwd)) <= 1e-12
    assert np.all((fwd >= 0) & (fwd <= 1))
    # every label in range sits somewhere on the line
    assert np.all(fwd.sum(axis=0) <= 1 + 1e-12)


def test_color_symmetry_monte_carlo(ref):
    cm = tr.color_position_marginals(ref, 3, 2, 5000, 1)
    assert np.max(np.abs(cm.z)) < 4.5
    with pytest.raises(ValueError):
        tr.color_position_marginals(ref, 3, 5, 10, 1)


def test_color_marginals_match_exact(ref):
    n = 20_000
    fwd, _ = tr.color_position_exact(ref, 2, 2)
    cm = tr.color_position_marginals(ref, 2, 2, n, 8)
    se = np.sqrt(fwd * (1 - fwd) / n)
    assert np.all(np.abs(cm.forward - fwd) <= 4 * se + 1e-12)


def test_stationarity_report(ref):
    rep = tr.speed_stationarity_check(ref, 20, 2, 300, 1)
    assert rep.distances.shape == (5,)
    assert 0 <= rep.mean_distance <= 1


def test_asep_map(ref):
    k = ref.kappa
    assert tr.asep_map_f(-k, k) == pytest.approx(-1.0)
    assert tr.asep_map_f(-1 / k, k) == pytest.approx(1.0)
    u = np.linspace(-k, -1 / k, 50)
    assert np.all(np.diff(tr.asep_map_f(u, k)) >= 0)
    with pytest.raises(InvalidParameterError):
        tr.asep_map_f(0.0, k)
