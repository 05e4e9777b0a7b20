import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sixvertex.core import InvalidParameterError, ModelParams
from sixvertex.meixner import (
    MeixnerParams,
    PointConfig,
    cd_kernel,
    choose_truncation,
    ensemble_pmf,
    ensemble_table,
    holes_functional,
    meixner_weight,
    monic_norms,
    orthonormal_basis,
    qlaplace_ensemble,
    qlaplace_lhs_exact,
    qlaplace_report,
    qlaplace_rhs,
    qpochhammer_product,
    smallest_hole_distribution,
)
from sixvertex.quadrant import CapacityError


def meixner_poly(n, x, beta, xi):
    """Classical Meixner polynomial 2F1(-n, -x; beta; 1 - 1/xi), as its finite sum."""
    z = 1 - 1 / mpmath.mpf(xi)
    return float(mpmath.fsum(mpmath.rf(-n, k) * mpmath.rf(-x, k) / (mpmath.rf(beta, k) * mpmath.factorial(k)) * z**k
                             for k in range(n + 1)))


def test_weight_value():
    # Gamma(4) / (Gamma(2) 2!) * 0.5^2
    assert meixner_weight(2, 2.0, 0.5) == pytest.approx(0.75, rel=1e-14)
    assert meixner_weight(0, 3.5, 0.2) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        meixner_weight(1, 2.0, 1.0)
    with pytest.raises(InvalidParameterError):
        meixner_weight(-1, 2.0, 0.5)


@pytest.mark.parametrize("beta,xi", [(2.0, 0.5), (1.0, 0.3), (3.0, 1 / 1.75)])
def test_monic_norms_against_hypergeometric(beta, xi):
    xs = range(400)
    W = [meixner_weight(x, beta, xi) for x in xs]
    for n, h in enumerate(monic_norms(4, beta, xi)):
        lead = (1 - 1 / xi) ** n / float(mpmath.rf(beta, n))
        s = math.fsum((meixner_poly(n, x, beta, xi) / lead) ** 2 * w for x, w in zip(xs, W))
        assert s == pytest.approx(h, rel=1e-9)


@pytest.mark.parametrize("N,beta,xi", [(3, 2.0, 0.5), (5, 1.0, 0.4), (2, 4.0, 0.7)])
def test_basis_matches_classical_polynomials(N, beta, xi):
    mp = MeixnerParams(N, beta, xi)
    b = orthonormal_basis(mp)
    assert np.max(np.abs(b.gram() - np.eye(N))) <= 1e-10
    xs = mp.sites
    for n in range(N):
        v = np.array([meixner_poly(n, int(x), beta, xi) for x in xs]) * np.sqrt(b.weight)
        v /= np.linalg.norm(v)
        assert np.max(np.abs(np.abs(v) - np.abs(b.phi[n]))) <= 1e-9


def test_cd_kernel_projection():
    mp = MeixnerParams(3, 2.0, 0.5)
    K = cd_kernel(orthonormal_basis(mp))
    assert np.trace(K.matrix) == pytest.approx(3, abs=1e-8)
    assert np.max(np.abs(K.matrix @ K.matrix - K.matrix)) <= 1e-10
    assert K(1, 2) == pytest.approx(K(2, 1))


@given(st.integers(1, 4), st.floats(0.5, 4.0), st.floats(0.1, 0.8), st.integers(0, 2**32))
def test_pmf_equals_kernel_determinant(N, beta, xi, seed):
    mp = MeixnerParams(N, beta, xi)
    K = cd_kernel(orthonormal_basis(mp)).matrix
    rng = np.random.default_rng(seed)
    cfg = np.sort(rng.choice(min(mp.x_max + 1, 3 * N + 6), size=N, replace=False))
    assert ensemble_pmf(mp, cfg) == pytest.approx(np.linalg.det(K[np.ix_(cfg, cfg)]), abs=1e-8)


def test_pmf_brute_force_normalization():
    beta, xi = 1.5, 0.4
    xs = range(200)
    W = {x: meixner_weight(x, beta, xi) for x in xs}
    Z = math.fsum((b - a) ** 2 * W[a] * W[b] for a, b in itertools.combinations(xs, 2))
    mp = MeixnerParams(2, beta, xi)
    assert ensemble_pmf(mp, PointConfig((1, 4))) == pytest.approx(9 * W[1] * W[4] / Z, rel=1e-10)
    assert ensemble_pmf(mp, (3, 3)) == 0.0
    with pytest.raises(ValueError):
        ensemble_pmf(mp, (1,))
    with pytest.raises(ValueError):
        PointConfig((2, 1))


@pytest.mark.parametrize("N,beta,xi", [(1, 2.0, 0.5), (3, 1.0, 1 / 1.75), (4, 2.0, 0.3)])
def test_table_normalized(N, beta, xi):
    mp = MeixnerParams(N, beta, xi)
    _, p = ensemble_table(mp)
    assert abs(math.fsum(p) - 1.0) <= 1e-10 + mp.tail_bound


def test_truncation_certificate():
    N, beta, xi = 3, 2.0, 0.6
    x_max, tail = choose_truncation(N, beta, xi, 1e-12)
    assert tail <= 1e-12
    # mass beyond x_max, from a much larger exact grid
    big = MeixnerParams(N, beta, xi, x_max=x_max + 150)
    cfgs, p = ensemble_table(big)
    outside = math.fsum(p[cfgs.max(axis=1) > x_max])
    assert outside <= tail
    assert choose_truncation(0, 1.0, 0.5) == (0, 0.0)


def test_enumeration_budget():
    with pytest.raises(CapacityError):
        ensemble_table(MeixnerParams(8, 2.0, 0.5, x_max=200))


@pytest.mark.parametrize("a,q,h", [(0.3, 0.5, 0), (1.5, 0.5, 2), (0.7, 0.9, 1), (2.0, 0.3, 5)])
def test_qpochhammer_against_mpmath(a, q, h):
    want = 1 / float(mpmath.qp(-a * q**h, q))
    assert qpochhammer_product(a, q, h) == pytest.approx(want, rel=1e-13)
    assert qpochhammer_product(0.0, q, h) == 1.0
    assert qpochhammer_product(a, q, math.inf) == 1.0


def test_holes_functional_empty_ensemble():
    mp = MeixnerParams(0, 2.0, 0.5)
    assert holes_functional(mp, 0.7, 0.5) == pytest.approx(qpochhammer_product(0.7, 0.5, 0))


def test_qlaplace_ensemble_parameters(ref):
    mp, shift = qlaplace_ensemble(ref, 4, 3)
    assert (mp.N, mp.beta, shift) == (3, 1.0, 0)
    assert mp.xi == pytest.approx(1 / 1.75)
    mp, shift = qlaplace_ensemble(ref, 3, 5)
    assert (mp.N, mp.beta, shift) == (2, 4.0, 3)


@pytest.mark.parametrize("b", [(0.3, 0.6), (0.2, 0.5), (0.1, 0.9)])
@pytest.mark.parametrize("M,N", [(1, 1), (2, 3), (3, 2), (5, 4)])
def test_qlaplace_identity(b, M, N):
    p = ModelParams(*b)
    for xi in (0.3, 1.5):
        rep = qlaplace_report(p, M, N, xi)
        assert rep.passed, rep
        assert rep.lhs == pytest.approx(qlaplace_lhs_exact(p, M, N, xi))
        assert rep.rhs == pytest.approx(qlaplace_rhs(p, M, N, xi))


def test_qlaplace_detects_wrong_parameters(ref):
    """The identity is sharp: a perturbed model gives a visible gap."""
    lhs = qlaplace_lhs_exact(ModelParams(0.3, 0.62), 3, 3, 0.7)
    assert abs(lhs - qlaplace_rhs(ref, 3, 3, 0.7)) > 1e-4


def test_smallest_hole():
    mp = MeixnerParams(3, 2.0, 0.5)
    sh = smallest_hole_distribution(mp)
    assert sh.pmf.sum() == pytest.approx(1.0, abs=1e-10)
    assert sh.inequality_holds
    assert smallest_hole_distribution(MeixnerParams(0, 2.0, 0.5)).pmf.tolist() == [1.0]
