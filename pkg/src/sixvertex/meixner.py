"""Meixner orthogonal-polynomial ensemble and the q-Laplace identity check.

The ensemble lives on ``{0, 1, 2, ...}`` with weight
``W(x) = (beta)_x xi^x / x!``.  Everything here is exact enumeration on a
truncated support ``0..x_max``; the truncation comes with a bound on the
probability that any particle lies beyond ``x_max``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import InvalidParameterError, ModelParams
from .quadrant import CapacityError, exact_height_distribution

ENUMERATION_BUDGET = 5_000_000
_TAIL_DEFAULT = 1e-12


def meixner_log_weight(x, beta: float, xi: float):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x != np.floor(x)):
        raise InvalidParameterError("Meixner weight is defined on non-negative integers")
    return gammaln(beta + x) - gammaln(beta) - gammaln(x + 1.0) + x * math.log(xi)


def meixner_weight(x, beta: float, xi: float):
    _check(beta, xi)
    w = np.exp(meixner_log_weight(x, beta, xi))
    return float(w) if np.ndim(w) == 0 else w


def _check(beta, xi):
    if not beta > 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    if not 0 < xi < 1:
        raise InvalidParameterError(f"xi must lie in (0, 1), got {xi}")


def monic_norms(N: int, beta: float, xi: float) -> np.ndarray:
    """Closed-form squared norms of the monic orthogonal polynomials, n < N."""
    n = np.arange(N, dtype=float)
    log_h = (gammaln(n + 1) + gammaln(beta + n) - gammaln(beta) + n * math.log(xi)
             - (beta + 2 * n) * math.log1p(-xi))
    return np.exp(log_h)


def _log_partition(N: int, beta: float, xi: float) -> float:
    n = np.arange(N, dtype=float)
    return float(np.sum(gammaln(n + 1) + gammaln(beta + n) - gammaln(beta) + n * math.log(xi)
                        - (beta + 2 * n) * math.log1p(-xi)))


def _stieltjes(N: int, log_w: np.ndarray) -> np.ndarray:
    """Orthonormal vectors ``phi_n = P_n sqrt(W)`` on the grid, shape ``(N, len)``."""
    L = log_w.size
    x = np.arange(L, dtype=float)
    # scale out the peak so sqrt(W) does not underflow before it has to
    shift = log_w.max()
    sw = np.exp(0.5 * (log_w - shift))
    phi = np.zeros((N, L))
    if N == 0:
        return phi
    phi[0] = sw / np.linalg.norm(sw)
    for n in range(1, N):
        v = x * phi[n - 1]
        # full reorthogonalisation; N is small
        for _ in range(2):
            v -= phi[:n].T @ (phi[:n] @ v)
        phi[n] = v / np.linalg.norm(v)
    return phi


def choose_truncation(N: int, beta: float, xi: float, tail_bound: float = _TAIL_DEFAULT):
    """Smallest ``x_max`` with ``sum_{x > x_max} K(x, x) <= tail_bound``.

    ``K(x, x)`` is the one-point density, so the sum bounds the probability
    that some particle sits beyond ``x_max``.  It is evaluated on a grid that
    reaches far into the tail; past the grid a geometric bound is added.
    """
    _check(beta, xi)
    if N == 0:
        return 0, 0.0
    mode = max(0.0, (beta - 1) * xi / (1 - xi))
    L = int(mode + N + 64)
    while True:
        lw = meixner_log_weight(np.arange(L), beta, xi)
        if lw[-1] < lw.max() - 120.0:
            break
        L *= 2
    phi = _stieltjes(N, lw)
    diag = (phi**2).sum(axis=0)
    r = diag[-1] / diag[-2]
    if not r < 1:
        raise RuntimeError("one-point density is not decaying at the end of the grid")
    # diag sums to N; beyond the grid it decays at least geometrically
    remainder = diag[-1] * r / (1 - r)
    tails = np.cumsum(diag[::-1])[::-1]  # tails[x] = sum_{y >= x}
    tails = np.append(tails[1:], 0.0) + remainder
    ok = np.flatnonzero(tails <= tail_bound)
    x_max = int(max(ok[0], N + 2))
    return x_max, float(tails[x_max])


@dataclass(frozen=True)
class MeixnerParams:
    N: int
    beta: float
    xi: float
    x_max: int | None = None
    tail_bound: float = _TAIL_DEFAULT

    def __post_init__(self):
        if self.N < 0:
            raise InvalidParameterError("N must be non-negative")
        _check(self.beta, self.xi)
        if self.x_max is None:
            x_max, tail = choose_truncation(self.N, self.beta, self.xi, self.tail_bound)
            object.__setattr__(self, "x_max", x_max)
            object.__setattr__(self, "tail_bound", max(tail, 0.0))
        elif self.x_max < self.N:
            raise InvalidParameterError("x_max must leave room for N particles")

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.x_max + 1)


@dataclass(frozen=True)
class PointConfig:
    sites: tuple

    def __post_init__(self):
        s = tuple(int(v) for v in self.sites)
        if any(a >= b for a, b in zip(s, s[1:])) or (s and s[0] < 0):
            raise ValueError("a point configuration is a strictly increasing tuple of sites >= 0")
        object.__setattr__(self, "sites", s)


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    params: MeixnerParams
    phi: np.ndarray  # P_n(x) sqrt(W(x)), rows n = 0..N-1
    weight: np.ndarray

    @property
    def values(self) -> np.ndarray:
        """``P_n(x)`` on ``0..x_max``."""
        return self.phi / np.sqrt(self.weight)

    def gram(self) -> np.ndarray:
        return self.phi @ self.phi.T


def orthonormal_basis(params: MeixnerParams) -> OrthoBasis:
    lw = meixner_log_weight(params.sites, params.beta, params.xi)
    w = np.exp(lw)
    # normalisation removes the peak scaling, so phi_n = P_n sqrt(W) exactly
    phi = _stieltjes(params.N, lw)
    G = phi @ phi.T
    if params.N and np.max(np.abs(G - np.eye(params.N))) > 1e-10:
        raise RuntimeError("Stieltjes basis lost orthonormality; raise precision or shrink x_max")
    return OrthoBasis(params, phi, w)


class CDKernel:
    def __init__(self, basis: OrthoBasis, N: int | None = None):
        n = basis.params.N if N is None else N
        if n > basis.phi.shape[0]:
            raise ValueError("basis has fewer polynomials than requested")
        ph = basis.phi[:n]
        self.matrix = ph.T @ ph

    def __call__(self, x: int, y: int) -> float:
        return float(self.matrix[x, y])


def cd_kernel(basis: OrthoBasis, N: int | None = None) -> CDKernel:
    return CDKernel(basis, N)


def ensemble_pmf(params: MeixnerParams, config) -> float:
    """Probability that the particle set equals ``config``."""
    s = np.asarray(sorted(config.sites if isinstance(config, PointConfig) else config), dtype=float)
    if s.size != params.N:
        raise ValueError(f"configuration must have {params.N} sites")
    if s.size and (np.any(np.diff(s) == 0)):
        return 0.0
    return float(np.exp(_log_pmf(params, s[None, :]))[0])


def _log_pmf(params: MeixnerParams, cfgs: np.ndarray) -> np.ndarray:
    """Log probabilities of sorted, distinct configurations (rows of ``cfgs``)."""
    n = cfgs.shape[1]
    logv = np.zeros(cfgs.shape[0])
    for i in range(n):
        for j in range(i + 1, n):
            logv += 2.0 * np.log(cfgs[:, j] - cfgs[:, i])
    logw = meixner_log_weight(cfgs, params.beta, params.xi).sum(axis=1)
    return logv + logw - _log_partition(n, params.beta, params.xi)


def enumerate_configs(params: MeixnerParams) -> np.ndarray:
    n_sites = params.x_max + 1
    count = math.comb(n_sites, params.N)
    if count > ENUMERATION_BUDGET:
        raise CapacityError(f"{count} configurations exceed the budget {ENUMERATION_BUDGET}")
    flat = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(n_sites), params.N)),
                       dtype=np.int64, count=count * params.N)
    return flat.reshape(count, params.N)


def ensemble_table(params: MeixnerParams):
    """All configurations on ``0..x_max`` with their probabilities."""
    cfgs = enumerate_configs(params)
    if params.N == 0:
        return cfgs, np.ones(1)
    return cfgs, np.exp(_log_pmf(params, cfgs.astype(float)))


def qpochhammer_product(xi_arg: float, q: float, h: float) -> float:
    """``prod_{i >= 0} 1 / (1 + xi_arg q^(h + i))``."""
    if not 0 < q < 1:
        raise InvalidParameterError(f"q must lie in (0, 1), got {q}")
    if xi_arg == 0:
        return 1.0
    if math.isinf(h):
        return 1.0
    s = 0.0
    i = 0
    while True:
        a = xi_arg * q ** (h + i)
        if a < 1e-16 and i > 0:
            break
        s += math.log1p(a)
        i += 1
    return math.exp(-s)


def holes_functional(params: MeixnerParams, xi_arg: float, q: float, shift: int = 0) -> float:
    """``E prod_{holes y} 1 / (1 + xi_arg q^(y + shift))`` over the hole process.

    Rewritten as the full product over all sites times
    ``E prod_{particles x} (1 + xi_arg q^(x + shift))``; the truncation error
    is at most ``params.tail_bound``.
    """
    if xi_arg < 0:
        raise InvalidParameterError("xi_arg must be non-negative")
    full = qpochhammer_product(xi_arg, q, shift)
    if params.N == 0:
        return full
    cfgs, p = ensemble_table(params)
    fac = np.prod(1.0 + xi_arg * q ** (cfgs + shift), axis=1)
    return full * math.fsum(p * fac)


def qlaplace_lhs_exact(params: ModelParams, M: int, N: int, xi_arg: float) -> float:
    dist = exact_height_distribution(params, M, N)
    return math.fsum(p * qpochhammer_product(xi_arg, params.q, h) for h, p in enumerate(dist.pmf))


def qlaplace_ensemble(params: ModelParams, M: int, N: int,
                      tail_bound: float = _TAIL_DEFAULT) -> tuple[MeixnerParams, int]:
    """Meixner ensemble and site shift whose holes match ``H(M, N)``."""
    xi = 1.0 / params.kappa
    if M > N:
        return MeixnerParams(N, float(M - N), xi, tail_bound=tail_bound), 0
    return MeixnerParams(M - 1, float(N - M + 2), xi, tail_bound=tail_bound), N - M + 1


def qlaplace_rhs(params: ModelParams, M: int, N: int, xi_arg: float,
                 tail_bound: float = _TAIL_DEFAULT) -> float:
    if M < 1 or N < 1:
        raise InvalidParameterError("M, N must be positive")
    mp, shift = qlaplace_ensemble(params, M, N, tail_bound)
    return holes_functional(mp, xi_arg, params.q, shift)


@dataclass(frozen=True)
class IdentityReport:
    M: int
    N: int
    xi: float
    lhs: float
    rhs: float
    abs_err: float
    tail_bound: float
    b1: float
    b2: float

    @property
    def passed(self) -> bool:
        return self.abs_err <= 1e-8 + self.tail_bound

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return json.dumps(d)


def qlaplace_report(params: ModelParams, M: int, N: int, xi_arg: float) -> IdentityReport:
    mp, shift = qlaplace_ensemble(params, M, N)
    lhs = qlaplace_lhs_exact(params, M, N, xi_arg)
    rhs = holes_functional(mp, xi_arg, params.q, shift)
    return IdentityReport(M, N, xi_arg, lhs, rhs, abs(lhs - rhs), mp.tail_bound,
                          params.b1, params.b2)


@dataclass(frozen=True, eq=False)
class SmallestHole:
    pmf: np.ndarray
    xi_grid: tuple
    functional: tuple
    bound: tuple

    @property
    def inequality_holds(self) -> bool:
        return all(f <= b + 1e-15 for f, b in zip(self.functional, self.bound))


def smallest_hole_distribution(params: MeixnerParams, q: float = 0.5,
                               xi_grid=(0.1, 0.5, 1.0, 2.0, 5.0)) -> SmallestHole:
    """Law of the smallest hole and the drop-all-but-one-factor bound.

    Checks ``E prod_{holes} f <= E f(x_1)`` with ``f(y) = 1 / (1 + xi q^y)``
    on each grid point.
    """
    N = params.N
    pmf = np.zeros(N + 1)
    if N == 0:
        pmf[0] = 1.0
        cfgs, p = np.zeros((1, 0), np.int64), np.ones(1)
    else:
        cfgs, p = ensemble_table(params)
        # smallest hole = length of the packed prefix 0, 1, 2, ...
        packed = cfgs == np.arange(N)
        x1 = np.where(packed.all(axis=1), N, np.argmin(packed, axis=1))
        np.add.at(pmf, x1, p)
    func, bnd = [], []
    for xi in xi_grid:
        func.append(holes_functional(params, xi, q))
        bnd.append(float(np.dot(pmf, 1.0 / (1.0 + xi * q ** np.arange(N + 1)))))
    return SmallestHole(pmf, tuple(xi_grid), tuple(func), tuple(bnd))
