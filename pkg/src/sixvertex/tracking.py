"""Tagged-particle experiments: second-class speeds, domination, symmetries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import hydro
from .core import HOLE, NEG_INF, InvalidParameterError, ModelParams, derive_seeds, threshold
from .parallel import map_shards
from .line import (
    WindowState,
    exact_line_law,
    make_packed_ic,
    margin_for,
    run_batch,
)
from .quadrant import (
    CapacityError,
    exact_box_law,
    make_second_class_boundary,
    make_step_boundary,
    second_class_paths,
    step_occupancy,
)

# seed streams, so that independent estimators never share trials
STREAM_SPEED = 1
STREAM_WEAK_LHS = 21
STREAM_WEAK_RHS = 22
STREAM_GEO = 31
STREAM_DUAL = 32
STREAM_COLOR_A = 41
STREAM_COLOR_B = 42
STREAM_STAT = 51

ENV_CHANNEL = 5


def _need_fan(params: ModelParams):
    if not params.rarefaction:
        raise InvalidParameterError("this experiment needs b1 < b2")


@dataclass(frozen=True, eq=False)
class Trajectory:
    positions: np.ndarray
    params: ModelParams
    seed: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.positions.size)

    @property
    def T(self) -> int:
        return self.positions.size - 1


@dataclass(frozen=True, eq=False)
class SpeedSample:
    speeds: np.ndarray
    T: int
    seed: int

    @property
    def n(self) -> int:
        return self.speeds.size


def track_second_class(params: ModelParams, T: int, seed: int) -> Trajectory:
    _need_fan(params)
    if T < 1:
        raise ValueError("T must be at least 1")
    pos = second_class_paths(params, T, np.array([seed], dtype=np.uint64))[0]
    return Trajectory(pos, params, int(seed))


def second_class_speeds(params: ModelParams, T: int, n: int, seed: int,
                        jobs: int = 1, chunk: int = 64) -> SpeedSample:
    """``X_T / T`` for ``n`` independent trajectories."""
    _need_fan(params)
    seeds = derive_seeds(seed, n, STREAM_SPEED)

    def block(sd):
        return np.concatenate([second_class_paths(params, T, sd[s:s + chunk])[:, -1]
                               for s in range(0, sd.size, chunk)])

    return SpeedSample(map_shards(block, seeds, jobs) / T, T, seed)


def speed_cdf_reference(x, kappa: float):
    return hydro.speed_cdf(x, kappa)


def speed_mean_reference(kappa: float) -> float:
    """Mean of the limiting speed law, by quadrature of its density."""
    from scipy.integrate import quad

    return quad(lambda x: x * hydro.speed_density(x, kappa), 1.0 / kappa, kappa)[0]


# ---------------------------------------------------------------- weak identity

@dataclass(frozen=True)
class WeakIdentityResult:
    t: int
    x: int
    n: int
    lhs: float
    rhs: float

    @property
    def se(self) -> float:
        v = self.lhs * (1 - self.lhs) / self.n + self.rhs * (1 - self.rhs) / self.n
        return math.sqrt(v)

    @property
    def z(self) -> float:
        d = self.lhs - self.rhs
        return 0.0 if d == 0 else d / self.se if self.se > 0 else math.inf


def weak_identity_check(params: ModelParams, t: int, x: int, n: int, seed: int) -> WeakIdentityResult:
    """``P[X_t >= x]`` against ``P[column x - 1 occupied after t rows]`` (step boundary).

    Column 0 is the left boundary and always counts as occupied.  The two
    sides use independent trials.
    """
    _need_fan(params)
    if t < 1 or x < 1:
        raise ValueError("need t >= 1 and x >= 1")
    paths = second_class_paths(params, t, derive_seeds(seed, n, STREAM_WEAK_LHS))
    lhs = float(np.mean(paths[:, t] >= x))
    if x == 1:
        rhs = 1.0
    else:
        occ = step_occupancy(params, x - 1, [t], derive_seeds(seed, n, STREAM_WEAK_RHS))
        rhs = float(np.mean(occ[:, 0, x - 2]))
    return WeakIdentityResult(t, x, n, lhs, rhs)


def weak_identity_exact(params: ModelParams, t: int, x: int, width: int | None = None):
    """Both sides of the weak identity by exhaustive enumeration on a small box.

    A class-2 arrow that leaves the box on the right is counted in ``X_t >= x``.
    """
    M = width or (x + t + 1)
    lhs = 0.0
    for smp, p in exact_box_law(params, make_second_class_boundary(M, t)):
        cols = np.flatnonzero(smp.v_edges[t] == 2)
        if cols.size == 0 or cols[0] + 1 >= x:
            lhs += p
    if x == 1:
        return lhs, 1.0
    rhs = 0.0
    for smp, p in exact_box_law(params, make_step_boundary(M, t)):
        if smp.v_edges[t, x - 2] != HOLE:
            rhs += p
    return lhs, rhs


# ---------------------------------------------------------------- domination

@dataclass(frozen=True, eq=False)
class DominationResult:
    L: np.ndarray
    report: hydro.DominanceReport
    M: int
    t: int

    def pmf(self, k_max: int = 8) -> np.ndarray:
        return np.bincount(np.minimum(self.L, k_max + 1), minlength=k_max + 2)[: k_max + 1] / self.L.size


def _domination_window(params: ModelParams, M: int, t: int) -> tuple[int, int]:
    A = -M - 1 - margin_for(params, t) - 1
    B = int(math.ceil(params.kappa * t + 8 * math.sqrt(t + 1) + 20))
    return A, B


def _environment(env: str, A: int, M: int, W: int):
    """Classes left of the tagged block and the exterior class."""
    x = np.arange(A, A + W)
    if env == "step":
        return np.where(x <= -M - 1, 1, HOLE), 1, None
    if env == "empty":
        return np.full(W, HOLE, dtype=np.int64), HOLE, None
    if env.startswith("bernoulli"):
        rho = float(env[env.index("(") + 1:env.index(")")])
        return np.full(W, HOLE, dtype=np.int64), NEG_INF, rho
    raise InvalidParameterError(f"unknown environment {env!r}")


def _tagged_ic(params, M, t, env, dual):
    A, B = _domination_window(params, M, t)
    W = B - A + 1
    base, exterior, rho = _environment(env, A, M, W)
    base = base.astype(np.int64)
    x = np.arange(A, B + 1)
    if dual:
        base[x == -M] = 3
        base[(x > -M) & (x <= 0)] = 2
    else:
        base[(x >= -M) & (x <= -1)] = 3
        base[x == 0] = 2
    ics = None
    if rho is not None:
        mask = x <= -M - 1
        thr = np.uint64(threshold(rho))

        def ics(seeds):
            bits = np.zeros((seeds.size, W), dtype=np.int8)
            K.bernoulli_sites(seeds, A, W, ENV_CHANNEL, thr, bits)
            out = np.broadcast_to(base, (seeds.size, W)).copy()
            out[:, mask] = np.where(bits[:, mask] == 1, 1, HOLE)
            return out

    return WindowState(A, base, exterior=exterior), ics


def _count_overtakes(dual: bool, M: int):
    def reducer(cls, exits):
        c = cls[:, -1, :]
        n_tagged = np.count_nonzero((c == 2) | (c == 3), axis=1)
        if np.any(n_tagged != M + 1):
            raise CapacityError("a second- or third-class particle left the window")
        idx = np.arange(c.shape[1])
        if dual:
            p3 = np.argmax(c == 3, axis=1)
            return np.count_nonzero((c == 2) & (idx[None, :] < p3[:, None]), axis=1)
        p2 = np.argmax(c == 2, axis=1)
        return np.count_nonzero((c == 3) & (idx[None, :] > p2[:, None]), axis=1)

    return reducer


def _domination(params, M, t, trials, seed, env, dual, k_max=8, sigma_mult=3.0, jobs=1):
    _need_fan(params)
    if M < 1 or trials < 1 or t < 0:
        raise ValueError("need M >= 1, trials >= 1, t >= 0")
    ic, ics = _tagged_ic(params, M, t, env, dual)
    seeds = derive_seeds(seed, trials, STREAM_DUAL if dual else STREAM_GEO)
    L = run_batch(ic, params, seeds, [t], _count_overtakes(dual, M), ics=ics, jobs=jobs)
    report = hydro.dominance_check(hydro.tail_counts(L, k_max), trials, params.q, k_max, sigma_mult)
    return DominationResult(L, report, M, t)


def geo_domination(params: ModelParams, M: int, t: int, trials: int, seed: int,
                   env: str = "step", **kw) -> DominationResult:
    """Third-class particles overtaking the second-class one.

    Start: environment at ``x <= -M - 1`` (default all class 1), class 3 on
    ``-M..-1``, class 2 at 0, holes to the right.  ``L_t`` counts class 3
    strictly right of class 2.
    """
    return _domination(params, M, t, trials, seed, env, False, **kw)


def dual_geo_domination(params: ModelParams, M: int, t: int, trials: int, seed: int,
                        env: str = "step", **kw) -> DominationResult:
    """Class 3 at ``-M``, class 2 on ``-M+1..0``; ``L_t`` counts class 2 left of class 3."""
    return _domination(params, M, t, trials, seed, env, True, **kw)


def domination_exact(params: ModelParams, M: int, dual: bool = False) -> dict:
    """Exact law of ``L_1`` (one row, step environment) by enumeration.

    At most one arrow leaves the window in one row, and it ends up right of
    everything inside, so it is appended to the configuration.
    """
    A, B = -M - 2, 2
    x = np.arange(A, B + 1)
    cls = np.where(x <= -M - 1, 1, HOLE)
    if dual:
        cls[x == -M] = 3
        cls[(x > -M) & (x <= 0)] = 2
    else:
        cls[(x >= -M) & (x <= -1)] = 3
        cls[x == 0] = 2
    law = exact_line_law(WindowState(A, cls, exterior=1), params, 1, keep_exits=True)
    out: dict = {}
    for cfg, p in law.items():
        c = np.array(cfg)
        if dual:
            pos = int(np.flatnonzero(c == 3)[0])
            L = int(np.count_nonzero(c[:pos] == 2))
        else:
            pos = int(np.flatnonzero(c == 2)[0])
            L = int(np.count_nonzero(c[pos + 1:] == 3))
        out[L] = out.get(L, 0.0) + p
    return out


# ---------------------------------------------------------------- packed initial data

@dataclass(frozen=True, eq=False)
class PermutationSnapshot:
    """``pi[x]`` is the class at site ``x`` after ``N`` rows from packed data.

    ``inverse[c]`` is the site of class ``c`` (``None`` when it left the window).
    """

    N: int
    sites: np.ndarray
    pi: np.ndarray
    inverse: dict

    def __post_init__(self):
        finite = self.pi[(self.pi != NEG_INF) & (self.pi != HOLE)]
        if np.unique(finite).size != finite.size:
            raise AssertionError("snapshot is not injective")


def _packed_window(params: ModelParams, lo: int, hi: int, N: int, right_pad: int = 0):
    return lo - margin_for(params, N), hi + right_pad


def packed_speed_snapshot(params: ModelParams, N: int, window, seed: int) -> PermutationSnapshot:
    lo, hi = int(window[0]), int(window[1])
    pad = int(math.ceil(params.kappa * N + 8 * math.sqrt(N + 1) + 10))
    A, B = _packed_window(params, lo, hi, N, pad)
    ic = make_packed_ic((A, B))
    cls = run_batch(ic, params, np.array([seed], dtype=np.uint64), [N])[0, 0]
    r0 = A + (margin_for(params, N) if N > 0 else 0)
    sites = np.arange(lo, hi + 1)
    pi = cls[sites - A]
    where = {int(c): int(x) for x, c in zip(range(A, B + 1), cls) if r0 <= x}
    inverse = {c: where.get(c) for c in range(lo, hi + 1)}
    return PermutationSnapshot(N, sites, pi, inverse)


def _class_field(params: ModelParams, r: int, snaps, seeds, jobs: int = 1) -> np.ndarray:
    """Classes on sites ``-r..r`` at each snapshot time, shape ``(n, S, 2r+1)``."""
    N = int(max(snaps))
    A, B = _packed_window(params, -r, r, N)
    ic = make_packed_ic((A, B))
    off = -r - A
    return run_batch(ic, params, seeds, snaps, lambda c, e: c[:, :, off:off + 2 * r + 1].copy(),
                     jobs=jobs)


@dataclass(frozen=True, eq=False)
class ColorMarginals:
    N: int
    r: int
    n: int
    forward: np.ndarray  # [x, y] -> P[pi_N(x) = y]
    backward: np.ndarray  # [x, y] -> P[pi_N(-y) = -x]

    @property
    def z(self) -> np.ndarray:
        pbar = 0.5 * (self.forward + self.backward)
        se = np.sqrt(pbar * (1 - pbar) * 2.0 / self.n)
        d = self.forward - self.backward
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, d / se, np.where(d == 0, 0.0, np.inf))
        return z


def _marginal_matrix(cls: np.ndarray, r: int) -> np.ndarray:
    """``P[x, y] = mean(cls[:, x] == y)`` over ``x, y in -r..r`` (indices shifted by r)."""
    size = 2 * r + 1
    P = np.zeros((size, size))
    for xi in range(size):
        col = cls[:, xi]
        for yi in range(size):
            P[xi, yi] = np.mean(col == yi - r)
    return P


def _flip(P: np.ndarray) -> np.ndarray:
    """``Q[x, y] = P[-y, -x]``."""
    return P[::-1, ::-1].T


def color_position_marginals(params: ModelParams, N: int, r: int, trials: int,
                             seed: int, jobs: int = 1) -> ColorMarginals:
    """Forward and mirrored one-point marginals of the class field, from independent runs."""
    if r > 4:
        raise ValueError("range is limited to |x|, |y| <= 4")
    a = _class_field(params, r, [N], derive_seeds(seed, trials, STREAM_COLOR_A), jobs)[:, 0]
    b = _class_field(params, r, [N], derive_seeds(seed, trials, STREAM_COLOR_B), jobs)[:, 0]
    return ColorMarginals(N, r, trials, _marginal_matrix(a, r), _flip(_marginal_matrix(b, r)))


def color_position_exact(params: ModelParams, N: int, r: int):
    """Exact forward and mirrored marginals by enumerating the rows on ``[-r, r]``.

    Classes entering from outside the range cannot equal a label in the
    range, so the truncation does not change these marginals.
    """
    law = exact_line_law(make_packed_ic((-r, r)), params, N)
    size = 2 * r + 1
    P = np.zeros((size, size))
    for cfg, p in law.items():
        for xi, c in enumerate(cfg):
            if -r <= c <= r:
                P[xi, c + r] += p
    return P, _flip(P)


@dataclass(frozen=True, eq=False)
class StationarityReport:
    N: int
    r: int
    n: int
    distances: np.ndarray

    @property
    def mean_distance(self) -> float:
        return float(np.mean(self.distances))


def _ks2(a: np.ndarray, b: np.ndarray) -> float:
    grid = np.union1d(a, b)
    Fa = np.searchsorted(np.sort(a), grid, side="right") / a.size
    Fb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))


def speed_stationarity_check(params: ModelParams, N: int, r: int, trials: int,
                             seed: int, jobs: int = 1) -> StationarityReport:
    """KS distance per site between ``pi_N(x) / N`` and ``pi_{N+1}(x) / (N + 1)`` on the same runs."""
    cls = _class_field(params, r, [N, N + 1], derive_seeds(seed, trials, STREAM_STAT), jobs)
    a = cls[:, 0].astype(float) / max(N, 1)
    b = cls[:, 1].astype(float) / (N + 1)
    if N == 0:
        a = cls[:, 0].astype(float)
    d = np.array([_ks2(a[:, i], b[:, i]) for i in range(2 * r + 1)])
    return StationarityReport(N, r, trials, d)


def asep_map_f(u, kappa: float):
    """``2 F_-(u) - 1`` with ``F_-`` the law of ``-U``; defined on ``[-kappa, -1/kappa]``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < -kappa - 1e-12) or np.any(u > -1.0 / kappa + 1e-12):
        raise InvalidParameterError("u must lie in [-kappa, -1/kappa]")
    out = 2.0 * (1.0 - hydro.speed_cdf(-u, kappa)) - 1.0
    return float(out) if np.ndim(out) == 0 else out
