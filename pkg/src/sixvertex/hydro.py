"""Closed-form hydrodynamic curves and the statistical checks used by the experiments."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import InvalidParameterError, ModelParams, derive_seeds
from .quadrant import step_heights, step_occupancy

S_GRID = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)


def _need_fan(kappa: float):
    if not kappa > 1:
        raise InvalidParameterError(f"fan analytics need kappa > 1, got {kappa}")


@dataclass(frozen=True)
class FanPoint:
    mu: float
    kappa: float

    @property
    def regime(self) -> str:
        if self.mu <= 1.0 / self.kappa:
            return "packed"
        if self.mu >= self.kappa:
            return "empty"
        return "fan"


def fan_point(mu: float, kappa: float) -> FanPoint:
    _need_fan(kappa)
    return FanPoint(float(mu), float(kappa))


def limit_shape_g(x, y, kappa: float, shock: bool = False):
    """Law-of-large-numbers height ``H(x, y) ~ g(x, y)``.

    With ``shock=True`` and ``kappa < 1`` the profile is ``max(y - x, 0)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(y < 0):
        raise InvalidParameterError("g is defined for x, y >= 0")
    if shock:
        if kappa >= 1:
            raise InvalidParameterError("shock profile needs kappa < 1")
        out = np.maximum(y - x, 0.0)
    else:
        _need_fan(kappa)
        fan = (np.sqrt(x) - np.sqrt(kappa * y)) ** 2 / (kappa - 1)
        out = np.where(x <= y / kappa, y - x, np.where(x >= kappa * y, 0.0, fan))
    return float(out) if out.ndim == 0 else out


def density_rho(x, t, kappa: float, shock: bool = False):
    """Particle density at ``x`` after time ``t`` from step data."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidParameterError("t must be positive")
    if shock:
        if kappa >= 1:
            raise InvalidParameterError("shock profile needs kappa < 1")
        out = np.where(x < t, 1.0, 0.0)
    else:
        _need_fan(kappa)
        with np.errstate(divide="ignore", invalid="ignore"):
            fan = (np.sqrt(kappa * t / x) - 1.0) / (kappa - 1.0)
        out = np.where(x <= t / kappa, 1.0, np.where(x >= kappa * t, 0.0, fan))
    return float(out) if out.ndim == 0 else out


def flux_phi(rho, kappa: float):
    _need_fan(kappa)
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0) or np.any(r > 1):
        raise InvalidParameterError("rho must lie in [0, 1]")
    out = kappa * r / ((kappa - 1.0) * r + 1.0)
    return float(out) if out.ndim == 0 else out


def speed_density(x, kappa: float):
    _need_fan(kappa)
    x = np.asarray(x, dtype=float)
    inside = (x >= 1.0 / kappa) & (x <= kappa)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = math.sqrt(kappa) / (2.0 * (kappa - 1.0)) * x ** -1.5
    out = np.where(inside, f, 0.0)
    return float(out) if out.ndim == 0 else out


def speed_cdf(x, kappa: float):
    _need_fan(kappa)
    x = np.asarray(x, dtype=float)
    sk = math.sqrt(kappa)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = sk * (sk - 1.0 / np.sqrt(x)) / (kappa - 1.0)
    out = np.clip(np.where(x <= 0, 0.0, f), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def speed_quantile(u, kappa: float):
    _need_fan(kappa)
    u = np.asarray(u, dtype=float)
    sk = math.sqrt(kappa)
    out = (sk - u * (kappa - 1.0) / sk) ** -2
    return float(out) if out.ndim == 0 else out


def ks_statistic(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance ``sup |F_n - F|``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_critical(n: int, alpha: float = 0.01) -> float:
    return float(stats.kstwo.ppf(1.0 - alpha, n))


def tail_counts(values, k_max: int) -> np.ndarray:
    """``counts[k] = #{values >= k}`` for ``k = 0..k_max``."""
    v = np.asarray(values)
    return np.array([np.count_nonzero(v >= k) for k in range(k_max + 1)], dtype=np.int64)


@dataclass(frozen=True)
class DominanceReport:
    n: int
    q: float
    sigma_mult: float
    empirical: tuple
    bound: tuple
    se: tuple

    @property
    def excess(self) -> tuple:
        return tuple(e - b - self.sigma_mult * s for e, b, s in zip(self.empirical, self.bound, self.se))

    @property
    def passed(self) -> bool:
        return all(x <= 0 for x in self.excess)

    def rows(self):
        return [{"k": k, "empirical": e, "bound": b, "se": s, "ok": x <= 0}
                for k, (e, b, s, x) in enumerate(zip(self.empirical, self.bound, self.se, self.excess))]


def dominance_check(counts, n: int, q: float, k_max: int = 8, sigma_mult: float = 3.0) -> DominanceReport:
    """Compare empirical tails ``counts[k] / n`` with ``q^k``.

    The standard error is the binomial one at the bound, ``sqrt(q^k (1 - q^k) / n)``.
    """
    if n <= 0:
        raise ValueError("need at least one trial")
    counts = np.asarray(counts)[: k_max + 1]
    emp = counts / n
    k = np.arange(counts.size)
    bound = q**k
    se = np.sqrt(bound * (1.0 - bound) / n)
    return DominanceReport(n, q, sigma_mult, tuple(map(float, emp)), tuple(map(float, bound)),
                           tuple(map(float, se)))


@dataclass(frozen=True)
class TailProfile:
    T: int
    X: int
    n: int
    center: float
    s_grid: tuple
    upper: tuple
    lower: tuple

    def log_drop(self, side: str, s_from: float = 1.0, s_to: float = 3.0) -> float:
        """``log P(s_from) - log P(s_to)``; ``inf`` when the far tail is empty."""
        vals = dict(zip(self.s_grid, self.upper if side == "upper" else self.lower))
        a, b = vals[s_from], vals[s_to]
        if a == 0:
            return float("nan")
        return float("inf") if b == 0 else math.log(a) - math.log(b)

    def monotone(self) -> bool:
        return all(np.all(np.diff(v) <= 0) for v in (self.upper, self.lower))


def tail_profile(params: ModelParams, T: int, mu: float, n: int, seed: int,
                 s_grid=S_GRID, heights=None, jobs: int = 1) -> TailProfile:
    """Scaled tails of ``H(mu T, T)`` around ``g(mu) T``.

    ``upper[s] = P[H >= g T + s T^(1/3)]`` and ``lower[s] = P[H <= g T - s T^(1/3)]``,
    named after the side of ``H``.  In Tracy-Widom terms ``upper`` is the thin
    (lower) tail and ``lower`` the fat (upper) one.
    """
    _need_fan(params.kappa)
    if not 1.0 / params.kappa < mu < params.kappa:
        raise InvalidParameterError("mu must lie inside the fan")
    X = int(round(mu * T))
    if heights is None:
        heights = step_heights(params, X, T, derive_seeds(seed, n, stream=11), jobs)
    center = limit_shape_g(X, T, params.kappa)
    dev = (np.asarray(heights, dtype=float) - center) / T ** (1.0 / 3.0)
    s_grid = tuple(float(s) for s in s_grid)
    up = tuple(float(np.mean(dev >= s)) for s in s_grid)
    lo = tuple(float(np.mean(dev <= -s)) for s in s_grid)
    return TailProfile(T, X, len(dev), float(center), s_grid, up, lo)


@dataclass(frozen=True)
class DensityPoint:
    alpha: float
    x: int
    empirical: float
    se: float
    reference: float


def empirical_density(params: ModelParams, t: int, alphas, half_width: int, n: int,
                      seed: int) -> list[DensityPoint]:
    """Step-boundary density of occupied vertical edges after ``t`` rows, averaged
    over columns ``alpha t +- half_width`` and ``n`` trials."""
    _need_fan(params.kappa)
    cols = [int(round(a * t)) for a in alphas]
    W = max(cols) + half_width
    occ = step_occupancy(params, W, [t], derive_seeds(seed, n, stream=12))[:, 0, :]
    out = []
    for a, c in zip(alphas, cols):
        per_trial = occ[:, c - half_width - 1:c + half_width].mean(axis=1)
        out.append(DensityPoint(float(a), c, float(per_trial.mean()),
                                float(per_trial.std(ddof=1) / math.sqrt(n)),
                                float(density_rho(c, t, params.kappa))))
    return out


def write_reference_csv(path, kappa: float, n: int = 201):
    """Grid of ``mu, g(mu, 1), rho_1(mu), speed density, speed cdf`` for plotting."""
    mu = np.linspace(0.0, kappa + 0.5, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mu", "g", "rho", "speed_density", "speed_cdf"])
        for m in mu:
            w.writerow([f"{m:.6f}", f"{limit_shape_g(m, 1.0, kappa):.12g}",
                        f"{density_rho(max(m, 1e-12), 1.0, kappa):.12g}",
                        f"{speed_density(m, kappa):.12g}", f"{speed_cdf(m, kappa):.12g}"])
