"""Experiment runner.

``sixvertex <kind> [flags]`` runs one experiment and writes
``<out>/<kind>/<seed>/raw.csv`` and ``summary.json``.  A JSON config
(``--config``) supplies any field of :class:`ExperimentConfig`; flags win.

Exit codes: 0 when every check of the run passes, 1 when one fails, 2 on a
usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, hydro, line, meixner, quadrant, tracking
from .core import InvalidParameterError, ModelParams, derive_seeds
from .parallel import map_shards

KINDS = (
    "quadrant-lln",
    "speed-dist",
    "weak-identity",
    "geo-domination",
    "dual-domination",
    "color-symmetry",
    "qlaplace-check",
    "hydro-profile",
    "tail-profile",
    "stationary-boundary",
    "coupling-properties",
)

# sizes used when neither the config file nor a flag sets them
DEFAULTS = {
    "quadrant-lln": dict(T=1500, trials=40, mu=[0.7, 1.0, 1.3]),
    "speed-dist": dict(T=4000, trials=800),
    "weak-identity": dict(T=None, trials=10_000, times=[50, 200]),
    "geo-domination": dict(M=20, T=200, trials=20_000),
    "dual-domination": dict(M=20, T=200, trials=20_000),
    "color-symmetry": dict(N=6, window=4, trials=50_000),
    "qlaplace-check": dict(xi=[0.3, 0.7, 1.5]),
    "hydro-profile": dict(T=800, trials=200, alphas=[0.8, 1.0, 1.2], window=20),
    "tail-profile": dict(T=2000, trials=4000, mu=[1.0]),
    "stationary-boundary": dict(M=40, N=40, trials=20_000, rho=0.4),
    "coupling-properties": dict(T=50, trials=10_000, M=500, N=50),
}

QLAPLACE_BOXES = ((1, 1), (2, 2), (4, 3), (3, 5))

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["meta", "config", "metrics", "checks", "passed", "timestamps"],
    "properties": {
        "meta": {
            "type": "object",
            "required": ["b1", "b2", "q", "kappa", "seed", "kind", "version"],
        },
        "config": {"type": "object"},
        "metrics": {"type": "object"},
        "checks": {"type": "object", "additionalProperties": {"type": "boolean"}},
        "passed": {"type": "boolean"},
        "timestamps": {
            "type": "object",
            "required": ["start", "end"],
        },
    },
}


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    b1: float = 0.3
    b2: float = 0.6
    T: int | None = None
    M: int | None = None
    N: int | None = None
    window: int | None = None
    trials: int | None = None
    seed: int = 1
    out: str = "runs"
    jobs: int = 1
    mu: list | None = None
    xi: list | None = None
    alphas: list | None = None
    times: list | None = None
    rho: float | None = None
    env: str = "step"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown experiment {self.kind!r}")
        for k, v in DEFAULTS[self.kind].items():
            if getattr(self, k) is None:
                setattr(self, k, v)
        for name in ("b1", "b2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise UsageError(f"{name} must lie in (0, 1), got {v}")
        for name in ("T", "M", "N", "window", "trials", "jobs"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 1):
                raise UsageError(f"{name} must be a positive integer, got {v}")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")
        if self.rho is not None and not 0.0 <= self.rho <= 1.0:
            raise UsageError(f"rho must lie in [0, 1], got {self.rho}")

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.b1, self.b2)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("jobs")  # results do not depend on it
        return d

    @classmethod
    def from_sources(cls, kind: str | None, path: str | None, overrides: dict) -> "ExperimentConfig":
        data: dict = {}
        if path:
            with open(path) as fh:
                data = json.load(fh)
            if not isinstance(data, dict):
                raise UsageError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise UsageError(f"unknown config fields {sorted(extra)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        if kind is not None:
            if data.get("kind", kind) != kind:
                raise UsageError(f"config is for {data['kind']!r}, not {kind!r}")
            data["kind"] = kind
        if "kind" not in data:
            raise UsageError("no experiment kind given")
        return cls(**data)


@dataclass
class RunRecord:
    config: ExperimentConfig
    metrics: dict
    checks: dict
    rows: list
    columns: list
    start: float = 0.0
    end: float = 0.0
    version: str = __version__
    paths: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def meta(self) -> dict:
        p = self.config.params
        return {"b1": p.b1, "b2": p.b2, "q": p.q, "kappa": p.kappa,
                "seed": self.config.seed, "kind": self.config.kind, "version": self.version}

    def summary(self) -> dict:
        return {
            "meta": self.meta(),
            "config": self.config.as_dict(),
            "metrics": _clean(self.metrics),
            "checks": {k: bool(v) for k, v in self.checks.items()},
            "passed": self.passed,
            "timestamps": {"start": self.start, "end": self.end},
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def raw_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.meta().items():
            buf.write(f"# {k}={v}\n")
        w = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r[k]) for k in self.columns})
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


# ---------------------------------------------------------------- experiments

def _quadrant_lln(cfg: ExperimentConfig):
    p, T = cfg.params, cfg.T
    seeds = derive_seeds(cfg.seed, cfg.trials, stream=71)
    rows, checks = [], {}
    for mu in cfg.mu:
        X = int(round(mu * T))
        H = quadrant.step_heights(p, X, T, seeds, cfg.jobs)
        g = hydro.limit_shape_g(mu, 1.0, p.kappa)
        err = abs(H.mean() / T - g)
        rows.append(dict(mu=mu, X=X, mean_height=float(H.mean()), scaled=float(H.mean() / T),
                         g=g, abs_err=err, ok=err <= 0.01))
        checks[f"mu={mu}"] = err <= 0.01
    return rows, {"max_abs_err": max(r["abs_err"] for r in rows)}, checks


def _speed_dist(cfg: ExperimentConfig):
    p = cfg.params
    s = tracking.second_class_speeds(p, cfg.T, cfg.trials, cfg.seed, jobs=cfg.jobs)
    ks = hydro.ks_statistic(s.speeds, lambda x: hydro.speed_cdf(x, p.kappa))
    rows = [dict(trial=i, speed=float(v)) for i, v in enumerate(s.speeds)]
    metrics = {"ks": ks, "ks_tolerance": 0.08, "mean_speed": float(s.speeds.mean()),
               "reference_mean": tracking.speed_mean_reference(p.kappa)}
    return rows, metrics, {"ks": ks <= 0.08}


def _weak_identity(cfg: ExperimentConfig):
    p = cfg.params
    rows, checks = [], {}
    for x in (1, 2, 3):
        lhs, rhs = tracking.weak_identity_exact(p, 1, x)
        ok = abs(lhs - rhs) <= 1e-12
        rows.append(dict(t=1, x=x, lhs=lhs, rhs=rhs, se=0.0, z=0.0, ok=ok))
        checks[f"exact t=1 x={x}"] = ok
    for t in cfg.times:
        for x in (math.ceil(0.8 * t), t, math.ceil(1.2 * t)):
            r = tracking.weak_identity_check(p, t, x, cfg.trials, cfg.seed)
            ok = abs(r.z) <= 4
            rows.append(dict(t=t, x=x, lhs=r.lhs, rhs=r.rhs, se=r.se, z=r.z, ok=ok))
            checks[f"t={t} x={x}"] = ok
    return rows, {"max_abs_z": max(abs(r["z"]) for r in rows)}, checks


def _domination(cfg: ExperimentConfig, dual: bool):
    fn = tracking.dual_geo_domination if dual else tracking.geo_domination
    res = fn(cfg.params, cfg.M, cfg.T, cfg.trials, cfg.seed, env=cfg.env, jobs=cfg.jobs)
    rows = res.report.rows()
    checks = {f"k={r['k']}": r["ok"] for r in rows}
    return rows, {"mean_L": float(res.L.mean()), "max_L": int(res.L.max())}, checks


def _color_symmetry(cfg: ExperimentConfig):
    p, r = cfg.params, cfg.window
    cm = tracking.color_position_marginals(p, cfg.N, r, cfg.trials, cfg.seed, jobs=cfg.jobs)
    z = cm.z
    rows = []
    for i in range(2 * r + 1):
        for j in range(2 * r + 1):
            rows.append(dict(x=i - r, y=j - r, forward=cm.forward[i, j],
                             backward=cm.backward[i, j], z=z[i, j]))
    fwd, bwd = tracking.color_position_exact(p, 1, min(r, 3))
    exact_gap = float(np.max(np.abs(fwd - bwd)))
    checks = {"max_abs_z": bool(np.max(np.abs(z)) <= 4), "exact_N=1": exact_gap <= 1e-12}
    return rows, {"max_abs_z": float(np.max(np.abs(z))), "exact_gap_N1": exact_gap}, checks


def _qlaplace(cfg: ExperimentConfig):
    p = cfg.params
    boxes = [(cfg.M, cfg.N)] if cfg.M and cfg.N else QLAPLACE_BOXES
    rows, checks = [], {}
    for M, N in boxes:
        for xi in cfg.xi:
            rep = meixner.qlaplace_report(p, M, N, xi)
            rows.append(dict(M=M, N=N, xi=xi, lhs=rep.lhs, rhs=rep.rhs, abs_err=rep.abs_err,
                             tail_bound=rep.tail_bound, ok=rep.passed))
            checks[f"({M},{N}) xi={xi}"] = rep.passed
    return rows, {"max_abs_err": max(r["abs_err"] for r in rows)}, checks


def _hydro_profile(cfg: ExperimentConfig):
    p = cfg.params
    pts = hydro.empirical_density(p, cfg.T, cfg.alphas, cfg.window, cfg.trials, cfg.seed)
    rows, checks = [], {}
    for d in pts:
        err = abs(d.empirical - d.reference)
        rows.append(dict(alpha=d.alpha, x=d.x, density=d.empirical, se=d.se,
                         reference=d.reference, abs_err=err, ok=err <= 0.02))
        checks[f"alpha={d.alpha}"] = err <= 0.02
    return rows, {"max_abs_err": max(r["abs_err"] for r in rows)}, checks


def _tail_profile(cfg: ExperimentConfig):
    p = cfg.params
    tp = hydro.tail_profile(p, cfg.T, cfg.mu[0], cfg.trials, cfg.seed, jobs=cfg.jobs)
    rows = [dict(s=s, upper=u, lower=lo) for s, u, lo in zip(tp.s_grid, tp.upper, tp.lower)]
    up, lo = tp.log_drop("upper"), tp.log_drop("lower")
    checks = {"monotone": tp.monotone(), "upper_drop": up >= 1.5, "lower_drop": lo >= 1.5}
    return rows, {"center": tp.center, "X": tp.X, "upper_log_drop": up, "lower_log_drop": lo}, checks


@dataclass(frozen=True, eq=False)
class StationaryReport:
    rho: float
    left_density: float
    trials: int
    xs: np.ndarray
    ts: np.ndarray
    density: np.ndarray  # [t index, x index]
    z: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z))) if self.z.size else 0.0

    def passed(self, sigmas: float = 4.0) -> bool:
        return self.max_abs_z <= sigmas


def stationary_boundary_experiment(params: ModelParams, rho: float, M: int, N: int,
                                   trials: int, seed: int, grid_step: int = 5,
                                   jobs: int = 1) -> StationaryReport:
    """Bernoulli(rho) bottom, Bernoulli(phi(rho)) left; one-point densities on an interior grid.

    ``z`` compares each grid density with ``rho`` using the binomial SE at ``rho``.
    """
    if not 0.0 <= rho <= 1.0:
        raise InvalidParameterError(f"rho must lie in [0, 1], got {rho}")
    left = hydro.flux_phi(rho, params.kappa)
    seeds = derive_seeds(seed, trials, stream=81)

    def block(sd):
        return quadrant.bernoulli_occupancy_counts(params, M, N, left, rho, sd)[None]

    counts = map_shards(block, seeds, jobs).sum(axis=0)
    xs = np.arange(grid_step, M + 1, grid_step)
    ts = np.arange(grid_step, N + 1, grid_step)
    dens = counts[np.ix_(ts - 1, xs - 1)] / trials
    se = math.sqrt(rho * (1 - rho) / trials)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (dens - rho) / se if se > 0 else 0.0,
                     np.where(dens == rho, 0.0, np.inf))
    return StationaryReport(rho, left, trials, xs, ts, dens, z)


def _stationary(cfg: ExperimentConfig):
    rep = stationary_boundary_experiment(cfg.params, cfg.rho, cfg.M, cfg.N, cfg.trials,
                                         cfg.seed, jobs=cfg.jobs)
    rows = []
    for i, t in enumerate(rep.ts):
        for j, x in enumerate(rep.xs):
            rows.append(dict(x=int(x), t=int(t), density=rep.density[i, j], z=rep.z[i, j]))
    metrics = {"rho": rep.rho, "left_density": rep.left_density, "max_abs_z": rep.max_abs_z}
    return rows, metrics, {"max_abs_z": rep.passed()}


def _coupling(cfg: ExperimentConfig):
    p = cfg.params
    att = line.attractivity_violations(p, cfg.M, cfg.N, cfg.seed)
    mrg = line.merge_violations(p, cfg.M, cfg.N, cfg.seed)
    agr = line.discrepancy_agreement(p, cfg.T, cfg.trials, cfg.seed)
    rows = [dict(metric="attractivity_violations", value=att),
            dict(metric="merge_violations", value=mrg),
            dict(metric="discrepancy_agreement", value=agr)]
    checks = {"attractivity": att == 0, "merging": mrg == 0, "discrepancy": agr >= 0.999}
    return rows, {r["metric"]: r["value"] for r in rows}, checks


DISPATCH = {
    "quadrant-lln": _quadrant_lln,
    "speed-dist": _speed_dist,
    "weak-identity": _weak_identity,
    "geo-domination": lambda c: _domination(c, False),
    "dual-domination": lambda c: _domination(c, True),
    "color-symmetry": _color_symmetry,
    "qlaplace-check": _qlaplace,
    "hydro-profile": _hydro_profile,
    "tail-profile": _tail_profile,
    "stationary-boundary": _stationary,
    "coupling-properties": _coupling,
}


def run(config: ExperimentConfig, write: bool = True) -> RunRecord:
    start = time.time()
    rows, metrics, checks = DISPATCH[config.kind](config)
    columns = list(rows[0].keys()) if rows else []
    rec = RunRecord(config, metrics, checks, rows, columns, start, time.time())
    if write:
        d = os.path.join(config.out, config.kind, str(config.seed))
        os.makedirs(d, exist_ok=True)
        rec.paths = {"raw": os.path.join(d, "raw.csv"), "summary": os.path.join(d, "summary.json")}
        with open(rec.paths["raw"], "w") as fh:
            fh.write(rec.raw_csv())
        with open(rec.paths["summary"], "w") as fh:
            fh.write(rec.summary_json())
    return rec


# ---------------------------------------------------------------- command line

def _floats(s: str) -> list:
    return [float(v) for v in s.split(",")]


def _ints(s: str) -> list:
    return [int(v) for v in s.split(",")]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sixvertex", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS + ("run",):
        sp = sub.add_parser(kind, help="run from --config" if kind == "run" else None)
        sp.add_argument("--config", help="JSON config; flags override its fields")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--b1", type=float)
        sp.add_argument("--b2", type=float)
        sp.add_argument("--T", "-T", type=int)
        sp.add_argument("--M", "-M", type=int)
        sp.add_argument("--N", "-N", type=int)
        sp.add_argument("--window", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--mu", type=_floats, help="comma-separated")
        sp.add_argument("--xi", type=_floats, help="comma-separated")
        sp.add_argument("--alphas", type=_floats, help="comma-separated")
        sp.add_argument("--times", type=_ints, help="comma-separated")
        sp.add_argument("--rho", type=float)
        sp.add_argument("--env", help="step, empty or bernoulli(RHO)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    opts = vars(args)
    kind = opts.pop("kind")
    path = opts.pop("config")
    try:
        cfg = ExperimentConfig.from_sources(None if kind == "run" else kind, path, opts)
    except (UsageError, InvalidParameterError, TypeError, OSError, json.JSONDecodeError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    try:
        rec = run(cfg)
    except (InvalidParameterError, ValueError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    for name, ok in rec.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {cfg.kind} {name}")
    print(f"wrote {rec.paths['summary']}")
    if not rec.passed:
        bad = [k for k, v in rec.checks.items() if not v]
        print(f"{len(bad)} check(s) failed: {', '.join(bad)}", file=sys.stderr)
    return rec.exit_code


if __name__ == "__main__":
    sys.exit(main())
