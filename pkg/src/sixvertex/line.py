"""The multi-class process on the line, simulated on finite windows.

A window ``[A, B]`` stores one class per site.  Each row an arrow of class
``exterior`` enters at ``A`` from the left; arrows leaving through ``B`` are
counted and dropped.  Information only travels rightwards, so a uniform
exterior that matches the true configuration left of ``A`` gives exact
dynamics.  Otherwise the error is confined to the first ``margin_used`` sites,
and reads there are refused.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .core import (
    HOLE,
    NEG_INF,
    ModelParams,
    RandomField,
    format_class,
    parse_class,
    threshold,
    vertex_outcomes,
)


class WindowTooSmallError(RuntimeError):
    pass


class MarginReadError(IndexError):
    pass


def margin_for(params: ModelParams, T: int) -> int:
    if T < 0:
        raise ValueError("T must be non-negative")
    # guard against 2T/(1-b2) landing a hair above an integer in floating point
    return int(math.ceil(2.0 * T / (1.0 - params.b2) - 1e-9)) + 1


@dataclass(frozen=True, eq=False)
class WindowState:
    A: int
    classes: np.ndarray
    time: int = 0
    margin_used: int = 0
    exterior: int = NEG_INF
    exited: int = 0

    def __post_init__(self):
        c = np.array(self.classes, dtype=np.int64)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("a window needs at least one site")
        object.__setattr__(self, "classes", c)

    @property
    def B(self) -> int:
        return self.A + self.classes.size - 1

    @property
    def window(self) -> tuple[int, int]:
        return self.A, self.B

    @property
    def readable(self) -> tuple[int, int]:
        return self.A + self.margin_used, self.B

    def index(self, x: int) -> int:
        return x - self.A

    def read(self, lo: int, hi: int | None = None) -> np.ndarray:
        """Classes on ``[lo, hi]``; refuses sites inside the contaminated margin."""
        hi = lo if hi is None else hi
        r0, r1 = self.readable
        if lo < r0 or hi > r1:
            raise MarginReadError(f"[{lo}, {hi}] is outside the exact region [{r0}, {r1}]")
        return self.classes[lo - self.A:hi - self.A + 1].copy()

    def same_as(self, other: "WindowState") -> bool:
        return (self.window == other.window and self.time == other.time
                and np.array_equal(self.classes, other.classes))

    def to_json(self) -> str:
        return json.dumps({
            "window": [self.A, self.B], "time": self.time,
            "classes": [format_class(c) for c in self.classes],
            "margin_used": self.margin_used, "exterior": format_class(self.exterior),
            "exited": self.exited,
        })

    @classmethod
    def from_json(cls, text: str) -> "WindowState":
        d = json.loads(text)
        classes = [parse_class(s) for s in d["classes"]]
        if d["window"][1] - d["window"][0] + 1 != len(classes):
            raise ValueError("window length does not match the class list")
        return cls(d["window"][0], classes, d["time"], d.get("margin_used", 0),
                   parse_class(d.get("exterior", "-inf")), d.get("exited", 0))


def _window(window) -> tuple[int, int]:
    A, B = int(window[0]), int(window[1])
    if B < A:
        raise ValueError(f"empty window [{A}, {B}]")
    return A, B


def make_packed_ic(window) -> WindowState:
    A, B = _window(window)
    return WindowState(A, np.arange(A, B + 1, dtype=np.int64))


def make_step_ic(window, exterior: int = 1) -> WindowState:
    """Class 1 on ``x < 0``, holes on ``x >= 0``; the left exterior is class 1."""
    A, B = _window(window)
    x = np.arange(A, B + 1)
    return WindowState(A, np.where(x < 0, 1, HOLE), exterior=exterior)


def make_step_second_class_ic(window, exterior: int = 1) -> WindowState:
    A, B = _window(window)
    if not A <= 0 <= B:
        raise ValueError("window must contain 0")
    s = make_step_ic(window, exterior)
    c = s.classes.copy()
    c[-A] = 2
    return replace(s, classes=c)


def _thr(params: ModelParams):
    return np.uint64(threshold(params.b1)), np.uint64(threshold(params.b2))


def evolve_window(state: WindowState, steps: int, field: RandomField) -> WindowState:
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if steps == 0:
        return state
    margin = state.margin_used + margin_for(field.params, steps)
    if state.A + margin > state.B:
        raise WindowTooSmallError(
            f"window [{state.A}, {state.B}] cannot absorb a margin of {margin} sites")
    cls = state.classes.copy()
    t1, t2 = _thr(field.params)
    ex = K.evolve_inplace(cls, state.A, state.time, steps, np.uint64(field.seed), t1, t2,
                          np.int64(state.exterior), True)
    return WindowState(state.A, cls, state.time + steps, margin, state.exterior, state.exited + ex)


@dataclass(frozen=True, eq=False)
class LineHeight:
    lo: int
    values: np.ndarray

    def __call__(self, x: int) -> int:
        return int(self.values[x - self.lo])


def line_height(state: WindowState, reference: tuple[int, int] | None = None) -> LineHeight:
    """Height on the readable region with ``h(x) - h(x + 1) = 1`` iff ``x`` is occupied.

    ``reference = (site, value)`` pins the global shift; the default pins the
    left end of the readable region to 0.
    """
    lo, hi = state.readable
    occ = (state.read(lo, hi) != HOLE).astype(np.int64)
    h = np.concatenate([[0], -np.cumsum(occ)[:-1]])
    if reference is not None:
        site, value = reference
        if not lo <= site <= hi:
            raise MarginReadError(f"reference site {site} is outside [{lo}, {hi}]")
        h = h - h[site - lo] + value
    return LineHeight(lo, h)


@dataclass(frozen=True, eq=False)
class CouplingBundle:
    states: tuple
    field: RandomField

    @property
    def time(self) -> int:
        return self.states[0].time


def couple(ics: Sequence[WindowState], field: RandomField) -> CouplingBundle:
    ics = tuple(ics)
    if not ics:
        raise ValueError("empty bundle")
    w, t = ics[0].window, ics[0].time
    for s in ics[1:]:
        if s.window != w or s.time != t:
            raise ValueError("bundle members must share window and time")
    return CouplingBundle(ics, field)


def evolve_bundle(bundle: CouplingBundle, steps: int) -> CouplingBundle:
    return CouplingBundle(tuple(evolve_window(s, steps, bundle.field) for s in bundle.states),
                          bundle.field)


def apply_merge(state: WindowState, m: Callable[[int], int]) -> WindowState:
    """Relabel classes pointwise (and the exterior) by a weakly increasing map."""
    keys = np.unique(np.append(state.classes, state.exterior))
    img = np.array([int(m(int(k))) for k in keys], dtype=np.int64)
    if np.any(np.diff(img) < 0):
        raise ValueError("merge map is not weakly increasing")
    lut = dict(zip(keys.tolist(), img.tolist()))
    cls = np.array([lut[c] for c in state.classes.tolist()], dtype=np.int64)
    return replace(state, classes=cls, exterior=lut[int(state.exterior)])


def threshold_map(cuts: Sequence[int], labels: Sequence[int]) -> Callable[[int], int]:
    """Piecewise-constant increasing map: ``c <= cuts[i]`` goes to ``labels[i]``, else ``labels[-1]``."""
    if len(labels) != len(cuts) + 1:
        raise ValueError("need one more label than cuts")
    if list(labels) != sorted(labels) or list(cuts) != sorted(cuts):
        raise ValueError("cuts and labels must be increasing")

    def m(c: int) -> int:
        for cut, lab in zip(cuts, labels):
            if c <= cut:
                return lab
        return labels[-1]

    return m


def exact_line_law(state: WindowState, params: ModelParams, steps: int,
                   keep_exits: bool = False) -> dict:
    """Exact law of the window after ``steps`` rows, by branching over vertices.

    Returns ``{classes tuple: probability}``.  With ``keep_exits`` each key is
    followed by the class that left through the right edge on each row
    (``HOLE`` if none).  Exponential; small windows only.
    """
    W = state.classes.size
    dist = {tuple(int(c) for c in state.classes): 1.0}
    for _ in range(steps):
        new: dict = {}
        for key, p in dist.items():
            cfg, gone = key[:W], key[W:]
            partial = [((), int(state.exterior), p)]
            for b in cfg:
                nxt = []
                for done, carry, w in partial:
                    for (top, right), pv in vertex_outcomes(b, carry, params):
                        if pv > 0:
                            nxt.append((done + (top,), right, w * pv))
                partial = nxt
            for done, out, w in partial:
                k = done + gone + ((out,) if keep_exits else ())
                new[k] = new.get(k, 0.0) + w
        dist = new
    return dist


def run_batch(ic: WindowState, params: ModelParams, seeds, snaps: Sequence[int],
              reducer: Callable | None = None, chunk: int = 512, ics: Callable | None = None,
              jobs: int = 1):
    """Evolve ``ic`` under each seed and reduce the snapshots chunk by chunk.

    ``reducer(classes, exits)`` receives ``classes`` of shape
    ``(n, len(snaps), W)`` and the per-trial exit counts, and returns an array
    with leading dimension ``n``; the default returns ``classes``.  The margin
    for the last snapshot is checked up front.  ``ics(seeds)``, if given,
    returns per-trial initial classes of shape ``(n, W)`` replacing ``ic.classes``.
    Chunks run on ``jobs`` threads and are concatenated in seed order.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    snaps = np.asarray(snaps, dtype=np.int64)
    if snaps.size == 0 or np.any(np.diff(snaps) < 0) or snaps[0] < 0:
        raise ValueError("snaps must be a non-empty sorted list of step counts")
    margin = ic.margin_used + margin_for(params, int(snaps[-1]))
    if ic.A + margin > ic.B:
        raise WindowTooSmallError(f"window [{ic.A}, {ic.B}] cannot absorb a margin of {margin}")
    t1, t2 = _thr(params)
    W = ic.classes.size

    def one(s):
        sd = seeds[s:s + chunk]
        out = np.empty((sd.size, snaps.size, W), dtype=np.int64)
        exits = np.zeros(sd.size, dtype=np.int64)
        start = ics(sd) if ics is not None else np.broadcast_to(ic.classes, (sd.size, W))
        K.evolve_batch(np.ascontiguousarray(start, dtype=np.int64), ic.A, ic.time, sd, snaps, t1, t2,
                       np.int64(ic.exterior), True, out, exits)
        return out if reducer is None else reducer(out, exits)

    starts = range(0, seeds.size, chunk)
    if jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(one, starts))
    else:
        parts = [one(s) for s in starts]
    return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------- coupling experiments

def _occupied(c: np.ndarray) -> np.ndarray:
    return c != HOLE


def attractivity_violations(params: ModelParams, instances: int, steps: int, seed: int,
                            width: int = 64) -> int:
    """Count steps at which coupled ordered single-class pairs lose their order.

    Each instance draws ``eta1 <= eta2`` sitewise (and ordered exteriors) and
    evolves both under one field, checking the order after every row.
    """
    from .core import derive_seeds

    rng = np.random.default_rng(seed)
    seeds = derive_seeds(seed, instances, stream=61)
    pad = margin_for(params, 1) * steps
    bad = 0
    for k in range(instances):
        top = rng.random(width) < rng.uniform(0.1, 0.9)
        low = top & (rng.random(width) < rng.uniform(0.2, 1.0))
        ext2 = int(rng.random() < 0.7)
        ext1 = ext2 & int(rng.random() < 0.5)
        c2 = np.concatenate([np.ones(pad, bool), top])
        c1 = np.concatenate([np.ones(pad, bool) & bool(ext1), low])
        s1 = WindowState(-pad, np.where(c1, 1, HOLE), exterior=1 if ext1 else HOLE)
        s2 = WindowState(-pad, np.where(c2, 1, HOLE), exterior=1 if ext2 else HOLE)
        f = RandomField(int(seeds[k]), params)
        for _ in range(steps):
            s1, s2 = evolve_window(s1, 1, f), evolve_window(s2, 1, f)
            if np.any(_occupied(s1.classes) & ~_occupied(s2.classes)):
                bad += 1
    return bad


def random_monotone_map(rng: np.random.Generator, classes: Sequence[int]) -> Callable[[int], int]:
    """Random weakly increasing relabelling of the given (sorted) class list."""
    classes = sorted(set(int(c) for c in classes))
    jumps = rng.integers(0, 2, size=len(classes))
    labels = np.cumsum(jumps) + 1
    if rng.random() < 0.5:
        labels[-1] = HOLE if classes[-1] == HOLE else labels[-1]
    table = dict(zip(classes, labels.tolist()))
    return lambda c: table[int(c)]


def merge_violations(params: ModelParams, instances: int, steps: int, seed: int,
                     width: int = 64, n_classes: int = 5) -> int:
    """Count steps where merging and evolving fail to commute on a sample path."""
    from .core import derive_seeds

    rng = np.random.default_rng(seed + 1)
    seeds = derive_seeds(seed, instances, stream=62)
    pad = margin_for(params, 1) * steps
    pool = list(range(1, n_classes + 1)) + [HOLE]
    bad = 0
    for k in range(instances):
        c = rng.choice(pool, size=width + pad)
        ext = int(rng.choice(pool + [NEG_INF]))
        s = WindowState(-pad, c, exterior=ext)
        m = random_monotone_map(rng, pool + [NEG_INF])
        f = RandomField(int(seeds[k]), params)
        merged = apply_merge(s, m)
        for _ in range(steps):
            s, merged = evolve_window(s, 1, f), evolve_window(merged, 1, f)
            if not np.array_equal(apply_merge(s, m).classes, merged.classes):
                bad += 1
    return bad


def discrepancy_agreement(params: ModelParams, T: int, trials: int, seed: int,
                          shared: int = 48, disagree: int = 64, chunk: int = 1024) -> float:
    """Fraction of trials in which two coupled states that agree on ``[A, B]``
    still agree on ``[A + margin_for(T), B]`` after ``T`` rows.

    The states differ on ``disagree`` sites left of ``A`` and in their exteriors.
    """
    from .core import derive_seeds

    m = margin_for(params, T)
    A, B = 0, margin_for(params, T) + shared
    lo = A - disagree
    rng = np.random.default_rng(seed + 2)
    pool = np.array([1, 2, 3, HOLE], dtype=np.int64)
    common = rng.choice(pool, size=(trials, B - A + 1))
    ic1 = np.concatenate([rng.choice(pool, size=(trials, disagree)), common], axis=1)
    ic2 = np.concatenate([rng.choice(pool, size=(trials, disagree)), common], axis=1)
    seeds = derive_seeds(seed, trials, stream=63)
    s1 = WindowState(lo, ic1[0], exterior=NEG_INF)
    s2 = WindowState(lo, ic2[0], exterior=HOLE)
    keep = lambda c, e: c[:, 0, A - lo + m:].copy()  # noqa: E731
    ok = 0
    for s in range(0, trials, chunk):
        sd = seeds[s:s + chunk]
        a = run_batch(s1, params, sd, [T], keep, chunk, ics=lambda _: ic1[s:s + chunk])
        b = run_batch(s2, params, sd, [T], keep, chunk, ics=lambda _: ic2[s:s + chunk])
        ok += int(np.count_nonzero(np.all(a == b, axis=1)))
    return ok / trials
