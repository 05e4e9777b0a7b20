"""The model on finite boxes of the quadrant.

Vertices sit at ``(x, t)`` with ``1 <= x <= M`` and ``1 <= t <= N``.  Left
boundary arrows feed column 1, bottom boundary arrows feed row 1.

Edge arrays of a :class:`QuadrantSample`:

* ``h_edges[t - 1, x]`` is the horizontal edge ``x -> x + 1`` on row ``t``
  (``x = 0`` is the left boundary edge), shape ``(N, M + 1)``;
* ``v_edges[t, x - 1]`` is the vertical edge ``t -> t + 1`` in column ``x``
  (``t = 0`` is the bottom boundary edge), shape ``(N + 1, M)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels as K
from .parallel import map_shards
from .core import (
    HOLE,
    InvalidParameterError,
    ModelParams,
    RandomField,
    bernoulli_draw,
    format_class,
    parse_class,
    resolve_vertex_multi,
    threshold,
    vertex_outcomes,
)

MAX_EXACT_WIDTH = 14

# auxiliary field channels for random boundary data
LEFT_CHANNEL = 3
BOTTOM_CHANNEL = 4


class CapacityError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    left: np.ndarray
    bottom: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "left", np.asarray(self.left, dtype=np.int64))
        object.__setattr__(self, "bottom", np.asarray(self.bottom, dtype=np.int64))

    @property
    def M(self) -> int:
        return int(self.bottom.shape[0])

    @property
    def N(self) -> int:
        return int(self.left.shape[0])

    def merged(self, m) -> "BoundarySpec":
        f = np.vectorize(m, otypes=[np.int64])
        return BoundarySpec(f(self.left), f(self.bottom), self.kind + "+merged")


def _check_dims(M: int, N: int):
    if M < 1 or N < 1:
        raise InvalidParameterError(f"box dimensions must be positive, got {(M, N)}")


def make_step_boundary(M: int, N: int) -> BoundarySpec:
    _check_dims(M, N)
    return BoundarySpec(np.ones(N, np.int64), np.full(M, HOLE, np.int64), "step")


def make_second_class_boundary(M: int, N: int) -> BoundarySpec:
    _check_dims(M, N)
    bottom = np.full(M, HOLE, np.int64)
    bottom[0] = 2
    return BoundarySpec(np.ones(N, np.int64), bottom, "second-class")


def make_bernoulli_boundary(M: int, N: int, rho_left: float, rho_bottom: float,
                            field: RandomField) -> BoundarySpec:
    """Independent Bernoulli class-1 entries on both sides, drawn from the field.

    Left entry of row ``t`` uses channel 3 at ``(0, t)``, bottom entry of
    column ``x`` uses channel 4 at ``(x, 0)``.
    """
    _check_dims(M, N)
    left = [1 if field.bit(0, t, LEFT_CHANNEL, rho_left) else HOLE for t in range(1, N + 1)]
    bottom = [1 if field.bit(x, 0, BOTTOM_CHANNEL, rho_bottom) else HOLE for x in range(1, M + 1)]
    return BoundarySpec(left, bottom, f"bernoulli({rho_left},{rho_bottom})")


def make_step_bernoulli_boundary(M: int, N: int, rho: float, field: RandomField) -> BoundarySpec:
    b = make_bernoulli_boundary(M, N, rho, 0.0, field)
    return BoundarySpec(b.left, b.bottom, f"step-bernoulli({rho})")


@dataclass(frozen=True, eq=False)
class QuadrantSample:
    h_edges: np.ndarray
    v_edges: np.ndarray
    seed: int | None = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def M(self) -> int:
        return int(self.v_edges.shape[1])

    @property
    def N(self) -> int:
        return int(self.h_edges.shape[0])

    def vertex(self, x: int, t: int):
        """``(in_bottom, in_left, out_top, out_right)`` at vertex ``(x, t)``."""
        return (int(self.v_edges[t - 1, x - 1]), int(self.h_edges[t - 1, x - 1]),
                int(self.v_edges[t, x - 1]), int(self.h_edges[t - 1, x]))

    def check_conservation(self) -> bool:
        ib = self.v_edges[:-1, :]
        il = self.h_edges[:, :-1]
        ot = self.v_edges[1:, :]
        orr = self.h_edges[:, 1:]
        lo_in, hi_in = np.minimum(ib, il), np.maximum(ib, il)
        lo_out, hi_out = np.minimum(ot, orr), np.maximum(ot, orr)
        return bool(np.array_equal(lo_in, lo_out) and np.array_equal(hi_in, hi_out))

    def boundary(self) -> BoundarySpec:
        return BoundarySpec(self.h_edges[:, 0].copy(), self.v_edges[0, :].copy())

    def to_text(self) -> str:
        lines = [f"# s6v-quadrant v1 M={self.M} N={self.N}"]
        for t in range(self.N):
            lines.append("h %d %s" % (t + 1, " ".join(format_class(c) for c in self.h_edges[t])))
        for t in range(self.N + 1):
            lines.append("v %d %s" % (t, " ".join(format_class(c) for c in self.v_edges[t])))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "QuadrantSample":
        rows = [ln.split() for ln in text.strip().splitlines()]
        head = rows[0]
        if head[:3] != ["#", "s6v-quadrant", "v1"]:
            raise ValueError("not a quadrant sample")
        M = int(head[3].split("=")[1])
        N = int(head[4].split("=")[1])
        h = np.empty((N, M + 1), np.int64)
        v = np.empty((N + 1, M), np.int64)
        for r in rows[1:]:
            vals = [parse_class(s) for s in r[2:]]
            if r[0] == "h":
                h[int(r[1]) - 1] = vals
            elif r[0] == "v":
                v[int(r[1])] = vals
            else:
                raise ValueError(f"bad record {r[0]!r}")
        return cls(h, v)


def sample_quadrant(boundary: BoundarySpec, field: RandomField) -> QuadrantSample:
    M, N = boundary.M, boundary.N
    h = np.empty((N, M + 1), np.int64)
    v = np.empty((N + 1, M), np.int64)
    thr1, thr2 = field.thresholds
    K.sample_box(boundary.left, boundary.bottom, np.uint64(field.seed),
                 np.uint64(thr1), np.uint64(thr2), h, v)
    return QuadrantSample(h, v, field.seed)


def sample_quadrant_reference(boundary: BoundarySpec, field: RandomField) -> QuadrantSample:
    """Slow sampler visiting vertices by anti-diagonals ``x + t = const``."""
    M, N = boundary.M, boundary.N
    h = np.empty((N, M + 1), np.int64)
    v = np.empty((N + 1, M), np.int64)
    h[:, 0] = boundary.left
    v[0, :] = boundary.bottom
    for d in range(2, M + N + 1):
        for x in range(max(1, d - N), min(M, d - 1) + 1):
            t = d - x
            c1 = bernoulli_draw(field, x, t, 1)
            c2 = bernoulli_draw(field, x, t, 2)
            top, right = resolve_vertex_multi(int(v[t - 1, x - 1]), int(h[t - 1, x - 1]), c1, c2)
            v[t, x - 1] = top
            h[t - 1, x] = right
    return QuadrantSample(h, v, field.seed)


def height(sample: QuadrantSample, X: int, T: int) -> int:
    """Occupied horizontal edges entering column ``X`` on rows ``1..T``."""
    if not (1 <= X <= sample.M and 1 <= T <= sample.N):
        raise IndexError(f"(X, T) = {(X, T)} outside the {sample.M}x{sample.N} box")
    return int(np.count_nonzero(sample.h_edges[:T, X - 1] != HOLE))


def second_class_position(sample: QuadrantSample, t: int) -> int:
    if not (0 <= t <= sample.N):
        raise IndexError(f"row {t} outside 0..{sample.N}")
    cols = np.flatnonzero(sample.v_edges[t] == 2)
    if cols.size != 1:
        raise AssertionError(f"expected one class-2 vertical edge at row {t}, found {cols.size}")
    return int(cols[0]) + 1


def step_heights(params: ModelParams, X: int, T: int, seeds, jobs: int = 1) -> np.ndarray:
    """``H(X, T)`` under the step boundary, one value per seed.

    Only columns left of ``X`` influence the edges entering column ``X``, so
    the box is cut to width ``X - 1``; then ``H = T - #`` occupied vertical
    edges in those columns after row ``T``.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    if X == 1:
        return np.full(seeds.shape[0], T, dtype=np.int64)
    def block(sd):
        occ = step_occupancy(params, X - 1, [T], sd)[:, 0, :]
        return T - occ.sum(axis=1).astype(np.int64)

    return map_shards(block, seeds, jobs)


def step_occupancy(params: ModelParams, W: int, rows, seeds) -> np.ndarray:
    """Occupancy ``(n, len(rows), W)`` of the vertical edges of columns ``1..W`` after each row count."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    rows = np.asarray(rows, dtype=np.int64)
    if np.any(np.diff(rows) < 0) or rows.min() < 0:
        raise ValueError("rows must be sorted and non-negative")
    out = np.zeros((seeds.shape[0], rows.shape[0], W), dtype=np.int8)
    K.step_quadrant_snapshots(seeds, W, rows, np.uint64(threshold(params.b1)),
                              np.uint64(threshold(params.b2)), out)
    return out


def second_class_box_width(params: ModelParams, T: int) -> int:
    return int(math.ceil(params.kappa * T + 10.0 * math.sqrt(T) + 20))


def second_class_paths(params: ModelParams, T: int, seeds, width: int | None = None) -> np.ndarray:
    """Class-2 columns ``X_0..X_T`` for each seed, shape ``(n, T + 1)``."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    W = width or second_class_box_width(params, T)
    out = np.zeros((seeds.shape[0], T + 1), dtype=np.int64)
    status = K.second_class_paths(seeds, T, W, np.uint64(threshold(params.b1)),
                                  np.uint64(threshold(params.b2)), out)
    if status != K.OK:
        raise CapacityError(f"class-2 arrow left a box of width {W}")
    return out


def bernoulli_occupancy_counts(params: ModelParams, M: int, N: int, rho_left: float,
                               rho_bottom: float, seeds) -> np.ndarray:
    """Summed vertical out-edge occupancy ``(N, M)`` over seeds, Bernoulli boundaries."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    counts = np.zeros((N, M), dtype=np.int64)
    K.bernoulli_box_counts(seeds, M, N, np.uint64(threshold(rho_left)),
                           np.uint64(threshold(rho_bottom)), np.uint64(threshold(params.b1)),
                           np.uint64(threshold(params.b2)), counts)
    return counts


@dataclass(frozen=True, eq=False)
class ExactHeightDistribution:
    pmf: np.ndarray
    params: ModelParams
    M: int
    N: int
    boundary: str

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    def to_json(self) -> str:
        return json.dumps({
            "M": self.M, "N": self.N, "boundary": self.boundary,
            "params": self.params.as_dict(),
            "pmf": {str(h): float(p) for h, p in enumerate(self.pmf)},
        })


def exact_height_distribution(params: ModelParams, M: int, N: int, boundary: str = "step",
                              rho: float = 1.0) -> ExactHeightDistribution:
    """Exact law of ``H(M, N)`` by a row-by-row transfer matrix.

    State: H counter times the occupation bits of the vertical edges of
    columns ``1..M-1`` (column ``M`` never feeds the edge entering column ``M``),
    plus the bit carried along the row.
    """
    _check_dims(M, N)
    if M > MAX_EXACT_WIDTH:
        raise CapacityError(f"width {M} exceeds {MAX_EXACT_WIDTH}")
    if boundary == "step":
        rho = 1.0
    elif boundary != "step-bernoulli":
        raise InvalidParameterError(f"unknown boundary kind {boundary!r}")
    if not 0.0 <= rho <= 1.0:
        raise InvalidParameterError(f"rho must lie in [0, 1], got {rho}")
    b1, b2 = params.b1, params.b2
    S = 1 << (M - 1)
    idx = np.arange(S)
    P = np.zeros((N + 1, S))
    P[0, 0] = 1.0
    for _ in range(N):
        # [..., 0] carry empty, [..., 1] carry occupied
        C = np.stack([(1.0 - rho) * P, rho * P], axis=-1)
        for i in range(M - 1):
            lo = idx[(idx >> i) & 1 == 0]
            hi = lo | (1 << i)
            new = np.zeros_like(C)
            new[:, lo, 0] += C[:, lo, 0]
            new[:, hi, 1] += C[:, hi, 1]
            # lone arrow from the left: continue right w.p. b2, else turn up
            new[:, lo, 1] += b2 * C[:, lo, 1]
            new[:, hi, 0] += (1.0 - b2) * C[:, lo, 1]
            # lone arrow from below: continue up w.p. b1, else turn right
            new[:, hi, 0] += b1 * C[:, hi, 0]
            new[:, lo, 1] += (1.0 - b1) * C[:, hi, 0]
            C = new
        P = C[..., 0].copy()
        P[1:] += C[:-1, :, 1]
    pmf = P.sum(axis=1)
    kind = "step" if boundary == "step" else f"step-bernoulli({rho})"
    return ExactHeightDistribution(pmf, params, M, N, kind)


def exact_box_law(params: ModelParams, boundary: BoundarySpec):
    """Every configuration of the box with its probability, by branching.

    Returns a list of ``(QuadrantSample, probability)``.  Exponential in the
    number of non-trivial vertices; meant for boxes of a handful of vertices.
    """
    M, N = boundary.M, boundary.N
    h0 = np.empty((N, M + 1), np.int64)
    v0 = np.empty((N + 1, M), np.int64)
    h0[:, 0] = boundary.left
    v0[0, :] = boundary.bottom
    out = []

    def rec(k, h, v, p):
        if k == M * N:
            out.append((QuadrantSample(h.copy(), v.copy()), p))
            return
        t, x = divmod(k, M)
        for (top, right), w in vertex_outcomes(int(v[t, x]), int(h[t, x]), params):
            if w == 0.0:
                continue
            v[t + 1, x] = top
            h[t, x + 1] = right
            rec(k + 1, h, v, p * w)

    rec(0, h0, v0, 1.0)
    return out


def particle_hole_image(sample: QuadrantSample) -> QuadrantSample:
    """Exchange particles and holes (single-class samples)."""
    flip = lambda a: np.where(a == HOLE, 1, HOLE).astype(np.int64)  # noqa: E731
    return QuadrantSample(flip(sample.h_edges), flip(sample.v_edges))


def transpose_image(sample: QuadrantSample) -> QuadrantSample:
    """Exchange the two coordinate axes."""
    return QuadrantSample(sample.v_edges.T.copy(), sample.h_edges.T.copy())


def inversion_image(sample: QuadrantSample) -> QuadrantSample:
    """Both inversions; the law with parameters ``(b1, b2)`` maps to itself."""
    return transpose_image(particle_hole_image(sample))
