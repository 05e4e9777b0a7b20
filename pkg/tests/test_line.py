import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sixvertex.core import HOLE, NEG_INF, ModelParams, RandomField, bernoulli_draw, derive_seeds, resolve_vertex_multi
from sixvertex.line import (
    MarginReadError,
    WindowState,
    WindowTooSmallError,
    apply_merge,
    attractivity_violations,
    couple,
    discrepancy_agreement,
    evolve_bundle,
    evolve_window,
    exact_line_law,
    line_height,
    make_packed_ic,
    make_step_ic,
    make_step_second_class_ic,
    margin_for,
    merge_violations,
    run_batch,
    threshold_map,
)
from sixvertex.quadrant import make_step_boundary, sample_quadrant

pool = st.sampled_from([NEG_INF, 1, 2, 3, 7, HOLE])


def reference_evolve(state, steps, field):
    """Row by row: the exterior arrow enters at A and sweeps right."""
    cls = state.classes.tolist()
    for t in range(state.time + 1, state.time + steps + 1):
        carry = int(state.exterior)
        for i, x in enumerate(range(state.A, state.B + 1)):
            c1 = bernoulli_draw(field, x, t, 1)
            c2 = bernoulli_draw(field, x, t, 2)
            cls[i], carry = resolve_vertex_multi(cls[i], carry, c1, c2)
    return np.array(cls)


@pytest.mark.parametrize("T,want", [(100, 501), (8, 41), (0, 1)])
def test_margin_values(ref, T, want):
    # ceil(2T / (1 - b2)) + 1 in exact arithmetic
    exact = math.ceil(Fraction(2 * T) / (1 - Fraction(3, 5))) + 1
    assert margin_for(ref, T) == exact == want


def test_margin_rejects_negative(ref):
    with pytest.raises(ValueError):
        margin_for(ref, -1)


@given(st.integers(0, 2**40), st.lists(pool, min_size=20, max_size=40), pool, st.integers(1, 3))
def test_kernel_matches_reference(seed, cls, ext, steps):
    p = ModelParams(0.3, 0.6)
    f = RandomField(seed, p)
    s = WindowState(-5, cls, time=2, exterior=ext)
    m = margin_for(p, steps)
    if m > len(cls) - 1:
        return
    assert np.array_equal(evolve_window(s, steps, f).classes, reference_evolve(s, steps, f))


def test_line_matches_quadrant(ref):
    W, T = 60, 6
    for seed in range(5):
        f = RandomField(seed, ref)
        s = WindowState(1, np.full(W, HOLE), exterior=1)
        q = sample_quadrant(make_step_boundary(W, T), f)
        for t in range(1, T + 1):
            s = evolve_window(s, 1, f)
            assert np.array_equal(s.classes, q.v_edges[t])


def test_reads_refused_inside_margin(ref):
    s = evolve_window(make_step_ic((-30, 20)), 2, RandomField(1, ref))
    assert s.margin_used == margin_for(ref, 2)
    lo, hi = s.readable
    assert s.read(lo, hi).size == hi - lo + 1
    with pytest.raises(MarginReadError):
        s.read(lo - 1)
    with pytest.raises(MarginReadError):
        s.read(hi, hi + 1)


def test_margin_is_charged_per_call(ref):
    f = RandomField(1, ref)
    s = make_step_ic((-40, 40))
    a = evolve_window(evolve_window(s, 1, f), 1, f)
    b = evolve_window(s, 2, f)
    assert np.array_equal(a.classes, b.classes)
    assert a.margin_used == 2 * margin_for(ref, 1) >= b.margin_used


def test_window_too_small(ref):
    with pytest.raises(WindowTooSmallError):
        evolve_window(make_step_ic((-3, 3)), 5, RandomField(0, ref))


@given(st.integers(0, 2**40), st.integers(1, 6))
def test_truncation_exact_in_readable_region(seed, steps):
    """Arbitrary data left of the window changes nothing right of the margin."""
    p = ModelParams(0.3, 0.6)
    f = RandomField(seed, p)
    rng = np.random.default_rng(seed % 2**32)
    big = WindowState(-80, rng.choice([1, 2, 3, HOLE], size=120), exterior=NEG_INF)
    cut = 20
    small = WindowState(-80 + cut, big.classes[cut:], exterior=HOLE)
    a = evolve_window(big, steps, f)
    b = evolve_window(small, steps, f)
    lo, hi = b.readable
    assert np.array_equal(a.read(lo, hi), b.read(lo, hi))


def test_step_ic_windowing_exact_everywhere(ref):
    """A class-1 exterior reproduces the infinite step exactly, margin or not."""
    f = RandomField(3, ref)
    a = evolve_window(make_step_ic((-60, 40)), 5, f)
    b = evolve_window(make_step_ic((-30, 40)), 5, f)
    assert np.array_equal(a.classes[30:], b.classes)


def test_ics():
    s = make_step_second_class_ic((-3, 3))
    assert s.classes.tolist() == [1, 1, 1, 2, HOLE, HOLE, HOLE]
    assert make_packed_ic((-2, 2)).classes.tolist() == [-2, -1, 0, 1, 2]
    with pytest.raises(ValueError):
        make_step_second_class_ic((1, 3))
    with pytest.raises(ValueError):
        make_packed_ic((3, 1))


def test_json_roundtrip(ref):
    s = evolve_window(make_step_second_class_ic((-20, 20)), 2, RandomField(5, ref))
    back = WindowState.from_json(s.to_json())
    assert back.same_as(s)
    assert (back.margin_used, back.exterior, back.exited) == (s.margin_used, s.exterior, s.exited)


def test_line_height_gradients(ref):
    s = evolve_window(make_step_ic((-30, 30)), 3, RandomField(2, ref))
    h = line_height(s, reference=(0, 5))
    lo, hi = s.readable
    assert h(0) == 5
    for x in range(lo, hi):
        assert h(x) - h(x + 1) == int(s.read(x)[0] != HOLE)


def test_coupled_bundle_shares_field(ref):
    f = RandomField(9, ref)
    a, b = make_step_ic((-30, 30)), make_step_second_class_ic((-30, 30))
    out = evolve_bundle(couple([a, b], f), 4)
    assert out.time == 4
    # merging class 2 into the holes of the first state recovers it
    m = threshold_map([1], [1, HOLE])
    assert np.array_equal(apply_merge(out.states[1], m).classes, out.states[0].classes)
    with pytest.raises(ValueError):
        couple([a, make_step_ic((-30, 31))], f)


def test_merge_rejects_decreasing():
    s = WindowState(0, [1, 2, 3])
    with pytest.raises(ValueError):
        apply_merge(s, lambda c: -c)
    with pytest.raises(ValueError):
        threshold_map([1, 2], [1, 2])


@given(st.integers(0, 2**40), st.lists(pool, min_size=25, max_size=25), pool,
       st.lists(st.integers(0, 1), min_size=6, max_size=6))
def test_merge_commutes_with_dynamics(seed, cls, ext, jumps):
    order = [NEG_INF, 1, 2, 3, 7, HOLE]
    table = dict(zip(order, np.cumsum(jumps).tolist()))
    f = RandomField(seed, ModelParams(0.3, 0.6))
    s = WindowState(0, cls, exterior=ext)
    a = apply_merge(evolve_window(s, 2, f), table.__getitem__)
    b = evolve_window(apply_merge(s, table.__getitem__), 2, f)
    assert np.array_equal(a.classes, b.classes)


def test_exact_law_matches_simulation(ref):
    s = WindowState(0, [1, HOLE, 2, HOLE, HOLE, HOLE, HOLE], exterior=NEG_INF)
    law = exact_line_law(s, ref, 1)
    assert sum(law.values()) == pytest.approx(1.0)
    n = 20_000
    out = run_batch(s, ref, derive_seeds(4, n), [1])[:, 0]
    for cfg, p in law.items():
        freq = np.mean(np.all(out == np.array(cfg), axis=1))
        assert abs(freq - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_exact_law_keep_exits(ref):
    s = WindowState(0, [HOLE], exterior=1)
    law = exact_line_law(s, ref, 2, keep_exits=True)
    assert sum(law.values()) == pytest.approx(1.0)
    assert all(len(k) == 3 for k in law)


def test_run_batch_matches_evolve_window(ref):
    s = make_step_second_class_ic((-25, 25))
    seeds = derive_seeds(3, 40)
    got = run_batch(s, ref, seeds, [1, 3], chunk=16)
    for k, sd in enumerate(seeds):
        f = RandomField(int(sd), ref)
        assert np.array_equal(got[k, 0], evolve_window(s, 1, f).classes)
        assert np.array_equal(got[k, 1], evolve_window(s, 3, f).classes)
    assert np.array_equal(got, run_batch(s, ref, seeds, [1, 3], chunk=7, jobs=3))
    with pytest.raises(ValueError):
        run_batch(s, ref, seeds, [3, 1])
    with pytest.raises(WindowTooSmallError):
        run_batch(s, ref, seeds, [20])


def test_coupling_experiments_small(ref):
    assert attractivity_violations(ref, 30, 10, 1) == 0
    assert merge_violations(ref, 30, 10, 1) == 0
    assert discrepancy_agreement(ref, 10, 500, 1) == 1.0
