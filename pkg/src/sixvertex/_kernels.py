"""Numba kernels shared by the samplers.

All kernels draw their bits with the same keyed hash as
:mod:`sixvertex.core`, so a kernel run and a pure-Python run with the same
seed produce identical configurations.

Conventions: ``x0`` is the lattice coordinate of array index 0, ``t0`` the
row coordinate of the first row swept.  Classes are int64 with the
``HOLE``/``NEG_INF`` sentinels of :mod:`sixvertex.core`.
"""

import numba as nb
import numpy as np

from .core import HOLE

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_ROW_MULT = np.uint64(0xD1B54A32D192ED03)
_CHANNEL_MULT = np.uint64(0xC2B2AE3D27D4EB4F)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)

# status codes returned by batch kernels
OK = 0
RIGHT_EXIT = 1


@nb.njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@nb.njit(cache=True, inline="always")
def row_key(seed, t, channel):
    k = mix64(np.uint64(seed) ^ (np.uint64(channel) * _CHANNEL_MULT))
    return mix64(k + np.uint64(t) * _ROW_MULT)


@nb.njit(cache=True, inline="always")
def draw(rk, x):
    return mix64(np.uint64(rk) + np.uint64(x) * _GOLDEN)


@nb.njit(cache=True)
def derive_seeds(master, n, stream):
    out = np.empty(n, dtype=np.uint64)
    rk = row_key(np.uint64(master), stream, 97)
    for i in range(n):
        out[i] = draw(rk, i)
    return out


@nb.njit(cache=True)
def sweep(cls, start, carry, x0, rk1, rk2, thr1, thr2, rbound):
    """Resolve one row left to right, in place.

    ``carry`` is the class entering index ``start`` from the left.  ``rbound``
    must bound the index of the rightmost non-hole from above; once the carry
    is a hole past it nothing can change.  Returns the class leaving through
    the right edge and the updated bound.
    """
    W = cls.shape[0]
    hi = rbound
    i = start
    while i < W:
        if carry == HOLE and i > rbound:
            return carry, hi
        b = cls[i]
        if b != carry:
            if b < carry:
                swap = draw(rk1, x0 + i) >= thr1
            else:
                swap = draw(rk2, x0 + i) >= thr2
            if swap:
                cls[i] = carry
                carry = b
                if cls[i] != HOLE and i > hi:
                    hi = i
        i += 1
    return carry, hi


@nb.njit(cache=True)
def rightmost_particle(cls):
    for i in range(cls.shape[0] - 1, -1, -1):
        if cls[i] != HOLE:
            return i
    return -1


@nb.njit(cache=True)
def evolve_inplace(cls, x0, t0, steps, seed, thr1, thr2, inject, skip_left):
    """Advance a window from time ``t0`` by ``steps`` rows; ``inject`` enters at the left every row.

    The step from time ``t`` to ``t + 1`` draws row ``t + 1`` of the field.

    With ``skip_left`` the packed prefix of class ``inject`` is not visited
    (its vertices are all pass-through).  Returns the number of non-hole
    arrows that left through the right edge.
    """
    W = cls.shape[0]
    L = 0
    if skip_left:
        while L < W and cls[L] == inject:
            L += 1
    R = rightmost_particle(cls)
    exited = 0
    for s in range(steps):
        t = t0 + s + 1  # rows are 1-based, as in the quadrant
        rk1 = row_key(seed, t, 1)
        rk2 = row_key(seed, t, 2)
        out, R = sweep(cls, L, inject, x0, rk1, rk2, thr1, thr2, R)
        if out != HOLE:
            exited += 1
        if skip_left:
            while L < W and cls[L] == inject:
                L += 1
    return exited


@nb.njit(cache=True, nogil=True)
def evolve_batch(ics, x0, t0, seeds, snaps, thr1, thr2, inject, skip_left, out, exits):
    """Run seed ``k`` from ``ics[k]``; store the window after ``snaps[j]`` rows in ``out[k, j]``."""
    n = seeds.shape[0]
    for k in range(n):
        cls = ics[k].copy()
        done = 0
        ex = 0
        for j in range(snaps.shape[0]):
            ex += evolve_inplace(cls, x0, t0 + done, snaps[j] - done, seeds[k],
                                 thr1, thr2, inject, skip_left)
            done = snaps[j]
            out[k, j, :] = cls
        exits[k] = ex


@nb.njit(cache=True)
def sample_box(left, bottom, seed, thr1, thr2, h_edges, v_edges):
    """Full edge record of an ``M x N`` box; vertex ``(X, T)`` draws at ``(X, T)``, 1-based."""
    N = left.shape[0]
    M = bottom.shape[0]
    cur = bottom.copy()
    v_edges[0, :] = cur
    for t in range(1, N + 1):
        rk1 = row_key(seed, t, 1)
        rk2 = row_key(seed, t, 2)
        carry = left[t - 1]
        h_edges[t - 1, 0] = carry
        for i in range(M):
            b = cur[i]
            if b != carry:
                if b < carry:
                    swap = draw(rk1, i + 1) >= thr1
                else:
                    swap = draw(rk2, i + 1) >= thr2
                if swap:
                    cur[i] = carry
                    carry = b
            h_edges[t - 1, i + 1] = carry
        v_edges[t, :] = cur


@nb.njit(cache=True, nogil=True)
def bernoulli_box_counts(seeds, M, N, thr_left, thr_bottom, thr1, thr2, counts):
    """Accumulate vertical out-edge occupancy over seeds for Bernoulli boundaries.

    Left entry of row ``t`` draws channel 3 at ``(0, t)``; bottom entry of
    column ``x`` draws channel 4 at ``(x, 0)``.  ``counts`` has shape ``(N, M)``.
    """
    cur = np.empty(M, dtype=np.int64)
    for k in range(seeds.shape[0]):
        seed = seeds[k]
        rkb = row_key(seed, 0, 4)
        for i in range(M):
            cur[i] = 1 if draw(rkb, i + 1) < thr_bottom else HOLE
        for t in range(1, N + 1):
            rkl = row_key(seed, t, 3)
            carry = 1 if draw(rkl, 0) < thr_left else HOLE
            rk1 = row_key(seed, t, 1)
            rk2 = row_key(seed, t, 2)
            for i in range(M):
                b = cur[i]
                if b != carry:
                    if b < carry:
                        swap = draw(rk1, i + 1) >= thr1
                    else:
                        swap = draw(rk2, i + 1) >= thr2
                    if swap:
                        cur[i] = carry
                        carry = b
                if cur[i] != HOLE:
                    counts[t - 1, i] += 1


@nb.njit(cache=True, nogil=True)
def step_quadrant_snapshots(seeds, W, snap_rows, thr1, thr2, out):
    """Step boundary, columns ``1..W``; ``out[k, j, i]`` = occupancy of column i+1 after ``snap_rows[j]`` rows."""
    for k in range(seeds.shape[0]):
        cls = np.full(W, HOLE, dtype=np.int64)
        L = 0
        R = -1
        done = 0
        for j in range(snap_rows.shape[0]):
            for t in range(done + 1, snap_rows[j] + 1):
                rk1 = row_key(seeds[k], t, 1)
                rk2 = row_key(seeds[k], t, 2)
                _, R = sweep(cls, L, 1, 1, rk1, rk2, thr1, thr2, R)
                while L < W and cls[L] == 1:
                    L += 1
            done = snap_rows[j]
            for i in range(W):
                out[k, j, i] = 1 if cls[i] != HOLE else 0


@nb.njit(cache=True, nogil=True)
def second_class_paths(seeds, T, W, thr1, thr2, out):
    """Step boundary with a class-2 arrow entering column 1 from below.

    ``out[k, t]`` is the (1-based) column of the class-2 vertical edge after
    ``t`` rows.  Returns RIGHT_EXIT if the class-2 arrow left the box.
    """
    for k in range(seeds.shape[0]):
        cls = np.full(W, HOLE, dtype=np.int64)
        cls[0] = 2
        L = 0
        R = 0
        pos = 0
        out[k, 0] = 1
        for t in range(1, T + 1):
            rk1 = row_key(seeds[k], t, 1)
            rk2 = row_key(seeds[k], t, 2)
            c, R = sweep(cls, L, 1, 1, rk1, rk2, thr1, thr2, R)
            if c == 2:
                return RIGHT_EXIT
            while L < W and cls[L] == 1:
                L += 1
            while cls[pos] != 2:
                pos += 1
            out[k, t] = pos + 1
    return OK


@nb.njit(cache=True)
def bernoulli_sites(seeds, x0, W, channel, thr, out):
    """``out[k, i] = 1`` iff the channel hash at ``(x0 + i, 0)`` under ``seeds[k]`` is below ``thr``."""
    for k in range(seeds.shape[0]):
        rk = row_key(seeds[k], 0, channel)
        for i in range(W):
            out[k, i] = 1 if draw(rk, x0 + i) < thr else 0
