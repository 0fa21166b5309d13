"""Compiled inner loops for the walkers.

All kernels share one environment calling convention::

    dim, side, periodic, model, p1, p2, env_key, cond, strides

``cond`` is an empty array when conductances are regenerated per edge from
``env_key``; otherwise it is the flat ``(n_vertices * dim)`` table.  Neighbour
slots are ordered ``(+e0, -e0, +e1, -e1, ...)`` so the embedded chain consumes
the jump stream identically for CSRW and VSRW.
"""
import math

import numpy as np
from numba import njit, uint64

from .rng import nb_draw, nb_unit, nb_unit_open, nb_unit_open0


@njit(inline="always")
def _cond(eid, model, p1, p2, key, cond):
    if cond.shape[0] > 0:
        return cond[eid]
    if model == 0:
        return p1
    z = nb_draw(key, eid)
    if model == 1:
        return 1.0 if nb_unit(z) < p1 else 0.0
    if model == 2:
        return p1 + (p2 - p1) * nb_unit(z)
    return nb_unit_open0(z) ** (-1.0 / p1)


@njit(cache=True, nogil=True)
def edge_values(eids, model, p1, p2, key):
    out = np.empty(eids.shape[0])
    empty = np.empty(0)
    for i in range(eids.shape[0]):
        out[i] = _cond(eids[i], model, p1, p2, key, empty)
    return out


@njit(inline="always")
def _neighbors(pos, coords, dim, side, periodic, model, p1, p2, key, cond, strides, nb, w):
    total = 0.0
    for a in range(dim):
        s = strides[a]
        c = coords[a]
        j = 2 * a
        if c < side - 1:
            nb[j] = pos + s
            w[j] = _cond(pos * dim + a, model, p1, p2, key, cond)
        elif periodic:
            nb[j] = pos - (side - 1) * s
            w[j] = _cond(pos * dim + a, model, p1, p2, key, cond)
        else:
            nb[j] = -1
            w[j] = 0.0
        j += 1
        if c > 0:
            y = pos - s
            nb[j] = y
            w[j] = _cond(y * dim + a, model, p1, p2, key, cond)
        elif periodic:
            y = pos + (side - 1) * s
            nb[j] = y
            w[j] = _cond(y * dim + a, model, p1, p2, key, cond)
        else:
            nb[j] = -1
            w[j] = 0.0
        total += w[j - 1] + w[j]
    return total


@njit(inline="always")
def _choose(u, total, w, ndir):
    target = u * total
    acc = 0.0
    chosen = -1
    for j in range(ndir):
        if w[j] > 0.0:
            acc += w[j]
            chosen = j
            if target < acc:
                break
    return chosen


@njit(inline="always")
def _move(coords, chosen, side):
    a = chosen // 2
    if chosen % 2 == 0:
        coords[a] = coords[a] + 1 if coords[a] < side - 1 else 0
    else:
        coords[a] = coords[a] - 1 if coords[a] > 0 else side - 1


@njit(inline="always")
def _on_face(coords, dim, side):
    for a in range(dim):
        if coords[a] == 0 or coords[a] == side - 1:
            return True
    return False


@njit(inline="always")
def _dist(pos, coords, c0, dim, side, periodic, table):
    if table.shape[0] > 0:
        return table[pos]
    d = 0
    for a in range(dim):
        x = coords[a] - c0[a]
        if x < 0:
            x = -x
        if periodic and side - x < x:
            x = side - x
        d += x
    return d


@njit(inline="always")
def _init_coords(pos, dim, side, coords):
    p = pos
    for a in range(dim):
        coords[a] = p % side
        p //= side


@njit(cache=True, nogil=True)
def walk_path(start, horizon, max_jumps, kj, kh, vsrw,
              dim, side, periodic, model, p1, p2, key, cond, strides):
    """Full skeleton ``(times, vertices, touched_face)`` up to ``horizon``/``max_jumps``."""
    cap = 1024
    times = np.empty(cap)
    verts = np.empty(cap, dtype=np.int64)
    coords = np.empty(dim, dtype=np.int64)
    nb = np.empty(2 * dim, dtype=np.int64)
    w = np.empty(2 * dim)
    _init_coords(start, dim, side, coords)
    touched = (not periodic) and _on_face(coords, dim, side)
    pos = start
    t = 0.0
    times[0] = 0.0
    verts[0] = start
    n = 0
    while n < max_jumps:
        total = _neighbors(pos, coords, dim, side, periodic, model, p1, p2, key, cond, strides, nb, w)
        if total <= 0.0:
            break
        rate = total if vsrw else 1.0
        hold = -math.log(nb_unit_open(nb_draw(kh, n))) / rate
        if t + hold > horizon:
            break
        t += hold
        chosen = _choose(nb_unit(nb_draw(kj, n)), total, w, 2 * dim)
        pos = nb[chosen]
        _move(coords, chosen, side)
        if not periodic and not touched:
            touched = _on_face(coords, dim, side)
        n += 1
        if n >= cap:
            cap *= 2
            nt = np.empty(cap)
            nv = np.empty(cap, dtype=np.int64)
            nt[:n] = times[:n]
            nv[:n] = verts[:n]
            times = nt
            verts = nv
        times[n] = t
        verts[n] = pos
    return times[: n + 1].copy(), verts[: n + 1].copy(), touched


@njit(cache=True, nogil=True)
def walk_functionals(start, center, qtimes, win_lo, win_hi, horizon, kjs, khs, vsrw,
                     dim, side, periodic, model, p1, p2, key, cond, strides, table):
    """Streaming path functionals for a batch of replicas.

    Returns per replica: position, distance and running sup at each query time;
    minimum distance over each window ``(lo, hi]``; face flag; jump count.
    """
    R = kjs.shape[0]
    Q = qtimes.shape[0]
    W = win_lo.shape[0]
    pos_at = np.empty((R, Q), dtype=np.int64)
    dist_at = np.empty((R, Q), dtype=np.int64)
    sup_at = np.empty((R, Q), dtype=np.int64)
    minwin = np.empty((R, W), dtype=np.int64)
    touched_out = np.zeros(R, dtype=np.bool_)
    jumps = np.zeros(R, dtype=np.int64)
    coords = np.empty(dim, dtype=np.int64)
    c0 = np.empty(dim, dtype=np.int64)
    nb = np.empty(2 * dim, dtype=np.int64)
    w = np.empty(2 * dim)
    _init_coords(center, dim, side, c0)
    big = np.iinfo(np.int64).max
    for r in range(R):
        kj = kjs[r]
        kh = khs[r]
        pos = start
        _init_coords(start, dim, side, coords)
        touched = (not periodic) and _on_face(coords, dim, side)
        d = _dist(pos, coords, c0, dim, side, periodic, table)
        sup = d
        for i in range(W):
            minwin[r, i] = big
        t = 0.0
        qi = 0
        n = 0
        while True:
            total = _neighbors(pos, coords, dim, side, periodic, model, p1, p2, key, cond, strides, nb, w)
            if total > 0.0:
                rate = total if vsrw else 1.0
                t_next = t + (-math.log(nb_unit_open(nb_draw(kh, n))) / rate)
            else:
                t_next = math.inf
            while qi < Q and qtimes[qi] < t_next:
                pos_at[r, qi] = pos
                dist_at[r, qi] = d
                sup_at[r, qi] = sup
                qi += 1
            for i in range(W):
                if t <= win_hi[i] and t_next > win_lo[i] and d < minwin[r, i]:
                    minwin[r, i] = d
            if t_next > horizon or t_next == math.inf:
                break
            chosen = _choose(nb_unit(nb_draw(kj, n)), total, w, 2 * dim)
            pos = nb[chosen]
            _move(coords, chosen, side)
            if not periodic and not touched:
                touched = _on_face(coords, dim, side)
            d = _dist(pos, coords, c0, dim, side, periodic, table)
            if d > sup:
                sup = d
            t = t_next
            n += 1
        touched_out[r] = touched
        jumps[r] = n
    return pos_at, dist_at, sup_at, minwin, touched_out, jumps


@njit(cache=True, nogil=True)
def walk_survival(start, t0s, t_max, coefs, inv_beta, kjs, khs, vsrw,
                  dim, side, periodic, model, p1, p2, key, cond, strides, table):
    """Survival flags for the events ``{d(x, Y_t) >= t**(1/beta) * (log t)**-c for all t in [T0, Tmax]}``.

    ``coefs`` holds the log-log coefficients ``c`` (one per threshold curve).
    The check at both ends of every constancy interval is exact for curves
    that have at most one interior minimum, as ``t**a * (log t)**-c`` does.
    """
    R = kjs.shape[0]
    K = coefs.shape[0]
    J = t0s.shape[0]
    alive = np.ones((R, K, J), dtype=np.bool_)
    touched_out = np.zeros(R, dtype=np.bool_)
    coords = np.empty(dim, dtype=np.int64)
    c0 = np.empty(dim, dtype=np.int64)
    nb = np.empty(2 * dim, dtype=np.int64)
    w = np.empty(2 * dim)
    _init_coords(start, dim, side, c0)
    t0_min = t0s.min()
    for r in range(R):
        kj = kjs[r]
        kh = khs[r]
        pos = start
        _init_coords(start, dim, side, coords)
        touched = (not periodic) and _on_face(coords, dim, side)
        d = _dist(pos, coords, c0, dim, side, periodic, table)
        t = 0.0
        n = 0
        remaining = K * J
        while True:
            total = _neighbors(pos, coords, dim, side, periodic, model, p1, p2, key, cond, strides, nb, w)
            if total > 0.0:
                rate = total if vsrw else 1.0
                t_next = t + (-math.log(nb_unit_open(nb_draw(kh, n))) / rate)
            else:
                t_next = math.inf
            if t <= t_max and t_next > t0_min:
                hi = t_next if t_next < t_max else t_max
                lhi = math.log(hi)
                ghi = inv_beta * lhi
                llhi = math.log(lhi)
                logd = math.log(d) if d > 0 else -math.inf
                glo = 0.0
                lllo = 0.0
                have_lo = False
                for j in range(J):
                    if t_next <= t0s[j]:
                        continue
                    if t >= t0s[j]:
                        if not have_lo:
                            llo = math.log(t)
                            glo = inv_beta * llo
                            lllo = math.log(llo)
                            have_lo = True
                        g1 = glo
                        l1 = lllo
                    else:
                        llo = math.log(t0s[j])
                        g1 = inv_beta * llo
                        l1 = math.log(llo)
                    for k in range(K):
                        if alive[r, k, j]:
                            if logd < g1 - coefs[k] * l1 or logd < ghi - coefs[k] * llhi:
                                alive[r, k, j] = False
                                remaining -= 1
                if remaining == 0:
                    break
            if t_next > t_max:
                break
            chosen = _choose(nb_unit(nb_draw(kj, n)), total, w, 2 * dim)
            pos = nb[chosen]
            _move(coords, chosen, side)
            if not periodic and not touched:
                touched = _on_face(coords, dim, side)
            d = _dist(pos, coords, c0, dim, side, periodic, table)
            t = t_next
            n += 1
        touched_out[r] = touched
    return alive, touched_out
