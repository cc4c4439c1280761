"""Compiled inner loops: grid traversal, scan insertion, gain integration,
depth rendering and collision sweeps.

All kernels operate on a dense ``uint8`` cell array with the state codes
below and a grid described by ``(bmin, res)``; shapes come from the array.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

_INF = np.inf


@njit(cache=True)
def traverse(cells, bmin, res, o, d, tmax, stop_at_occupied, out_idx, out_t):
    """Amanatides-Woo walk from ``o`` along unit ``d`` up to ``tmax``.

    Writes visited cells into ``out_idx[n] = (i, j, k)`` and the parametric
    entry/exit distances into ``out_t[n] = (t0, t1)``; returns ``n``.
    Stops at the grid boundary, at ``tmax`` (a cell entered exactly at
    ``tmax`` is not included), or after the first OCCUPIED cell when
    ``stop_at_occupied`` is set.
    """
    nx, ny, nz = cells.shape
    vx = (o[0] - bmin[0]) / res
    vy = (o[1] - bmin[1]) / res
    vz = (o[2] - bmin[2]) / res
    ix = int(math.floor(vx))
    iy = int(math.floor(vy))
    iz = int(math.floor(vz))
    # on a face while heading toward the lower cell: start in the lower cell
    if d[0] < 0.0 and vx == ix:
        ix -= 1
    if d[1] < 0.0 and vy == iy:
        iy -= 1
    if d[2] < 0.0 and vz == iz:
        iz -= 1

    if d[0] > 0.0:
        sx = 1
        tnx = (bmin[0] + (ix + 1) * res - o[0]) / d[0]
        tdx = res / d[0]
    elif d[0] < 0.0:
        sx = -1
        tnx = (bmin[0] + ix * res - o[0]) / d[0]
        tdx = -res / d[0]
    else:
        sx = 0
        tnx = _INF
        tdx = _INF
    if d[1] > 0.0:
        sy = 1
        tny = (bmin[1] + (iy + 1) * res - o[1]) / d[1]
        tdy = res / d[1]
    elif d[1] < 0.0:
        sy = -1
        tny = (bmin[1] + iy * res - o[1]) / d[1]
        tdy = -res / d[1]
    else:
        sy = 0
        tny = _INF
        tdy = _INF
    if d[2] > 0.0:
        sz = 1
        tnz = (bmin[2] + (iz + 1) * res - o[2]) / d[2]
        tdz = res / d[2]
    elif d[2] < 0.0:
        sz = -1
        tnz = (bmin[2] + iz * res - o[2]) / d[2]
        tdz = -res / d[2]
    else:
        sz = 0
        tnz = _INF
        tdz = _INF

    n = 0
    t0 = 0.0
    while True:
        if ix < 0 or iy < 0 or iz < 0 or ix >= nx or iy >= ny or iz >= nz:
            break
        if tnx <= tny and tnx <= tnz:
            tn = tnx
            ax = 0
        elif tny <= tnz:
            tn = tny
            ax = 1
        else:
            tn = tnz
            ax = 2
        t1 = tn if tn < tmax else tmax
        out_idx[n, 0] = ix
        out_idx[n, 1] = iy
        out_idx[n, 2] = iz
        out_t[n, 0] = t0
        out_t[n, 1] = t1
        n += 1
        if stop_at_occupied and cells[ix, iy, iz] == OCCUPIED:
            break
        if tn >= tmax:
            break
        t0 = tn
        if ax == 0:
            ix += sx
            tnx += tdx
        elif ax == 1:
            iy += sy
            tny += tdy
        else:
            iz += sz
            tnz += tdz
    return n


@njit(cache=True)
def _buffers(cells):
    nx, ny, nz = cells.shape
    m = nx + ny + nz + 4
    return np.empty((m, 3), np.int64), np.empty((m, 2), np.float64)


@njit(cache=True)
def cast_one(cells, bmin, res, o, d, tmax):
    idx, ts = _buffers(cells)
    n = traverse(cells, bmin, res, o, d, tmax, True, idx, ts)
    return idx[:n].copy(), ts[:n].copy()


@njit(cache=True)
def insert_rays(cells, bmin, res, o, ends, is_hit):
    """Free-space carving for every ray, then endpoint marking for hits.

    A ray stops at the first cell that was OCCUPIED before this scan (a
    hit behind such a cell is dropped). OCCUPIED is written only after all
    carving, so the result is independent of ray order. Returns the number
    of cells that left the UNKNOWN state.
    """
    idx, ts = _buffers(cells)
    nrays = ends.shape[0]
    hit_cells = np.empty((nrays, 3), np.int64)
    nhit = 0
    newly = 0
    d = np.empty(3)
    for r in range(nrays):
        length = 0.0
        for a in range(3):
            d[a] = ends[r, a] - o[a]
            length += d[a] * d[a]
        length = math.sqrt(length)
        if length <= 0.0:
            continue
        for a in range(3):
            d[a] /= length
        n = traverse(cells, bmin, res, o, d, length, False, idx, ts)
        if n == 0:
            continue
        last = n
        if is_hit[r] and ts[n - 1, 1] >= length:
            last = n - 1
        blocked = False
        for k in range(last):
            if ts[k, 1] - ts[k, 0] <= 1e-12:
                continue
            i = idx[k, 0]
            j = idx[k, 1]
            l = idx[k, 2]
            c = cells[i, j, l]
            if c == OCCUPIED:
                blocked = True
                break
            if c == UNKNOWN:
                cells[i, j, l] = FREE
                newly += 1
        if last < n and not blocked:
            hit_cells[nhit, 0] = idx[n - 1, 0]
            hit_cells[nhit, 1] = idx[n - 1, 1]
            hit_cells[nhit, 2] = idx[n - 1, 2]
            nhit += 1
    for h in range(nhit):
        i = hit_cells[h, 0]
        j = hit_cells[h, 1]
        l = hit_cells[h, 2]
        if cells[i, j, l] == UNKNOWN:
            newly += 1
        cells[i, j, l] = OCCUPIED
    return newly


@njit(cache=True)
def ray_cylinder_entry(o, d, cx, cy, z0, z1, r):
    """Smallest t >= 0 where the ray is inside a finite vertical cylinder, else inf."""
    ox = o[0] - cx
    oy = o[1] - cy
    a = d[0] * d[0] + d[1] * d[1]
    c = ox * ox + oy * oy - r * r
    if a < 1e-18:
        if c > 0.0:
            return _INF
        lo = -_INF
        hi = _INF
    else:
        b = 2.0 * (ox * d[0] + oy * d[1])
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            return _INF
        sq = math.sqrt(disc)
        lo = (-b - sq) / (2.0 * a)
        hi = (-b + sq) / (2.0 * a)
    if d[2] > 0.0:
        zl = (z0 - o[2]) / d[2]
        zh = (z1 - o[2]) / d[2]
    elif d[2] < 0.0:
        zl = (z1 - o[2]) / d[2]
        zh = (z0 - o[2]) / d[2]
    else:
        if o[2] < z0 or o[2] > z1:
            return _INF
        zl = -_INF
        zh = _INF
    t_in = lo if lo > zl else zl
    t_out = hi if hi < zh else zh
    if t_out < t_in or t_out < 0.0:
        return _INF
    return t_in if t_in > 0.0 else 0.0


@njit(cache=True)
def ray_box_entry(o, d, lo, hi):
    t_in = -_INF
    t_out = _INF
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < lo[a] or o[a] > hi[a]:
                return _INF
        else:
            t1 = (lo[a] - o[a]) / d[a]
            t2 = (hi[a] - o[a]) / d[a]
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > t_in:
                t_in = t1
            if t2 < t_out:
                t_out = t2
    if t_out < t_in or t_out < 0.0:
        return _INF
    return t_in if t_in > 0.0 else 0.0


@njit(cache=True)
def gain_bins(cells, bmin, res, o, dirs, weights, bins, nbins, max_range, cyls):
    """Unknown volume seen along each ray, accumulated per yaw bin.

    Each ray stands for a solid-angle element ``weights[r]``; a cell crossed
    over ``[t0, t1]`` contributes ``w * (t1^3 - t0^3) / 3`` m^3. Rays end at
    the first OCCUPIED cell, at ``max_range`` and at the first predicted
    obstacle cylinder ``cyls[k] = (cx, cy, z0, z1, r)``.
    """
    idx, ts = _buffers(cells)
    out = np.zeros(nbins)
    d = np.empty(3)
    for r in range(dirs.shape[0]):
        d[0] = dirs[r, 0]
        d[1] = dirs[r, 1]
        d[2] = dirs[r, 2]
        tmax = max_range
        for k in range(cyls.shape[0]):
            tc = ray_cylinder_entry(o, d, cyls[k, 0], cyls[k, 1], cyls[k, 2], cyls[k, 3], cyls[k, 4])
            if tc < tmax:
                tmax = tc
        if tmax <= 0.0:
            continue
        n = traverse(cells, bmin, res, o, d, tmax, True, idx, ts)
        vol = 0.0
        for k in range(n):
            if cells[idx[k, 0], idx[k, 1], idx[k, 2]] == UNKNOWN:
                t0 = ts[k, 0]
                t1 = ts[k, 1]
                vol += (t1 * t1 * t1 - t0 * t0 * t0) / 3.0
        out[bins[r]] += vol * weights[r]
    return out


@njit(cache=True)
def render(boxes, cyls, o, dirs, max_range):
    """Nearest static and dynamic intersection distance per ray (inf if none within range)."""
    m = dirs.shape[0]
    t_static = np.full(m, _INF)
    t_dyn = np.full(m, _INF)
    d = np.empty(3)
    lo = np.empty(3)
    hi = np.empty(3)
    for r in range(m):
        d[0] = dirs[r, 0]
        d[1] = dirs[r, 1]
        d[2] = dirs[r, 2]
        best = max_range
        found = False
        for b in range(boxes.shape[0]):
            lo[0] = boxes[b, 0]
            lo[1] = boxes[b, 1]
            lo[2] = boxes[b, 2]
            hi[0] = boxes[b, 3]
            hi[1] = boxes[b, 4]
            hi[2] = boxes[b, 5]
            t = ray_box_entry(o, d, lo, hi)
            if t <= best:
                best = t
                found = True
        if found:
            t_static[r] = best
        bestd = max_range
        foundd = False
        for k in range(cyls.shape[0]):
            t = ray_cylinder_entry(o, d, cyls[k, 0], cyls[k, 1], cyls[k, 2], cyls[k, 3], cyls[k, 4])
            if t <= bestd:
                bestd = t
                foundd = True
        if foundd:
            t_dyn[r] = bestd
    return t_static, t_dyn


@njit(cache=True)
def segment_visible(boxes, a, b):
    """True when the open segment a->b crosses no static box."""
    d = np.empty(3)
    length = 0.0
    for k in range(3):
        d[k] = b[k] - a[k]
        length += d[k] * d[k]
    length = math.sqrt(length)
    if length == 0.0:
        return True
    for k in range(3):
        d[k] /= length
    lo = np.empty(3)
    hi = np.empty(3)
    for i in range(boxes.shape[0]):
        for k in range(3):
            lo[k] = boxes[i, k]
            hi[k] = boxes[i, 3 + k]
        t = ray_box_entry(a, d, lo, hi)
        if t < length:
            return False
    return True


@njit(cache=True)
def box_sweep_free(cells, bmin, res, p0, p1, half, unknown_blocks):
    """Conservative swept-AABB test of a box translating from p0 to p1.

    The sweep is covered by boxes at sub-cell spacing, each grown by half the
    spacing along the motion, so no cell touched by the continuous sweep is
    skipped. Cells outside the grid never block.
    """
    nx, ny, nz = cells.shape
    seg = np.empty(3)
    length = 0.0
    for a in range(3):
        seg[a] = p1[a] - p0[a]
        length += seg[a] * seg[a]
    length = math.sqrt(length)
    nsteps = int(math.ceil(length / (0.5 * res)))
    if nsteps < 1:
        nsteps = 1
    grow = np.empty(3)
    for a in range(3):
        grow[a] = abs(seg[a]) / nsteps * 0.5
    eps = 1e-9
    i_lo = np.empty(3, np.int64)
    i_hi = np.empty(3, np.int64)
    dims = (nx, ny, nz)
    for s in range(nsteps + 1):
        f = s / nsteps
        for a in range(3):
            c = p0[a] + f * seg[a]
            lo = (c - half[a] - grow[a] - bmin[a]) / res + eps
            hi = (c + half[a] + grow[a] - bmin[a]) / res - eps
            il = int(math.floor(lo))
            ih = int(math.floor(hi))
            if il < 0:
                il = 0
            if ih > dims[a] - 1:
                ih = dims[a] - 1
            i_lo[a] = il
            i_hi[a] = ih
        for i in range(i_lo[0], i_hi[0] + 1):
            for j in range(i_lo[1], i_hi[1] + 1):
                for k in range(i_lo[2], i_hi[2] + 1):
                    v = cells[i, j, k]
                    if v == OCCUPIED:
                        return False
                    if unknown_blocks and v == UNKNOWN:
                        return False
    return True


@njit(cache=True)
def sym3_max_eig(m):
    a00 = m[0, 0]
    a11 = m[1, 1]
    a22 = m[2, 2]
    a01 = m[0, 1]
    a02 = m[0, 2]
    a12 = m[1, 2]
    p1 = a01 * a01 + a02 * a02 + a12 * a12
    if p1 == 0.0:
        return max(a00, max(a11, a22))
    q = (a00 + a11 + a22) / 3.0
    b00 = a00 - q
    b11 = a11 - q
    b22 = a22 - q
    p2 = b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    det = (b00 * (b11 * b22 - a12 * a12) - a01 * (a01 * b22 - a12 * a02) + a02 * (a01 * a12 - b11 * a02))
    r = det / (2.0 * p * p * p)
    if r <= -1.0:
        phi = math.pi / 3.0
    elif r >= 1.0:
        phi = 0.0
    else:
        phi = math.acos(r) / 3.0
    return q + 2.0 * p * math.cos(phi)


@njit(cache=True)
def predicted_sigma(A, B, C, q, dt):
    """sqrt of the largest eigenvalue of A + dt*B + dt^2*C + q*dt^3/3*I."""
    if dt < 0.0:
        dt = 0.0
    m = A + dt * B + dt * dt * C
    qq = q * dt * dt * dt / 3.0
    for a in range(3):
        m[a, a] += qq
    lam = sym3_max_eig(m)
    return math.sqrt(lam) if lam > 0.0 else 0.0


@njit(cache=True)
def _clearance(ax, ay, az, ox, oy, oz, height, reach_xy, half_z, radius, infl):
    dh = math.sqrt((ax - ox) ** 2 + (ay - oy) ** 2) - (reach_xy + radius + infl)
    obs_lo = oz - infl
    obs_hi = oz + height + infl
    gap = max(obs_lo - (az + half_z), (az - half_z) - obs_hi)
    return max(dh, gap)


@njit(cache=True)
def timed_free(p0, p1, depart, move_end, until, step, reach_xy, half_z, kappa, horizon,
               tp, tv, tA, tB, tC, tq, tt0, tr, th):
    """Sampled timed clearance check between a moving agent and predicted tracks.

    The agent translates p0->p1 over [depart, move_end] and then holds p1
    until ``until``. A track is only trusted up to ``horizon`` seconds past
    its last update and is ignored afterwards. Between samples spaced <=
    ``step`` apart, the clearance can drop by at most v_rel*h/2 below the
    mean of the end values, and the inflation radius on an interval is
    bounded by its endpoint maximum, so a True verdict holds in continuous
    time.
    """
    if until < depart:
        return True
    move_dur = move_end - depart
    length = math.sqrt((p1[0] - p0[0]) ** 2 + (p1[1] - p0[1]) ** 2 + (p1[2] - p0[2]) ** 2)
    v_agent = length / move_dur if move_dur > 0.0 else 0.0
    for k in range(tp.shape[0]):
        end = until
        if tt0[k] + horizon < end:
            end = tt0[k] + horizon
        if end < depart:
            continue
        span = end - depart
        n = int(math.ceil(span / step)) if span > 0.0 else 0
        h = span / n if n > 0 else 0.0
        vo = math.sqrt(tv[k, 0] ** 2 + tv[k, 1] ** 2 + tv[k, 2] ** 2)
        v_rel = v_agent + vo
        prev_sig = 0.0
        pax = pay = paz = pox = poy = poz = 0.0
        for s in range(n + 1):
            t = depart + s * h if s < n else end
            if t >= move_end or move_dur <= 0.0:
                ax = p1[0]
                ay = p1[1]
                az = p1[2]
            else:
                f = (t - depart) / move_dur
                ax = p0[0] + f * (p1[0] - p0[0])
                ay = p0[1] + f * (p1[1] - p0[1])
                az = p0[2] + f * (p1[2] - p0[2])
            dt = t - tt0[k]
            ox = tp[k, 0] + tv[k, 0] * dt
            oy = tp[k, 1] + tv[k, 1] * dt
            oz = tp[k, 2] + tv[k, 2] * dt
            sig = predicted_sigma(tA[k], tB[k], tC[k], tq[k], dt)
            if s == 0:
                c = _clearance(ax, ay, az, ox, oy, oz, th[k], reach_xy, half_z, tr[k], kappa * sig)
                if c <= 0.0:
                    return False
            else:
                smax = sig if sig > prev_sig else prev_sig
                infl = kappa * smax
                c0 = _clearance(pax, pay, paz, pox, poy, poz, th[k], reach_xy, half_z, tr[k], infl)
                c1 = _clearance(ax, ay, az, ox, oy, oz, th[k], reach_xy, half_z, tr[k], infl)
                if c1 <= 0.0 or 0.5 * (c0 + c1) - 0.5 * v_rel * h <= 0.0:
                    return False
            prev_sig = sig
            pax = ax
            pay = ay
            paz = az
            pox = ox
            poy = oy
            poz = oz
    return True
