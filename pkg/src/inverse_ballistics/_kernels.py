"""Compiled inner loops: residual evaluation and the sphere/circle argmin.

A problem instance is flattened into a handful of arrays (see ``Encoded``) so
that numba can evaluate it without Python objects:

``fp`` (float64)
    0 v2, 1 kappa, 2 z_min, 3 rho, 4 theta1, 5 theta2, 6..10 weights, 11..13 M
``ip`` (int64)
    0 task, 1 branch, 2 wrap azimuth, 3 g1 kind, 4 g2 kind, 5 n_lambda,
    6 n_mu, 7 golden-section steps
``g1p``/``g2p``
    parameters of the elevation bounds (layout depends on the kind); constant
    and sine bounds are 4-tuples, tables are arrays
``ops``/``rows``/``stack``
    postfix program of the terrain tree, affine rows ``(a, b, c, d)`` and a
    scratch stack deep enough for the program; ``None`` for the tasks without
    terrain

Arrays reaching the per-point code cost reference counting on every call, so
the common cases are passed as tuples or ``None`` and numba compiles a
specialisation for each layout.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Optional, Union

import numpy as np
from numba import njit, types
from numba.extending import overload

TASK_PLANAR = 0
TASK_SPATIAL = 1
TASK_TERRAIN = 2

BOUND_CONST = 0
BOUND_SINE = 1
BOUND_TABLE = 2

OP_PUSH = 0
OP_MIN = 1
OP_MAX = 2

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_QUARTER_PI = math.pi / 4.0
_TWO_PI = 2.0 * math.pi


class Encoded(NamedTuple):
    fp: np.ndarray
    ip: np.ndarray
    g1p: Union[tuple, np.ndarray]
    g2p: Union[tuple, np.ndarray]
    ops: Optional[np.ndarray]
    rows: Optional[np.ndarray]
    stack: Optional[np.ndarray]


@njit(cache=True, nogil=True, inline="always")
def bound_value(kind, p, phi):
    return _bound(kind, p, phi, math.sin(phi), math.cos(phi))


@njit(cache=True, nogil=True, inline="always")
def _bound(kind, p, phi, sin_phi, cos_phi):
    if kind == BOUND_CONST:
        return p[0]
    if kind == BOUND_SINE:
        v = p[0] + p[1] * sin_phi + p[2] * cos_phi
        if p[3] != 0.0:
            v = abs(v)
        return v
    n = int(p[0])
    if phi <= p[1]:
        return p[1 + n]
    if phi >= p[n]:
        return p[2 * n]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if p[1 + mid] <= phi:
            lo = mid
        else:
            hi = mid
    x0 = p[1 + lo]
    x1 = p[1 + hi]
    y0 = p[1 + n + lo]
    y1 = p[1 + n + hi]
    return y0 + (y1 - y0) * (phi - x0) / (x1 - x0)


@njit(cache=True, nogil=True, inline="always")
def sector_violation(theta1, theta2, wrap, phi):
    if wrap == 0:
        return max(theta1 - phi, phi - theta2)
    # signed distance to the arc [theta1, theta2] measured around the circle
    w = phi % _TWO_PI
    if theta1 <= w <= theta2:
        return max(theta1 - w, w - theta2)
    return min((theta1 - w) % _TWO_PI, (w - theta2) % _TWO_PI)


@njit(cache=True, nogil=True, inline="always")
def _unpack(fp, ip):
    # Hot loops read the parameters from tuples: indexing the int64 array
    # inside them costs several times the arithmetic it guards.
    return (
        (fp[0], fp[1], fp[2], fp[3], fp[4], fp[5], fp[6], fp[7], fp[8], fp[9], fp[10], fp[11], fp[12], fp[13]),
        (ip[0], ip[1], ip[2], ip[3], ip[4], ip[5], ip[6], ip[7]),
    )


@njit(cache=True, nogil=True, inline="always")
def _cone(f, i, g1p, g2p, phi, psi):
    v = sector_violation(f[4], f[5], i[2], phi)
    sin_phi = 0.0
    cos_phi = 0.0
    if i[3] == BOUND_SINE or i[4] == BOUND_SINE:
        sin_phi = math.sin(phi)
        cos_phi = math.cos(phi)
    t = _bound(i[3], g1p, phi, sin_phi, cos_phi) - psi
    if t > v:
        v = t
    t = psi - _bound(i[4], g2p, phi, sin_phi, cos_phi)
    if t > v:
        v = t
    return v


@njit(cache=True, nogil=True)
def cone_violation(fp, ip, g1p, g2p, phi, psi):
    f, i = _unpack(fp, ip)
    return _cone(f, i, g1p, g2p, phi, psi)


@njit(cache=True, nogil=True)
def terrain(ops, rows, stack, x, y, z):
    top = 0
    for i in range(ops.shape[0]):
        code = ops[i, 0]
        arg = ops[i, 1]
        if code == OP_PUSH:
            stack[top] = rows[arg, 0] * x + rows[arg, 1] * y + rows[arg, 2] * z + rows[arg, 3]
            top += 1
        else:
            base = top - arg
            v = stack[base]
            if code == OP_MIN:
                for k in range(base + 1, top):
                    if stack[k] < v:
                        v = stack[k]
            else:
                for k in range(base + 1, top):
                    if stack[k] > v:
                        v = stack[k]
            stack[base] = v
            top = base + 1
    return stack[0]


# Rows above this count make the exact candidate enumeration (quadratic in
# the row count) slower than sampling; the sampled search is used instead.
EXACT_ROW_LIMIT = 32


@njit(cache=True, nogil=True)
def _curve_h(ops, rows, stack, p0, p1, p2, t):
    return terrain(
        ops, rows, stack,
        p0[0] + t * (p1[0] + t * p2[0]),
        p0[1] + t * (p1[1] + t * p2[1]),
        p0[2] + t * (p1[2] + t * p2[2]),
    )


@njit(cache=True, nogil=True)
def _try(ops, rows, stack, p0, p1, p2, t, best):
    if 0.0 < t < 1.0:
        v = _curve_h(ops, rows, stack, p0, p1, p2, t)
        if v < best:
            return v
    return best


@njit(cache=True, nogil=True)
def _curve_min_exact(ops, rows, stack, p0, p1, p2, stop_below):
    """Exact minimum of H on ``t -> p0 + t p1 + t^2 p2``, ``t in [0, 1]``.

    Along the curve every affine piece is a polynomial of degree <= 2, and
    H is one of them between consecutive crossings, so the minimum is attained
    at an end, at a stationary point of a piece, or at a crossing of two pieces.
    """
    m = rows.shape[0]
    qa = np.empty(m)
    qb = np.empty(m)
    qc = np.empty(m)
    for i in range(m):
        qa[i] = rows[i, 0] * p2[0] + rows[i, 1] * p2[1] + rows[i, 2] * p2[2]
        qb[i] = rows[i, 0] * p1[0] + rows[i, 1] * p1[1] + rows[i, 2] * p1[2]
        qc[i] = rows[i, 0] * p0[0] + rows[i, 1] * p0[1] + rows[i, 2] * p0[2] + rows[i, 3]
    best = _curve_h(ops, rows, stack, p0, p1, p2, 0.0)
    if best <= stop_below:
        return best
    v = _curve_h(ops, rows, stack, p0, p1, p2, 1.0)
    if v < best:
        best = v
    if best <= stop_below:
        return best
    for i in range(m):
        if qa[i] != 0.0:
            best = _try(ops, rows, stack, p0, p1, p2, -qb[i] / (2.0 * qa[i]), best)
        for k in range(i + 1, m):
            a = qa[i] - qa[k]
            b = qb[i] - qb[k]
            c = qc[i] - qc[k]
            if a == 0.0:
                if b != 0.0:
                    best = _try(ops, rows, stack, p0, p1, p2, -c / b, best)
            else:
                disc = b * b - 4.0 * a * c
                if disc >= 0.0:
                    sq = math.sqrt(disc)
                    q = -0.5 * (b + sq) if b >= 0.0 else -0.5 * (b - sq)
                    if q != 0.0:
                        best = _try(ops, rows, stack, p0, p1, p2, q / a, best)
                        best = _try(ops, rows, stack, p0, p1, p2, c / q, best)
                    else:
                        best = _try(ops, rows, stack, p0, p1, p2, 0.0, best)
            if best <= stop_below:
                return best
    return best


@njit(cache=True, nogil=True)
def _curve_min_sampled(ops, rows, stack, p0, p1, p2, n, steps, stop_below):
    """Uniform samples followed by golden section around the best one."""
    best = math.inf
    best_t = 0.0
    h = 1.0 / (n - 1)
    for i in range(n):
        t = i * h
        v = _curve_h(ops, rows, stack, p0, p1, p2, t)
        if v < best:
            best = v
            best_t = t
            if best <= stop_below:
                return best
    a = max(0.0, best_t - h)
    b = min(1.0, best_t + h)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = _curve_h(ops, rows, stack, p0, p1, p2, c)
    fd = _curve_h(ops, rows, stack, p0, p1, p2, d)
    for _ in range(steps):
        if fc < fd:
            b = d
            d = c
            fd = fc
            c = b - _INVPHI * (b - a)
            fc = _curve_h(ops, rows, stack, p0, p1, p2, c)
        else:
            a = c
            c = d
            fc = fd
            d = a + _INVPHI * (b - a)
            fd = _curve_h(ops, rows, stack, p0, p1, p2, d)
        if fc < best:
            best = fc
        if fd < best:
            best = fd
        if best <= stop_below:
            return best
    return best


@njit(cache=True, nogil=True)
def _curve_min(ops, rows, stack, p0, p1, p2, n, steps, stop_below):
    if rows.shape[0] <= EXACT_ROW_LIMIT:
        return _curve_min_exact(ops, rows, stack, p0, p1, p2, stop_below)
    return _curve_min_sampled(ops, rows, stack, p0, p1, p2, n, steps, stop_below)


@njit(cache=True, nogil=True)
def segment_clearance(ops, rows, stack, mx, my, mz, nx, ny, nz, n, steps, stop_below):
    """Minimum of H on the segment M -> N.

    Returns early once the running minimum drops to ``stop_below``.
    """
    p0 = np.array((mx, my, mz))
    p1 = np.array((nx - mx, ny - my, nz - mz))
    p2 = np.zeros(3)
    return _curve_min(ops, rows, stack, p0, p1, p2, n, steps, stop_below)


@njit(cache=True, nogil=True)
def trajectory_clearance(ops, rows, stack, v2, phi, psi, r, n, steps, stop_below):
    """Minimum of H along the arc ``mu -> h_II(phi, psi, mu r)``, ``mu in [0, 1]``."""
    tpsi = math.tan(psi)
    p0 = np.zeros(3)
    p1 = np.array((r * math.cos(phi), r * math.sin(phi), r * tpsi))
    p2 = np.array((0.0, 0.0, -(1.0 + tpsi * tpsi) * r * r / (2.0 * v2)))
    return _curve_min(ops, rows, stack, p0, p1, p2, n, steps, stop_below)


@njit(cache=True, nogil=True, inline="always")
def _elevation(f, i, x, y, z):
    """Branch elevation for the point, or NaN where no elevation reaches it."""
    v2 = f[0]
    r = math.sqrt(x * x + y * y)
    sign = -1.0 if i[1] == 1 else 1.0
    if i[0] == TASK_PLANAR:
        s = r / v2
        if s > 1.0:
            return math.nan
        return _QUARTER_PI + sign * (_QUARTER_PI - 0.5 * math.asin(s))
    disc = v2 * v2 - ((x * x + y * y) + 2.0 * v2 * z)
    if disc < 0.0 or r == 0.0:
        return math.nan
    return math.atan((v2 + sign * math.sqrt(disc)) / r)


@njit(cache=True, nogil=True, inline="always")
def _residual(x, y, z, fp, ip, g1p, g2p, ops, rows, stack, bound):
    psi = _elevation(fp, ip, x, y, z)
    if math.isnan(psi):
        return math.inf
    phi = math.atan(y / x)
    f = fp[6] * _cone(fp, ip, g1p, g2p, phi, psi)
    t = fp[7] * (fp[1] - x)
    if t > f:
        f = t
    task = ip[0]
    if task == TASK_SPATIAL:
        t = fp[8] * (fp[2] - z)
        if t > f:
            f = t
        return f
    if task == TASK_PLANAR:
        return f
    return _terrain_part(x, y, z, phi, psi, f, fp, ip, ops, rows, stack, bound)


def _terrain_part(x, y, z, phi, psi, f, fp, ip, ops, rows, stack, bound):
    raise NotImplementedError("compiled-only helper")


@overload(_terrain_part, inline="always")
def _terrain_part_impl(x, y, z, phi, psi, f, fp, ip, ops, rows, stack, bound):
    if isinstance(ops, types.NoneType):
        return lambda x, y, z, phi, psi, f, fp, ip, ops, rows, stack, bound: f
    return lambda x, y, z, phi, psi, f, fp, ip, ops, rows, stack, bound: _terrain_terms(
        x, y, z, phi, psi, f, fp, ip, ops, rows, stack, bound
    )


@njit(cache=True, nogil=True)
def _terrain_terms(x, y, z, phi, psi, f, fp, ip, ops, rows, stack, bound):
    """Fold the three terrain components into ``f`` (kept out of line: the other tasks never need it)."""
    t = fp[8] * abs(terrain(ops, rows, stack, x, y, z))
    if t > f:
        f = t
    if f >= bound:
        return f
    # components 4 and 5 are -w * min(H); stop sampling once they reach the bound
    w4 = fp[9]
    stop4 = -bound / w4 if math.isfinite(bound) else -math.inf
    seg = segment_clearance(ops, rows, stack, fp[11], fp[12], fp[13], x, y, z, ip[5], ip[7], stop4)
    t = -w4 * seg
    if t > f:
        f = t
    if f >= bound:
        return f
    w5 = fp[10]
    stop5 = -bound / w5 if math.isfinite(bound) else -math.inf
    arc = trajectory_clearance(ops, rows, stack, fp[0], phi, psi, math.sqrt(x * x + y * y), ip[6], ip[7], stop5)
    t = -w5 * arc
    if t > f:
        f = t
    return f


@njit(cache=True, nogil=True)
def residual(x, y, z, fp, ip, g1p, g2p, ops, rows, stack, bound):
    """Residual F at (x, y, z).

    Exact whenever the result is below ``bound``; otherwise the returned value
    is only guaranteed to be ``>= bound`` (expensive components are skipped).
    Unreachable points give +inf.
    """
    f, i = _unpack(fp, ip)
    return _residual(x, y, z, f, i, g1p, g2p, ops, rows, stack, bound)


@njit(cache=True, nogil=True, inline="always")
def in_reach(fp, ip, x, y, z):
    r2 = x * x + y * y
    if x < fp[1] or r2 > fp[3] * fp[3]:
        return False
    if ip[0] == TASK_PLANAR:
        return True
    v2 = fp[0]
    # the envelope test is written as the elevation radicand so that every
    # member of W has a real elevation, including under rounding
    return fp[2] <= z and v2 * v2 - (r2 + 2.0 * v2 * z) >= 0.0


@njit(cache=True, nogil=True)
def _insert(top_f, top_a, top_b, f, a, b):
    k = top_f.shape[0] - 1
    while k > 0 and f < top_f[k - 1]:
        top_f[k] = top_f[k - 1]
        top_a[k] = top_a[k - 1]
        top_b[k] = top_b[k - 1]
        k -= 1
    top_f[k] = f
    top_a[k] = a
    top_b[k] = b


@njit(cache=True, nogil=True)
def circle_argmin(mx, my, radius, n, levels, n_seeds, prev, fp, ip, g1p, g2p, ops, rows, stack):
    """Minimise F over the circle ``|X - M| = radius`` intersected with W.

    A uniform grid of ``n`` angles is scanned in index order (ties keep the
    first index); the ``n_seeds`` best samples and the direction ``prev`` (if
    finite) are then refined by successive local grids.  Returns
    ``(F, x, y, angle, n_inside)``; ``n_inside == 0`` means the grid missed W.
    """
    fpt, ipt = _unpack(fp, ip)
    top_f = np.full(n_seeds, math.inf)
    top_a = np.zeros(n_seeds)
    top_b = np.zeros(n_seeds)
    n_inside = 0
    h = _TWO_PI / n
    for i in range(n):
        a = i * h
        x = mx + radius * math.cos(a)
        y = my + radius * math.sin(a)
        if not in_reach(fpt, ipt, x, y, 0.0):
            continue
        n_inside += 1
        f = _residual(x, y, 0.0, fpt, ipt, g1p, g2p, ops, rows, stack, top_f[n_seeds - 1])
        if f < top_f[n_seeds - 1]:
            _insert(top_f, top_a, top_b, f, a, 0.0)
    if n_inside == 0:
        return math.inf, math.nan, math.nan, math.nan, 0
    best_f = top_f[0]
    best_a = top_a[0]
    n_cand = n_seeds + 1
    for s in range(n_cand):
        if s < n_seeds:
            if not math.isfinite(top_f[s]):
                continue
            ca = top_a[s]
            cf = top_f[s]
        else:
            if not math.isfinite(prev):
                continue
            ca = prev
            x = mx + radius * math.cos(ca)
            y = my + radius * math.sin(ca)
            if not in_reach(fpt, ipt, x, y, 0.0):
                continue
            cf = _residual(x, y, 0.0, fpt, ipt, g1p, g2p, ops, rows, stack, math.inf)
            if cf < best_f:
                best_f = cf
                best_a = ca
        half = h
        for _ in range(levels):
            step = half / 4.0
            na = ca
            for k in range(-4, 5):
                if k == 0:
                    continue
                a = ca + k * step
                x = mx + radius * math.cos(a)
                y = my + radius * math.sin(a)
                if not in_reach(fpt, ipt, x, y, 0.0):
                    continue
                f = _residual(x, y, 0.0, fpt, ipt, g1p, g2p, ops, rows, stack, cf)
                if f < cf:
                    cf = f
                    na = a
            ca = na
            half = step
        if cf < best_f:
            best_f = cf
            best_a = ca
    return best_f, mx + radius * math.cos(best_a), my + radius * math.sin(best_a), best_a, n_inside


@njit(cache=True, nogil=True)
def _sphere_point(mx, my, mz, radius, th, al):
    st = math.sin(th)
    return mx + radius * st * math.cos(al), my + radius * st * math.sin(al), mz + radius * math.cos(th)


@njit(cache=True, nogil=True)
def sphere_argmin(mx, my, mz, radius, n_theta, n_alpha, levels, n_seeds, prev_th, prev_al,
                  fp, ip, g1p, g2p, ops, rows, stack):
    """Minimise F over the sphere ``|X - M| = radius`` intersected with W.

    Spherical coordinates: polar angle ``th`` from +z, azimuth ``al``.  Same
    scan / refine scheme as ``circle_argmin``.  Returns
    ``(F, x, y, z, th, al, n_inside)``.
    """
    fpt, ipt = _unpack(fp, ip)
    top_f = np.full(n_seeds, math.inf)
    top_a = np.zeros(n_seeds)
    top_b = np.zeros(n_seeds)
    n_inside = 0
    ht = math.pi / n_theta
    ha = _TWO_PI / n_alpha
    # the grid angles are the same on every call, so their sines are tabulated
    sin_a = np.empty(n_alpha)
    cos_a = np.empty(n_alpha)
    for k in range(n_alpha):
        sin_a[k] = math.sin(k * ha)
        cos_a[k] = math.cos(k * ha)
    spatial = ipt[0] != TASK_PLANAR
    for i in range(n_theta):
        th = (i + 0.5) * ht
        z = mz + radius * math.cos(th)
        if spatial and z < fpt[2]:
            continue
        rs = radius * math.sin(th)
        for k in range(n_alpha):
            x = mx + rs * cos_a[k]
            y = my + rs * sin_a[k]
            if not in_reach(fpt, ipt, x, y, z):
                continue
            n_inside += 1
            f = _residual(x, y, z, fpt, ipt, g1p, g2p, ops, rows, stack, top_f[n_seeds - 1])
            if f < top_f[n_seeds - 1]:
                _insert(top_f, top_a, top_b, f, th, k * ha)
    if n_inside == 0:
        return math.inf, math.nan, math.nan, math.nan, math.nan, math.nan, 0
    best_f = top_f[0]
    best_t = top_a[0]
    best_a = top_b[0]
    for s in range(n_seeds + 1):
        if s < n_seeds:
            if not math.isfinite(top_f[s]):
                continue
            ct = top_a[s]
            ca = top_b[s]
            cf = top_f[s]
        else:
            if not (math.isfinite(prev_th) and math.isfinite(prev_al)):
                continue
            ct = prev_th
            ca = prev_al
            x, y, z = _sphere_point(mx, my, mz, radius, ct, ca)
            if not in_reach(fpt, ipt, x, y, z):
                continue
            cf = _residual(x, y, z, fpt, ipt, g1p, g2p, ops, rows, stack, math.inf)
            if cf < best_f:
                best_f = cf
                best_t = ct
                best_a = ca
        half_t = ht
        half_a = ha
        loc_st = np.empty(7)
        loc_ct = np.empty(7)
        loc_sa = np.empty(7)
        loc_ca = np.empty(7)
        for _ in range(levels):
            st = half_t / 3.0
            sa = half_a / 3.0
            nt = ct
            na = ca
            for p in range(7):
                loc_st[p] = math.sin(ct + (p - 3) * st)
                loc_ct[p] = math.cos(ct + (p - 3) * st)
                loc_sa[p] = math.sin(ca + (p - 3) * sa)
                loc_ca[p] = math.cos(ca + (p - 3) * sa)
            for p in range(-3, 4):
                z = mz + radius * loc_ct[p + 3]
                if spatial and z < fpt[2]:
                    continue
                rs = radius * loc_st[p + 3]
                for q in range(-3, 4):
                    if p == 0 and q == 0:
                        continue
                    th = ct + p * st
                    al = ca + q * sa
                    x = mx + rs * loc_ca[q + 3]
                    y = my + rs * loc_sa[q + 3]
                    if not in_reach(fpt, ipt, x, y, z):
                        continue
                    f = _residual(x, y, z, fpt, ipt, g1p, g2p, ops, rows, stack, cf)
                    if f < cf:
                        cf = f
                        nt = th
                        na = al
            ct = nt
            ca = na
            half_t = st
            half_a = sa
        if cf < best_f:
            best_f = cf
            best_t = ct
            best_a = ca
    x, y, z = _sphere_point(mx, my, mz, radius, best_t, best_a)
    return best_f, x, y, z, best_t, best_a, n_inside


@njit(cache=True, nogil=True)
def residual_many(points, fp, ip, g1p, g2p, ops, rows, stack):
    fpt, ipt = _unpack(fp, ip)
    out = np.empty(points.shape[0])
    for i in range(points.shape[0]):
        z = points[i, 2] if points.shape[1] > 2 else 0.0
        out[i] = _residual(points[i, 0], points[i, 1], z, fpt, ipt, g1p, g2p, ops, rows, stack, math.inf)
    return out
