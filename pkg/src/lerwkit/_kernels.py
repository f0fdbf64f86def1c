"""Compiled inner loops.

Lattice kernels work on a rectangular box of integer coordinates shifted by
``(ox, oy)``.  Boolean masks mark region membership; the box carries a margin
of at least one maximal step so a walk that leaves a mask is still indexable.
``grid`` arrays hold ``stack index + 1`` for points on a loop-erased path and
zero elsewhere; kernels that fill them leave them filled and ``clear_stack``
resets them.

Random numbers come from the per-thread generator of the compiled runtime,
seeded by :func:`seed_numba` at the start of every chunk of work.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

_OPTS = dict(nogil=True, cache=True)

STATUS_HIT = 0
STATUS_ESCAPED = 1
STATUS_TRUNCATED = -1


@njit(**_OPTS)
def seed_numba(seed):
    np.random.seed(seed)


@njit(**_OPTS)
def _draw(cdf):
    u = np.random.random()
    i = 0
    n = cdf.shape[0]
    while i < n - 1 and u >= cdf[i]:
        i += 1
    return i


@njit(**_OPTS)
def uniforms(n):
    out = np.empty(n)
    for i in range(n):
        out[i] = np.random.random()
    return out


@njit(**_OPTS)
def normals(n):
    out = np.empty(n)
    for i in range(n):
        out[i] = np.random.standard_normal()
    return out


# ---------------------------------------------------------------- lattice walks


@njit(**_OPTS)
def run_walk_mask(x0, y0, mask, ox, oy, outside_value, stop_when, sx, sy, cdf, cap, px, py):
    """Walk from ``(x0, y0)`` until the first ``j >= 1`` with ``mask(S_j) == stop_when``.

    Points outside the box read as ``outside_value``.  Returns ``(length, truncated)``
    where ``length`` counts steps; ``px, py`` receive ``length + 1`` points.
    """
    W = mask.shape[0]
    H = mask.shape[1]
    x = x0
    y = y0
    px[0] = x
    py[0] = y
    j = 0
    while j < cap:
        s = _draw(cdf)
        x += sx[s]
        y += sy[s]
        j += 1
        px[j] = x
        py[j] = y
        ix = x + ox
        iy = y + oy
        if 0 <= ix < W and 0 <= iy < H:
            v = mask[ix, iy]
        else:
            v = outside_value
        if v == stop_when:
            return j, False
    return j, True


@njit(**_OPTS)
def lerw_exit(x0, y0, inside, ox, oy, sx, sy, cdf, cap, grid, px, py):
    """Loop-erased walk from ``(x0, y0)`` stopped at the first exit of ``inside``.

    Loops are erased on the fly; the erased path is left in ``px[:k+1]`` and
    ``grid``.  Returns ``(k, steps, truncated)`` with ``k`` the number of
    erased-path steps and ``steps`` the number of walk steps.
    """
    x = x0
    y = y0
    k = 0
    px[0] = x
    py[0] = y
    grid[x + ox, y + oy] = 1
    steps = 0
    while True:
        if steps >= cap:
            return k, steps, True
        s = _draw(cdf)
        nx = x + sx[s]
        ny = y + sy[s]
        steps += 1
        if nx == x and ny == y:
            continue
        g = grid[nx + ox, ny + oy]
        if g > 0:
            while k > g - 1:
                grid[px[k] + ox, py[k] + oy] = 0
                k -= 1
        else:
            k += 1
            px[k] = nx
            py[k] = ny
            grid[nx + ox, ny + oy] = k + 1
        x = nx
        y = ny
        if not inside[nx + ox, ny + oy]:
            return k, steps, False


@njit(**_OPTS)
def clear_stack(grid, ox, oy, px, py, k):
    for i in range(k + 1):
        grid[px[i] + ox, py[i] + oy] = 0


@njit(**_OPTS)
def fill_stack(grid, ox, oy, px, py, k):
    for i in range(k + 1):
        grid[px[i] + ox, py[i] + oy] = i + 1


@njit(**_OPTS)
def avoid_walk(x0, y0, inside, ox, oy, sx, sy, cdf, cap, grid, lo, hi, record, wx, wy):
    """Walk from ``(x0, y0)`` until it exits ``inside`` or hits the marked window.

    A hit is a time ``j >= 1`` at which ``grid - 1`` lies in ``[lo, hi]``.  The
    exit point itself is tested for a hit first.  Returns ``(status, steps)``;
    when ``record`` is set the trajectory goes to ``wx, wy`` (size ``cap + 1``).
    """
    x = x0
    y = y0
    if record:
        wx[0] = x
        wy[0] = y
    j = 0
    while j < cap:
        s = _draw(cdf)
        x += sx[s]
        y += sy[s]
        j += 1
        if record:
            wx[j] = x
            wy[j] = y
        g = grid[x + ox, y + oy] - 1
        if g >= lo and g <= hi:
            return STATUS_HIT, j
        if not inside[x + ox, y + oy]:
            return STATUS_ESCAPED, j
    return STATUS_TRUNCATED, j


@njit(**_OPTS)
def avoid_walk_until_enter(x0, y0, inside, target, ox, oy, sx, sy, cdf, cap, grid, lo, hi, wx, wy):
    """Walk until it enters ``target`` (success), hits the window, or leaves ``inside``.

    Returns ``(status, steps)`` with ``STATUS_ESCAPED`` meaning the target was
    reached first and ``-2`` meaning the walk left ``inside``.
    """
    x = x0
    y = y0
    wx[0] = x
    wy[0] = y
    j = 0
    while j < cap:
        s = _draw(cdf)
        x += sx[s]
        y += sy[s]
        j += 1
        wx[j] = x
        wy[j] = y
        g = grid[x + ox, y + oy] - 1
        if g >= lo and g <= hi:
            return STATUS_HIT, j
        if target[x + ox, y + oy]:
            return STATUS_ESCAPED, j
        if not inside[x + ox, y + oy]:
            return -2, j
    return STATUS_TRUNCATED, j


@njit(**_OPTS)
def _qdist2(dx, dy, q11, q12, q22):
    return q11 * dx * dx + 2.0 * q12 * dx * dy + q22 * dy * dy


@njit(**_OPTS)
def walk_scan(x0, y0, inside, ox, oy, sx, sy, cdf, cap, grid, stop_at, tx, ty, q11, q12, q22):
    """Walk until it exits ``inside`` while tracking the largest marked index seen.

    The walk also stops once that index reaches ``stop_at``.  Tracks the least
    normalized squared distance from ``S[0..]`` to ``(tx, ty)``.  Returns
    ``(status, steps, max_index, tip_d2, x, y)`` with ``status`` 1 for an exit,
    0 for an early stop and -1 for truncation; ``max_index`` is -1 when no
    marked point was visited.
    """
    x = x0
    y = y0
    best = -1
    d2 = _qdist2(x - tx, y - ty, q11, q12, q22)
    j = 0
    while j < cap:
        s = _draw(cdf)
        x += sx[s]
        y += sy[s]
        j += 1
        g = grid[x + ox, y + oy] - 1
        if g > best:
            best = g
        e = _qdist2(x - tx, y - ty, q11, q12, q22)
        if e < d2:
            d2 = e
        if best >= stop_at:
            return 0, j, best, d2, x, y
        if not inside[x + ox, y + oy]:
            return 1, j, best, d2, x, y
    return -1, j, best, d2, x, y


@njit(**_OPTS)
def conditioned_scan(x0, y0, h, target, ox, oy, sx, sy, pr, cap, grid, lo, hi, tx, ty, q11, q12, q22):
    """``h``-transformed chain until it enters ``target``, failing on the marked window.

    The start point counts: a chain that begins on the window fails at once.
    Returns ``(status, steps, tip_d2, x, y)`` with ``status`` 1 when the
    target is reached first, 0 on a window hit and -1 on truncation.
    """
    x = x0
    y = y0
    d2 = _qdist2(x - tx, y - ty, q11, q12, q22)
    g = grid[x + ox, y + oy] - 1
    if g >= lo and g <= hi:
        return 0, 0, d2, x, y
    if target[x + ox, y + oy]:
        return 1, 0, d2, x, y
    j = 0
    while j < cap:
        s = conditioned_step(x, y, h, ox, oy, sx, sy, pr)
        x += sx[s]
        y += sy[s]
        j += 1
        e = _qdist2(x - tx, y - ty, q11, q12, q22)
        if e < d2:
            d2 = e
        g = grid[x + ox, y + oy] - 1
        if g >= lo and g <= hi:
            return 0, j, d2, x, y
        if target[x + ox, y + oy]:
            return 1, j, d2, x, y
    return -1, j, d2, x, y


@njit(**_OPTS)
def conditioned_step(x, y, h, ox, oy, sx, sy, pr):
    hx = h[x + ox, y + oy]
    u = np.random.random() * hx
    acc = 0.0
    last = -1
    for s in range(sx.shape[0]):
        w = pr[s] * h[x + sx[s] + ox, y + sy[s] + oy]
        if w > 0:
            last = s
            acc += w
            if u < acc:
                return s
    return last


@njit(**_OPTS)
def conditioned_walk_kernel(x0, y0, h, target, ox, oy, sx, sy, pr, cap, px, py):
    """Sample the ``h``-transformed chain until it enters ``target``.

    ``h`` must vanish off the region the chain may visit; returns ``(length, truncated)``.
    """
    x = x0
    y = y0
    px[0] = x
    py[0] = y
    if target[x + ox, y + oy]:
        return 0, False
    j = 0
    while j < cap:
        s = conditioned_step(x, y, h, ox, oy, sx, sy, pr)
        x += sx[s]
        y += sy[s]
        j += 1
        px[j] = x
        py[j] = y
        if target[x + ox, y + oy]:
            return j, False
    return j, True


@njit(**_OPTS)
def conditioned_lerw(x0, y0, h, target, ox, oy, sx, sy, pr, cap, grid, px, py):
    """Loop erasure, on the fly, of the ``h``-transformed chain stopped on ``target``."""
    x = x0
    y = y0
    k = 0
    px[0] = x
    py[0] = y
    grid[x + ox, y + oy] = 1
    steps = 0
    if target[x + ox, y + oy]:
        return 0, 0, False
    while steps < cap:
        s = conditioned_step(x, y, h, ox, oy, sx, sy, pr)
        nx = x + sx[s]
        ny = y + sy[s]
        steps += 1
        if nx == x and ny == y:
            continue
        g = grid[nx + ox, ny + oy]
        if g > 0:
            while k > g - 1:
                grid[px[k] + ox, py[k] + oy] = 0
                k -= 1
        else:
            k += 1
            px[k] = nx
            py[k] = ny
            grid[nx + ox, ny + oy] = k + 1
        x = nx
        y = ny
        if target[nx + ox, ny + oy]:
            return k, steps, False
    return k, steps, True


@njit(**_OPTS)
def loop_erase_kernel(px, py, n, ox, oy, grid, outx, outy):
    """Chronological loop erasure of ``px[:n], py[:n]``; returns output length."""
    k = -1
    for i in range(n):
        x = px[i]
        y = py[i]
        g = grid[x + ox, y + oy]
        if g > 0:
            while k > g - 1:
                grid[outx[k] + ox, outy[k] + oy] = 0
                k -= 1
        else:
            k += 1
            outx[k] = x
            outy[k] = y
            grid[x + ox, y + oy] = k + 1
    for i in range(k + 1):
        grid[outx[i] + ox, outy[i] + oy] = 0
    return k + 1


# ----------------------------------------------------------- continuum geometry


@njit(**_OPTS)
def _seg_dist2(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    L = dx * dx + dy * dy
    t = 0.0
    if L > 0:
        t = ((px - ax) * dx + (py - ay) * dy) / L
        if t < 0:
            t = 0.0
        elif t > 1:
            t = 1.0
    qx = ax + t * dx - px
    qy = ay + t * dy - py
    return qx * qx + qy * qy


@njit(**_OPTS)
def polyline_dist(x, y, cx, cy, n):
    if n == 1:
        return math.sqrt((x - cx[0]) ** 2 + (y - cy[0]) ** 2)
    best = np.inf
    for i in range(n - 1):
        d = _seg_dist2(x, y, cx[i], cy[i], cx[i + 1], cy[i + 1])
        if d < best:
            best = d
    return math.sqrt(best)


@njit(**_OPTS)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(**_OPTS)
def segments_intersect(ax, ay, bx, by, cx, cy, dx, dy, eps):
    """Closed-segment intersection test, with an ``eps`` tube for touching cases."""
    if (max(ax, bx) < min(cx, dx) - eps or max(cx, dx) < min(ax, bx) - eps
            or max(ay, by) < min(cy, dy) - eps or max(cy, dy) < min(ay, by) - eps):
        return False
    d1 = _orient(cx, cy, dx, dy, ax, ay)
    d2 = _orient(cx, cy, dx, dy, bx, by)
    d3 = _orient(ax, ay, bx, by, cx, cy)
    d4 = _orient(ax, ay, bx, by, dx, dy)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    e2 = eps * eps
    if _seg_dist2(ax, ay, cx, cy, dx, dy) <= e2 or _seg_dist2(bx, by, cx, cy, dx, dy) <= e2:
        return True
    if _seg_dist2(cx, cy, ax, ay, bx, by) <= e2 or _seg_dist2(dx, dy, ax, ay, bx, by) <= e2:
        return True
    return False


@njit(**_OPTS)
def wos_escape(cx, cy, n, eps, max_steps):
    """Walk-on-spheres Brownian motion from 0 in the unit disk against a polyline.

    Returns 1 if it reaches the unit circle (within ``eps``) before coming
    within ``eps`` of the polyline, 0 otherwise, and -1 if out of steps.
    """
    x = 0.0
    y = 0.0
    for _ in range(max_steps):
        r = 1.0 - math.sqrt(x * x + y * y)
        if r < eps:
            return 1
        d = polyline_dist(x, y, cx, cy, n)
        if d < eps:
            return 0
        rad = min(r, d)
        a = 2.0 * math.pi * np.random.random()
        x += rad * math.cos(a)
        y += rad * math.sin(a)
    return -1


@njit(**_OPTS)
def wos_escape_many(cx, cy, n, eps, max_steps, m):
    hits = 0
    esc = 0
    lost = 0
    for _ in range(m):
        s = wos_escape(cx, cy, n, eps, max_steps)
        if s == 1:
            esc += 1
        elif s == 0:
            hits += 1
        else:
            lost += 1
    return esc, lost


@njit(**_OPTS)
def scaled_walk_avoids(sx, sy, cdf, scale, emb, cx, cy, n, eps, cap):
    """Rescaled lattice walk from 0 until its normalized position leaves the unit disk.

    ``emb`` maps integer coordinates to the normalized plane; positions are
    divided by ``scale``.  The linearly interpolated trajectory is tested
    against the polyline.  Returns 1 (avoided), 0 (hit) or -1 (truncated).
    """
    x = 0
    y = 0
    fx = 0.0
    fy = 0.0
    for _ in range(cap):
        s = _draw(cdf)
        x += sx[s]
        y += sy[s]
        gx = (emb[0, 0] * x + emb[0, 1] * y) / scale
        gy = (emb[1, 0] * x + emb[1, 1] * y) / scale
        for i in range(n - 1):
            if segments_intersect(fx, fy, gx, gy, cx[i], cy[i], cx[i + 1], cy[i + 1], eps):
                return 0
        if gx * gx + gy * gy >= 1.0:
            return 1
        fx = gx
        fy = gy
    return -1


@njit(**_OPTS)
def brownian_path_avoids(cx, cy, n, dt, eps, cap):
    """Gaussian-increment Brownian polyline from 0 to the unit circle vs a polyline."""
    fx = 0.0
    fy = 0.0
    sd = math.sqrt(dt)
    for _ in range(cap):
        gx = fx + sd * np.random.standard_normal()
        gy = fy + sd * np.random.standard_normal()
        for i in range(n - 1):
            if segments_intersect(fx, fy, gx, gy, cx[i], cy[i], cx[i + 1], cy[i + 1], eps):
                return 0
        if gx * gx + gy * gy >= 1.0:
            return 1
        fx = gx
        fy = gy
    return -1


@njit(**_OPTS)
def discrete_frechet(ax, ay, bx, by):
    n = ax.shape[0]
    m = bx.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for i in range(n):
        for j in range(m):
            d = math.sqrt((ax[i] - bx[j]) ** 2 + (ay[i] - by[j]) ** 2)
            if i == 0 and j == 0:
                c = d
            elif i == 0:
                c = max(cur[j - 1], d)
            elif j == 0:
                c = max(prev[0], d)
            else:
                c = max(min(prev[j], prev[j - 1], cur[j - 1]), d)
            cur[j] = c
        for j in range(m):
            prev[j] = cur[j]
    return prev[m - 1]


# ------------------------------------------------------------ radial Loewner


@njit(**_OPTS)
def _koebe(z):
    return z / ((1.0 + z) * (1.0 + z))


@njit(**_OPTS)
def _koebe_inv(zeta):
    if zeta == 0:
        return 0j
    s = np.sqrt(1.0 - 4.0 * zeta)
    z = 2.0 * zeta / (1.0 - 2.0 * zeta + s)
    if abs(z) > 1.0:
        z = 1.0 / z
    return z


@njit(**_OPTS)
def slit_map(z, u, delta):
    """Radial slit map of capacity ``delta`` at the boundary point ``u``."""
    return u * _koebe_inv(math.exp(delta) * _koebe(z / u))


@njit(**_OPTS)
def slit_map_inv(w, u, delta):
    return u * _koebe_inv(math.exp(-delta) * _koebe(w / u))


@njit(**_OPTS)
def trace_tips(angles, dt, r_stop, kmax):
    """Tips ``gamma(t_k)`` for a piecewise-constant driver, up to ``kmax`` steps.

    Stops after the first tip with modulus ``<= r_stop``; returns ``(tips, count)``.
    """
    n = min(kmax, angles.shape[0] - 1)
    tips = np.empty(n + 1, dtype=np.complex128)
    us = np.empty(angles.shape[0], dtype=np.complex128)
    for i in range(angles.shape[0]):
        us[i] = complex(math.cos(angles[i]), math.sin(angles[i]))
    tips[0] = us[0]
    for k in range(1, n + 1):
        z = tip_at(us, dt, k)
        tips[k] = z
        if abs(z) <= r_stop:
            return tips, k + 1
    return tips, n + 1


@njit(**_OPTS)
def tip_at(us, dt, k):
    """``gamma(t_k)`` by composing the inverse slit maps of steps ``k..1``."""
    if k == 0:
        return us[0]
    z = us[k - 1]
    for j in range(k, 0, -1):
        z = slit_map_inv(z, us[j - 1], dt)
    return z


@njit(**_OPTS)
def tip_scan(angles, dt, radii, stride, kmax):
    """First steps at which the tip enters each disk ``|z| <= radii[i]`` (radii decreasing).

    Tips are evaluated every ``stride`` steps; once a coarse tip is inside a
    disk the preceding ``stride`` steps are scanned one by one.  Returns
    ``(first, tips, count)`` where ``first[i]`` is -1 if never reached and
    ``tips[:count]`` holds the coarse tips (step indices ``0, stride, ...``).
    """
    n = min(kmax, angles.shape[0] - 1)
    us = np.empty(angles.shape[0], dtype=np.complex128)
    for i in range(angles.shape[0]):
        us[i] = complex(math.cos(angles[i]), math.sin(angles[i]))
    nr = radii.shape[0]
    first = np.full(nr, -1, dtype=np.int64)
    tips = np.empty(n // stride + 2, dtype=np.complex128)
    tips[0] = us[0]
    count = 1
    cur = 0
    k = stride
    prev = 0
    while k <= n and cur < nr:
        z = tip_at(us, dt, k)
        tips[count] = z
        count += 1
        while cur < nr and abs(z) <= radii[cur]:
            found = k
            for kk in range(prev + 1, k):
                if abs(tip_at(us, dt, kk)) <= radii[cur]:
                    found = kk
                    break
            first[cur] = found
            cur += 1
        prev = k
        k += stride
    return first, tips, count


@njit(**_OPTS)
def free_arc_length(angles, dt, nsteps):
    """Total length of unit-circle arcs that are images of the original boundary.

    Arcs are ``(start, length)`` in absolute angle; under each slit map the
    arc containing the driver is split and every endpoint flows away from the
    driver.  The returned array holds the free length after each step.
    """
    cap = 4 * nsteps + 8
    st = np.empty(cap)
    ln = np.empty(cap)
    m = 1
    st[0] = angles[0]
    ln[0] = 2.0 * math.pi
    out = np.empty(nsteps + 1)
    out[0] = 2.0 * math.pi
    c = math.exp(-dt / 2.0)
    two_pi = 2.0 * math.pi
    nst = np.empty(cap)
    nln = np.empty(cap)
    for k in range(1, nsteps + 1):
        a = angles[k - 1]
        q = 0
        for i in range(m):
            s0 = (st[i] - a) % two_pi
            e0 = s0 + ln[i]
            if e0 > two_pi:
                pieces_s = (s0, 0.0)
                pieces_e = (two_pi, e0 - two_pi)
                npieces = 2
            else:
                pieces_s = (s0, 0.0)
                pieces_e = (e0, 0.0)
                npieces = 1
            for p in range(npieces):
                ps = pieces_s[p]
                pe = pieces_e[p]
                ns = 2.0 * math.acos(c * math.cos(ps / 2.0))
                ne = 2.0 * math.acos(c * math.cos(pe / 2.0))
                if ne - ns > 1e-15:
                    nst[q] = a + ns
                    nln[q] = ne - ns
                    q += 1
        total = 0.0
        for i in range(q):
            st[i] = nst[i]
            ln[i] = nln[i]
            total += nln[i]
        m = q
        out[k] = total
    return out


@njit(**_OPTS)
def _loewner_rhs(g, u):
    return g * (u + g) / (u - g)


@njit(**_OPTS)
def forward_flow_kernel(z, angles, dt, swallow_tol, min_step):
    """Integrate the radial Loewner equation for one point with RK4.

    Within each driver interval the step is the remaining time capped at
    ``0.05 |U - g|^2``, the local time scale of the singular field.  Returns
    ``(values at grid times, swallow time or -1, status)``; status 1 flags an
    exhausted step size.
    """
    n = angles.shape[0] - 1
    out = np.empty(n + 1, dtype=np.complex128)
    out[:] = np.nan
    g = z
    out[0] = g
    t = 0.0
    for k in range(n):
        u = complex(math.cos(angles[k]), math.sin(angles[k]))
        t_end = (k + 1) * dt
        while t < t_end - 1e-15:
            d = abs(u - g)
            if d < swallow_tol:
                return out, t, 0
            h = min(t_end - t, 0.05 * d * d)
            if h < min_step:
                return out, t, 1
            k1 = _loewner_rhs(g, u)
            k2 = _loewner_rhs(g + 0.5 * h * k1, u)
            k3 = _loewner_rhs(g + 0.5 * h * k2, u)
            k4 = _loewner_rhs(g + h * k3, u)
            g = g + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        t = t_end
        out[k + 1] = g
    return out, -1.0, 0
