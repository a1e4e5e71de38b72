"""Loop kernels compiled with numba. Mirrors ``numpy_impl`` one-to-one."""

import math

import numpy as np
from numba import njit

HALF_PI = 0.5 * math.pi


@njit(cache=True)
def convex_hull(points):
    n = points.shape[0]
    if n == 0:
        return np.empty((0, 2))
    order = np.argsort(points[:, 1], kind="mergesort")
    xs = np.empty(n)
    for i in range(n):
        xs[i] = points[order[i], 0]
    order2 = np.argsort(xs, kind="mergesort")
    pts = np.empty((n, 2))
    for i in range(n):
        j = order[order2[i]]
        pts[i, 0] = points[j, 0]
        pts[i, 1] = points[j, 1]
    hull = np.empty((2 * n, 2))
    k = 0
    for i in range(n):
        while k >= 2:
            cr = (hull[k - 1, 0] - hull[k - 2, 0]) * (pts[i, 1] - hull[k - 2, 1]) - (
                hull[k - 1, 1] - hull[k - 2, 1]
            ) * (pts[i, 0] - hull[k - 2, 0])
            if cr <= 0.0:
                k -= 1
            else:
                break
        hull[k, 0] = pts[i, 0]
        hull[k, 1] = pts[i, 1]
        k += 1
    t = k + 1
    for i in range(n - 2, -1, -1):
        while k >= t:
            cr = (hull[k - 1, 0] - hull[k - 2, 0]) * (pts[i, 1] - hull[k - 2, 1]) - (
                hull[k - 1, 1] - hull[k - 2, 1]
            ) * (pts[i, 0] - hull[k - 2, 0])
            if cr <= 0.0:
                k -= 1
            else:
                break
        hull[k, 0] = pts[i, 0]
        hull[k, 1] = pts[i, 1]
        k += 1
    return hull[: max(k - 1, 0)].copy()


@njit(cache=True)
def personal_space_points(positions, headings, speeds, scale, n_samples):
    n_agents = positions.shape[0]
    out = np.empty((n_agents, n_samples, 2))
    for a in range(n_agents):
        sf = max(2.0 * speeds[a], 0.5)
        ss = 2.0 * sf / 3.0
        sr = sf / 2.0
        for k in range(n_samples):
            phi = 2.0 * math.pi * k / n_samples
            quad = min(int(phi // HALF_PI), 3)
            gamma = phi - quad * HALF_PI
            if quad == 0:
                s1, s2 = sf, ss
            elif quad == 1:
                s1, s2 = ss, sr
            elif quad == 2:
                s1, s2 = sr, ss
            else:
                s1, s2 = ss, sf
            cg = math.cos(gamma)
            sg = math.sin(gamma)
            length = math.sqrt(scale / (cg * cg / (2.0 * s1) + sg * sg / (2.0 * s2)))
            ang = headings[a] + phi
            out[a, k, 0] = positions[a, 0] + length * math.cos(ang)
            out[a, k, 1] = positions[a, 1] + length * math.sin(ang)
    return out


@njit(cache=True)
def _signed_distance(px, py, vertices, count):
    best = np.inf
    inside = True
    for i in range(count):
        ax = vertices[i, 0]
        ay = vertices[i, 1]
        j = i + 1 if i + 1 < count else 0
        ex = vertices[j, 0] - ax
        ey = vertices[j, 1] - ay
        rx = px - ax
        ry = py - ay
        elen2 = ex * ex + ey * ey
        t = 0.0
        if elen2 > 0.0:
            t = (rx * ex + ry * ey) / elen2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        dx = rx - t * ex
        dy = ry - t * ey
        d = math.sqrt(dx * dx + dy * dy)
        if d < best:
            best = d
        if ex * ry - ey * rx <= 0.0:
            inside = False
    return -best if inside else best


@njit(cache=True)
def polygon_signed_distance(points, vertices, counts):
    n_pts = points.shape[0]
    n_poly = counts.shape[0]
    out = np.empty((n_pts, n_poly))
    for p in range(n_pts):
        for g in range(n_poly):
            out[p, g] = _signed_distance(points[p, 0], points[p, 1], vertices[g], counts[g])
    return out


@njit(cache=True)
def rollout_clearance(states, vertices, counts):
    n_roll = states.shape[0]
    n_step = states.shape[1]
    n_poly = counts.shape[1]
    clearance = np.full((n_roll, n_step), np.inf)
    inside = np.zeros((n_roll, n_step), dtype=np.bool_)
    for m in range(n_roll):
        for k in range(n_step):
            out_best = np.inf
            in_best = -np.inf
            hit = False
            for g in range(n_poly):
                if counts[k, g] == 0:
                    continue
                sd = _signed_distance(states[m, k, 0], states[m, k, 1], vertices[k, g], counts[k, g])
                if sd < 0.0:
                    hit = True
                    if sd > in_best:
                        in_best = sd
                elif sd < out_best:
                    out_best = sd
            if hit:
                clearance[m, k] = in_best
                inside[m, k] = True
            else:
                clearance[m, k] = out_best
    return clearance, inside


@njit(cache=True)
def rasterize_polygon(vertices, x0, y0, resolution, nx, ny):
    # scanline even-odd: each crossing toggles every cell center left of it
    mask = np.zeros((ny, nx), dtype=np.bool_)
    flips = np.zeros(nx + 1, dtype=np.bool_)
    m = vertices.shape[0]
    for r in range(ny):
        py = y0 + (r + 0.5) * resolution
        flips[:] = False
        hit = False
        for i in range(m):
            x1 = vertices[i, 0]
            y1 = vertices[i, 1]
            j = i + 1 if i + 1 < m else 0
            x2 = vertices[j, 0]
            y2 = vertices[j, 1]
            if y1 == y2 or (y1 > py) == (y2 > py):
                continue
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            # number of columns whose center satisfies px < xc
            n = int(np.ceil((xc - x0) / resolution - 0.5))
            n = min(max(n, 0), nx)
            while n > 0 and not (x0 + (n - 0.5) * resolution < xc):
                n -= 1
            while n < nx and x0 + (n + 0.5) * resolution < xc:
                n += 1
            if n > 0:
                flips[0] = not flips[0]
                flips[n] = not flips[n]
                hit = True
        if hit:
            odd = False
            for c in range(nx):
                if flips[c]:
                    odd = not odd
                mask[r, c] = odd
    return mask


@njit(cache=True)
def raycast_circles(origin, angles, centers, radius, max_range):
    n_rays = angles.shape[0]
    out = np.full(n_rays, np.inf)
    r2 = radius * radius
    for a in range(n_rays):
        dx = math.cos(angles[a])
        dy = math.sin(angles[a])
        best = np.inf
        for c in range(centers.shape[0]):
            rx = centers[c, 0] - origin[0]
            ry = centers[c, 1] - origin[1]
            b = dx * rx + dy * ry
            disc = b * b - (rx * rx + ry * ry - r2)
            if disc < 0.0:
                continue
            root = math.sqrt(disc)
            t = b - root
            if t <= 0.0:
                t = b + root
                if t <= 0.0:
                    continue
            if t < best:
                best = t
        if best <= max_range:
            out[a] = best
    return out
