"""Pure-numpy kernels. Same signatures and semantics as ``numba_impl``."""

import numpy as np

HALF_PI = 0.5 * np.pi


def convex_hull(points):
    """Monotone-chain hull, counterclockwise, collinear points dropped.

    Returns an empty or short array for degenerate input; callers inflate.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        return np.empty((0, 2))
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    n = pts.shape[0]
    hull = np.empty((2 * n, 2))
    k = 0
    for i in range(n):
        px, py = pts[i]
        while k >= 2:
            ax, ay = hull[k - 2]
            bx, by = hull[k - 1]
            if (bx - ax) * (py - ay) - (by - ay) * (px - ax) <= 0.0:
                k -= 1
            else:
                break
        hull[k] = pts[i]
        k += 1
    t = k + 1
    for i in range(n - 2, -1, -1):
        px, py = pts[i]
        while k >= t:
            ax, ay = hull[k - 2]
            bx, by = hull[k - 1]
            if (bx - ax) * (py - ay) - (by - ay) * (px - ax) <= 0.0:
                k -= 1
            else:
                break
        hull[k] = pts[i]
        k += 1
    return hull[: max(k - 1, 0)].copy()


def personal_space_points(positions, headings, speeds, scale, n_samples):
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    headings = np.asarray(headings, dtype=np.float64).reshape(-1)
    speeds = np.asarray(speeds, dtype=np.float64).reshape(-1)
    phi = 2.0 * np.pi * np.arange(n_samples) / n_samples
    quad = np.minimum((phi // HALF_PI).astype(np.int64), 3)
    gamma = phi - quad * HALF_PI
    sf = np.maximum(2.0 * speeds, 0.5)
    ss = 2.0 * sf / 3.0
    sr = sf / 2.0
    sig1 = np.stack([sf, ss, sr, ss], axis=1)[:, quad]
    sig2 = np.stack([ss, sr, ss, sf], axis=1)[:, quad]
    cg = np.cos(gamma)
    sg = np.sin(gamma)
    length = np.sqrt(scale / (cg * cg / (2.0 * sig1) + sg * sg / (2.0 * sig2)))
    ang = headings[:, None] + phi[None, :]
    out = np.empty((positions.shape[0], n_samples, 2))
    out[..., 0] = positions[:, 0:1] + length * np.cos(ang)
    out[..., 1] = positions[:, 1:2] + length * np.sin(ang)
    return out


def polygon_signed_distance(points, vertices, counts):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n_poly = counts.shape[0]
    out = np.empty((points.shape[0], n_poly))
    for g in range(n_poly):
        a = vertices[g, : counts[g]]
        e = np.roll(a, -1, axis=0) - a
        rel = points[:, None, :] - a[None, :, :]
        elen2 = np.einsum("ej,ej->e", e, e)
        safe = np.where(elen2 > 0.0, elen2, 1.0)
        t = np.clip(np.einsum("pej,ej->pe", rel, e) / safe, 0.0, 1.0)
        t = np.where(elen2 > 0.0, t, 0.0)
        diff = rel - t[..., None] * e[None, :, :]
        dist = np.sqrt(np.einsum("pej,pej->pe", diff, diff)).min(axis=1)
        cross = e[None, :, 0] * rel[..., 1] - e[None, :, 1] * rel[..., 0]
        inside = (cross > 0.0).all(axis=1)
        out[:, g] = np.where(inside, -dist, dist)
    return out


def rollout_clearance(states, vertices, counts):
    n_roll, n_step = states.shape[0], states.shape[1]
    clearance = np.full((n_roll, n_step), np.inf)
    inside = np.zeros((n_roll, n_step), dtype=np.bool_)
    for k in range(n_step):
        valid = counts[k] > 0
        if not valid.any():
            continue
        sd = polygon_signed_distance(states[:, k], vertices[k][valid], counts[k][valid])
        neg = sd < 0.0
        any_in = neg.any(axis=1)
        deepest_exit = np.where(neg, sd, -np.inf).max(axis=1)
        clearance[:, k] = np.where(any_in, deepest_exit, sd.min(axis=1))
        inside[:, k] = any_in
    return clearance, inside


def rasterize_polygon(vertices, x0, y0, resolution, nx, ny):
    xs = x0 + (np.arange(nx) + 0.5) * resolution
    ys = y0 + (np.arange(ny) + 0.5) * resolution
    px = xs[None, :]
    py = ys[:, None]
    mask = np.zeros((ny, nx), dtype=np.bool_)
    v = np.asarray(vertices, dtype=np.float64)
    m = v.shape[0]
    for i in range(m):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % m]
        if y1 == y2:
            continue
        straddles = (y1 > py) != (y2 > py)
        xcross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        mask ^= straddles & (px < xcross)
    return mask


def raycast_circles(origin, angles, centers, radius, max_range):
    angles = np.asarray(angles, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    if centers.shape[0] == 0:
        return np.full(angles.shape[0], np.inf)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    rel = centers - np.asarray(origin, dtype=np.float64)[None, :]
    b = dirs @ rel.T
    c = np.einsum("cj,cj->c", rel, rel) - radius * radius
    disc = b * b - c[None, :]
    root = np.sqrt(np.maximum(disc, 0.0))
    near = b - root
    far = b + root
    t = np.where(near > 0.0, near, np.where(far > 0.0, far, np.inf))
    t = np.where(disc >= 0.0, t, np.inf)
    ranges = t.min(axis=1)
    return np.where(ranges <= max_range, ranges, np.inf)
