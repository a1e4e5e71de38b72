"""Geometry kernels with a numba path and a pure-numpy fallback.

The backend is fixed at import time. Set ``GROUPNAV_DISABLE_NUMBA=1`` to force
the numpy implementations (useful for debugging and for machines without a
working LLVM). Both backends are importable directly for comparison as
``groupnav.kernels.numpy_impl`` and ``groupnav.kernels.numba_impl``.
"""

import os

import numpy as np

from . import numpy_impl

_disabled = os.environ.get("GROUPNAV_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError("numba disabled by GROUPNAV_DISABLE_NUMBA")
    from . import numba_impl as _impl

    BACKEND = "numba"
except ImportError:
    _impl = numpy_impl
    BACKEND = "numpy"

HULL_EPS = 1e-3


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def convex_hull(points, impl=None):
    """Counterclockwise convex hull of 2D points.

    Degenerate input (a point, or collinear points) is replaced by a small
    triangle of circumradius ``HULL_EPS`` around the points' mean so every
    hull has positive area.
    """
    impl = impl or _impl
    pts = _f64(points).reshape(-1, 2)
    hull = impl.convex_hull(pts)
    if hull.shape[0] >= 3:
        return hull
    center = pts.mean(axis=0) if pts.shape[0] else np.zeros(2)
    ang = np.array([np.pi / 2, np.pi / 2 + 2 * np.pi / 3, np.pi / 2 + 4 * np.pi / 3])
    return center + HULL_EPS * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def personal_space_points(positions, headings, speeds, scale, n_samples, impl=None):
    """Boundary samples of each agent's personal space, shape (N, n_samples, 2)."""
    impl = impl or _impl
    return impl.personal_space_points(
        _f64(positions).reshape(-1, 2),
        _f64(headings).reshape(-1),
        _f64(speeds).reshape(-1),
        float(scale),
        int(n_samples),
    )


def pack_polygons(polygons, shape_prefix=()):
    """Pad a nested list of (V, 2) polygons into (..., G, Vmax, 2) + counts.

    ``polygons`` is a list of polygons, or (with ``shape_prefix=(K,)``) a list
    of K such lists.
    """
    if shape_prefix:
        n_outer = shape_prefix[0]
        n_poly = max((len(p) for p in polygons), default=0)
        vmax = max((len(v) for frame in polygons for v in frame), default=1)
        verts = np.zeros((n_outer, max(n_poly, 1), max(vmax, 1), 2))
        counts = np.zeros((n_outer, max(n_poly, 1)), dtype=np.int64)
        for k, frame in enumerate(polygons):
            for g, v in enumerate(frame):
                verts[k, g, : len(v)] = v
                counts[k, g] = len(v)
        return verts, counts
    vmax = max((len(v) for v in polygons), default=1)
    verts = np.zeros((len(polygons), max(vmax, 1), 2))
    counts = np.zeros(len(polygons), dtype=np.int64)
    for g, v in enumerate(polygons):
        verts[g, : len(v)] = v
        counts[g] = len(v)
    return verts, counts


def polygon_signed_distance(points, vertices, counts, impl=None):
    """Signed distance from each point to each convex CCW polygon, shape (P, G).

    Negative strictly inside, positive outside, zero on the boundary.
    """
    impl = impl or _impl
    return impl.polygon_signed_distance(
        _f64(points).reshape(-1, 2), _f64(vertices), np.ascontiguousarray(counts, dtype=np.int64)
    )


def rollout_clearance(states, vertices, counts, impl=None):
    """Per-waypoint group clearance for a batch of rollouts.

    ``states`` is (M, K, 2); ``vertices``/``counts`` are (K, G, V, 2)/(K, G)
    with zero counts marking absent polygons. Returns ``(clearance, inside)``
    of shape (M, K): outside every polygon the clearance is the distance to
    the nearest one; inside, it is minus the boundary distance of the
    containing polygon with the nearest boundary. No polygons gives +inf.
    """
    impl = impl or _impl
    return impl.rollout_clearance(
        _f64(states), _f64(vertices), np.ascontiguousarray(counts, dtype=np.int64)
    )


def rasterize_polygon(vertices, x0, y0, resolution, nx, ny, impl=None):
    """Boolean (ny, nx) mask of cells whose centers fall inside the polygon."""
    impl = impl or _impl
    return impl.rasterize_polygon(_f64(vertices).reshape(-1, 2), float(x0), float(y0), float(resolution), int(nx), int(ny))


def raycast_circles(origin, angles, centers, radius, max_range, impl=None):
    """Nearest hit range of each ray against equal-radius circles; inf for no return."""
    impl = impl or _impl
    return impl.raycast_circles(
        _f64(origin).reshape(2), _f64(angles).reshape(-1), _f64(centers).reshape(-1, 2), float(radius), float(max_range)
    )


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    hull = convex_hull(pts)
    personal_space_points(pts[:1], [0.0], [1.0], 0.35, 8)
    v, c = pack_polygons([hull])
    polygon_signed_distance(pts, v, c)
    vk, ck = pack_polygons([[hull]], shape_prefix=(1,))
    rollout_clearance(pts[None, :1], vk, ck)
    rasterize_polygon(hull, 0.0, 0.0, 0.5, 2, 2)
    raycast_circles(np.zeros(2), np.zeros(1), pts[1:2], 0.5, 10.0)
