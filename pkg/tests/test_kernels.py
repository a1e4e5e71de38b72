import math

import numpy as np
import pytest
from shapely.geometry import MultiPoint, Point, Polygon

from groupnav import kernels
from groupnav.kernels import numpy_impl

try:
    from groupnav.kernels import numba_impl
except ImportError:  # numba missing: only the numpy path is testable
    numba_impl = None

needs_numba = pytest.mark.skipif(numba_impl is None, reason="numba not installed")
IMPLS = [pytest.param(numpy_impl, id="numpy"), pytest.param(numba_impl, id="numba", marks=needs_numba)]


def random_convex(rng, center=(0, 0), spread=1.0):
    while True:
        pts = np.asarray(center) + rng.normal(0, spread, size=(int(rng.integers(3, 12)), 2))
        hull = MultiPoint([tuple(p) for p in pts]).convex_hull
        if hull.geom_type == "Polygon" and hull.area > 1e-3:
            break
    c = np.array(hull.exterior.coords)[:-1]
    return c if hull.exterior.is_ccw else c[::-1]


@pytest.mark.parametrize("impl", IMPLS)
def test_hull_matches_shapely(impl):
    rng = np.random.default_rng(0)
    for _ in range(200):
        pts = rng.normal(size=(int(rng.integers(3, 60)), 2))
        hull = kernels.convex_hull(pts, impl=impl)
        ref = MultiPoint([tuple(p) for p in pts]).convex_hull
        assert Polygon(hull).area == pytest.approx(ref.area, rel=1e-12)
        assert len(hull) == len(ref.exterior.coords) - 1


def test_degenerate_hull_is_inflated():
    for pts in (np.zeros((1, 2)), np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])):
        hull = kernels.convex_hull(pts)
        assert len(hull) == 3 and Polygon(hull).area > 0
        assert np.allclose(hull.mean(axis=0), pts.mean(axis=0))


@pytest.mark.parametrize("impl", IMPLS)
def test_signed_distance_matches_shapely(impl):
    rng = np.random.default_rng(1)
    polys = [random_convex(rng, rng.uniform(-3, 3, 2)) for _ in range(5)]
    v, c = kernels.pack_polygons(polys)
    pts = rng.uniform(-5, 5, size=(400, 2))
    sd = kernels.polygon_signed_distance(pts, v, c, impl=impl)
    for g, poly in enumerate(polys):
        P = Polygon(poly)
        for p, d in zip(pts, sd[:, g]):
            ref = P.exterior.distance(Point(p))
            assert abs(d) == pytest.approx(ref, abs=1e-12)
            assert (d < 0) == P.contains(Point(p)) or ref < 1e-12


@pytest.mark.parametrize("impl", IMPLS)
def test_rasterize_matches_cell_center_test(impl):
    rng = np.random.default_rng(2)
    for _ in range(20):
        poly = random_convex(rng)
        mask = kernels.rasterize_polygon(poly, -4.0, -4.0, 0.1, 80, 80, impl=impl)
        P = Polygon(poly)
        xs = -4.0 + (np.arange(80) + 0.5) * 0.1
        ref = np.array([[P.contains(Point(x, y)) for x in xs] for y in xs])
        boundary = np.array([[P.exterior.distance(Point(x, y)) < 1e-9 for x in xs] for y in xs])
        assert np.array_equal(mask[~boundary], ref[~boundary])


@pytest.mark.parametrize("impl", IMPLS)
def test_raycast_analytic(impl):
    angles = np.array([0.0, math.pi / 2, math.pi])
    r = kernels.raycast_circles(np.zeros(2), angles, np.array([[5.0, 0.0], [0.0, 3.0]]), 0.5, 40.0, impl=impl)
    assert r[0] == pytest.approx(4.5) and r[1] == pytest.approx(2.5) and math.isinf(r[2])
    r = kernels.raycast_circles(np.zeros(2), angles[:1], np.array([[50.0, 0.0]]), 0.5, 40.0, impl=impl)
    assert math.isinf(r[0])


@needs_numba
def test_backends_agree_on_random_inputs():
    rng = np.random.default_rng(3)
    pos = rng.normal(size=(6, 2))
    head = rng.uniform(0, 2 * math.pi, 6)
    speed = rng.uniform(0, 2, 6)
    a = kernels.personal_space_points(pos, head, speed, 0.35, 64, impl=numpy_impl)
    b = kernels.personal_space_points(pos, head, speed, 0.35, 64, impl=numba_impl)
    np.testing.assert_allclose(a, b, atol=1e-12)
    frames = [[random_convex(rng, rng.uniform(-2, 2, 2)) for _ in range(int(rng.integers(0, 4)))] for _ in range(8)]
    v, c = kernels.pack_polygons(frames, shape_prefix=(8,))
    states = rng.uniform(-3, 3, size=(50, 8, 2))
    for x, y in zip(
        kernels.rollout_clearance(states, v, c, impl=numpy_impl), kernels.rollout_clearance(states, v, c, impl=numba_impl)
    ):
        np.testing.assert_allclose(x, y, atol=1e-12)
    centers = rng.uniform(-10, 10, size=(15, 2))
    angles = np.linspace(-2, 2, 300)
    np.testing.assert_allclose(
        kernels.raycast_circles(np.zeros(2), angles, centers, 0.5, 40, impl=numpy_impl),
        kernels.raycast_circles(np.zeros(2), angles, centers, 0.5, 40, impl=numba_impl),
        atol=1e-12,
    )


def test_rollout_clearance_semantics():
    sq = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    big = sq * 3
    v, c = kernels.pack_polygons([[sq, big]], shape_prefix=(1,))
    # inside both: the containing polygon with the nearest boundary decides
    d, inside = kernels.rollout_clearance(np.array([[[0.5, 0.0]]]), v, c)
    assert inside[0, 0] and d[0, 0] == pytest.approx(-0.5)
    v0, c0 = kernels.pack_polygons([[]], shape_prefix=(1,))
    d, inside = kernels.rollout_clearance(np.array([[[0.5, 0.0]]]), v0, c0)
    assert math.isinf(d[0, 0]) and not inside[0, 0]


def test_backend_flag_is_reported():
    assert kernels.BACKEND in {"numba", "numpy"}
