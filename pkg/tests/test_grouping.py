import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon

from groupnav.grouping import (
    Group,
    GroupingConfig,
    boundary_distance,
    cluster_groups,
    complete_group_history,
    group_space,
    group_spaces,
    personal_space,
    point_in_polygon,
    polygon_area,
    shrink_until_outside,
    singleton_groups,
)
from groupnav.world import AgentState, AugmentedAgentState, WorldSnapshot

CFG = GroupingConfig()


def aug(i, x, y, heading=0.0, speed=0.0):
    v = (speed * math.cos(heading), speed * math.sin(heading))
    return AugmentedAgentState(i, (x, y), heading, speed, v)


def brute_force_groups(states, cfg):
    # union-find over the pairwise predicate, written without numpy
    parent = list(range(len(states)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, a in enumerate(states):
        for j, b in enumerate(states):
            d = math.dist(a.position, b.position)
            dh = abs(a.heading - b.heading) % (2 * math.pi)
            dh = min(dh, 2 * math.pi - dh)
            if d <= cfg.eps_s and dh <= cfg.eps_theta and abs(a.speed - b.speed) <= cfg.eps_v:
                parent[find(i)] = find(j)
    comps = {}
    for i, s in enumerate(states):
        comps.setdefault(find(i), set()).add(s.id)
    return sorted(tuple(sorted(c)) for c in comps.values())


def random_states(rng, n):
    return [
        aug(i, *rng.uniform(0, 6, 2), heading=rng.uniform(0, 2 * math.pi), speed=rng.uniform(0, 2.5))
        for i in rng.permutation(40)[:n].tolist()
    ]


def test_single_agent_is_a_group():
    assert cluster_groups([aug(3, 0, 0)], CFG) == [Group(3, frozenset({3}))]


def test_two_close_agents_group():
    a = aug(0, 0, 0, 0.0, 1.0)
    b = aug(1, 1, 0, math.radians(10), 1.2)
    (g,) = cluster_groups([a, b], CFG)
    assert g.members == {0, 1}


def test_heading_wraparound_neighbours():
    cfg = GroupingConfig(eps_theta=0.02)
    a = aug(0, 0, 0, 0.01, 1.0)
    b = aug(1, 0.5, 0, 2 * math.pi - 0.01, 1.0)
    assert len(cluster_groups([a, b], cfg)) == 1


def test_matches_union_find_oracle():
    rng = np.random.default_rng(11)
    for _ in range(300):
        states = random_states(rng, int(rng.integers(1, 11)))
        got = sorted(tuple(sorted(g.members)) for g in cluster_groups(states, CFG))
        assert got == brute_force_groups(states, CFG)


def test_labels_are_smallest_member():
    rng = np.random.default_rng(2)
    for _ in range(50):
        for g in cluster_groups(random_states(rng, 8), CFG):
            assert g.label == min(g.members)


def test_order_and_translation_invariance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        states = random_states(rng, 9)
        base = cluster_groups(states, CFG)
        shuffled = [states[i] for i in rng.permutation(len(states))]
        assert cluster_groups(shuffled, CFG) == base
        off = rng.uniform(-100, 100, 2)
        moved = [aug(s.id, s.position[0] + off[0], s.position[1] + off[1], s.heading, s.speed) for s in states]
        assert [g.members for g in cluster_groups(moved, CFG)] == [g.members for g in base]


def test_snapshot_input_matches_state_list():
    snap = WorldSnapshot(0, [0, 1, 2], [(0, 0), (1, 0), (9, 9)], [(1, 0), (1, 0.1), (0, 1)])
    assert cluster_groups(snap, CFG) == cluster_groups(snap.agents, CFG)
    assert [g.label for g in singleton_groups(snap)] == [0, 1, 2]


# -- personal space -----------------------------------------------------------------


def test_boundary_closed_forms():
    assert boundary_distance(0.0, 1.0, 0.35) == pytest.approx(math.sqrt(1.4), abs=1e-12)
    assert math.sqrt(1.4) == pytest.approx(1.18322, abs=1e-5)
    assert boundary_distance(math.pi, 1.0, 0.35) == pytest.approx(0.83666, abs=1e-5)
    assert boundary_distance(0.0, 0.0, 0.35) == pytest.approx(0.59161, abs=1e-5)


def test_boundary_cardinal_directions_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        v, C = rng.uniform(0, 3), rng.uniform(0.05, 1)
        sf = max(2 * v, 0.5)
        ss, sr = 2 * sf / 3, sf / 2
        got = boundary_distance(np.array([0, math.pi / 2, math.pi, 3 * math.pi / 2]), v, C)
        want = np.sqrt(2 * C * np.array([sf, ss, sr, ss]))
        np.testing.assert_allclose(got, want, atol=1e-9)


def test_boundary_is_continuous():
    phi = np.linspace(0, 2 * math.pi, 361)
    for v in np.linspace(0, 2, 21):
        L = boundary_distance(phi, v, 0.35)
        assert np.max(np.abs(np.diff(L))) < 0.01


@given(st.floats(0, 3), st.floats(0.01, 1), st.floats(0, 2 * math.pi))
def test_boundary_scales_with_sqrt_c(v, C, phi):
    assert boundary_distance(phi, v, 2 * C) == pytest.approx(math.sqrt(2) * boundary_distance(phi, v, C), rel=1e-12)


def test_personal_space_samples_sit_on_boundary():
    q = aug(0, 1.0, -2.0, heading=1.1, speed=1.3)
    ps = personal_space(q, 0.35, 64)
    rel = ps.boundary - np.array(q.position)
    r = np.hypot(*rel.T)
    bearing = np.arctan2(rel[:, 1], rel[:, 0]) - q.heading
    np.testing.assert_allclose(r, boundary_distance(bearing, q.speed, 0.35), atol=1e-9)
    assert ps.sigma_f == pytest.approx(2.6)


# -- group space -------------------------------------------------------------------------


def test_singleton_hull_contains_agent():
    q = aug(0, 3.0, 4.0)
    gs = group_space(Group(0, frozenset({0})), [q], CFG)
    assert point_in_polygon(q.position, gs.polygon)


def test_pair_hull_larger_than_each_space():
    a, b = aug(0, 0, 0, 0.5, 1.0), aug(1, 2, 0, 0.5, 1.0)
    gs = group_space(Group(0, frozenset({0, 1})), [a, b], CFG)
    assert point_in_polygon(a.position, gs.polygon) and point_in_polygon(b.position, gs.polygon)
    for q in (a, b):
        assert polygon_area(gs.polygon) > polygon_area(personal_space(q, CFG.C).boundary)


def _random_group(rng):
    n = int(rng.integers(1, 6))
    c, h = rng.uniform(-5, 5, 2), rng.uniform(0, 2 * math.pi)
    return [aug(i, *(c + rng.normal(0, 0.8, 2)), heading=h + rng.normal(0, 0.2), speed=rng.uniform(0, 2)) for i in range(n)]


def test_hull_contains_members_and_samples():
    rng = np.random.default_rng(9)
    for _ in range(200):
        states = _random_group(rng)
        g = Group(0, frozenset(s.id for s in states))
        poly = Polygon(group_space(g, states, CFG).polygon).buffer(1e-9)
        for s in states:
            assert poly.contains(Point(s.position))
            for p in personal_space(s, CFG.C, CFG.boundary_samples).boundary:
                assert poly.contains(Point(p))


def test_hull_monotone_in_c():
    rng = np.random.default_rng(10)
    for _ in range(200):
        states = _random_group(rng)
        g = Group(0, frozenset(s.id for s in states))
        big = Polygon(group_space(g, states, CFG, C=0.35).polygon).buffer(1e-9)
        small = group_space(g, states, CFG, C=0.175).polygon
        assert all(big.contains(Point(p)) for p in small)


def test_hull_is_counter_clockwise_and_convex():
    rng = np.random.default_rng(12)
    for _ in range(50):
        states = _random_group(rng)
        poly = group_space(Group(0, frozenset(s.id for s in states)), states, CFG).polygon
        e = np.roll(poly, -1, axis=0) - poly
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        assert np.all(cross > -1e-12)
        assert polygon_area(poly) > 0


# -- shrinking -----------------------------------------------------------------------------


def test_shrink_noop_when_outside():
    states = [aug(0, 0, 0)]
    groups = cluster_groups(states, CFG)
    spaces = group_spaces(groups, states, CFG)
    out, C = shrink_until_outside(spaces, AgentState(-1, (5.0, 5.0)), groups, states, CFG)
    assert C == CFG.C and out is spaces


def test_shrink_exits_at_analytic_scale():
    states = [aug(0, 0, 0)]
    groups = cluster_groups(states, CFG)
    spaces = group_spaces(groups, states, CFG)
    out, C = shrink_until_outside(spaces, AgentState(-1, (0.3, 0.0)), groups, states, CFG)
    # boundary ahead is sqrt(2 C 0.5); it drops below 0.3 only once C < 0.09
    assert C == pytest.approx(0.05)
    assert not point_in_polygon((0.3, 0.0), out[0].polygon)


def test_shrink_terminates_when_robot_on_agent():
    states = [aug(0, 0, 0)]
    groups = cluster_groups(states, CFG)
    spaces = group_spaces(groups, states, CFG)
    out, C = shrink_until_outside(spaces, AgentState(-1, (0.0, 0.0)), groups, states, CFG)
    assert C == pytest.approx(CFG.C_min)
    assert point_in_polygon((0.0, 0.0), out[0].polygon)


# -- history completion ------------------------------------------------------------------------


def test_full_history_matches_direct_spaces():
    dt, h = 0.1, 4
    track = {0: np.array([[0.1 * k, 0.0] for k in range(h)]), 1: np.array([[0.1 * k, 1.0] for k in range(h)])}
    vel = {0: np.array([1.0, 0.0]), 1: np.array([1.0, 0.0])}
    g = Group(0, frozenset({0, 1}))
    seq = complete_group_history([g], track, vel, h, dt, CFG, end_index=10)[0]
    assert [s.time_index for s in seq.spaces] == [7, 8, 9, 10]
    for k, sp in enumerate(seq.spaces):
        states = [aug(i, *track[i][k], heading=0.0, speed=1.0) for i in (0, 1)]
        np.testing.assert_allclose(sp.polygon, group_space(g, states, CFG).polygon, atol=1e-9)


def test_partial_history_back_propagates():
    dt, h = 0.1, 8
    hist = {0: np.array([[2.0, 3.0]])}
    vel = {0: np.array([1.0, 0.0])}
    seq = complete_group_history([Group(0, frozenset({0}))], hist, vel, h, dt, CFG)[0]
    for k, sp in enumerate(seq.spaces):
        back = h - 1 - k
        expect = aug(0, 2.0 - 0.1 * back, 3.0, 0.0, 1.0)
        np.testing.assert_allclose(sp.polygon, group_space(Group(0, frozenset({0})), [expect], CFG).polygon, atol=1e-9)


def test_mixed_history_hulls_contain_members():
    dt, h = 0.1, 8
    full = np.array([[0.1 * k, 0.0] for k in range(h)])
    partial = np.array([[0.5, 0.8], [0.6, 0.8]])
    vel = {0: np.array([1.0, 0.0]), 1: np.array([1.0, 0.0])}
    seq = complete_group_history([Group(0, frozenset({0, 1}))], {0: full, 1: partial}, vel, h, dt, CFG)[0]
    for k, sp in enumerate(seq.spaces):
        poly = Polygon(sp.polygon)
        assert poly.contains(Point(full[k]))
        p1 = partial[0] - np.array([0.1, 0]) * (h - 2 - k) if k < h - 2 else partial[k - (h - 2)]
        assert poly.contains(Point(p1))
