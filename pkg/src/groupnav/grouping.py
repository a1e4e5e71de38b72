"""Social grouping: motion-aware clustering, personal spaces, group hulls."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .world import AgentState, AugmentedAgentState, WorldSnapshot, wrap_heading

HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class GroupingConfig:
    eps_s: float = 2.0
    eps_theta: float = math.radians(30.0)
    eps_v: float = 1.0
    C: float = 0.35
    C_min: float = 0.05
    C_step: float = 0.1
    boundary_samples: int = 64

    def __post_init__(self):
        if min(self.eps_s, self.eps_theta, self.eps_v) <= 0:
            raise ValueError("clustering thresholds must be positive")
        if not (0 < self.C_min <= self.C) or self.C_step <= 0:
            raise ValueError("need 0 < C_min <= C and C_step > 0")
        if self.boundary_samples < 8:
            raise ValueError("boundary_samples must be >= 8")


@dataclass(frozen=True)
class Group:
    label: int
    members: frozenset[int]

    def __post_init__(self):
        if not self.members:
            raise ValueError("a group needs at least one member")


@dataclass(frozen=True, eq=False)
class PersonalSpace:
    agent_id: int
    boundary: np.ndarray
    sigma_f: float
    sigma_s: float
    sigma_r: float


@dataclass(frozen=True, eq=False)
class GroupSpace:
    label: int
    polygon: np.ndarray
    member_ids: frozenset[int]
    time_index: int = 0

    def translated(self, offset, time_index=None) -> "GroupSpace":
        poly = self.polygon + np.asarray(offset, dtype=float)
        return replace(self, polygon=poly, time_index=self.time_index if time_index is None else time_index)


@dataclass(frozen=True)
class GroupSpaceSequence:
    label: int
    spaces: tuple[GroupSpace, ...]

    def __post_init__(self):
        idx = [s.time_index for s in self.spaces]
        if any(b != a + 1 for a, b in zip(idx, idx[1:])):
            raise ValueError("group space sequence must have contiguous time indices")

    def __len__(self):
        return len(self.spaces)

    @property
    def polygons(self) -> list[np.ndarray]:
        return [s.polygon for s in self.spaces]


# -- array views --------------------------------------------------------------


def _arrays(states):
    """(ids, positions, headings, speeds, velocities) from snapshot or state list."""
    if isinstance(states, WorldSnapshot):
        return states.ids, states.positions, states.headings, states.speeds, states.velocities
    if isinstance(states, Mapping):
        states = list(states.values())
    states = list(states)
    if not states:
        e = np.empty((0, 2))
        return np.empty(0, np.int64), e, np.empty(0), np.empty(0), e
    ids = np.array([s.id for s in states], dtype=np.int64)
    pos = np.array([s.position for s in states], dtype=float)
    head = np.array([s.heading for s in states], dtype=float)
    speed = np.array([s.speed for s in states], dtype=float)
    vel = np.array([s.velocity for s in states], dtype=float)
    return ids, pos, head, speed, vel


def heading_difference(a, b):
    """Circular distance between headings, in [0, pi]."""
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), 2 * math.pi))
    return np.minimum(d, 2 * math.pi - d)


def neighbor_matrix(positions, headings, speeds, cfg: GroupingConfig) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    dtheta = heading_difference(headings[:, None], headings[None, :])
    dv = np.abs(speeds[:, None] - speeds[None, :])
    return (dist <= cfg.eps_s) & (dtheta <= cfg.eps_theta) & (dv <= cfg.eps_v)


def cluster_groups(states, cfg: GroupingConfig) -> list[Group]:
    """DBSCAN with minPts=1 over (position, heading, speed).

    Two agents are neighbours when all three per-dimension thresholds hold;
    with minPts=1 every agent is a core point, so groups are the connected
    components of the neighbour graph. Each group is labelled by its smallest
    member id and the list is sorted by label.
    """
    ids, pos, head, speed, _ = _arrays(states)
    if len(ids) == 0:
        return []
    adj = neighbor_matrix(pos, head, speed, cfg)
    _, comp = connected_components(csr_matrix(adj), directed=False)
    groups = {}
    for aid, c in zip(ids.tolist(), comp.tolist()):
        groups.setdefault(c, []).append(aid)
    out = [Group(min(m), frozenset(m)) for m in groups.values()]
    return sorted(out, key=lambda g: g.label)


def singleton_groups(states) -> list[Group]:
    ids = _arrays(states)[0]
    return [Group(int(i), frozenset([int(i)])) for i in sorted(ids.tolist())]


# -- personal space -------------------------------------------------------------


def personal_space_sigmas(speed):
    sf = np.maximum(2.0 * np.asarray(speed, dtype=float), 0.5)
    return sf, 2.0 * sf / 3.0, sf / 2.0


def boundary_distance(phi, speed, C):
    """Distance from the agent to its personal-space boundary at relative bearing ``phi``."""
    phi = np.mod(np.asarray(phi, dtype=float), 2 * math.pi)
    sf, ss, sr = personal_space_sigmas(speed)
    quad = np.minimum((phi // HALF_PI).astype(int), 3)
    gamma = phi - quad * HALF_PI
    s1 = np.choose(quad, [sf, ss, sr, ss])
    s2 = np.choose(quad, [ss, sr, ss, sf])
    return np.sqrt(C / (np.cos(gamma) ** 2 / (2 * s1) + np.sin(gamma) ** 2 / (2 * s2)))


def personal_space(q: AugmentedAgentState, C: float, n: int = 64) -> PersonalSpace:
    if C <= 0 or n < 8:
        raise ValueError("need C > 0 and n >= 8")
    pts = kernels.personal_space_points([q.position], [q.heading], [q.speed], C, n)[0]
    sf, ss, sr = (float(s) for s in personal_space_sigmas(q.speed))
    return PersonalSpace(q.id, pts, sf, ss, sr)


def _hull_from_arrays(pos, head, speed, C, n):
    pts = kernels.personal_space_points(pos, head, speed, C, n)
    return kernels.convex_hull(pts.reshape(-1, 2))


def group_space(group: Group, states, cfg: GroupingConfig, C: float | None = None, time_index: int = 0) -> GroupSpace:
    """Convex hull of every member's personal-space boundary samples."""
    ids, pos, head, speed, _ = _arrays(states)
    index = {int(i): k for k, i in enumerate(ids)}
    try:
        rows = [index[m] for m in sorted(group.members)]
    except KeyError as exc:
        raise KeyError(f"group member {exc.args[0]} missing from states") from None
    poly = _hull_from_arrays(pos[rows], head[rows], speed[rows], cfg.C if C is None else C, cfg.boundary_samples)
    return GroupSpace(group.label, poly, group.members, time_index)


def group_spaces(groups: Sequence[Group], states, cfg: GroupingConfig, C: float | None = None, time_index: int = 0):
    return [group_space(g, states, cfg, C, time_index) for g in groups]


def point_in_polygon(point, polygon, strict=True) -> bool:
    v, c = kernels.pack_polygons([polygon])
    sd = kernels.polygon_signed_distance(np.asarray(point, float).reshape(1, 2), v, c)[0, 0]
    return sd < 0 if strict else sd <= 0


def shrink_until_outside(spaces, robot: AgentState, groups, states, cfg: GroupingConfig, time_index: int = 0):
    """Rebuild group spaces with a smaller scale until the robot is outside all.

    Returns ``(spaces, effective_C)``. At ``C_min`` the robot may still be
    inside; the spaces are then returned as built.
    """
    C = cfg.C
    robot_xy = np.asarray(robot.position, dtype=float)

    def robot_inside(sp):
        if not sp:
            return False
        v, c = kernels.pack_polygons([s.polygon for s in sp])
        return bool((kernels.polygon_signed_distance(robot_xy, v, c) < 0).any())

    while robot_inside(spaces) and C > cfg.C_min:
        C = max(C - cfg.C_step, cfg.C_min)
        spaces = group_spaces(groups, states, cfg, C, time_index)
    return spaces, C


# -- partial history completion ---------------------------------------------------


def complete_tracks(agent_histories: Mapping[int, np.ndarray], velocities: Mapping[int, np.ndarray], h: int, dt: float):
    """Extend each agent's trailing position history to exactly ``h`` frames.

    Histories shorter than ``h`` are back-propagated at constant velocity,
    using the earliest finite-difference velocity when two or more positions
    are known and the supplied current velocity otherwise.
    """
    out = {}
    for aid, hist in agent_histories.items():
        hist = np.asarray(hist, dtype=float).reshape(-1, 2)[-h:]
        m = len(hist)
        if m == 0:
            raise ValueError(f"agent {aid} has no observed state")
        if m < h:
            if m >= 2:
                u = (hist[1] - hist[0]) / dt
            else:
                u = np.asarray(velocities.get(aid, (0.0, 0.0)), dtype=float)
            back = hist[0] - u[None, :] * dt * np.arange(h - m, 0, -1)[:, None]
            hist = np.vstack([back, hist])
        out[aid] = hist
    return out


def complete_group_history(
    current_groups: Sequence[Group],
    agent_histories: Mapping[int, np.ndarray],
    velocities: Mapping[int, np.ndarray],
    h: int,
    dt: float,
    cfg: GroupingConfig,
    C: float | None = None,
    end_index: int = 0,
) -> dict[int, GroupSpaceSequence]:
    """Group-space histories of length ``h`` ending at ``end_index``.

    Past membership is taken to be the current membership. Members with
    partial histories are back-propagated by ``complete_tracks``. Per-frame
    velocities come from differencing the completed tracks.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    C = cfg.C if C is None else C
    members = sorted({m for g in current_groups for m in g.members})
    tracks = complete_tracks({m: agent_histories[m] for m in members}, velocities, h, dt)
    vel = {}
    for m, tr in tracks.items():
        if h >= 2:
            v = np.empty_like(tr)
            v[1:] = (tr[1:] - tr[:-1]) / dt
            v[0] = v[1]
        else:
            v = np.asarray(velocities.get(m, (0.0, 0.0)), dtype=float).reshape(1, 2)
        vel[m] = v
    out = {}
    for g in current_groups:
        ms = sorted(g.members)
        spaces = []
        for k in range(h):
            pos = np.array([tracks[m][k] for m in ms])
            vv = np.array([vel[m][k] for m in ms])
            speed = np.hypot(vv[:, 0], vv[:, 1])
            head = np.where(speed > 0, wrap_heading(np.arctan2(vv[:, 1], vv[:, 0])), 0.0)
            poly = _hull_from_arrays(pos, head, speed, C, cfg.boundary_samples)
            spaces.append(GroupSpace(g.label, poly, g.members, end_index - h + 1 + k))
        out[g.label] = GroupSpaceSequence(g.label, tuple(spaces))
    return out


def histories_from_snapshots(snapshots: Sequence[WorldSnapshot], ids) -> tuple[dict, dict]:
    """Trailing contiguous position history and current velocity per agent id."""
    hist, vel = {}, {}
    indices = [s.index_of() for s in snapshots]
    last = snapshots[-1]
    last_idx = indices[-1]
    for aid in ids:
        rows = []
        for snap, idx in zip(reversed(snapshots), reversed(indices)):
            j = idx.get(aid)
            if j is None:
                break
            rows.append(snap.positions[j])
        hist[aid] = np.array(rows[::-1])
        vel[aid] = last.velocities[last_idx[aid]]
    return hist, vel


def polygon_area(poly) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_centroid(poly) -> np.ndarray:
    """Area centroid of a simple polygon (vertex mean if the area vanishes)."""
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if abs(a) < 1e-15:
        return poly.mean(axis=0)
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)
