"""Optimal reciprocal collision avoidance for reactive pedestrians.

A direct port of the RVO2 velocity-selection procedure for agents without
static obstacles: one half-plane per neighbour, a 2D linear program toward
the preferred velocity, and the 3D fallback that minimises the largest
constraint violation when the half-planes have no common point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-5


@dataclass(frozen=True)
class OrcaConfig:
    time_horizon: float = 2.0
    neighbor_dist: float = 10.0
    radius: float = 0.3
    max_speed: float = 2.0
    robot_radius: float = 0.3
    goal_tolerance: float = 0.3
    default_pref_speed: float = 1.3
    # small clockwise rotation of every preferred velocity; breaks the
    # exact-symmetry deadlocks ORCA is prone to (keep-right convention)
    pref_bias: float = 0.02


@dataclass
class Line:
    point: np.ndarray
    direction: np.ndarray


def _det(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _lp1(lines, no, radius, opt, direction_opt, result):
    line = lines[no]
    dot = float(line.point @ line.direction)
    disc = dot * dot + radius * radius - float(line.point @ line.point)
    if disc < 0.0:
        return False
    sq = math.sqrt(disc)
    t_left, t_right = -dot - sq, -dot + sq
    for i in range(no):
        denom = _det(line.direction, lines[i].direction)
        numer = _det(lines[i].direction, line.point - lines[i].point)
        if abs(denom) <= EPS:
            if numer < 0.0:
                return False
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False
    if direction_opt:
        t = t_right if float(opt @ line.direction) > 0.0 else t_left
    else:
        t = float(line.direction @ (opt - line.point))
        t = min(max(t, t_left), t_right)
    result[:] = line.point + t * line.direction
    return True


def _lp2(lines, radius, opt, direction_opt, result):
    if direction_opt:
        result[:] = opt * radius
    elif float(opt @ opt) > radius * radius:
        result[:] = opt / np.linalg.norm(opt) * radius
    else:
        result[:] = opt
    for i, line in enumerate(lines):
        if _det(line.direction, line.point - result) > 0.0:
            saved = result.copy()
            if not _lp1(lines, i, radius, opt, direction_opt, result):
                result[:] = saved
                return i
    return len(lines)


def _lp3(lines, begin, radius, result):
    distance = 0.0
    for i in range(begin, len(lines)):
        li = lines[i]
        if _det(li.direction, li.point - result) > distance:
            proj = []
            for j in range(i):
                lj = lines[j]
                determinant = _det(li.direction, lj.direction)
                if abs(determinant) <= EPS:
                    if float(li.direction @ lj.direction) > 0.0:
                        continue
                    point = 0.5 * (li.point + lj.point)
                else:
                    point = li.point + (_det(lj.direction, li.point - lj.point) / determinant) * li.direction
                d = lj.direction - li.direction
                proj.append(Line(point, d / np.linalg.norm(d)))
            saved = result.copy()
            if _lp2(proj, radius, np.array([-li.direction[1], li.direction[0]]), True, result) < len(proj):
                result[:] = saved
            distance = _det(li.direction, li.point - result)


def orca_line(pos, vel, radius, other_pos, other_vel, other_radius, tau, dt, responsibility=0.5):
    rel_pos = other_pos - pos
    rel_vel = vel - other_vel
    dist_sq = float(rel_pos @ rel_pos)
    comb_r = radius + other_radius
    comb_r_sq = comb_r * comb_r
    if dist_sq > comb_r_sq:
        w = rel_vel - rel_pos / tau
        w_len_sq = float(w @ w)
        dot1 = float(w @ rel_pos)
        if dot1 < 0.0 and dot1 * dot1 > comb_r_sq * w_len_sq:
            w_len = math.sqrt(w_len_sq)
            unit_w = w / w_len
            direction = np.array([unit_w[1], -unit_w[0]])
            u = (comb_r / tau - w_len) * unit_w
        else:
            leg = math.sqrt(dist_sq - comb_r_sq)
            if _det(rel_pos, w) > 0.0:
                direction = np.array(
                    [rel_pos[0] * leg - rel_pos[1] * comb_r, rel_pos[0] * comb_r + rel_pos[1] * leg]
                ) / dist_sq
            else:
                direction = -np.array(
                    [rel_pos[0] * leg + rel_pos[1] * comb_r, -rel_pos[0] * comb_r + rel_pos[1] * leg]
                ) / dist_sq
            u = float(rel_vel @ direction) * direction - rel_vel
    else:
        w = rel_vel - rel_pos / dt
        w_len = float(np.linalg.norm(w))
        unit_w = w / w_len if w_len > 0 else np.array([1.0, 0.0])
        direction = np.array([unit_w[1], -unit_w[0]])
        u = (comb_r / dt - w_len) * unit_w
    return Line(vel + responsibility * u, direction)


def new_velocity(lines, pref_vel, max_speed):
    result = np.zeros(2)
    fail = _lp2(lines, max_speed, np.asarray(pref_vel, float), False, result)
    if fail < len(lines):
        _lp3(lines, fail, max_speed, result)
    return result


def preferred_velocity(pos, goal, pref_speed, dt, bias=0.0):
    to_goal = np.asarray(goal, float) - pos
    dist = float(np.linalg.norm(to_goal))
    if dist < 1e-12:
        return np.zeros(2)
    if dist < pref_speed * dt:
        return to_goal / dt
    v = to_goal / dist * pref_speed
    if bias:
        c, s = math.cos(-bias), math.sin(-bias)
        v = np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])
    return v


def step_orca_agents(positions, velocities, goals, pref_speeds, robot_pos, robot_vel, dt, cfg: OrcaConfig):
    """One synchronous ORCA update of every agent.

    Agents share avoidance effort with each other; the robot is treated as a
    non-reactive agent-shaped obstacle, so each agent takes full
    responsibility for avoiding it. ``robot_pos`` may be None. Returns the
    new (positions, velocities).
    """
    positions = np.asarray(positions, float).reshape(-1, 2)
    velocities = np.asarray(velocities, float).reshape(-1, 2)
    n = len(positions)
    new_vel = np.zeros_like(velocities)
    nd2 = cfg.neighbor_dist**2
    for i in range(n):
        lines = []
        p, v = positions[i], velocities[i]
        for j in range(n):
            if j == i:
                continue
            d = positions[j] - p
            if float(d @ d) > nd2:
                continue
            lines.append(orca_line(p, v, cfg.radius, positions[j], velocities[j], cfg.radius, cfg.time_horizon, dt))
        if robot_pos is not None:
            rp = np.asarray(robot_pos, float)
            d = rp - p
            if float(d @ d) <= nd2:
                rv = np.zeros(2) if robot_vel is None else np.asarray(robot_vel, float)
                lines.append(orca_line(p, v, cfg.radius, rp, rv, cfg.robot_radius, cfg.time_horizon, dt, 1.0))
        pref = preferred_velocity(p, goals[i], pref_speeds[i], dt, cfg.pref_bias)
        new_vel[i] = new_velocity(lines, pref, cfg.max_speed)
    return positions + new_vel * dt, new_vel
