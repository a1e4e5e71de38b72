"""Rollout-search MPC over group-space (or personal-space) forecasts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import kernels
from .grouping import (
    GroupingConfig,
    cluster_groups,
    complete_group_history,
    group_spaces,
    histories_from_snapshots,
    shrink_until_outside,
    singleton_groups,
)
from .prediction import OracleConfig, make_oracle
from .world import AgentState, WorldSnapshot

POLICY_KINDS = ("ped-nopred", "ped-linear", "group-nopred", "group-pred")
GOAL_COST_MODES = ("truncated", "frozen", "printed")


@dataclass(frozen=True)
class PlannerConfig:
    lam: float = 0.65
    gamma: float = 1.0
    K: int = 8
    R: int = 12
    speed_fractions: tuple[float, ...] = (1 / 3, 2 / 3, 1.0)
    turn_rates: tuple[float, ...] = (0.0, math.pi / 2, -math.pi / 2)
    policy_kind: str = "group-pred"
    # "truncated": progress stops at the first waypoint inside a group.
    # "frozen": progress term uses the most recent waypoint outside every group.
    # "printed": zero goal term for waypoints inside a group.
    goal_cost: str = "truncated"

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.R < 4 or self.K < 1:
            raise ValueError("need R >= 4 and K >= 1")
        if self.policy_kind not in POLICY_KINDS:
            raise ValueError(f"policy_kind must be one of {POLICY_KINDS}")
        if self.goal_cost not in GOAL_COST_MODES:
            raise ValueError(f"goal_cost must be one of {GOAL_COST_MODES}")


@dataclass(frozen=True, eq=False)
class ControlRollout:
    direction: float
    speed: float
    turn_rate: float
    controls: np.ndarray  # (K, 2) velocities
    states: np.ndarray  # (K + 1, 2) positions, states[0] is the start

    @property
    def first_control(self) -> np.ndarray:
        return self.controls[0]


@dataclass(frozen=True, eq=False)
class PlanResult:
    best_rollout: ControlRollout
    cost: float
    per_rollout_costs: np.ndarray
    effective_C: float
    forecast: list = field(default_factory=list)  # K lists of polygons
    best_index: int = 0


@lru_cache(maxsize=32)
def _control_table(R, speeds, turn_rates, K, dt):
    rows, ctrl = [], []
    steps = np.arange(K)
    for r in range(R):
        psi = 2.0 * math.pi * r / R
        for v in speeds:
            for w in turn_rates:
                ang = psi + w * steps * dt
                ctrl.append(np.stack([v * np.cos(ang), v * np.sin(ang)], axis=1))
                rows.append((psi, v, w))
    table = np.array(ctrl)
    table.setflags(write=False)
    return tuple(rows), table


def rollout_controls(cfg: PlannerConfig, v_max: float, dt: float):
    """(meta, controls) for the full candidate set; controls is (9R, K, 2)."""
    speeds = tuple(sorted(f * v_max for f in cfg.speed_fractions))
    return _control_table(cfg.R, speeds, tuple(cfg.turn_rates), cfg.K, float(dt))


def rollout_states(controls, start, dt):
    start = np.asarray(start, dtype=float)
    n = controls.shape[0]
    states = np.empty((n, controls.shape[1] + 1, 2))
    states[:, 0] = start
    states[:, 1:] = start + np.cumsum(controls * dt, axis=1)
    return states


def generate_rollouts(cfg: PlannerConfig, v_max: float, dt: float, start=(0.0, 0.0)) -> list[ControlRollout]:
    """Every (direction, speed, turn rate) combination, in enumeration order.

    Direction r is 2*pi*r/R; at step k (1-based) the velocity points along
    psi + omega*(k-1)*dt.
    """
    meta, controls = rollout_controls(cfg, v_max, dt)
    states = rollout_states(controls, start, dt)
    return [ControlRollout(psi, v, w, controls[i], states[i]) for i, (psi, v, w) in enumerate(meta)]


# -- costs ----------------------------------------------------------------------


def _forecast_arrays(forecast, K):
    frames = list(forecast)[:K]
    if len(frames) < K:
        frames += [frames[-1] if frames else []] * (K - len(frames))
    return kernels.pack_polygons(frames, shape_prefix=(K,))


def clearance(states, forecast):
    """Signed group clearance and containment of waypoints ``states[:, 1:]``.

    ``forecast[k]`` is the list of polygons at step k+1.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim == 2:
        states = states[None]
    K = states.shape[1] - 1
    verts, counts = _forecast_arrays(forecast, K)
    return kernels.rollout_clearance(np.ascontiguousarray(states[:, 1:]), verts, counts)


def cost_proximity(states, forecast):
    """Per-step exp(-D): D is the distance to the nearest group, negated inside."""
    dist, _ = clearance(states, forecast)
    return np.exp(-dist)


def _goal_term(states, inside, goal, mode):
    d = np.hypot(*(states - np.asarray(goal, float)).transpose(2, 0, 1))
    if mode == "printed":
        return np.where(inside, 0.0, d[:, :-1])
    if mode in ("frozen", "truncated"):
        K = inside.shape[1]
        if mode == "truncated":
            inside = np.logical_or.accumulate(inside, axis=1)
        idx = np.where(inside, 0, np.arange(1, K + 1)[None, :])
        return np.take_along_axis(d, np.maximum.accumulate(idx, axis=1), axis=1)
    raise ValueError(f"unknown goal cost mode {mode!r}")


def cost_goal(states, forecast, goal, mode="truncated"):
    """Per-step goal-progress term for waypoints ``states[:, 1:]``.

    ``printed``: zero when waypoint k+1 is inside a group, else the distance
    from waypoint k to the goal. ``frozen``: the distance to the goal of the
    most recent waypoint (up to k+1) that lies outside every group.
    ``truncated``: like frozen, but a rollout that enters a group makes no
    further progress even after leaving it. The start always counts as outside.
    """
    states = np.asarray(states, dtype=float)
    squeeze = states.ndim == 2
    if squeeze:
        states = states[None]
    _, inside = clearance(states, forecast)
    out = _goal_term(states, inside, goal, mode)
    return out[0] if squeeze else out


def step_costs(states, forecast, goal, cfg: PlannerConfig):
    states = np.asarray(states, dtype=float)
    if states.ndim == 2:
        states = states[None]
    dist, inside = clearance(states, forecast)
    jg = _goal_term(states, inside, goal, cfg.goal_cost)
    return cfg.lam * jg + (1.0 - cfg.lam) * np.exp(-dist)


def total_cost(states, forecast, goal, cfg: PlannerConfig):
    """Discounted sum over k=1..K of gamma^k [lam*J_g + (1-lam)*J_d] at waypoint k+1."""
    per_step = step_costs(states, forecast, goal, cfg)
    disc = cfg.gamma ** np.arange(1, per_step.shape[1] + 1)
    out = per_step @ disc
    return float(out[0]) if np.asarray(states).ndim == 2 else out


# -- forecasts per policy -----------------------------------------------------------


def build_forecast(
    history: Sequence[WorldSnapshot],
    robot: AgentState,
    cfg: PlannerConfig,
    grouping_cfg: GroupingConfig,
    oracle_cfg: OracleConfig,
    dt: float,
    oracle=None,
):
    """K frames of obstacle polygons for the configured policy, plus effective C."""
    current = history[-1]
    K = cfg.K
    if len(current) == 0:
        return [[] for _ in range(K)], grouping_cfg.C
    kind = cfg.policy_kind
    groups = cluster_groups(current, grouping_cfg) if kind.startswith("group") else singleton_groups(current)
    spaces = group_spaces(groups, current, grouping_cfg, time_index=current.time_index)
    spaces, C = shrink_until_outside(spaces, robot, groups, current, grouping_cfg, current.time_index)
    polys = [s.polygon for s in spaces]
    if kind in ("ped-nopred", "group-nopred"):
        return [list(polys) for _ in range(K)], C
    if kind == "ped-linear":
        idx = current.index_of()
        vel = np.array([current.velocities[idx[g.label]] for g in groups])
        return [[p + k * dt * v for p, v in zip(polys, vel)] for k in range(1, K + 1)], C
    # group-pred
    oracle = oracle or make_oracle(oracle_cfg)
    hist, vel = histories_from_snapshots(history, current.ids.tolist())
    h = max(oracle_cfg.history_len, getattr(oracle, "min_history", 1))
    seqs = complete_group_history(groups, hist, vel, h, dt, grouping_cfg, C, current.time_index)
    frames = [[] for _ in range(K)]
    for g in groups:
        fc = oracle(seqs[g.label], K)
        for k, sp in enumerate(fc.spaces[:K]):
            frames[k].append(sp.polygon)
    return frames, C


def plan(
    history: Sequence[WorldSnapshot],
    robot: AgentState,
    goal,
    cfg: PlannerConfig,
    grouping_cfg: GroupingConfig,
    oracle_cfg: OracleConfig,
    dt: float,
    v_max: float,
    oracle=None,
) -> PlanResult:
    """Choose the minimum-cost rollout; ties go to the earliest in enumeration order."""
    if not history:
        raise ValueError("plan needs at least the current snapshot")
    forecast, C = build_forecast(history, robot, cfg, grouping_cfg, oracle_cfg, dt, oracle)
    meta, controls = rollout_controls(cfg, v_max, dt)
    states = rollout_states(controls, robot.position, dt)
    costs = total_cost(states, forecast, goal, cfg)
    best = int(np.argmin(costs))
    psi, v, w = meta[best]
    rollout = ControlRollout(psi, v, w, controls[best], states[best])
    return PlanResult(rollout, float(costs[best]), costs, C, forecast, best)


def baseline_policy(kind, history, robot, goal, cfg: PlannerConfig, grouping_cfg, oracle_cfg, dt, v_max, oracle=None):
    """Plan with ``kind`` substituted for the configured policy."""
    return plan(history, robot, goal, replace(cfg, policy_kind=kind), grouping_cfg, oracle_cfg, dt, v_max, oracle)


def first_control(result: PlanResult) -> np.ndarray:
    return result.best_rollout.controls[0]

