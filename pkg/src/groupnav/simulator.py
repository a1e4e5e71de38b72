"""Trial extraction and closed-loop execution (replayed or ORCA crowds)."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .grouping import GroupingConfig
from .lidar import LidarConfig, detect_pedestrians, simulate_lidar
from .orca import OrcaConfig, step_orca_agents
from .planner import PlannerConfig, plan
from .prediction import OracleConfig, make_oracle
from .world import AgentState, Recording, WorldConfig, WorldSnapshot, resample

TASKS = ("Flow", "Cross")
CONDITIONS = ("Offline", "Online")
PERCEPTIONS = ("GroundTruth", "Lidar")
POLICIES = ("ped-nopred", "ped-linear", "group-nopred", "group-pred", "laser-group-pred")
TERMINATIONS = ("Success", "Collision", "Timeout")

# cost weight per crowd condition
DEFAULT_LAMBDA = {"Offline": 0.65, "Online": 0.3}


@dataclass(frozen=True)
class TestRegion:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("test region must have positive area")

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, float).reshape(-1, 2)
        return (p[:, 0] >= self.xmin) & (p[:, 0] <= self.xmax) & (p[:, 1] >= self.ymin) & (p[:, 1] <= self.ymax)

    def as_list(self):
        return [self.xmin, self.ymin, self.xmax, self.ymax]


@dataclass(frozen=True)
class TrialSpec:
    trial_id: str
    scene: str
    task: str
    start: tuple[float, float]
    goal: tuple[float, float]
    segment: tuple[int, int]
    condition: str = "Offline"
    perception: str = "GroundTruth"

    def __post_init__(self):
        if self.task not in TASKS or self.condition not in CONDITIONS or self.perception not in PERCEPTIONS:
            raise ValueError(f"bad trial spec tags: {self.task}/{self.condition}/{self.perception}")
        if tuple(self.start) == tuple(self.goal):
            raise ValueError("start and goal must differ")
        if self.segment[1] < self.segment[0]:
            raise ValueError("segment end precedes start")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["trial_id"],
            d["scene"],
            d["task"],
            tuple(d["start"]),
            tuple(d["goal"]),
            tuple(d["segment"]),
            d.get("condition", "Offline"),
            d.get("perception", "GroundTruth"),
        )


@dataclass(frozen=True)
class SimConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    orca: OrcaConfig = field(default_factory=OrcaConfig)

    def __post_init__(self):
        if self.planner.K != self.oracle.horizon:
            raise ValueError(f"rollout horizon K={self.planner.K} must equal oracle horizon f={self.oracle.horizon}")


@dataclass(eq=False)
class TrialRecord:
    spec: TrialSpec
    policy: str
    trace: np.ndarray
    snapshots: list[WorldSnapshot]
    termination: str
    params: dict = field(default_factory=dict)
    effective_C: list[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.trace) - 1

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "policy": self.policy,
            "termination": self.termination,
            "trace": np.asarray(self.trace).tolist(),
            "snapshots": [s.to_dict() for s in self.snapshots],
            "effective_C": list(self.effective_C),
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "TrialRecord":
        return cls(
            TrialSpec.from_dict(d["spec"]),
            d["policy"],
            np.array(d["trace"], dtype=float).reshape(-1, 2),
            [WorldSnapshot.from_dict(s) for s in d["snapshots"]],
            d["termination"],
            d.get("params", {}),
            d.get("effective_C", []),
        )


# -- scenes -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SceneData:
    """A resampled recording plus per-agent endpoints for the reactive crowd."""

    name: str
    dt: float
    snapshots: tuple[WorldSnapshot, ...]
    first_step: dict
    exit_position: dict
    entry_position: dict
    pref_speed: dict

    @classmethod
    def from_recording(cls, recording: Recording, dt: float, name: str | None = None) -> "SceneData":
        snaps = resample(recording, dt)
        first, last, entry, speed_acc = {}, {}, {}, {}
        for s in snaps:
            for aid, p, v in zip(s.ids.tolist(), s.positions, s.velocities):
                if aid not in first:
                    first[aid] = s.time_index
                    entry[aid] = tuple(p)
                last[aid] = tuple(p)
                speed_acc.setdefault(aid, []).append(float(np.hypot(*v)))
        speeds = {a: float(np.mean(v)) for a, v in speed_acc.items()}
        return cls(name or recording.scene_name, dt, tuple(snaps), first, last, entry, speeds)

    @classmethod
    def empty(cls, dt: float, n_steps: int, name: str = "empty") -> "SceneData":
        snaps = tuple(WorldSnapshot(k, [], np.empty((0, 2)), np.empty((0, 2))) for k in range(n_steps))
        return cls(name, dt, snaps, {}, {}, {}, {})

    def __len__(self):
        return len(self.snapshots)

    def snapshot(self, k: int) -> WorldSnapshot:
        if 0 <= k < len(self.snapshots):
            return self.snapshots[k]
        return WorldSnapshot(k, [], np.empty((0, 2)), np.empty((0, 2)))


def extract_trials(
    snapshots: Sequence[WorldSnapshot],
    region: TestRegion,
    tasks: dict,
    min_peds: int = 5,
    scene: str = "scene",
    condition: str = "Offline",
    perception: str = "GroundTruth",
    min_steps: int = 1,
    max_steps: int | None = None,
) -> list[TrialSpec]:
    """Trials from the maximal runs with at least ``min_peds`` agents in ``region``.

    Runs longer than ``max_steps`` are cut into consecutive blocks; blocks
    shorter than ``min_steps`` are dropped. One spec per block per task.
    """
    counts = np.array([int(region.contains(s.positions).sum()) if len(s) else 0 for s in snapshots])
    busy = counts >= min_peds
    segments = []
    k = 0
    n = len(busy)
    while k < n:
        if not busy[k]:
            k += 1
            continue
        j = k
        while j + 1 < n and busy[j + 1]:
            j += 1
        step = max_steps or (j - k + 1)
        for a in range(k, j + 1, step):
            b = min(a + step - 1, j)
            if b - a + 1 >= min_steps:
                segments.append((snapshots[a].time_index, snapshots[b].time_index))
        k = j + 1
    specs = []
    for task in sorted(tasks):
        start, goal = tasks[task]
        for i, seg in enumerate(segments):
            specs.append(
                TrialSpec(
                    f"{scene}-{task}-{i:03d}",
                    scene,
                    task,
                    tuple(map(float, start)),
                    tuple(map(float, goal)),
                    seg,
                    condition,
                    perception,
                )
            )
    return specs


def auto_layout(snapshots: Sequence[WorldSnapshot], margin: float = 0.1):
    """Test region and Flow/Cross endpoints derived from the crowd itself.

    The region is the middle half of the bounding box of all positions. Flow
    runs along the dominant axis of pedestrian motion, Cross perpendicular
    to it, both through the region center with endpoints inset by ``margin``
    of the extent.
    """
    pos = np.vstack([s.positions for s in snapshots if len(s)])
    vel = np.vstack([s.velocities for s in snapshots if len(s)])
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    ext = hi - lo
    mid = (lo + hi) / 2
    region = TestRegion(*(mid - ext / 4), *(mid + ext / 4))
    axis = 0 if np.abs(vel[:, 0]).sum() >= np.abs(vel[:, 1]).sum() else 1
    mean_dir = np.sign(vel[:, axis].sum()) or 1.0
    half = ext / 2 * (1 - 2 * margin)

    def endpoints(ax, sign):
        a, b = mid.copy(), mid.copy()
        a[ax] -= sign * half[ax]
        b[ax] += sign * half[ax]
        return tuple(a.tolist()), tuple(b.tolist())

    tasks = {"Flow": endpoints(axis, mean_dir), "Cross": endpoints(1 - axis, 1.0)}
    return region, tasks


# -- closed loop --------------------------------------------------------------------


def resolve_policy(policy: str, spec: TrialSpec):
    """(planner policy kind, perception) for a named policy."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if policy == "laser-group-pred":
        return "group-pred", "Lidar"
    return policy, spec.perception


class _ReactiveCrowd:
    """ORCA-driven pedestrians that enter and leave where the recording says."""

    def __init__(self, scene: SceneData, k0: int, cfg: OrcaConfig):
        self.scene, self.cfg = scene, cfg
        snap = scene.snapshot(k0)
        self.ids = [int(i) for i in snap.ids]
        self.pos = np.array(snap.positions, dtype=float).reshape(-1, 2)
        self.vel = np.array(snap.velocities, dtype=float).reshape(-1, 2)
        self.done: set[int] = set()
        self._drop_arrived()

    def _drop_arrived(self):
        keep = []
        for n, aid in enumerate(self.ids):
            if np.hypot(*(self.pos[n] - self.scene.exit_position[aid])) <= self.cfg.goal_tolerance:
                self.done.add(aid)
            else:
                keep.append(n)
        self.ids = [self.ids[n] for n in keep]
        self.pos, self.vel = self.pos[keep].reshape(-1, 2), self.vel[keep].reshape(-1, 2)

    def step(self, k_next: int, robot_pos, robot_vel, dt):
        if self.ids:
            goals = [self.scene.exit_position[a] for a in self.ids]
            speeds = [self.scene.pref_speed.get(a) or self.cfg.default_pref_speed for a in self.ids]
            self.pos, self.vel = step_orca_agents(self.pos, self.vel, goals, speeds, robot_pos, robot_vel, dt, self.cfg)
        self._drop_arrived()
        for aid, fs in sorted(self.scene.first_step.items()):
            if fs == k_next and aid not in self.done and aid not in self.ids:
                self.ids.append(aid)
                self.pos = np.vstack([self.pos, self.scene.entry_position[aid]])
                self.vel = np.vstack([self.vel, np.zeros(2)])

    def snapshot(self, k) -> WorldSnapshot:
        return WorldSnapshot(k, self.ids, self.pos.copy(), self.vel.copy())


def run_trial(spec: TrialSpec, policy: str, scene: SceneData, cfg: SimConfig, seed: int = 0, oracle=None) -> TrialRecord:
    """Drive the robot from start to goal through the scene, one control step at a time."""
    kind, perception = resolve_policy(policy, spec)
    world = cfg.world
    if abs(scene.dt - world.dt) > 1e-12:
        raise ValueError(f"scene resampled at dt={scene.dt} but world dt={world.dt}")
    pcfg = replace(cfg.planner, policy_kind=kind)
    if oracle is None and cfg.oracle.oracle_kind == "external":
        oracle = make_oracle(cfg.oracle, spec.trial_id)
    rng = np.random.default_rng(seed)
    dt = world.dt
    k0 = spec.segment[0]
    goal = np.asarray(spec.goal, float)
    robot = np.asarray(spec.start, float)
    heading = math.atan2(*(goal - robot)[::-1])
    timeout = world.timeout_for(spec.start, spec.goal)

    crowd = _ReactiveCrowd(scene, k0, cfg.orca) if spec.condition == "Online" else None

    def world_at(k_rel):
        return crowd.snapshot(k0 + k_rel) if crowd is not None else scene.snapshot(k0 + k_rel)

    h = cfg.oracle.history_len
    history: deque[WorldSnapshot] = deque(maxlen=h)
    if perception == "GroundTruth":
        for k in range(max(0, k0 - h + 1), k0):
            history.append(scene.snapshot(k))
    detections, next_id = [], 0

    current = world_at(0)
    trace = [robot.copy()]
    snaps = [current]
    eff_C = []
    termination = "Timeout"
    for step in range(timeout):
        robot_state = AgentState(-1, (float(robot[0]), float(robot[1])))
        if perception == "GroundTruth":
            perceived = current
        else:
            scan = simulate_lidar(current.positions, robot, heading, cfg.lidar, rng)
            detections, next_id = detect_pedestrians(scan, detections, dt, cfg.lidar, next_id)
            perceived = WorldSnapshot.from_agents(current.time_index, [d.as_state() for d in detections])
        history.append(perceived)
        result = plan(list(history), robot_state, goal, pcfg, cfg.grouping, cfg.oracle, dt, world.v_max, oracle)
        eff_C.append(result.effective_C)
        u = result.best_rollout.controls[0]
        robot = robot + u * dt
        if np.hypot(*u) > 0:
            heading = math.atan2(u[1], u[0])
        if crowd is not None:
            crowd.step(k0 + step + 1, robot, u, dt)
        current = world_at(step + 1)
        trace.append(robot.copy())
        snaps.append(current)
        if len(current):
            dmin = np.hypot(*(current.positions - robot).T).min()
            if dmin < world.collision_distance:
                termination = "Collision"
                break
        if np.hypot(*(robot - goal)) <= world.goal_radius:
            termination = "Success"
            break

    params = {
        "policy_kind": kind,
        "perception": perception,
        "condition": spec.condition,
        "lambda": pcfg.lam,
        "gamma": pcfg.gamma,
        "R": pcfg.R,
        "K": pcfg.K,
        "rollouts": len(pcfg.speed_fractions) * len(pcfg.turn_rates) * pcfg.R,
        "goal_cost": pcfg.goal_cost,
        "dt": dt,
        "v_max": world.v_max,
        "goal_radius": world.goal_radius,
        "collision_distance": world.collision_distance,
        "timeout_steps": timeout,
        "C": cfg.grouping.C,
        "eps_s": cfg.grouping.eps_s,
        "eps_theta": cfg.grouping.eps_theta,
        "eps_v": cfg.grouping.eps_v,
        "oracle": cfg.oracle.oracle_kind,
        "seed": seed,
    }
    return TrialRecord(spec, policy, np.array(trace), snaps, termination, params, eff_C)


def with_condition_lambda(cfg: SimConfig, condition: str) -> SimConfig:
    return replace(cfg, planner=replace(cfg.planner, lam=DEFAULT_LAMBDA[condition]))
