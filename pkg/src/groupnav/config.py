"""Run configuration: one JSON document with a section per scene."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .grouping import GroupingConfig
from .lidar import LidarConfig
from .orca import OrcaConfig
from .planner import PlannerConfig
from .prediction import OracleConfig
from .simulator import CONDITIONS, PERCEPTIONS, POLICIES, TASKS, SimConfig, TestRegion
from .world import WorldConfig


class ConfigError(ValueError):
    pass


# grouping and personal-space scale per scene; UNIV is denser
DENSE_SCENES = ("UNIV",)
SCENE_NAMES = ("ETH", "HOTEL", "ZARA1", "ZARA2", "UNIV")


def scene_defaults(name: str) -> dict:
    if name.upper() in DENSE_SCENES:
        return {"eps_s": 1.5, "eps_theta_deg": 15.0, "eps_v": 0.5, "C": 0.25}
    return {"eps_s": 2.0, "eps_theta_deg": 30.0, "eps_v": 1.0, "C": 0.35}


@dataclass(frozen=True)
class SceneConfig:
    name: str
    path: str
    format: str = "xy"
    frame_interval: float = 0.4
    region: TestRegion | None = None  # None: derive from the crowd
    tasks: dict | None = None  # task -> (start, goal); None: derive
    eps_s: float = 2.0
    eps_theta_deg: float = 30.0
    eps_v: float = 1.0
    C: float = 0.35
    min_peds: int = 5
    min_steps: int = 20
    max_steps: int | None = 300

    def grouping(self) -> GroupingConfig:
        return GroupingConfig(eps_s=self.eps_s, eps_theta=math.radians(self.eps_theta_deg), eps_v=self.eps_v, C=self.C)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "format": self.format,
            "frame_interval": self.frame_interval,
            "region": "auto" if self.region is None else self.region.as_list(),
            "tasks": "auto" if self.tasks is None else {k: [list(a), list(b)] for k, (a, b) in sorted(self.tasks.items())},
            "eps_s": self.eps_s,
            "eps_theta_deg": self.eps_theta_deg,
            "eps_v": self.eps_v,
            "C": self.C,
            "min_peds": self.min_peds,
            "min_steps": self.min_steps,
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_dict(cls, name, d, base_dir=None) -> "SceneConfig":
        if "path" not in d:
            raise ConfigError(f"scene {name}: missing 'path'")
        path = Path(d["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        vals = {**scene_defaults(name), **{k: d[k] for k in ("eps_s", "eps_theta_deg", "eps_v", "C") if k in d}}
        region = d.get("region", "auto")
        tasks = d.get("tasks", "auto")
        if tasks != "auto":
            bad = set(tasks) - set(TASKS)
            if bad:
                raise ConfigError(f"scene {name}: unknown tasks {sorted(bad)}")
            tasks = {k: (tuple(map(float, a)), tuple(map(float, b))) for k, (a, b) in tasks.items()}
        return cls(
            name,
            str(path),
            d.get("format", "xy"),
            float(d.get("frame_interval", 0.4)),
            None if region == "auto" else TestRegion(*map(float, region)),
            None if tasks == "auto" else tasks,
            float(vals["eps_s"]),
            float(vals["eps_theta_deg"]),
            float(vals["eps_v"]),
            float(vals["C"]),
            int(d.get("min_peds", 5)),
            int(d.get("min_steps", 20)),
            None if d.get("max_steps", 300) is None else int(d.get("max_steps", 300)),
        )


@dataclass(frozen=True)
class RunConfig:
    scenes: tuple[SceneConfig, ...]
    policies: tuple[str, ...] = ("ped-nopred", "ped-linear", "group-nopred", "group-pred")
    condition: str = "Offline"
    perception: str = "GroundTruth"
    lam: dict = field(default_factory=lambda: {"Offline": 0.65, "Online": 0.3})
    oracle: OracleConfig = field(default_factory=OracleConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    orca: OrcaConfig = field(default_factory=OrcaConfig)
    seed: int = 0
    out: str = "runs"
    workers: int = 1
    prediction_samples: int = 1000
    prediction_resolution: float = 0.05

    def __post_init__(self):
        bad = [p for p in self.policies if p not in POLICIES]
        if bad:
            raise ConfigError(f"unknown policies {bad}; expected a subset of {POLICIES}")
        if self.condition not in CONDITIONS or self.perception not in PERCEPTIONS:
            raise ConfigError(f"bad condition/perception {self.condition}/{self.perception}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def scene(self, name) -> SceneConfig:
        for s in self.scenes:
            if s.name == name:
                return s
        raise KeyError(name)

    def sim_config(self, scene: SceneConfig, condition: str | None = None) -> SimConfig:
        cond = condition or self.condition
        planner = replace(self.planner, lam=float(self.lam[cond]))
        return SimConfig(self.world, scene.grouping(), planner, self.oracle, self.lidar, self.orca)

    def to_dict(self) -> dict:
        p, w, o, li, orca = self.planner, self.world, self.oracle, self.lidar, self.orca
        return {
            "scenes": {s.name: s.to_dict() for s in self.scenes},
            "policies": list(self.policies),
            "condition": self.condition,
            "perception": self.perception,
            "seed": self.seed,
            "out": self.out,
            "workers": self.workers,
            "planner": {
                "lambda": dict(sorted(self.lam.items())),
                "gamma": p.gamma,
                "R": p.R,
                "K": p.K,
                "speed_fractions": list(p.speed_fractions),
                "turn_rates": list(p.turn_rates),
                "goal_cost": p.goal_cost,
            },
            "oracle": {"kind": o.oracle_kind, "history": o.history_len, "horizon": o.horizon, "external_path": o.external_path},
            "world": {
                "dt": w.dt,
                "v_max": w.v_max,
                "collision_distance": w.collision_distance,
                "goal_radius": w.goal_radius,
                "timeout_steps": w.timeout_steps,
                "timeout_factor": w.timeout_factor,
            },
            "lidar": {
                "fov_deg": math.degrees(li.fov),
                "resolution_deg": math.degrees(li.angular_resolution),
                "max_range": li.max_range,
                "noise_sigma": li.range_noise_sigma,
                "pedestrian_radius": li.pedestrian_radius,
                "cluster_jump": li.cluster_jump,
                "association_radius": li.association_radius,
            },
            "orca": {
                "time_horizon": orca.time_horizon,
                "neighbor_dist": orca.neighbor_dist,
                "radius": orca.radius,
                "max_speed": orca.max_speed,
                "robot_radius": orca.robot_radius,
                "default_pref_speed": orca.default_pref_speed,
            },
            "prediction": {"samples": self.prediction_samples, "resolution": self.prediction_resolution},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d, base_dir=None) -> "RunConfig":
        try:
            scenes = tuple(SceneConfig.from_dict(n, s, base_dir) for n, s in d["scenes"].items())
        except KeyError as e:
            raise ConfigError(f"config is missing {e}") from None
        if not scenes:
            raise ConfigError("config lists no scenes")
        pl = d.get("planner", {})
        base_p = PlannerConfig()
        planner = replace(
            base_p,
            gamma=float(pl.get("gamma", base_p.gamma)),
            R=int(pl.get("R", base_p.R)),
            K=int(pl.get("K", base_p.K)),
            speed_fractions=tuple(pl.get("speed_fractions", base_p.speed_fractions)),
            turn_rates=tuple(pl.get("turn_rates", base_p.turn_rates)),
            goal_cost=pl.get("goal_cost", base_p.goal_cost),
        )
        lam = {"Offline": 0.65, "Online": 0.3, **pl.get("lambda", {})}
        oc = d.get("oracle", {})
        oracle = OracleConfig(
            int(oc.get("history", 8)), int(oc.get("horizon", planner.K)), oc.get("kind", "linear"), oc.get("external_path")
        )
        wc = d.get("world", {})
        base_w = WorldConfig()
        world = replace(base_w, **{k: wc[k] for k in ("dt", "v_max", "collision_distance", "goal_radius", "timeout_steps", "timeout_factor") if k in wc})
        lc = d.get("lidar", {})
        base_l = LidarConfig()
        lidar = LidarConfig(
            math.radians(lc.get("fov_deg", math.degrees(base_l.fov))),
            math.radians(lc.get("resolution_deg", math.degrees(base_l.angular_resolution))),
            lc.get("max_range", base_l.max_range),
            lc.get("noise_sigma", base_l.range_noise_sigma),
            lc.get("pedestrian_radius", base_l.pedestrian_radius),
            lc.get("cluster_jump", base_l.cluster_jump),
            lc.get("association_radius", base_l.association_radius),
        )
        orca = replace(OrcaConfig(), **{k: v for k, v in d.get("orca", {}).items()})
        pr = d.get("prediction", {})
        return cls(
            scenes,
            tuple(d.get("policies", cls.policies)),
            d.get("condition", "Offline"),
            d.get("perception", "GroundTruth"),
            lam,
            oracle,
            planner,
            world,
            lidar,
            orca,
            int(d.get("seed", 0)),
            d.get("out", "runs"),
            int(d.get("workers", 1)),
            int(pr.get("samples", 1000)),
            float(pr.get("resolution", 0.05)),
        )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return RunConfig.from_dict(data, base_dir=path.parent)


def default_config(data_dir: str = "datasets") -> RunConfig:
    """Every scene at its standard grouping and personal-space values.

    Dataset paths follow the usual ``<scene>.txt`` naming; regions and
    task endpoints are derived from each crowd.
    """
    scenes = []
    for name in SCENE_NAMES:
        d = scene_defaults(name)
        scenes.append(SceneConfig(name, f"{data_dir}/{name.lower()}.txt", eps_s=d["eps_s"], eps_theta_deg=d["eps_theta_deg"], eps_v=d["eps_v"], C=d["C"]))
    return RunConfig(tuple(scenes))
