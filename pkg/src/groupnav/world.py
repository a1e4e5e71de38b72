"""World model: agent states, snapshots and ETH/UCY-style recordings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi

FORMATS = ("xy", "obsmat")


class RecordingError(ValueError):
    pass


class MalformedRowError(RecordingError):
    def __init__(self, path, line_no, line):
        super().__init__(f"{path}:{line_no}: malformed row {line.strip()!r}")
        self.line_no = line_no


class EmptyRecordingError(RecordingError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    dt: float = 0.1
    v_max: float = 1.75
    robot_radius: float = 0.0
    collision_distance: float = 0.3
    goal_radius: float = 0.5
    # None means "derive per trial from timeout_factor".
    timeout_steps: int | None = None
    timeout_factor: float = 4.0

    def __post_init__(self):
        if self.dt <= 0 or self.v_max <= 0 or self.collision_distance <= 0:
            raise ValueError("dt, v_max and collision_distance must be positive")
        if self.timeout_steps is not None and self.timeout_steps < 1:
            raise ValueError("timeout_steps must be >= 1")

    def timeout_for(self, start, goal) -> int:
        if self.timeout_steps is not None:
            return self.timeout_steps
        dist = float(np.hypot(*(np.asarray(goal, float) - np.asarray(start, float))))
        return max(1, int(math.ceil(self.timeout_factor * dist / self.v_max / self.dt)))


@dataclass(frozen=True)
class AgentState:
    id: int
    position: tuple[float, float]

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.position):
            raise ValueError("agent position must be finite")


def wrap_heading(angle):
    """Map angles to [0, 2*pi)."""
    h = np.mod(angle, TWO_PI)
    return np.where(h >= TWO_PI, 0.0, h)


@dataclass(frozen=True)
class AugmentedAgentState:
    id: int
    position: tuple[float, float]
    heading: float
    speed: float
    velocity: tuple[float, float]

    @classmethod
    def from_velocity(cls, agent_id, position, velocity):
        vx, vy = float(velocity[0]), float(velocity[1])
        speed = math.hypot(vx, vy)
        heading = float(wrap_heading(math.atan2(vy, vx))) if speed > 0 else 0.0
        return cls(int(agent_id), (float(position[0]), float(position[1])), heading, speed, (vx, vy))


def _frozen(a, shape_tail, dtype=np.float64):
    arr = np.array(a, dtype=dtype).reshape((-1,) + shape_tail)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WorldSnapshot:
    """Agents at one control step, stored column-wise.

    ``robot`` is None for snapshots taken straight from a recording.
    """

    time_index: int
    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    robot: AgentState | None = None

    def __post_init__(self):
        object.__setattr__(self, "ids", _frozen(self.ids, (), np.int64))
        object.__setattr__(self, "positions", _frozen(self.positions, (2,)))
        object.__setattr__(self, "velocities", _frozen(self.velocities, (2,)))
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("agent ids must be unique within a snapshot")
        if not (len(self.ids) == len(self.positions) == len(self.velocities)):
            raise ValueError("ids, positions and velocities must align")

    @classmethod
    def from_agents(cls, time_index, agents, robot=None):
        agents = list(agents)
        return cls(
            time_index,
            [a.id for a in agents],
            [a.position for a in agents] or np.empty((0, 2)),
            [a.velocity for a in agents] or np.empty((0, 2)),
            robot,
        )

    def __len__(self):
        return len(self.ids)

    @property
    def speeds(self) -> np.ndarray:
        return np.hypot(self.velocities[:, 0], self.velocities[:, 1])

    @property
    def headings(self) -> np.ndarray:
        h = wrap_heading(np.arctan2(self.velocities[:, 1], self.velocities[:, 0]))
        return np.where(self.speeds > 0, h, 0.0)

    @property
    def agents(self) -> list[AugmentedAgentState]:
        return [
            AugmentedAgentState.from_velocity(i, p, v)
            for i, p, v in zip(self.ids.tolist(), self.positions, self.velocities)
        ]

    def index_of(self) -> dict[int, int]:
        return {int(i): k for k, i in enumerate(self.ids)}

    def to_dict(self) -> dict:
        return {
            "t": self.time_index,
            "ids": self.ids.tolist(),
            "positions": self.positions.tolist(),
            "velocities": self.velocities.tolist(),
        }

    @classmethod
    def from_dict(cls, d, robot=None):
        return cls(d["t"], d["ids"], d["positions"] or np.empty((0, 2)), d["velocities"] or np.empty((0, 2)), robot)


@dataclass(frozen=True)
class Frame:
    frame_id: int
    ids: tuple[int, ...]
    positions: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Recording:
    """Annotated pedestrian positions, one ``Frame`` per annotated frame id.

    ``frame_interval`` is the time between consecutive annotated frames; the
    frame-id stride is inferred as the smallest gap between ids so that ETH
    style ids (0, 10, 20, ...) map to 0, 1, 2 intervals.
    """

    frame_interval: float
    frames: tuple[Frame, ...]
    scene_name: str = ""
    frame_stride: int = field(default=0)

    def __post_init__(self):
        ids = [f.frame_id for f in self.frames]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("frame ids must be strictly increasing")
        if self.frame_stride == 0:
            gaps = np.diff(ids)
            object.__setattr__(self, "frame_stride", int(gaps.min()) if len(gaps) else 1)

    def frame_time(self, frame_id) -> float:
        return (frame_id - self.frames[0].frame_id) / self.frame_stride * self.frame_interval

    @property
    def duration(self) -> float:
        return self.frame_time(self.frames[-1].frame_id) if self.frames else 0.0

    def agent_ids(self) -> list[int]:
        return sorted({i for f in self.frames for i in f.ids})

    def tracks(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Per agent: (times, positions) sorted by time."""
        acc: dict[int, tuple[list, list]] = {}
        for f in self.frames:
            t = self.frame_time(f.frame_id)
            for i, p in zip(f.ids, f.positions):
                ts, ps = acc.setdefault(i, ([], []))
                ts.append(t)
                ps.append(p)
        return {i: (np.array(ts), np.array(ps, dtype=float).reshape(-1, 2)) for i, (ts, ps) in sorted(acc.items())}


def load_recording(path, format="xy", frame_interval=0.4, scene_name=None) -> Recording:
    """Parse an annotation file into a Recording.

    ``format="xy"`` reads whitespace-separated ``frame_id ped_id x y`` rows
    (extra trailing columns are ignored). ``format="obsmat"`` reads the ETH
    obsmat column order ``frame ped x z y vx vz vy`` and keeps ``(x, y)``.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    x_col, y_col, min_cols = (2, 3, 4) if format == "xy" else (2, 4, 5)
    rows: dict[int, dict[int, tuple[float, float]]] = {}
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            fields = line.replace(",", " ").split()
            if not fields or fields[0].startswith("#"):
                continue
            if len(fields) < min_cols:
                raise MalformedRowError(path, line_no, line)
            try:
                frame_id = int(round(float(fields[0])))
                ped_id = int(round(float(fields[1])))
                x = float(fields[x_col])
                y = float(fields[y_col])
            except ValueError:
                raise MalformedRowError(path, line_no, line) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise MalformedRowError(path, line_no, line)
            rows.setdefault(frame_id, {})[ped_id] = (x, y)
    if not rows:
        raise EmptyRecordingError(f"{path}: no observations")
    frames = tuple(
        Frame(fid, tuple(sorted(rows[fid])), tuple(rows[fid][i] for i in sorted(rows[fid])))
        for fid in sorted(rows)
    )
    return Recording(frame_interval, frames, scene_name or path.stem)


def recording_from_tracks(tracks, frame_interval, scene_name="synthetic") -> Recording:
    """Build a Recording from ``{agent_id: [(frame_index, (x, y)), ...]}``."""
    rows: dict[int, dict[int, tuple[float, float]]] = {}
    for aid, samples in tracks.items():
        for fi, p in samples:
            rows.setdefault(int(fi), {})[int(aid)] = (float(p[0]), float(p[1]))
    frames = tuple(
        Frame(fid, tuple(sorted(rows[fid])), tuple(rows[fid][i] for i in sorted(rows[fid])))
        for fid in sorted(rows)
    )
    return Recording(frame_interval, frames, scene_name, frame_stride=1)


def write_recording(recording: Recording, path) -> None:
    with open(path, "w") as fh:
        for f in recording.frames:
            for i, (x, y) in zip(f.ids, f.positions):
                fh.write(f"{f.frame_id} {i} {x!r} {y!r}\n")


def resample(recording: Recording, dt: float) -> list[WorldSnapshot]:
    """Snapshots every ``dt`` seconds by per-agent linear interpolation.

    Each agent exists only between its first and last annotation. Snapshot
    velocities are the backward difference over one step, or the forward
    difference at an agent's first step (zero if it exists for one step only).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not recording.frames:
        raise EmptyRecordingError("recording has no frames")
    tol = 1e-9
    n_steps = int(math.floor(recording.duration / dt + tol)) + 1
    times = np.arange(n_steps) * dt
    tracks = recording.tracks()
    pos = {}
    for aid, (ts, ps) in tracks.items():
        lo = int(math.ceil(ts[0] / dt - tol))
        hi = int(math.floor(ts[-1] / dt + tol))
        if hi < lo:
            continue
        steps = np.arange(lo, hi + 1)
        tq = np.clip(times[steps], ts[0], ts[-1])
        xy = np.stack([np.interp(tq, ts, ps[:, 0]), np.interp(tq, ts, ps[:, 1])], axis=1)
        pos[aid] = (lo, xy)
    per_step: list[list] = [[] for _ in range(n_steps)]
    for aid, (lo, xy) in pos.items():
        n = len(xy)
        vel = np.zeros_like(xy)
        if n > 1:
            vel[1:] = (xy[1:] - xy[:-1]) / dt
            vel[0] = vel[1]
        for k in range(n):
            per_step[lo + k].append((aid, xy[k], vel[k]))
    snaps = []
    for k, entries in enumerate(per_step):
        if entries:
            ids, ps, vs = zip(*entries)
            snaps.append(WorldSnapshot(k, ids, ps, vs))
        else:
            snaps.append(WorldSnapshot(k, [], np.empty((0, 2)), np.empty((0, 2))))
    return snaps


def extract_augmented_states(prev: WorldSnapshot | None, curr: WorldSnapshot, dt: float) -> list[AugmentedAgentState]:
    """Finite-difference velocity, speed and heading for the agents in ``curr``.

    Agents absent from ``prev`` get zero velocity (heading 0).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    prev_idx = prev.index_of() if prev is not None else {}
    out = []
    for aid, p in zip(curr.ids.tolist(), curr.positions):
        j = prev_idx.get(aid)
        v = (p - prev.positions[j]) / dt if j is not None else np.zeros(2)
        out.append(AugmentedAgentState.from_velocity(aid, p, v))
    return out


def with_finite_difference(prev: WorldSnapshot | None, curr: WorldSnapshot, dt: float) -> WorldSnapshot:
    """``curr`` with velocities replaced by finite differences against ``prev``."""
    states = extract_augmented_states(prev, curr, dt)
    return WorldSnapshot.from_agents(curr.time_index, states, curr.robot)
