"""Simulated planar lidar over circular pedestrians, and scan-based detection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .world import AugmentedAgentState


@dataclass(frozen=True)
class LidarConfig:
    fov: float = 1.5 * math.pi
    angular_resolution: float = math.radians(0.5)
    max_range: float = 40.0
    range_noise_sigma: float = 0.03
    pedestrian_radius: float = 0.5
    cluster_jump: float = 0.3
    association_radius: float = 0.25

    def __post_init__(self):
        if min(self.fov, self.angular_resolution, self.max_range, self.pedestrian_radius) <= 0:
            raise ValueError("lidar parameters must be positive")
        if self.range_noise_sigma < 0 or self.fov > 2 * math.pi:
            raise ValueError("need range_noise_sigma >= 0 and fov <= 2*pi")

    @property
    def n_rays(self) -> int:
        return int(round(self.fov / self.angular_resolution)) + 1


@dataclass(frozen=True, eq=False)
class LidarScan:
    origin: np.ndarray
    heading: float
    angles: np.ndarray  # absolute beam angles
    ranges: np.ndarray  # inf marks no return

    @property
    def hits(self) -> np.ndarray:
        return np.isfinite(self.ranges)

    def points(self) -> np.ndarray:
        h = self.hits
        r = self.ranges[h]
        a = self.angles[h]
        return self.origin + np.stack([r * np.cos(a), r * np.sin(a)], axis=1)


def beam_angles(heading, cfg: LidarConfig) -> np.ndarray:
    """Symmetric fan about ``heading``; the middle beam points straight ahead."""
    n = cfg.n_rays
    return heading + (np.arange(n) - (n - 1) / 2) * cfg.angular_resolution


def simulate_lidar(centers, robot_position, robot_heading, cfg: LidarConfig, rng=None) -> LidarScan:
    """Nearest circle hit per beam with additive Gaussian range noise on hits."""
    origin = np.asarray(robot_position, dtype=float)
    angles = beam_angles(float(robot_heading), cfg)
    ranges = kernels.raycast_circles(origin, angles, centers, cfg.pedestrian_radius, cfg.max_range)
    if cfg.range_noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng()
        noise = rng.normal(0.0, cfg.range_noise_sigma, size=ranges.shape)
        hit = np.isfinite(ranges)
        ranges = np.where(hit, np.clip(ranges + noise, 1e-6, cfg.max_range), np.inf)
    return LidarScan(origin, float(robot_heading), angles, ranges)


def scan_clusters(scan: LidarScan, jump: float) -> list[np.ndarray]:
    """Beam indices of contiguous returns; a no-return beam or a range jump splits."""
    clusters, cur = [], []
    prev = None
    for i, r in enumerate(scan.ranges):
        if not math.isfinite(r):
            if cur:
                clusters.append(np.array(cur))
            cur, prev = [], None
            continue
        if prev is not None and abs(r - prev) > jump:
            clusters.append(np.array(cur))
            cur = []
        cur.append(i)
        prev = r
    if cur:
        clusters.append(np.array(cur))
    return clusters


def estimate_center(origin, angles, ranges, radius, iters=10):
    """Circle center from the visible arc of a known-radius circle.

    Starts from the centroid of the hit points pushed one radius further
    along their beams, then refines with Gauss-Newton on the fixed-radius
    circle fit. The refinement is discarded if it wanders off.
    """
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pts = origin + ranges[:, None] * dirs
    c0 = (origin + (ranges + radius)[:, None] * dirs).mean(axis=0)
    if len(pts) < 3:
        return c0
    c = c0.copy()
    for _ in range(iters):
        diff = c - pts
        dist = np.hypot(diff[:, 0], diff[:, 1])
        if np.any(dist < 1e-9):
            return c0
        res = dist - radius
        jac = diff / dist[:, None]
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        c = c + step
        if np.hypot(*step) < 1e-10:
            break
    # the fit has a mirror solution in front of the arc; keep the far one
    if np.hypot(*(c - c0)) > radius or np.hypot(*(c - origin)) < np.hypot(*(pts.mean(0) - origin)):
        return c0
    return c


@dataclass(frozen=True)
class Detection:
    track_id: int
    position: tuple[float, float]
    velocity: tuple[float, float]

    def as_state(self) -> AugmentedAgentState:
        return AugmentedAgentState.from_velocity(self.track_id, self.position, self.velocity)


def associate(centers, prev: list[Detection], dt, max_disp, next_id):
    """Greedy nearest-neighbour matching; unmatched centers start new tracks."""
    out: list[Detection | None] = [None] * len(centers)
    if prev and len(centers):
        prev_xy = np.array([d.position for d in prev])
        dist = np.hypot(*(np.asarray(centers)[:, None, :] - prev_xy[None]).transpose(2, 0, 1))
        pairs = sorted(
            ((dist[i, j], i, j) for i in range(len(centers)) for j in range(len(prev)) if dist[i, j] <= max_disp)
        )
        used_c, used_p = set(), set()
        for _, i, j in pairs:
            if i in used_c or j in used_p:
                continue
            used_c.add(i)
            used_p.add(j)
            v = (np.asarray(centers[i]) - prev_xy[j]) / dt
            out[i] = Detection(prev[j].track_id, tuple(map(float, centers[i])), (float(v[0]), float(v[1])))
    for i, c in enumerate(centers):
        if out[i] is None:
            out[i] = Detection(next_id, (float(c[0]), float(c[1])), (0.0, 0.0))
            next_id += 1
    return out, next_id


def detect_pedestrians(scan: LidarScan, prev: list[Detection], dt: float, cfg: LidarConfig, next_id: int = 0):
    """Cluster a scan into pedestrian detections and track them frame to frame.

    Returns ``(detections, next_id)``. New tracks get zero velocity; the
    planner back-propagates their history.
    """
    centers = []
    for idx in scan_clusters(scan, cfg.cluster_jump):
        centers.append(estimate_center(scan.origin, scan.angles[idx], scan.ranges[idx], cfg.pedestrian_radius))
    return associate(np.array(centers).reshape(-1, 2), prev, dt, cfg.association_radius, next_id)
