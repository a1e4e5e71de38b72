"""Synthetic crowd recordings for tests, smoke runs and desk-scale studies."""

from __future__ import annotations

import numpy as np

from .simulator import TestRegion
from .world import Recording, recording_from_tracks


def _group_sizes(rng, n_agents, max_size=3):
    sizes = []
    while sum(sizes) < n_agents:
        sizes.append(int(min(rng.integers(1, max_size + 1), n_agents - sum(sizes))))
    return sizes


def crossing_scene(seed: int, n_agents: int = 6, frame_interval: float = 0.4, half_width: float = 10.0):
    """Small groups walking along +-x across a robot corridor on the y axis.

    Returns ``(recording, region, tasks)``; the Cross task goes from
    (0, -6) to (0, 6) and Flow from (-8, 0) to (8, 0). Each group crosses
    x = 0 at a random time in the first few seconds, so the robot meets
    traffic early.
    """
    rng = np.random.default_rng(seed)
    tracks = {}
    aid = 0
    for size in _group_sizes(rng, n_agents):
        sign = rng.choice([-1.0, 1.0])
        speed = rng.uniform(0.9, 1.4)
        lane = rng.uniform(-3.0, 3.0)
        t_cross = rng.uniform(1.0, 6.0)
        t0 = max(0.0, t_cross - half_width / speed)
        x0 = -sign * speed * (t_cross - t0)
        spacing = rng.uniform(0.7, 1.0)
        offsets = (np.arange(size) - (size - 1) / 2) * spacing
        f0 = int(round(t0 / frame_interval))
        n_frames = int(np.ceil(2 * half_width / speed / frame_interval)) + 1
        for off in offsets:
            jitter = rng.normal(0.0, 0.05)
            samples = []
            for f in range(n_frames):
                t = f * frame_interval
                samples.append((f0 + f, (x0 + sign * speed * t + jitter, lane + off)))
            tracks[aid] = samples
            aid += 1
    rec = recording_from_tracks(tracks, frame_interval, f"crossing-{seed}")
    region = TestRegion(-4.0, -4.0, 4.0, 4.0)
    tasks = {"Cross": ((0.0, -6.0), (0.0, 6.0)), "Flow": ((-8.0, 0.0), (8.0, 0.0))}
    return rec, region, tasks


def constant_velocity_crowd(
    seed: int, n_groups: int = 4, duration: float = 20.0, frame_interval: float = 0.4, lane_gap: float = 6.0
) -> Recording:
    """Well-separated groups each translating at its own constant velocity."""
    rng = np.random.default_rng(seed)
    tracks = {}
    aid = 0
    n_frames = int(round(duration / frame_interval)) + 1
    for g in range(n_groups):
        size = int(rng.integers(1, 4))
        speed = rng.uniform(0.6, 1.4)
        ang = rng.uniform(0, 2 * np.pi)
        vel = speed * np.array([np.cos(ang), np.sin(ang)])
        base = np.array([g * lane_gap * 3.0, 0.0])
        perp = np.array([-vel[1], vel[0]]) / speed
        for m in range(size):
            start = base + perp * (m - (size - 1) / 2) * 0.8
            tracks[aid] = [(f, tuple(start + vel * f * frame_interval)) for f in range(n_frames)]
            aid += 1
    return recording_from_tracks(tracks, frame_interval, f"cv-crowd-{seed}")


def static_scene(positions, duration: float = 30.0, frame_interval: float = 0.4) -> Recording:
    """Pedestrians standing still for ``duration`` seconds."""
    n_frames = int(round(duration / frame_interval)) + 1
    tracks = {i: [(f, tuple(map(float, p))) for f in range(n_frames)] for i, p in enumerate(positions)}
    return recording_from_tracks(tracks, frame_interval, "static")

