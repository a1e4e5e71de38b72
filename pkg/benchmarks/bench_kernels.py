"""Numba vs numpy timing for the geometry kernels, plus one planner step end to end.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Kernel timings call both implementations in-process through the ``impl``
argument. The planner timing runs in a subprocess per backend because the
backend is fixed when ``groupnav.kernels`` is imported.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from groupnav import kernels
from groupnav.kernels import numba_impl, numpy_impl
from groupnav.planner import PlannerConfig, rollout_controls, rollout_states


def cases(rng):
    pos = rng.uniform(-5, 5, (12, 2))
    head = rng.uniform(0, 2 * np.pi, 12)
    speed = rng.uniform(0, 1.5, 12)
    ring = kernels.personal_space_points(pos, head, speed, 0.35, 64, impl=numpy_impl)
    hulls = [kernels.convex_hull(ring[i : i + 3].reshape(-1, 2), impl=numpy_impl) for i in range(0, 12, 3)]
    verts, counts = kernels.pack_polygons(hulls)
    kv, kc = kernels.pack_polygons([hulls] * 8, shape_prefix=(8,))
    _, controls = rollout_controls(PlannerConfig(), 1.75, 0.1)
    states = rollout_states(controls, (0.0, 0.0), 0.1)[:, 1:]
    angles = np.linspace(-2.36, 2.36, 541)
    return {
        "convex_hull (768 pts)": lambda impl: kernels.convex_hull(ring.reshape(-1, 2), impl=impl),
        "personal_space_points (12x64)": lambda impl: kernels.personal_space_points(pos, head, speed, 0.35, 64, impl=impl),
        "polygon_signed_distance (1000x4)": lambda impl: kernels.polygon_signed_distance(
            rng.uniform(-6, 6, (1000, 2)), verts, counts, impl=impl
        ),
        "rollout_clearance (108x8 vs 4)": lambda impl: kernels.rollout_clearance(states, kv, kc, impl=impl),
        "rasterize_polygon (200x200)": lambda impl: kernels.rasterize_polygon(hulls[0], -6.0, -6.0, 0.06, 200, 200, impl=impl),
        "raycast_circles (541 rays x 12)": lambda impl: kernels.raycast_circles(np.zeros(2), angles, pos, 0.5, 40.0, impl=impl),
    }


PLAN_SNIPPET = """
import time, numpy as np
from groupnav import kernels
from groupnav.grouping import GroupingConfig
from groupnav.planner import PlannerConfig, plan
from groupnav.prediction import OracleConfig
from groupnav.world import AgentState, WorldSnapshot
kernels.warmup()
rng = np.random.default_rng(0)
hist = []
pos = rng.uniform(-4, 4, (12, 2)); vel = rng.uniform(-1, 1, (12, 2))
for k in range(8):
    hist.append(WorldSnapshot(k, list(range(12)), pos + vel * 0.1 * k, vel))
args = (hist, AgentState(-1, (-6.0, 0.0)), (6.0, 0.0), PlannerConfig(), GroupingConfig(), OracleConfig(), 0.1, 1.75)
plan(*args)
n = {n}
t = time.perf_counter()
for _ in range(n):
    plan(*args)
print((time.perf_counter() - t) / n)
"""


def plan_step(disable_numba, n):
    env = dict(os.environ, GROUPNAV_DISABLE_NUMBA="1" if disable_numba else "0")
    out = subprocess.run([sys.executable, "-c", PLAN_SNIPPET.format(n=n)], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    rng = np.random.default_rng(1)
    kernels.warmup()

    print(f"{'kernel':<36}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}  agree")
    for name, fn in cases(rng).items():
        state = rng.bit_generator.state
        a = fn(numpy_impl)
        rng.bit_generator.state = state
        b = fn(numba_impl)
        pairs = zip(a, b) if isinstance(a, tuple) else [(a, b)]
        agree = all(np.allclose(x, y, atol=1e-9, equal_nan=True) for x, y in pairs)
        t_np = min(timeit.repeat(lambda: fn(numpy_impl), number=args.repeat, repeat=3)) / args.repeat * 1e3
        t_nb = min(timeit.repeat(lambda: fn(numba_impl), number=args.repeat, repeat=3)) / args.repeat * 1e3
        print(f"{name:<36}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x  {'yes' if agree else 'NO'}")

    n = max(args.repeat // 5, 3)
    t_np, t_nb = plan_step(True, n) * 1e3, plan_step(False, n) * 1e3
    print(f"{'plan() with 12 pedestrians':<36}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
