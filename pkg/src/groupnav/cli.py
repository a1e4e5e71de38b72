"""Command-line entry point: make-trials, run, report, eval-prediction, defaults."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import evaluation
from .config import ConfigError, RunConfig, default_config, load_config
from .grouping import GroupingConfig, cluster_groups, group_spaces
from .prediction import evaluate_oracle, make_oracle, sample_group_sequences
from .simulator import TASKS, SceneData, TrialRecord, TrialSpec, auto_layout, extract_trials, run_trial
from .world import RecordingError, load_recording, resample


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trial_seed(seed: int, trial_id: str) -> int:
    # same stream for every policy on a trial, so lidar noise is paired
    return zlib.crc32(f"{seed}:{trial_id}".encode())


def _scene_snapshots(scene_cfg, dt):
    rec = load_recording(scene_cfg.path, scene_cfg.format, scene_cfg.frame_interval, scene_cfg.name)
    return rec, resample(rec, dt)


# -- make-trials ---------------------------------------------------------------------


def cmd_make_trials(cfg: RunConfig, out: Path, condition: str, perception: str) -> int:
    counts = {}
    for sc in cfg.scenes:
        _, snaps = _scene_snapshots(sc, cfg.world.dt)
        region, tasks = sc.region, sc.tasks
        if region is None or tasks is None:
            auto_region, auto_tasks = auto_layout(snaps)
            region = region or auto_region
            tasks = tasks or auto_tasks
        specs = extract_trials(
            snaps, region, tasks, sc.min_peds, sc.name, condition, perception, sc.min_steps, sc.max_steps
        )
        for task in sorted(tasks):
            rows = [json.dumps(s.to_dict(), sort_keys=True) for s in specs if s.task == task]
            atomic_write(out / "trials" / f"{sc.name}-{task}.jsonl", "".join(r + "\n" for r in rows))
            counts[(task, sc.name)] = len(rows)
    scenes = [s.name for s in cfg.scenes]
    lines = ["task," + ",".join(scenes)]
    for task in TASKS:
        lines.append(task + "," + ",".join(str(counts.get((task, s), 0)) for s in scenes))
    atomic_write(out / "trials" / "summary.csv", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def read_trials(out: Path) -> list[TrialSpec]:
    specs = []
    for f in sorted((out / "trials").glob("*.jsonl")):
        for line in f.read_text().splitlines():
            if line.strip():
                specs.append(TrialSpec.from_dict(json.loads(line)))
    return specs


# -- run -----------------------------------------------------------------------------------

_SCENE_CACHE: dict = {}


def _scene_data(scene_cfg, dt) -> SceneData:
    key = (scene_cfg.path, scene_cfg.format, scene_cfg.frame_interval, dt)
    if key not in _SCENE_CACHE:
        rec = load_recording(scene_cfg.path, scene_cfg.format, scene_cfg.frame_interval, scene_cfg.name)
        _SCENE_CACHE[key] = SceneData.from_recording(rec, dt, scene_cfg.name)
    return _SCENE_CACHE[key]


def run_key(spec: TrialSpec, policy: str) -> str:
    return f"{spec.condition}-{spec.perception}/{policy}/{spec.trial_id}"


def _run_one(job):
    cfg, spec, policy, out = job
    key = run_key(spec, policy)
    try:
        sc = cfg.scene(spec.scene)
        sim = cfg.sim_config(sc, spec.condition)
        oracle = None
        if sim.oracle.oracle_kind == "external":
            oracle = make_oracle(sim.oracle, spec.trial_id)
        record = run_trial(spec, policy, _scene_data(sc, sim.world.dt), sim, trial_seed(cfg.seed, spec.trial_id), oracle)
        metrics = evaluation.score_trial(record, sc.grouping())
    except Exception as e:  # recorded per trial; the batch keeps going
        atomic_write(out / "failures" / f"{key}.txt", f"{type(e).__name__}: {e}\n{traceback.format_exc()}")
        return key, None
    atomic_write(out / "records" / f"{key}.json", record.to_json() + "\n")
    row = {"key": [policy, spec.scene, spec.task, spec.condition], "trial_id": spec.trial_id, **metrics.to_dict()}
    atomic_write(out / "metrics" / f"{key}.json", json.dumps(row, sort_keys=True) + "\n")
    fail = out / "failures" / f"{key}.txt"
    if fail.exists():
        fail.unlink()
    return key, metrics


def cmd_run(cfg: RunConfig, out: Path, policies, condition, perception, workers: int) -> int:
    specs = read_trials(out)
    if not specs:
        print(f"error: no trials under {out / 'trials'}; run make-trials first", file=sys.stderr)
        return 2
    if condition or perception:
        specs = [replace(s, condition=condition or s.condition, perception=perception or s.perception) for s in specs]
    known = {s.name for s in cfg.scenes}
    jobs = []
    for spec in specs:
        if spec.scene not in known:
            continue
        for pol in policies:
            if not (out / "metrics" / f"{run_key(spec, pol)}.json").exists():
                jobs.append((cfg, spec, pol, out))
    print(f"{len(jobs)} trial runs to execute ({len(specs) * len(policies) - len(jobs)} already done)")
    failed = 0
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs, chunksize=1))
    else:
        results = [_run_one(j) for j in jobs]
    for key, m in results:
        if m is None:
            failed += 1
            print(f"failed: {key} (see failures/)", file=sys.stderr)
    print(f"done: {len(results) - failed} ok, {failed} failed")
    return 1 if failed else 0


# -- report -------------------------------------------------------------------------------


def _load_metrics(out: Path):
    rows = []
    for f in sorted((out / "metrics").rglob("*.json")):
        d = json.loads(f.read_text())
        m = evaluation.TrialMetrics(d["success"], d["comfort"], d["min_ped_distance"], d["path_length"])
        rows.append((tuple(d["key"]), d["trial_id"], m))
    return rows


def write_trace(record: TrialRecord, path: Path) -> None:
    """Robot polyline plus ground-truth group outlines per step, as JSON."""
    p = record.params
    gcfg = GroupingConfig(
        eps_s=p.get("eps_s", 2.0), eps_theta=p.get("eps_theta", math.radians(30)), eps_v=p.get("eps_v", 1.0), C=p.get("C", 0.35)
    )
    hulls = []
    for snap in record.snapshots:
        spaces = group_spaces(cluster_groups(snap, gcfg), snap, gcfg) if len(snap) else []
        hulls.append([[[round(x, 4), round(y, 4)] for x, y in s.polygon.tolist()] for s in spaces])
    doc = {
        "trial_id": record.spec.trial_id,
        "policy": record.policy,
        "termination": record.termination,
        "robot": [[round(x, 4), round(y, 4)] for x, y in record.trace.tolist()],
        "goal": list(record.spec.goal),
        "hulls": hulls,
    }
    atomic_write(path, json.dumps(doc, sort_keys=True) + "\n")


def cmd_report(out: Path, traces: bool = True) -> int:
    rows = _load_metrics(out)
    report_dir = out / "report"
    if not rows:
        msg = evaluation.format_table(evaluation.ComparisonReport())
        atomic_write(report_dir / "report.txt", msg)
        print(msg, end="")
        return 0
    grouped: dict = {}
    for key, _, m in rows:
        grouped.setdefault(key, []).append(m)
    report = evaluation.build_report(grouped)
    atomic_write(report_dir / "report.csv", evaluation.report_csv(report))
    atomic_write(report_dir / "tests.csv", evaluation.pairwise_csv(report))
    atomic_write(report_dir / "metrics.csv", evaluation.metrics_csv(rows))
    table = evaluation.format_table(report)
    atomic_write(report_dir / "report.txt", table)
    if traces:
        for f in sorted((out / "records").rglob("*.json")):
            rel = f.relative_to(out / "records")
            write_trace(TrialRecord.from_dict(json.loads(f.read_text())), report_dir / "traces" / rel)
    print(table, end="")
    return 0


# -- eval-prediction ------------------------------------------------------------------------


def cmd_eval_prediction(cfg: RunConfig, out: Path | None, seed: int, dt: float | None, scenes=None) -> int:
    """Table of mean mIoU/fIoU per scene for the configured oracle."""
    h, f = cfg.oracle.history_len, cfg.oracle.horizon
    results = {}
    for sc in cfg.scenes:
        if scenes and sc.name not in scenes:
            continue
        _, snaps = _scene_snapshots(sc, dt or sc.frame_interval)
        samples = sample_group_sequences(snaps, sc.grouping(), h, f, cfg.prediction_samples, seed)
        oracle = make_oracle(cfg.oracle, sc.name)
        results[sc.name] = (evaluate_oracle(samples, oracle, cfg.prediction_resolution), len(samples))
    names = list(results)
    lines = [f"{'metric':<8}" + "".join(f"{n:>10}" for n in names)]
    csv_lines = ["scene,oracle,samples,mIoU,fIoU"]
    for i, metric in enumerate(("mIoU", "fIoU")):
        cells = []
        for n in names:
            r = results[n][0]
            cells.append(f"{'-':>10}" if r is None else f"{100 * r[i]:>10.2f}")
        lines.append(f"{metric:<8}" + "".join(cells))
    for n in names:
        r, k = results[n]
        m = ("", "") if r is None else (f"{r[0]:.6f}", f"{r[1]:.6f}")
        csv_lines.append(f"{n},{cfg.oracle.oracle_kind},{k},{m[0]},{m[1]}")
    table = "\n".join(lines) + "\n"
    if out is not None:
        atomic_write(out / "prediction.csv", "\n".join(csv_lines) + "\n")
        atomic_write(out / "prediction.txt", table)
    print(table, end="")
    return 0


# -- entry point -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="groupnav", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", help="output directory (default: the config's 'out')")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("defaults", help="write the default configuration")
    p.add_argument("--out", default="-", help="file to write, '-' for stdout")
    p.add_argument("--data-dir", default="datasets")

    p = sub.add_parser("make-trials", help="extract trial specs from each scene")
    common(p)
    p.add_argument("--condition", choices=("Offline", "Online"))
    p.add_argument("--perception", choices=("GroundTruth", "Lidar"))

    p = sub.add_parser("run", help="run every policy on every trial (resumable)")
    common(p)
    p.add_argument("--policies", help="comma-separated policy names")
    p.add_argument("--workers", type=int)
    p.add_argument("--condition", choices=("Offline", "Online"))
    p.add_argument("--perception", choices=("GroundTruth", "Lidar"))

    p = sub.add_parser("report", help="aggregate metrics, run significance tests, emit traces")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--no-traces", action="store_true")

    p = sub.add_parser("eval-prediction", help="score the oracle on group-space windows from each scene")
    common(p)
    p.add_argument("--dt", type=float, help="sampling interval (default: each scene's annotation interval)")
    p.add_argument("--scenes", help="comma-separated subset of scenes")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "defaults":
            text = default_config(args.data_dir).to_json()
            if args.out == "-":
                sys.stdout.write(text)
            else:
                atomic_write(args.out, text)
            return 0
        if args.command == "report":
            return cmd_report(Path(args.out), traces=not args.no_traces)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out or cfg.out)
        if args.command == "make-trials":
            return cmd_make_trials(cfg, out, args.condition or cfg.condition, args.perception or cfg.perception)
        if args.command == "run":
            policies = tuple(args.policies.split(",")) if args.policies else cfg.policies
            cfg = replace(cfg, policies=policies)
            return cmd_run(cfg, out, policies, args.condition, args.perception, args.workers or cfg.workers)
        if args.command == "eval-prediction":
            scenes = set(args.scenes.split(",")) if args.scenes else None
            return cmd_eval_prediction(cfg, out, cfg.seed, args.dt, scenes)
    except (FileNotFoundError, IsADirectoryError) as e:
        name = getattr(e, "filename", None)
        print(f"error: cannot read {name or e}" if name else f"error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, RecordingError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
