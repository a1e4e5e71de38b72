"""Per-trial metrics, per-cell aggregation and Mann-Whitney comparisons."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .grouping import GroupingConfig, cluster_groups, group_spaces

STAR_LEVELS = (0.05, 0.01, 0.001)
EXACT_MAX_N = 12
TESTED_METRICS = ("min_ped_distance", "path_length")


@dataclass(frozen=True)
class TrialMetrics:
    success: bool
    comfort: bool
    min_ped_distance: float
    path_length: float

    def __post_init__(self):
        if not self.min_ped_distance >= 0 or not self.path_length >= 0:
            raise ValueError("distances must be non-negative")

    def to_dict(self):
        return asdict(self)


def ground_truth_intrusions(record, grouping_cfg: GroupingConfig) -> np.ndarray:
    """Per-step flag: robot strictly inside a ground-truth group space at nominal C."""
    out = np.zeros(len(record.trace), dtype=bool)
    for k, (snap, pos) in enumerate(zip(record.snapshots, record.trace)):
        if len(snap) == 0:
            continue
        spaces = group_spaces(cluster_groups(snap, grouping_cfg), snap, grouping_cfg, time_index=snap.time_index)
        verts, counts = kernels.pack_polygons([s.polygon for s in spaces])
        sd = kernels.polygon_signed_distance(np.asarray(pos, float).reshape(1, 2), verts, counts)
        out[k] = bool((sd < 0).any())
    return out


def min_pedestrian_distance(record) -> float:
    best = math.inf
    for snap, pos in zip(record.snapshots, record.trace):
        if len(snap):
            best = min(best, float(np.hypot(*(snap.positions - pos).T).min()))
    return best


def path_length(trace) -> float:
    t = np.asarray(trace, float).reshape(-1, 2)
    return float(np.hypot(*np.diff(t, axis=0).T).sum())


def score_trial(record, grouping_cfg: GroupingConfig | None = None) -> TrialMetrics:
    """Success, comfort, closest approach and path length of one closed-loop trial.

    Comfort is judged against groups rebuilt from the recorded world states,
    so it does not depend on what the policy perceived or how far it shrank
    its own group spaces. A collision always breaks comfort.
    """
    cfg = grouping_cfg or GroupingConfig()
    collided = record.termination == "Collision"
    comfort = not collided and not ground_truth_intrusions(record, cfg).any()
    return TrialMetrics(record.termination == "Success", comfort, min_pedestrian_distance(record), path_length(record.trace))


# -- significance -----------------------------------------------------------------


def _u_statistic(ranks_a, n_a):
    return float(np.sum(ranks_a) - n_a * (n_a + 1) / 2.0)


def mann_whitney_u(sample_a, sample_b) -> tuple[float, float]:
    """U of sample_a and its two-sided p-value.

    Ties get midranks. With at most 12 pooled observations p is exact: the
    share of all splits of the pooled ranks whose U lies at least as far from
    n_a*n_b/2 as the observed one. Larger samples use the normal
    approximation with tie-corrected variance and a continuity correction.
    """
    a = np.asarray(sample_a, float).ravel()
    b = np.asarray(sample_b, float).ravel()
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    u = _u_statistic(ranks[:n_a], n_a)
    if np.all(pooled == pooled[0]):
        return u, 1.0
    mu = n_a * n_b / 2.0
    dev = abs(u - mu)
    n = n_a + n_b
    if n <= EXACT_MAX_N:
        hits = total = 0
        for idx in itertools.combinations(range(n), n_a):
            total += 1
            if abs(_u_statistic(ranks[list(idx)], n_a) - mu) >= dev - 1e-9:
                hits += 1
        return u, hits / total
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return u, 1.0
    z = max(dev - 0.5, 0.0) / math.sqrt(var)
    return u, min(1.0, math.erfc(z / math.sqrt(2.0)))


def stars(p: float) -> str:
    return "*" * sum(p < level for level in STAR_LEVELS)


# -- aggregation ----------------------------------------------------------------------


@dataclass(frozen=True)
class CellStats:
    n: int
    success_rate: float  # percent
    comfort_rate: float  # percent
    mean_distance: float
    std_distance: float
    mean_path: float
    std_path: float


@dataclass(frozen=True)
class PairTest:
    cell: tuple
    metric: str
    policy_a: str
    policy_b: str
    U: float
    p: float

    @property
    def stars(self):
        return stars(self.p)


@dataclass
class ComparisonReport:
    # (policy, scene, task, condition) -> stats
    stats: dict = field(default_factory=dict)
    tests: list = field(default_factory=list)
    # (policy, scene, task, condition) combinations with no trials
    missing: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.stats

    def cells(self):
        return sorted({k[1:] for k in self.stats})

    def policies(self):
        return sorted({k[0] for k in self.stats})


def _std(x):
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def aggregate(metrics: Iterable[TrialMetrics]) -> CellStats:
    ms = list(metrics)
    if not ms:
        raise ValueError("no trials to aggregate")
    d = [m.min_ped_distance for m in ms if math.isfinite(m.min_ped_distance)]
    L = [m.path_length for m in ms]
    return CellStats(
        len(ms),
        100.0 * sum(m.success for m in ms) / len(ms),
        100.0 * sum(m.comfort for m in ms) / len(ms),
        float(np.mean(d)) if d else math.inf,
        _std(d),
        float(np.mean(L)),
        _std(L),
    )


def build_report(metrics: Mapping[tuple, list[TrialMetrics]]) -> ComparisonReport:
    """Aggregate trials keyed by (policy, scene, task, condition) and test policy pairs.

    Every pair of policies sharing a cell is compared on closest approach
    and path length. Policy/cell combinations without trials are listed in
    ``missing`` rather than filled in.
    """
    report = ComparisonReport()
    groups = {k: list(v) for k, v in metrics.items() if len(v)}
    for key, ms in sorted(groups.items()):
        report.stats[key] = aggregate(ms)
    policies = sorted({k[0] for k in metrics})
    cells = sorted({k[1:] for k in metrics})
    for cell in cells:
        present = [p for p in policies if (p, *cell) in groups]
        report.missing += [(p, *cell) for p in policies if (p, *cell) not in groups]
        for pa, pb in itertools.combinations(present, 2):
            for metric in TESTED_METRICS:
                xa = [getattr(m, metric) for m in groups[(pa, *cell)]]
                xb = [getattr(m, metric) for m in groups[(pb, *cell)]]
                xa = [x for x in xa if math.isfinite(x)]
                xb = [x for x in xb if math.isfinite(x)]
                if xa and xb:
                    u, p = mann_whitney_u(xa, xb)
                    report.tests.append(PairTest(cell, metric, pa, pb, u, p))
    return report


# -- output ------------------------------------------------------------------------------

REPORT_METRICS = (
    ("S", "success_rate"),
    ("C", "comfort_rate"),
    ("D", "mean_distance"),
    ("D_std", "std_distance"),
    ("L", "mean_path"),
    ("L_std", "std_path"),
    ("n", "n"),
)


def _fmt(x):
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.6f}"
    return str(x)


def report_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "scene", "task", "condition", "metric", "value"])
    for key, st in sorted(report.stats.items()):
        for name, attr in REPORT_METRICS:
            w.writerow([*key, name, _fmt(getattr(st, attr))])
    return buf.getvalue()


def pairwise_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scene", "task", "condition", "metric", "policy_a", "policy_b", "U", "p", "stars"])
    for t in report.tests:
        w.writerow([*t.cell, t.metric, t.policy_a, t.policy_b, _fmt(float(t.U)), _fmt(float(t.p)), t.stars])
    return buf.getvalue()


def metrics_csv(rows: Iterable[tuple[tuple, str, TrialMetrics]]) -> str:
    """One line per trial: (policy, scene, task, condition), trial id, metrics."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "scene", "task", "condition", "trial_id", "success", "comfort", "min_ped_distance", "path_length"])
    for key, tid, m in rows:
        w.writerow([*key, tid, int(m.success), int(m.comfort), _fmt(m.min_ped_distance), _fmt(m.path_length)])
    return buf.getvalue()


def read_metrics_csv(text: str) -> dict[tuple, list[TrialMetrics]]:
    out: dict[tuple, list[TrialMetrics]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        key = (row["policy"], row["scene"], row["task"], row["condition"])
        out.setdefault(key, []).append(
            TrialMetrics(row["success"] == "1", row["comfort"] == "1", float(row["min_ped_distance"]), float(row["path_length"]))
        )
    return out


def format_table(report: ComparisonReport) -> str:
    """Plain-text table: one block per (task, condition), policies by scene.

    Stars mark the significance of a policy's D and L against ped-nopred
    in the same cell when that baseline is present.
    """
    if report.empty:
        return "empty report: no trial metrics found\n"
    lookup = {(t.cell, t.metric, t.policy_a, t.policy_b): t for t in report.tests}

    def mark(cell, metric, policy, base="ped-nopred"):
        t = lookup.get((cell, metric, base, policy)) or lookup.get((cell, metric, policy, base))
        return t.stars if t and policy != base else ""

    lines = []
    blocks = sorted({(k[2], k[3]) for k in report.stats})
    scenes = sorted({k[1] for k in report.stats})
    for task, cond in blocks:
        lines.append(f"== {task} / {cond} ==")
        lines.append(f"{'policy':<18}{'scene':<10}{'S%':>7}{'C%':>7}{'D':>12}{'L':>12}{'n':>5}")
        for pol in report.policies():
            for scene in scenes:
                st = report.stats.get((pol, scene, task, cond))
                if st is None:
                    continue
                cell = (scene, task, cond)
                d = f"{st.mean_distance:.2f}{mark(cell, 'min_ped_distance', pol)}"
                L = f"{st.mean_path:.2f}{mark(cell, 'path_length', pol)}"
                lines.append(f"{pol:<18}{scene:<10}{st.success_rate:>7.1f}{st.comfort_rate:>7.1f}{d:>12}{L:>12}{st.n:>5}")
        lines.append("")
    if report.missing:
        lines.append("missing cells: " + ", ".join("/".join(m) for m in report.missing))
    return "\n".join(lines) + "\n"
