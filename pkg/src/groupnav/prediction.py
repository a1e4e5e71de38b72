"""Group-space forecasting oracles and raster IoU scoring."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from . import kernels
from .grouping import GroupSpace, GroupSpaceSequence, _hull_from_arrays, cluster_groups, polygon_centroid

ORACLE_KINDS = ("linear", "hold", "external")


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    history_len: int = 8
    horizon: int = 8
    oracle_kind: str = "linear"
    external_path: str | None = None

    def __post_init__(self):
        if self.oracle_kind not in ORACLE_KINDS:
            raise ValueError(f"oracle_kind must be one of {ORACLE_KINDS}")
        if self.horizon < 1 or self.history_len < 1:
            raise ValueError("history_len and horizon must be >= 1")
        if self.oracle_kind == "linear" and self.history_len < 2:
            raise ValueError("the linear oracle needs history_len >= 2")


@dataclass(frozen=True)
class RasterGrid:
    resolution: float
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("grid bounds are degenerate")

    @classmethod
    def covering(cls, *polygons, resolution=0.05, margin=1):
        pts = np.vstack([np.asarray(p, float).reshape(-1, 2) for p in polygons])
        lo = np.floor(pts.min(axis=0) / resolution) - margin
        hi = np.ceil(pts.max(axis=0) / resolution) + margin
        return cls(resolution, (lo[0] * resolution, lo[1] * resolution, hi[0] * resolution, hi[1] * resolution))

    @property
    def shape(self) -> tuple[int, int]:
        xmin, ymin, xmax, ymax = self.bounds
        return (int(round((ymax - ymin) / self.resolution)), int(round((xmax - xmin) / self.resolution)))

    def rasterize(self, polygon) -> np.ndarray:
        ny, nx = self.shape
        return kernels.rasterize_polygon(polygon, self.bounds[0], self.bounds[1], self.resolution, nx, ny)


def iou(a, b, grid: RasterGrid | None = None, resolution: float = 0.05) -> float:
    """Pixel IoU of two polygons; 1.0 when both rasterize to nothing."""
    grid = grid or RasterGrid.covering(a, b, resolution=resolution)
    ma, mb = grid.rasterize(a), grid.rasterize(b)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 1.0
    return np.count_nonzero(ma & mb) / union


def evaluate_sequence(predicted, actual, grid: RasterGrid | None = None, resolution: float = 0.05):
    """(mIoU, fIoU): mean IoU over the horizon and IoU of the final frame."""
    pa = predicted.polygons if isinstance(predicted, GroupSpaceSequence) else list(predicted)
    aa = actual.polygons if isinstance(actual, GroupSpaceSequence) else list(actual)
    if len(pa) != len(aa) or not pa:
        raise ValueError(f"sequence length mismatch: {len(pa)} predicted vs {len(aa)} actual")
    scores = [iou(p, q, grid, resolution) for p, q in zip(pa, aa)]
    return float(np.mean(scores)), float(scores[-1])


class Oracle(Protocol):
    min_history: int

    def __call__(self, history: GroupSpaceSequence, f: int) -> GroupSpaceSequence: ...


def _check(history, need):
    if len(history) < need:
        raise InsufficientHistoryError(f"need at least {need} history frames, got {len(history)}")


def _forecast(history, polygons):
    last = history.spaces[-1]
    spaces = tuple(
        GroupSpace(last.label, p, last.member_ids, last.time_index + k) for k, p in enumerate(polygons, start=1)
    )
    return GroupSpaceSequence(history.label, spaces)


class HoldOracle:
    """Zero-order hold: the last observed shape persists."""

    min_history = 1

    def __call__(self, history, f):
        _check(history, self.min_history)
        last = history.spaces[-1].polygon
        return _forecast(history, [last.copy() for _ in range(f)])


class LinearOracle:
    """Rigidly translate the last shape at its area-centroid velocity."""

    min_history = 2

    def __call__(self, history, f):
        _check(history, self.min_history)
        last = history.spaces[-1].polygon
        step = polygon_centroid(last) - polygon_centroid(history.spaces[-2].polygon)
        return _forecast(history, [last + k * step for k in range(1, f + 1)])


def read_external_forecasts(path) -> dict[tuple[str, int, int], list[np.ndarray]]:
    """Parse ``trial_id step group_label x1 y1 x2 y2 ...`` lines.

    Consecutive lines sharing a key are the forecast frames 1..f in order.
    """
    out: dict[tuple[str, int, int], list[np.ndarray]] = defaultdict(list)
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            if len(fields) < 9 or (len(fields) - 3) % 2:
                raise ValueError(f"{path}:{line_no}: expected trial step label and >= 3 vertex pairs")
            coords = np.array([float(x) for x in fields[3:]]).reshape(-1, 2)
            out[(fields[0], int(fields[1]), int(fields[2]))].append(coords)
    return dict(out)


def write_external_forecasts(path, records) -> None:
    """Inverse of ``read_external_forecasts``; ``records`` maps key -> polygons."""
    with open(path, "w") as fh:
        for (trial, step, label), polys in sorted(records.items()):
            for poly in polys:
                coords = " ".join(f"{c!r}" for c in np.asarray(poly, float).ravel().tolist())
                fh.write(f"{trial} {step} {label} {coords}\n")


class ExternalOracle:
    """Forecasts produced elsewhere, looked up by (trial, step, group label).

    Falls back to ``fallback`` (hold by default) for keys with no record.
    """

    min_history = 1

    def __init__(self, records, trial_id="", fallback=None):
        if isinstance(records, (str, Path)):
            records = read_external_forecasts(records)
        self.records = records
        self.trial_id = str(trial_id)
        self.fallback = fallback or HoldOracle()

    def for_trial(self, trial_id) -> "ExternalOracle":
        return ExternalOracle(self.records, trial_id, self.fallback)

    def __call__(self, history, f):
        _check(history, self.min_history)
        key = (self.trial_id, history.spaces[-1].time_index, history.label)
        polys = self.records.get(key)
        if polys is None:
            return self.fallback(history, f)
        if len(polys) < f:
            raise InsufficientHistoryError(f"external forecast for {key} has {len(polys)} < {f} frames")
        return _forecast(history, [np.asarray(p, float) for p in polys[:f]])


def make_oracle(cfg: OracleConfig, trial_id="") -> Oracle:
    if cfg.oracle_kind == "linear":
        return LinearOracle()
    if cfg.oracle_kind == "hold":
        return HoldOracle()
    if not cfg.external_path:
        raise ValueError("external oracle needs external_path")
    return ExternalOracle(cfg.external_path, trial_id)


def predict(history: GroupSpaceSequence, f: int, oracle: Oracle | str = "linear") -> GroupSpaceSequence:
    if isinstance(oracle, str):
        oracle = make_oracle(OracleConfig(history_len=max(2, len(history)), horizon=f, oracle_kind=oracle))
    return oracle(history, f)


def linear_oracle(history: GroupSpaceSequence, f: int) -> GroupSpaceSequence:
    return LinearOracle()(history, f)


def rotate_polygon(poly, angle, center=None):
    c = polygon_centroid(poly) if center is None else np.asarray(center, float)
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    return (poly - c) @ rot.T + c


# -- offline prediction benchmark ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class PredictionSample:
    start_index: int
    label: int
    history: GroupSpaceSequence
    future: GroupSpaceSequence


def _sequence_for(snaps, members, label, grouping_cfg, C):
    spaces = []
    for s in snaps:
        idx = s.index_of()
        rows = [idx[m] for m in members]
        poly = _hull_from_arrays(s.positions[rows], s.headings[rows], s.speeds[rows], C, grouping_cfg.boundary_samples)
        spaces.append(GroupSpace(label, poly, frozenset(members), s.time_index))
    return GroupSpaceSequence(label, tuple(spaces))


def sample_group_sequences(snapshots, grouping_cfg, h: int, f: int, n_samples: int | None = None, seed: int = 0):
    """Windows of h observed plus f future group spaces taken from a crowd.

    A candidate is a group found at the last history frame whose members are
    all present over the whole window; membership is held fixed across the
    window. Candidates over all groups and times are subsampled uniformly
    without replacement when ``n_samples`` is smaller than their number.
    """
    snaps = list(snapshots)
    cands = []
    for t in range(h - 1, len(snaps) - f):
        cur = snaps[t]
        if len(cur) == 0:
            continue
        window = snaps[t - h + 1 : t + f + 1]
        present = set.intersection(*(set(s.ids.tolist()) for s in window))
        for g in cluster_groups(cur, grouping_cfg):
            if g.members <= present:
                cands.append((t, g))
    if n_samples is not None and n_samples < len(cands):
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(cands), size=n_samples, replace=False))
        cands = [cands[i] for i in pick]
    out = []
    for t, g in cands:
        ms = sorted(g.members)
        hist = _sequence_for(snaps[t - h + 1 : t + 1], ms, g.label, grouping_cfg, grouping_cfg.C)
        fut = _sequence_for(snaps[t + 1 : t + f + 1], ms, g.label, grouping_cfg, grouping_cfg.C)
        out.append(PredictionSample(t, g.label, hist, fut))
    return out


def evaluate_oracle(samples, oracle: Oracle, resolution: float = 0.05):
    """Mean (mIoU, fIoU) of ``oracle`` over ``samples``; None when there are none."""
    if not samples:
        return None
    scores = []
    for s in samples:
        pred = oracle(s.history, len(s.future))
        scores.append(evaluate_sequence(pred, s.future, resolution=resolution))
    arr = np.array(scores)
    return float(arr[:, 0].mean()), float(arr[:, 1].mean())
