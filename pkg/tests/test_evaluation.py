import csv
import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import mannwhitneyu

from groupnav.evaluation import (
    TrialMetrics,
    build_report,
    format_table,
    mann_whitney_u,
    metrics_csv,
    read_metrics_csv,
    report_csv,
    score_trial,
    stars,
    pairwise_csv,
)
from groupnav.grouping import GroupingConfig
from groupnav.simulator import TrialRecord, TrialSpec
from groupnav.world import WorldSnapshot

SPEC = TrialSpec("t", "s", "Flow", (0.0, 0.0), (10.0, 0.0), (0, 0))


def pair_count_u(a, b):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def permutation_p(a, b):
    """Two-sided p over every ordering of the pooled sample."""
    pooled = list(a) + list(b)
    n_a = len(a)
    mu = n_a * len(b) / 2
    obs = abs(pair_count_u(a, b) - mu)
    hits = total = 0
    for perm in itertools.permutations(pooled):
        total += 1
        hits += abs(pair_count_u(perm[:n_a], perm[n_a:]) - mu) >= obs - 1e-9
    return hits / total


def subset_p(a, b):
    pooled = list(a) + list(b)
    n_a = len(a)
    mu = n_a * len(b) / 2
    obs = abs(pair_count_u(a, b) - mu)
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), n_a):
        rest = [pooled[i] for i in range(len(pooled)) if i not in idx]
        total += 1
        hits += abs(pair_count_u([pooled[i] for i in idx], rest) - mu) >= obs - 1e-9
    return hits / total


def test_small_exact_example():
    u, p = mann_whitney_u([1, 2], [3, 4])
    assert u == 0 and p == pytest.approx(1 / 3)


def test_identical_samples():
    assert mann_whitney_u([2, 2, 2], [2, 2])[1] == 1.0
    assert mann_whitney_u([1, 2, 3], [1, 2, 3])[1] == 1.0


def test_exact_matches_full_permutations_small():
    rng = np.random.default_rng(0)
    for n in range(2, 8):
        for n_a in range(1, n):
            a = rng.integers(0, 4, n_a).tolist()
            b = rng.integers(0, 4, n - n_a).tolist()
            assert mann_whitney_u(a, b)[1] == pytest.approx(permutation_p(a, b), abs=1e-12)


def test_exact_matches_enumeration_up_to_ten():
    rng = np.random.default_rng(1)
    for n in range(2, 11):
        for n_a in range(1, n):
            for _ in range(3):
                a = rng.integers(0, 5, n_a).tolist()
                b = (rng.integers(0, 5, n - n_a) + rng.integers(0, 2)).tolist()
                u, p = mann_whitney_u(a, b)
                assert u == pytest.approx(pair_count_u(a, b))
                assert p == pytest.approx(subset_p(a, b), abs=1e-12)


def test_normal_approximation_matches_scipy():
    rng = np.random.default_rng(2)
    for _ in range(30):
        a = np.round(rng.normal(0, 1, rng.integers(7, 30)), 1)
        b = np.round(rng.normal(0.5, 1, rng.integers(7, 30)), 1)
        ref = mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
        u, p = mann_whitney_u(a, b)
        assert u == pytest.approx(ref.statistic) and p == pytest.approx(ref.pvalue, rel=1e-9)


def test_clear_shift_is_highly_significant():
    rng = np.random.default_rng(3)
    a, b = rng.normal(0, 1, 30), rng.normal(2, 1, 30)
    _, p = mann_whitney_u(a, b)
    # Monte Carlo permutation oracle on the same draws
    pooled = np.concatenate([a, b])
    obs = abs(pair_count_u(a, b) - 450)
    mc = np.mean([abs(pair_count_u(*np.split(rng.permutation(pooled), [30])) - 450) >= obs for _ in range(2000)])
    assert p < 0.001 and mc < 0.001


# values on a coarse lattice so the transform stays strictly monotone in floating point
lattice = st.lists(st.integers(-40, 40).map(lambda i: i / 8), min_size=1, max_size=8)


@given(lattice, lattice)
def test_u_symmetry_and_monotone_invariance(a, b):
    ua, pa = mann_whitney_u(a, b)
    ub, pb = mann_whitney_u(b, a)
    assert ua + ub == pytest.approx(len(a) * len(b))
    assert pa == pytest.approx(pb)
    assert 0.0 <= pa <= 1.0
    ta, tb = np.exp(np.asarray(a)), np.exp(np.asarray(b))
    assert mann_whitney_u(ta, tb)[1] == pytest.approx(pa)


def test_stars_levels():
    assert [stars(p) for p in (0.2, 0.04, 0.009, 0.0009)] == ["", "*", "**", "***"]


def test_empty_sample_rejected():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])


# -- trial scoring ---------------------------------------------------------------------


def record(trace, snaps, termination="Success"):
    return TrialRecord(SPEC, "group-pred", np.asarray(trace, float), snaps, termination)


def still(k, pts):
    pts = np.asarray(pts, float).reshape(-1, 2)
    return WorldSnapshot(k, list(range(len(pts))), pts, np.zeros_like(pts))


def test_straight_run_metrics():
    trace = np.stack([np.linspace(0, 10, 101), np.zeros(101)], axis=1)
    snaps = [still(k, [(5.0, 3.0)]) for k in range(101)]
    m = score_trial(record(trace, snaps))
    assert m.success and m.comfort
    assert m.path_length == pytest.approx(10.0, abs=1e-9)
    assert m.min_ped_distance == pytest.approx(3.0)


def test_collision_breaks_comfort():
    trace = [(0.0, 0.0), (1.0, 0.0)]
    m = score_trial(record(trace, [still(0, [(5, 5)]), still(1, [(1.1, 0)])], "Collision"))
    assert not m.success and not m.comfort


def test_intrusion_breaks_comfort():
    trace = [(0.0, 0.0), (0.3, 0.0), (3.0, 0.0)]
    snaps = [still(k, [(0.5, 0.0), (0.5, 0.8)]) for k in range(3)]
    assert not score_trial(record(trace, snaps)).comfort


def test_no_agents_gives_infinite_distance():
    m = score_trial(record([(0, 0), (1, 0)], [still(0, []), still(1, [])]))
    assert math.isinf(m.min_ped_distance) and m.comfort


def test_comfort_anti_monotone_in_c():
    rng = np.random.default_rng(4)
    for _ in range(60):
        peds = rng.uniform(-2, 2, size=(3, 2))
        trace = np.cumsum(rng.normal(0, 0.3, size=(15, 2)), axis=0)
        snaps = [still(k, peds) for k in range(15)]
        rec = record(trace, snaps)
        small = score_trial(rec, GroupingConfig(C=0.15))
        big = score_trial(rec, GroupingConfig(C=0.35))
        if not small.comfort:
            assert not big.comfort


def test_metrics_invariants():
    with pytest.raises(ValueError):
        TrialMetrics(True, True, -1.0, 1.0)


# -- aggregation ------------------------------------------------------------------------------


def M(s, c, d, l):
    return TrialMetrics(s, c, d, l)


def test_success_rate_example():
    r = build_report({("p", "s", "Flow", "Offline"): [M(True, True, 1, 10)] * 3 + [M(False, False, 1, 10)]})
    assert r.stats[("p", "s", "Flow", "Offline")].success_rate == 75.0
    assert r.tests == []


def test_identical_policies_not_significant():
    ms = [M(True, True, d, 10 + d) for d in (0.5, 0.7, 0.9, 1.1)]
    r = build_report({("a", "s", "Flow", "Offline"): ms, ("b", "s", "Flow", "Offline"): list(ms)})
    assert len(r.tests) == 2
    assert all(t.p == 1.0 and t.stars == "" for t in r.tests)


def test_dominating_policy_is_starred():
    rng = np.random.default_rng(5)
    da = rng.uniform(1.5, 2.5, 25)
    db = rng.uniform(0.2, 1.4, 25)
    r = build_report(
        {
            ("a", "s", "Cross", "Online"): [M(True, True, d, 10) for d in da],
            ("b", "s", "Cross", "Online"): [M(True, True, d, 10) for d in db],
        }
    )
    assert r.stats[("a", "s", "Cross", "Online")].mean_distance > r.stats[("b", "s", "Cross", "Online")].mean_distance
    (t,) = [t for t in r.tests if t.metric == "min_ped_distance"]
    # every a exceeds every b, so the permutation p is tiny
    assert t.stars == stars(mann_whitney_u(da, db)[1]) == "***"


def test_missing_cells_are_listed():
    r = build_report({("a", "s1", "Flow", "Offline"): [M(True, True, 1, 1)], ("b", "s2", "Flow", "Offline"): [M(True, True, 1, 1)]})
    assert ("a", "s2", "Flow", "Offline") in r.missing and ("b", "s1", "Flow", "Offline") in r.missing
    assert "missing cells" in format_table(r)


def test_csv_outputs_recompute():
    rng = np.random.default_rng(6)
    metrics = {}
    rows = []
    for pol in ("a", "b"):
        ms = [M(bool(rng.integers(2)), bool(rng.integers(2)), float(rng.uniform(0, 3)), float(rng.uniform(8, 12))) for _ in range(7)]
        metrics[(pol, "s", "Flow", "Offline")] = ms
        rows += [((pol, "s", "Flow", "Offline"), f"t{i}", m) for i, m in enumerate(ms)]
    r = build_report(metrics)
    # independent aggregation straight from the per-trial CSV
    per_trial = list(csv.DictReader(io.StringIO(metrics_csv(rows))))
    summary = {(row["policy"], row["metric"]): float(row["value"]) for row in csv.DictReader(io.StringIO(report_csv(r)))}
    for pol in ("a", "b"):
        mine = [row for row in per_trial if row["policy"] == pol]
        assert summary[(pol, "S")] == pytest.approx(100 * np.mean([int(x["success"]) for x in mine]), abs=1e-6)
        assert summary[(pol, "C")] == pytest.approx(100 * np.mean([int(x["comfort"]) for x in mine]), abs=1e-6)
        assert summary[(pol, "D")] == pytest.approx(np.mean([float(x["min_ped_distance"]) for x in mine]), abs=1e-6)
        assert summary[(pol, "L")] == pytest.approx(np.mean([float(x["path_length"]) for x in mine]), abs=1e-6)
    assert read_metrics_csv(metrics_csv(rows)).keys() == metrics.keys()
    assert pairwise_csv(r).count("\n") == 3


def test_empty_report_notice():
    r = build_report({})
    assert r.empty
    assert "empty report" in format_table(r)
