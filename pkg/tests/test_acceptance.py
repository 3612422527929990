"""End-to-end acceptance checks at full scale (20 seeds per sweep point).

Each check prints one ``PASS``/``FAIL`` line; the lines are repeated in the
pytest terminal summary. The sweeps take a few minutes on one core.
"""
import math
import os
from collections import defaultdict

import numpy as np
import pytest
from scipy import stats

from fsosim.experiment import default_plan, rerun_manifest, run_experiment
from fsosim.metrics import FallsSummary

SEEDS = list(range(20))
JOBS = os.cpu_count() or 1
RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def mean(values):
    return float(np.mean(list(values)))


@pytest.fixture(scope="module")
def falls(tmp_path_factory):
    plan = default_plan("falls")
    assert plan.seeds == SEEDS
    res = run_experiment(plan, tmp_path_factory.mktemp("falls"), jobs=JOBS)
    assert not res.failures
    table = defaultdict(dict)  # (scenario, ic) -> seed -> summary
    for s in res.summaries:
        table[s.scenario, s.ic_count][s.seed] = s
    return res, table


@pytest.fixture(scope="module")
def city(tmp_path_factory):
    res = run_experiment(default_plan("city"), tmp_path_factory.mktemp("city"), jobs=JOBS)
    assert not res.failures
    table = defaultdict(dict)  # (strategy, threshold, individuals) -> seed -> summary
    for s in res.summaries:
        table[s.strategy, s.threshold, s.individuals][s.seed] = s
    return res, table


@pytest.fixture(scope="module")
def fire(tmp_path_factory):
    out = tmp_path_factory.mktemp("fire")
    res = run_experiment(default_plan("fire"), out, jobs=JOBS)
    assert not res.failures
    return res, out


def curve(table, scenario, field):
    return {ic: mean(getattr(s, field) for s in table[scenario, ic].values()) for ic in range(0, 41, 5)}


def test_criterion_01_metric_identities(falls):
    res, _ = falls
    worst = max(max(s.identity_errors().values()) for s in res.summaries)
    ref = FallsSummary.from_counts(scenario="S1", ic_count=0, seed=0, max_ticks=10000, fp=299, fn=56,
                                   tp=195, tn=147313, csc_ambulances=33720, csc_volunteers=0,
                                   cwt=58617, reqs_handled=494)
    ref_ok = (abs(ref.avg_ma_cost - 68.259) < 5e-4 and abs(ref.avg_wt - 118.658) < 5e-4
              and abs(ref.fp_ratio - 0.6052) < 1e-4 and abs(ref.fn_ratio - 0.000380) < 5e-7
              and abs(ref.avg_fp_per_tick - 0.0299) < 1e-12)
    worst = max(worst, max(ref.identity_errors().values()))
    report(1, worst <= 1e-9 and ref_ok,
           f"{len(res.summaries)} summaries plus the reference row, max identity error {worst:.1e}")


def test_criterion_02_ic_reduces_ambulance_cost(falls):
    _, table = falls
    c = curve(table, "S1", "avg_ma_cost")
    drop = c[20] / c[0]
    steps = all(c[b] <= 1.10 * c[a] for a, b in zip(range(0, 20, 5), range(5, 25, 5)))
    stable = all(abs(c[ic] - c[20]) <= 0.15 * c[20] for ic in range(25, 45, 5))
    report(2, drop <= 0.75 and steps and stable,
           f"S1 avg MA cost IC0 {c[0]:.2f} -> IC20 {c[20]:.2f} (ratio {drop:.3f}); "
           f"curve {[round(c[k], 1) for k in sorted(c)]}")


def test_criterion_03_ic_reduces_waiting_time(falls):
    _, table = falls
    c = curve(table, "S1", "avg_wt")
    ratio = c[10] / c[0]
    # later gains are measured against the no-IC wait: once waits are a few
    # ticks, halving them again is still "flat" on the scale of the baseline
    best = min(c[ic] for ic in range(15, 45, 5))
    beyond = (c[10] - best) / c[0]
    report(3, ratio <= 0.30 and beyond < 0.15,
           f"S1 avg WT IC0 {c[0]:.2f} -> IC10 {c[10]:.2f} (ratio {ratio:.3f}); further gain "
           f"{beyond:.3f} of the IC0 wait ({(c[10] - best) / c[10]:.3f} of the IC10 wait)")


def test_criterion_04_sensor_fusion_sensitivity(falls):
    _, table = falls
    ok, parts = True, []
    for sc, p in (("S1", 0.80), ("S2", 0.96)):
        runs = table[sc, 0].values()
        tp, fn = sum(s.tp for s in runs), sum(s.fn for s in runs)
        n = tp + fn
        half = stats.norm.ppf(0.995) * math.sqrt(p * (1 - p) / n)
        sens = tp / n
        ok &= abs(sens - p) <= half
        parts.append(f"{sc} {sens:.4f} (target {p} +/- {half:.4f}, n={n})")
    per_seed = all(table["S2", 0][s].sensitivity > table["S1", 0][s].sensitivity for s in SEEDS)
    report(4, ok and per_seed, "; ".join(parts) + f"; S2 > S1 on every seed: {per_seed}")


def test_criterion_05_more_requests_with_ics(falls):
    _, table = falls
    ok, parts = True, []
    for sc in ("S1", "S2"):
        req = curve(table, sc, "reqs_handled")
        fp = curve(table, sc, "fp")
        low = min(req[ic] for ic in range(10, 45, 5)) / req[0]
        ok &= low >= 1.10 and min(fp[ic] for ic in range(10, 45, 5)) > fp[0]
        parts.append(f"{sc} reqs IC0 {req[0]:.1f}, IC10+ min ratio {low:.3f}, FP IC0 {fp[0]:.1f} IC40 {fp[40]:.1f}")
    report(5, ok, "; ".join(parts))


def paired(table, key, field, a, b):
    xa = [getattr(table[(a,) + key][s], field) for s in SEEDS]
    xb = [getattr(table[(b,) + key][s], field) for s in SEEDS]
    return mean(xa), mean(xb), stats.ttest_rel(xa, xb).pvalue


def test_criterion_06_strategy_ordering(city):
    _, table = city
    key = (150, 140)
    ok, parts = True, []
    for field, sign in (("treated", 1), ("died", -1)):
        for a, b in (("FSO", "PerfectOracle"), ("PerfectOracle", "Traditional")):
            ma, mb, p = paired(table, key, field, a, b)
            ok &= sign * (ma - mb) > 0 and p < 0.05
            parts.append(f"{field} {a} {ma:.1f} vs {b} {mb:.1f} p={p:.1e}")
    report(6, ok, "; ".join(parts))


def test_criterion_07_querying_time_ordering(city):
    _, table = city
    worst_p, bad = 0.0, []
    for th in (100, 150, 200):
        for n in range(60, 141, 20):
            for a, b in (("FSO", "PerfectOracle"), ("PerfectOracle", "Traditional")):
                xa = [table[a, th, n][s].avg_querying_time for s in SEEDS]
                xb = [table[b, th, n][s].avg_querying_time for s in SEEDS]
                p = stats.ttest_ind(xa, xb, equal_var=False).pvalue
                worst_p = max(worst_p, p)
                if not (mean(xa) < mean(xb) and p < 0.05):
                    bad.append(f"{a}<{b}@{th}/{n} ({mean(xa):.2f} vs {mean(xb):.2f}, p={p:.2g})")
    report(7, not bad, f"15 grid points, largest p {worst_p:.1e}" + (f"; violations {bad}" if bad else ""))


def test_criterion_08_threshold_monotonicity(city):
    _, table = city
    ok, parts = True, []
    for st in ("FSO", "PerfectOracle", "Traditional"):
        d = [mean(table[st, th, n][s].died for n in range(60, 141, 20) for s in SEEDS) for th in (100, 150, 200)]
        ok &= d[0] >= d[1] >= d[2]
        parts.append(f"{st} deaths {d[0]:.2f} >= {d[1]:.2f} >= {d[2]:.2f}")
    report(8, ok, "; ".join(parts))


def test_criterion_09_fire_collaboration(fire):
    res, _ = fire
    burned = defaultdict(list)
    for s in res.summaries:
        burned[s.strategy].append(s.fully_burned_houses)
    f, t = mean(burned["FSO"]), mean(burned["Traditional"])
    report(9, f <= 0.70 * t, f"burned houses FSO {f:.2f} vs without {t:.2f} (ratio {f / t:.3f})")


PROPERTY_SUITES = [
    ("test_fso", "test_role_conservation_over_allocate_dissolve_cycles"),
    ("test_fso", "test_escalation_oracle_rollback_termination_and_span"),
    ("test_fso", "test_match_all_or_nothing_against_brute_force"),
    ("test_mutualism", "test_checks_match_brute_force_and_strict_implies_extended"),
    ("test_mutualism", "test_bijection_roundtrip_property"),
]


def test_criterion_10_protocol_properties():
    import importlib
    failed = []
    for mod, name in PROPERTY_SUITES:
        fn = getattr(importlib.import_module(mod), name)
        assert fn.hypothesis.inner_test is not None and _examples(fn) >= 1000
        try:
            fn()
        except Exception as exc:  # collect every failing suite before reporting
            failed.append(f"{name}: {type(exc).__name__}")
    report(10, not failed, f"{len(PROPERTY_SUITES)} property suites at >= 1000 cases each"
           + (f"; failing {failed}" if failed else ""))


def _examples(fn) -> int:
    return fn._hypothesis_internal_use_settings.max_examples


def test_criterion_11_manifest_rerun_is_byte_identical(fire, tmp_path):
    res, out = fire
    again, mismatched = rerun_manifest(out, tmp_path, jobs=1)
    same = all((out / p.name).read_bytes() == (tmp_path / p.name).read_bytes() for p in res.files)
    report(11, not mismatched and same and not again.failures,
           f"{len(res.files)} files rebuilt from the manifest, {len(mismatched)} mismatched")
