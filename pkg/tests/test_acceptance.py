"""Acceptance criteria 1-7, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlfmm.bench import RunConfig, fit_loglog_slope, run
from mlfmm.eikonal import INF, FrontSets, SpeedField, inverse_kruzkov, kruzkov, partial_fast_march
from mlfmm.estimators import FastMarching, MultiLevelFastMarching
from mlfmm.grid import BoxDomain, GridSpec, RestrictedGrid
from mlfmm.mlfm import BidirectionalValues, combine_fv, geodesic_cover_gaps, select_active
from mlfmm.problems import brute_force_values, paper_benchmark, variable_speed_field

TAU_D2 = 0.648528


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


# --- 1. oracle equivalence ---------------------------------------------

@st.composite
def small_grid_problem(draw):
    d = draw(st.sampled_from([1, 2, 3]))
    side = {1: st.integers(2, 2000), 2: st.integers(2, 99), 3: st.integers(2, 21)}[d]
    n = draw(side)
    base = GridSpec(BoxDomain.unit(d), 1.0 / (n - 1))
    assert base.size <= 10 ** 4
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    keep = draw(st.sampled_from([1.0, 0.9, 0.7]))
    members = np.flatnonzero(rng.random(base.size) < keep)
    if len(members) == 0:
        members = np.array([0])
    g = RestrictedGrid(base, members)
    k = draw(st.integers(1, min(4, len(members))))
    start = frozenset(int(x) for x in rng.choice(members, size=k, replace=False))
    speed = SpeedField.constant(1.0) if d == 1 or draw(st.booleans()) else variable_speed_field("bump", d)
    return g, speed, start


def _oracle_gap(problem):
    g, speed, start = problem
    vf = partial_fast_march(g, speed, FrontSets(start))
    bf = brute_force_values(g, speed, start)
    gap = 0.0
    for x, t in bf.items():
        got = vf.T[x] if x in vf.accepted else INF
        if t == INF or got == INF:
            if t != got:
                return INF
        else:
            gap = max(gap, abs(got - t))
    return gap


def test_criterion_1_oracle_equivalence(report):
    gaps = []

    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(small_grid_problem())
    def check(problem):
        gaps.append(_oracle_gap(problem))

    t0 = time.perf_counter()
    check()
    # the largest grids of each dimension, always included
    for d, n in ((1, 10 ** 4), (2, 100), (3, 21)):
        g = RestrictedGrid.full(GridSpec(BoxDomain.unit(d), 1.0 / (n - 1)))
        gaps.append(_oracle_gap((g, SpeedField.constant(1.0), frozenset({0, g.base.size - 1}))))
    secs = time.perf_counter() - t0
    worst = max(gaps)
    report(1, worst <= 1e-10 and secs < 10,
           f"max |FMM - value iteration| = {worst:.2e} over {len(gaps)} grids (tol 1e-10), {secs:.1f}s")


# --- 2. analytic accuracy -----------------------------------------------

def test_criterion_2_analytic_accuracy(report):
    t0 = time.perf_counter()
    hs = [1 / 25, 1 / 50, 1 / 100]
    errs = [abs(FastMarching(h=h).fit(paper_benchmark(2)).tau_star_ - TAU_D2) for h in hs]
    secs = time.perf_counter() - t0
    ok = all(e <= 3 * h for e, h in zip(errs, hs)) and errs[0] > errs[1] > errs[2] and secs < 30
    report(2, ok, "errors " + ", ".join(f"h=1/{round(1 / h)}: {e:.5f} (<= {3 * h:.3f})"
                                         for h, e in zip(hs, errs)) + f", {secs:.1f}s")


# --- 3 and 4 share the same runs ------------------------------------------

@pytest.fixture(scope="module")
def paired_runs():
    out = {}
    t0 = time.perf_counter()
    for d in (2, 3):
        p = paper_benchmark(d)
        ml = MultiLevelFastMarching(finest_h=1 / 50, mode="auto").fit(p)
        cl = FastMarching(h=1 / 50).fit(p)
        out[d] = (p, ml, cl)
    out["secs"] = time.perf_counter() - t0
    return out


def test_criterion_3_mlfmm_consistency(report, paired_runs):
    diffs = {d: abs(paired_runs[d][1].tau_star_ - paired_runs[d][2].tau_star_) for d in (2, 3)}
    secs = paired_runs["secs"]
    ok = all(v <= 2 / 50 for v in diffs.values()) and secs < 120
    report(3, ok, ", ".join(f"d={d}: |dtau| = {v:.2e}" for d, v in diffs.items())
           + f" (<= 0.04), {secs:.1f}s")


def test_criterion_4_geodesic_containment(report, paired_runs):
    lines, ok = [], True
    for d in (2, 3):
        p, ml, _ = paired_runs[d]
        res = ml.result_
        gaps = geodesic_cover_gaps(res, p.oracle.segment, n=1000)
        # exact vertex check too: segment endpoints
        for act, H, gap in zip(res.active_sets, res.schedule.steps, gaps):
            a, b = p.oracle.segment
            ends = max(np.min(np.max(np.abs(act.points() - q), axis=1)) for q in (a, b))
            ok &= gap <= H and ends <= H
            lines.append(f"d={d} H={H:.4f} gap={gap:.4f}")
        ok &= len(gaps) == res.schedule.n_levels - 1 and len(gaps) >= 1
    report(4, ok, "; ".join(lines))


# --- 5. complexity slope ------------------------------------------------

def test_criterion_5_complexity_slope(report):
    t0 = time.perf_counter()
    hs = [1 / 25, 1 / 50, 1 / 100, 1 / 200]
    classic = [run(RunConfig(mode="classic", h=h)).totals["visited_nodes"] for h in hs]
    multi = [run(RunConfig(mode="multi_level", h=h)).totals["visited_nodes"] for h in hs]
    s_cl, s_ml = fit_loglog_slope(hs, classic), fit_loglog_slope(hs, multi)
    secs = time.perf_counter() - t0
    report(5, s_cl >= 1.8 and s_ml <= 1.7 and secs < 300,
           f"classic slope {s_cl:.3f} (>= 1.8), multi_level slope {s_ml:.3f} (<= 1.7), "
           f"visited {classic} vs {multi}, {secs:.1f}s")


# --- 6. dimension scaling -----------------------------------------------

def test_criterion_6_dimension_scaling(report):
    t0 = time.perf_counter()
    # eta_const below the default 2.0; see the decisions ledger
    rep = run(RunConfig(dim=4, mode="multi_level", h=1 / 20, eta_const=0.2))
    secs = time.perf_counter() - t0
    visited = rep.totals["visited_nodes"]
    frac = visited / 21 ** 4
    err = abs(rep.tau_star - (0.6 * 2 - 0.2))
    report(6, rep.status == "ok" and frac <= 0.30 and err <= 3 / 20 and secs < 300,
           f"visited {visited} = {100 * frac:.1f}% of 21^4 (<= 30%), |tau - 1.0| = {err:.4f} (<= 0.15), "
           f"{secs:.1f}s")


# --- 7. invariant suite -------------------------------------------------

def _restricted(seed, d, n, keep):
    rng = np.random.default_rng(seed)
    base = GridSpec(BoxDomain.unit(d), 1.0 / (n - 1))
    members = np.union1d(np.flatnonzero(rng.random(base.size) < keep), [0])
    return RestrictedGrid(base, members), rng


def test_criterion_7_invariant_suite(report):
    t0 = time.perf_counter()
    failures = []

    def record(name, fn):
        try:
            fn()
        except AssertionError as exc:
            failures.append(f"{name}: {str(exc).splitlines()[0] if str(exc) else 'failed'}")

    @settings(max_examples=30, deadline=None, derandomize=True)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 50), (2, 15), (3, 6)]))
    def monotone_acceptance(seed, shape):
        g, rng = _restricted(seed, *shape, 0.8)
        times = partial_fast_march(g, variable_speed_field("bump", shape[0]), FrontSets({0})).accepted_times()
        assert np.all(np.diff(times) >= 0), "acceptance order not monotone"

    @settings(max_examples=30, deadline=None, derandomize=True)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 0.3), st.floats(1e-3, 0.3))
    def threshold_monotone(seed, e1, e2):
        g, rng = _restricted(seed, 2, 12, 1.0)
        members = g.flat_members
        a, b = rng.choice(members, size=2, replace=False)
        vs = partial_fast_march(g, SpeedField.constant(1.0), FrontSets({int(a)}))
        vd = partial_fast_march(g, SpeedField.constant(1.0), FrontSets({int(b)}))
        bi = BidirectionalValues(vs, vd, np.array(sorted(vs.accepted & vd.accepted)))
        lo, hi = sorted((e1, e2))
        assert set(select_active(bi, lo).nodes.tolist()) <= set(select_active(bi, hi).nodes.tolist()), \
            "active set not monotone in eta"

    @settings(max_examples=200, deadline=None, derandomize=True)
    @given(st.floats(0, 1 - 1e-6))
    def kruzkov_round_trip(v):
        assert abs(kruzkov(inverse_kruzkov(v)) - v) <= 1e-12, "round trip"

    @settings(max_examples=200, deadline=None, derandomize=True)
    @given(st.floats(0, 30), st.floats(0, 30))
    def additivity(a, b):
        assert abs(combine_fv(kruzkov(a), kruzkov(b)) - kruzkov(a + b)) <= 1e-12, "additivity"

    @settings(max_examples=30, deadline=None, derandomize=True)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 40), (2, 12), (3, 5)]))
    def restriction_consistency(seed, shape):
        g2, rng = _restricted(seed, *shape, 0.9)
        m1 = np.union1d(g2.flat_members[rng.random(len(g2)) < 0.7], [0])
        g1 = RestrictedGrid(g2.base, m1)
        T1 = partial_fast_march(g1, SpeedField.constant(1.0), FrontSets({0})).T
        T2 = partial_fast_march(g2, SpeedField.constant(1.0), FrontSets({0})).T
        assert all(T1.get(int(x), INF) >= T2.get(int(x), INF) for x in m1), "restriction lowered a value"

    def determinism():
        def strip(rep):
            d = rep.to_dict()
            d.pop("timing_samples_ms")
            d["totals"] = {k: v for k, v in d["totals"].items() if not k.startswith("wall_ms")}
            for lv in d["levels"]:
                lv.pop("wall_ms")
            return d
        cfg = RunConfig(mode="multi_level", h=1 / 50)
        assert strip(run(cfg)) == strip(run(cfg)), "reports differ"

    checks = [("monotone acceptance", monotone_acceptance), ("threshold monotonicity", threshold_monotone),
              ("Kruzkov round trip", kruzkov_round_trip), ("combine_fv additivity", additivity),
              ("restriction consistency", restriction_consistency), ("determinism", determinism)]
    for name, fn in checks:
        record(name, fn)
    secs = time.perf_counter() - t0
    ok = not failures and secs < 60
    report(7, ok, (f"{len(checks)} invariants hold" if not failures else "; ".join(failures))
           + f", {secs:.1f}s")
