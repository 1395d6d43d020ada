"""Acceptance suite: one test group per criterion, tagged with ``criterion(n)``.

The terminal summary prints one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from _helpers import exp_model, smib_energy_drift, smib_period

from hybrid_dsa.cli import main
from hybrid_dsa.dae import DaeState, SolverConfig, simulate
from hybrid_dsa.hybrid import last_state, validate_execution
from hybrid_dsa.planner import circular_dist, distances, extract_execution, make_streams, sample_state
from hybrid_dsa.power import load_case, power_flow, shipped_case
from hybrid_dsa.scenario import index1_survey, plan, shipped_scenario

crit = pytest.mark.criterion


def detail(record_property, text):
    record_property("detail", text)


def with_config(problem, **kw):
    return replace(problem, config=replace(problem.config, **kw))


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def counter_violations(problem, res):
    """Caching and nearest-neighbour bookkeeping of one planner run."""
    H = problem.automaton
    pairs = len(H.modes) * len(H.inputs)
    tree = res.tree
    out = []
    if tree.sims_total != pairs * len(tree.cache):
        out.append(f"sims_total {tree.sims_total} != {pairs} * expanded {len(tree.cache)}")
    prev_sims, nodes = 0, 1
    expected_cmp = 0
    for r in res.loops:
        if r.sims_total - prev_sims not in (0, pairs):
            out.append(f"loop {r.iteration}: {r.sims_total - prev_sims} simulations")
        expected_cmp += nodes  # the scan at loop k compares against every node
        if r.comparisons != expected_cmp:
            out.append(f"loop {r.iteration}: {r.comparisons} comparisons, expected {expected_cmp}")
        prev_sims, nodes = r.sims_total, r.nodes
    return out


# -- 1 ------------------------------------------------------------------------


@crit(1)
def test_integrator_order(record_property):
    start = time.perf_counter()
    errs = []
    for h in (0.04, 0.02, 0.01):
        seg = simulate(exp_model(), DaeState(np.ones(1), np.ones(1), 0.0), 0.0, 1.0,
                       SolverConfig(h=h))
        errs.append(abs(seg.y[-1, 0] - math.exp(-1)))
    elapsed = time.perf_counter() - start
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    detail(record_property, f"error ratios {ratios[0]:.3f}, {ratios[1]:.3f}; {elapsed:.3f} s")
    assert min(ratios) >= 3.5 and elapsed < 1.0


# -- 2 ------------------------------------------------------------------------


@crit(2)
def test_power_flow_oracles(record_property):
    start = time.perf_counter()
    pf = power_flow(load_case(shipped_case("twobus")), 0)
    P, x = 0.5, 0.2
    v = math.sqrt((1 + math.sqrt(1 - 4 * (x * P) ** 2)) / 2)
    err2 = abs(pf.v[1] - v)
    case = load_case(shipped_case("ne39"))
    pf39 = power_flow(case, case.mode_id("q2"))
    elapsed = time.perf_counter() - start
    detail(record_property, f"2-bus |dv| {err2:.1e}; 39-bus mismatch {pf39.mismatch:.1e} in "
           f"{pf39.iterations} iterations; {elapsed:.2f} s")
    assert err2 <= 1e-8
    assert pf39.mismatch <= 1e-8 and pf39.iterations <= 10
    assert elapsed < 5.0


# -- 3 ------------------------------------------------------------------------


@crit(3)
def test_smib_physics(smib_eq, record_property):
    measured, analytic = smib_period(smib_eq)
    drift = smib_energy_drift(smib_eq)
    rel = abs(measured - analytic) / analytic
    detail(record_property, f"period {measured:.4f} s vs {analytic:.4f} s ({100 * rel:.2f}%); "
           f"energy drift {drift:.1e}")
    assert rel <= 0.02 and drift <= 1e-4


# -- shipped scenario runs (4, 7, 10) -----------------------------------------


@pytest.fixture(scope="module")
def shipped_runs(smib_problem, ne39_problem):
    out = {}
    for name, problem in (("smib", smib_problem), ("ne39", ne39_problem)):
        start = time.perf_counter()
        res = plan(problem)
        ex = None if res.goal is None else extract_execution(res.tree, res.goal)
        out[name] = (problem, res, ex, time.perf_counter() - start)
    return out


# -- 4 ------------------------------------------------------------------------


@crit(4)
def test_index1_along_shipped_runs(shipped_runs, record_property):
    texts, singular = [], 0
    for name, (problem, res, ex, _) in shipped_runs.items():
        s = index1_survey(problem, res, ex)
        singular += s["singular"]
        texts.append(f"{name}: {s['singular']} of {s['states_checked']} singular, "
                     f"worst condition {s['max_condition']:.1e}")
    detail(record_property, "; ".join(texts))
    assert singular == 0


# -- 5 ------------------------------------------------------------------------


@crit(5)
def test_ne39_speeds_rise_without_control(tmp_path, record_property):
    assert main(["simulate", "--scenario", "ne39", "--out", str(tmp_path), "--u", "0"]) == 0
    head, rows = read_csv(tmp_path / "timeseries.csv")
    X = np.array(rows, dtype=float)
    t = X[:, 0]
    omega = X[:, [k for k, h in enumerate(head) if h.startswith("omega_")]]
    keep = (t >= 1.1) & (t <= 10.0)
    w_min = omega[keep].min(axis=1)
    slope = np.polyfit(t[keep], w_min, 1)[0]
    detail(record_property, f"slope of min omega {slope:.2e} /s; min omega at 10 s "
           f"{w_min[-1]:.4f}")
    assert t[-1] == pytest.approx(10.0)
    assert slope > 0 and w_min[-1] > 1.0


# -- 6 ------------------------------------------------------------------------


@crit(6)
def test_distance_metric_properties(ne39_problem, record_property):
    rng = np.random.default_rng(6)
    spec, dspec = ne39_problem.sampler, ne39_problem.dspec
    n = 100_000
    # states drawn well beyond the search box so that angles wrap
    span = np.maximum(spec.hi - spec.lo, 1.0)
    A, B, C = (spec.lo + span * rng.uniform(-3, 4, (n, spec.dim)) for _ in range(3))
    # half the triples nearly collinear, where the triangle inequality is tight
    half = n // 2
    C[:half] = A[:half] + rng.uniform(-0.1, 0.1, (half, spec.dim))
    B[:half] = A[:half] + rng.uniform(0, 1, (half, 1)) * (C[:half] - A[:half])
    ab, ba = distances(A, B, dspec), distances(B, A, dspec)
    ac, bc = distances(A, C, dspec), distances(B, C, dspec)
    sym = int(np.count_nonzero(ab != ba))
    excess = float(np.max(ac - ab - bc))
    r = circular_dist(rng.uniform(-50, 50, n), rng.uniform(-50, 50, n))
    detail(record_property, f"{n} triples: {sym} asymmetric, max triangle excess {excess:.1e}; "
           f"arc range [{r.min():.3f}, {r.max():.4f}]")
    assert sym == 0 and excess <= 1e-12
    assert np.all(ab >= 0) and np.all(distances(A, A, dspec) == 0)
    assert r.min() >= 0.0 and r.max() <= math.pi


# -- 7 ------------------------------------------------------------------------


@crit(7)
def test_caching_bound(smib_problem, shipped_runs, record_property):
    p = with_config(smib_problem, K=1000, seed=1, stop_on_goal=False)
    res = plan(p)
    H = p.automaton
    pairs = len(H.modes) * len(H.inputs)
    tree = res.tree
    problems = counter_violations(p, res)
    for problem, r, _, _ in shipped_runs.values():
        problems += counter_violations(problem, r)
    ratio = tree.sims_total / (pairs * len(tree))
    detail(record_property, f"K=1000: sims {tree.sims_total} = {pairs} x {len(tree.cache)} "
           f"expanded; {ratio:.3f} of {pairs} x {len(tree)} nodes")
    assert not problems, problems[:5]
    assert tree.sims_total <= 0.9 * pairs * len(tree)


# -- 8 ------------------------------------------------------------------------


@crit(8)
def test_complexity_shape(tmp_path, record_property):
    ks = list(range(100, 1001, 100))
    assert main(["bench", "--scenario", "smib", "--out", str(tmp_path), "--repeat", "3", "--ks"]
                + [str(k) for k in ks]) == 0
    head, rows = read_csv(tmp_path / "bench.csv")
    col = {h: i for i, h in enumerate(head)}
    K = np.array([int(r[col["K"]]) for r in rows])
    cmp_ = np.array([int(r[col["comparisons"]]) for r in rows])
    rejected = sum(int(r[col["rejected"]]) for r in rows)
    total = np.array([float(r[col["t_total"]]) for r in rows])
    step4 = np.array([float(r[col["t_step4"]]) for r in rows])
    fit = np.polyfit(K, total, 1)
    resid = total - np.polyval(fit, K)
    r2 = 1.0 - np.sum(resid**2) / np.sum((total - total.mean()) ** 2)
    exact = bool(np.all(cmp_ == K * (K + 1) // 2))
    detail(record_property, f"comparisons == K(K+1)/2 for all K: {exact} ({rejected} rejected "
           f"loops); wall-clock linear R^2 {r2:.4f}; step-4 share {np.sum(step4) / np.sum(total):.2f}")
    assert list(K) == ks
    assert exact
    assert r2 >= 0.95


# -- 9 ------------------------------------------------------------------------


@crit(9)
def test_sampler_mode_uniformity(smib_problem, record_property):
    spec = smib_problem.sampler
    streams = make_streams(9)
    n = 1_000_000
    counts = np.zeros(len(spec.modes), dtype=int)
    for _ in range(n):
        counts[sample_state(spec, streams).mode] += 1
    freq = counts / n
    detail(record_property, f"mode frequencies over {n} draws {np.round(freq, 5).tolist()}")
    assert np.all(np.abs(freq - 1 / len(spec.modes)) <= 0.002)


@crit(9)
def test_every_edge_input_is_used(smib_problem, record_property):
    p = with_config(smib_problem, K=10_000, seed=1, stop_on_goal=False)
    res = plan(p)
    H = p.automaton
    pairs = {(q.id, u) for q in H.modes for u in H.inputs}
    used = {(n.mode, n.u) for n in res.tree.nodes[1:]}
    detail(record_property, f"10^4 loops: {len(used & pairs)} of {len(pairs)} (q, u) pairs on "
           f"tree edges, {len(res.tree)} nodes, {res.rejected} rejected")
    assert used == pairs


# -- 10 -----------------------------------------------------------------------


@crit(10)
def test_smib_seed_sweep(smib_problem, record_property):
    start = time.perf_counter()
    secure, bad = 0, []
    for seed in range(1, 21):
        p = with_config(smib_problem, K=500, seed=seed)
        res = plan(p)
        bad += [f"seed {seed}: {m}" for m in counter_violations(p, res)]
        if res.goal is None:
            continue
        ex = extract_execution(res.tree, res.goal)
        v = validate_execution(p.automaton, ex)
        if v is not None or not p.target(last_state(ex)):
            bad.append(f"seed {seed}: execution rejected ({v})")
            continue
        secure += 1
    elapsed = time.perf_counter() - start
    detail(record_property, f"SMIB K=500: {secure}/20 seeds SECURE in {elapsed:.0f} s")
    assert not bad, bad[:5]
    assert secure >= 18 and elapsed < 300


@crit(10)
def test_ne39_scenario_run(shipped_runs, record_property):
    problem, res, ex, elapsed = shipped_runs["ne39"]
    assert problem.config.K == 2000 and problem.config.dt == pytest.approx(1.26)
    problems = counter_violations(problem, res)
    if ex is None:
        verdict = "UNDECIDED"
    else:
        verdict = "SECURE"
        v = validate_execution(problem.automaton, ex)
        if v is not None:
            problems.append(f"execution rejected: {v}")
        if not problem.target(last_state(ex)):
            problems.append("execution does not end in the target set")
    depth = None if ex is None else ex.depth
    detail(record_property, f"39-bus K=2000: {verdict}, depth {depth}, {len(res.tree)} nodes, "
           f"{elapsed:.1f} s")
    assert not problems, problems[:5]


# -- 11 -----------------------------------------------------------------------


@crit(11)
def test_dsa_trees_are_bitwise_reproducible(tmp_path, record_property):
    doc = json.loads(shipped_scenario("smib").read_text())
    doc["planner"].update(K=200, stop_on_goal=False)
    doc["case"] = "smib"
    wide = tmp_path / "wide.scenario.json"
    wide.write_text(json.dumps(doc))
    sizes = []
    for label, scenario in (("shipped", "smib"), ("no-stop", str(wide))):
        trees = []
        for threads in (1, 1, 8, 8):
            out = tmp_path / f"{label}-{len(trees)}"
            assert main(["dsa", "--scenario", scenario, "--out", str(out),
                         "--threads", str(threads)]) == 0
            trees.append((out / "tree.json").read_bytes())
        assert all(t == trees[0] for t in trees), label
        sizes.append(len(json.loads(trees[0])["nodes"]))
    detail(record_property, f"tree.json identical at threads 1 and 8 ({sizes[0]} and {sizes[1]} nodes)")
