"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
that is printed in the terminal summary.

The suite-level benchmark (criterion 5) runs the fast profile (3 runs per
cell, 10,000 rollouts) unless STRATEGY_SUITE_PROFILE=full is set.
"""
import itertools
import json
import os
import time

import numpy as np
import pytest

from strategy_discovery.batch import rollout_returns
from strategy_discovery.bench import SuiteConfig, output_entropy, run_benchmark_suite
from strategy_discovery.clustering import upgma
from strategy_discovery.demos import generate_demonstrations
from strategy_discovery.env import EnvironmentSpec, TreeStructure, build_environment, iter_beliefs
from strategy_discovery.flowchart import check_tree_matches, formula_to_tree, reference_policy
from strategy_discovery.interpret import InterpretConfig, ai_interpret
from strategy_discovery.lpp import Formula, Literal, extract_dnf, formula_from_names, induce_tree, induced_policy
from strategy_discovery.solver import solve

from .conftest import CACHE_DIR
from .test_clustering import naive_upgma
from .test_solver import SUP, brute_force

RESULTS = []
L = 100_000

VALUES = {"increasing": 39.97, "decreasing": 30.14, "constant": 9.33}
REFERENCE_RETURNS = {"increasing": 39.17, "decreasing": 28.47, "constant": 7.03}
DNFS = {
    "increasing": [["among(not(is_observed), has_largest_depth)", "not(is_previous_observed_max)"]],
    "decreasing": [["among(not(is_observed) and has_smallest_depth)"]],
    "constant": [["among(has_largest_depth and is_successor_of_max_observed)"],
                 ["among(not(is_observed) and not(has_largest_depth), has_best_expected_total)",
                  "not(max_observed_on_best_path)"]],
}


def record(n, ok, detail):
    RESULTS.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_optimal_values():
    parts, ok = [], True
    for kind, target in VALUES.items():
        t0 = time.perf_counter()
        v = solve(build_environment(kind)).value(build_environment(kind).initial_belief())
        dt = time.perf_counter() - t0
        good = abs(v - target) <= 0.05 and dt <= 300
        ok &= good
        parts.append(f"{kind} V={v:.4f} (target {target}±0.05, {dt:.0f}s){'' if good else ' X'}")
    record(1, ok, "; ".join(parts))


def test_criterion_2_reference_strategies():
    parts, ok = [], True
    for kind, target in REFERENCE_RETURNS.items():
        env = build_environment(kind)
        t0 = time.perf_counter()
        rets, _ = rollout_returns(env, reference_policy(kind), L, seed=2024)
        dt = time.perf_counter() - t0
        good = abs(rets.mean() - target) <= 0.3 and dt <= 60
        ok &= good
        parts.append(f"{kind} {rets.mean():.3f} (target {target}±0.3, {dt:.0f}s){'' if good else ' X'}")
    record(2, ok, "; ".join(parts))


def test_criterion_3_expressibility(predicates):
    parts, ok = [], True
    for kind, names in DNFS.items():
        env = build_environment(kind)
        f = formula_from_names(names, predicates)
        rets, _ = rollout_returns(env, induced_policy(f, predicates), L, seed=2024)
        good = abs(rets.mean() - REFERENCE_RETURNS[kind]) <= 0.3
        ok &= good
        parts.append(f"{kind} {rets.mean():.3f} (target {REFERENCE_RETURNS[kind]}±0.3){'' if good else ' X'}")
    record(3, ok, "; ".join(parts))


def test_criterion_4_ai_interpret_increasing(tables, predicates):
    t = tables("increasing")
    ratios = []
    for seed in range(10):
        d = generate_demonstrations(t.env, t, 64, seed)
        r = ai_interpret(d, predicates, t.env, t, InterpretConfig(clusters=18, seed=seed))
        ratios.append(r.perf_ratio if r.found else None)
    ok = all(r is not None and r >= 0.9 for r in ratios)
    shown = ", ".join("fail" if r is None else f"{r:.3f}" for r in ratios)
    record(4, ok, f"found {sum(r is not None for r in ratios)}/10, perf_ratio [{shown}] (need all >= 0.9)")


def test_criterion_5_suite_ordering(tables):
    for k in ("increasing", "decreasing", "constant", "different"):
        tables(k)
    profile = os.environ.get("STRATEGY_SUITE_PROFILE", "fast")
    with open(os.path.join(os.path.dirname(__file__), "..", "suites", "standard.json")) as fh:
        cfg = SuiteConfig.from_dict({**json.load(fh), "cache_dir": CACHE_DIR})
    if profile != "full":
        cfg = cfg.fast()
    t0 = time.perf_counter()
    rep = run_benchmark_suite(cfg)
    dt = time.perf_counter() - t0
    s = rep["summary"]
    ai_cells = {(c["env"], c["size"]): c["success"] for c in rep["cells"] if c["method"] == "ai"}
    low = {k: v for k, v in ai_cells.items() if v < 0.8}
    succ = (s["ai"]["success"], s["binary"]["success"], s["lpp"]["success"])
    perf = (s["ai"]["perf"], s["binary"]["perf"], s["lpp"]["perf"])
    order = succ[0] > succ[1] >= succ[2] and perf[0] > perf[1] > perf[2]
    budget = 2 * 3600 if profile == "full" else 15 * 60
    ok = not low and order and dt <= budget
    record(5, ok, f"{profile} profile {dt / 60:.1f} min; SUCC ai/binary/lpp "
                  f"{succ[0]:.3f}/{succ[1]:.3f}/{succ[2]:.3f}; PERF {perf[0]:.3f}/{perf[1]:.3f}/{perf[2]:.3f}; "
                  f"ordering {'ok' if order else 'violated'}; AI cells below 0.8: "
                  + (", ".join(f"{e}/{n}={v:.2f}" for (e, n), v in sorted(low.items())) or "none"))


def test_criterion_6_entropy():
    a = output_entropy([None] * 9 + ["f"])
    b = output_entropy([f"f{i}" for i in range(10)])
    ok = abs(a - 0.325) <= 1e-3 and abs(b - 2.303) <= 1e-3
    record(6, ok, f"(9 failures, 1 formula) -> {a:.4f}; 10 distinct -> {b:.4f}")


def test_criterion_7_oracles():
    rng = np.random.default_rng(7)
    checks = {}
    # extract_dnf and formula_to_tree against all 2^k assignments
    ok_dnf = ok_tree = True
    for k in range(1, 13):
        allx = np.array(list(itertools.product([False, True], repeat=k)), bool)
        for _ in range(3):
            X = rng.random((40, k)) < 0.5
            tree = induce_tree(X, rng.random(40) < 0.5, int(rng.integers(1, 6)))
            f = extract_dnf(tree)
            pred = tree.predict(allx)
            ok_dnf &= all(f.accepts_assignment(r) == p for r, p in zip(allx, pred))
            ok_tree &= check_tree_matches(formula_to_tree(f), f, k)
            g = Formula(tuple(tuple(Literal(int(i), bool(rng.integers(2)))
                                    for i in rng.choice(k, size=int(rng.integers(1, k + 1)), replace=False))
                              for _ in range(int(rng.integers(0, 4)))))
            ok_tree &= check_tree_matches(formula_to_tree(g), g, k)
    checks["extract_dnf"] = ok_dnf
    checks["formula_to_tree"] = ok_tree
    # UPGMA against the textbook agglomeration on 0/1 inputs of up to 8 vectors
    ok_up = True
    for _ in range(300):
        n, k = int(rng.integers(1, 9)), int(rng.integers(1, 6))
        X = rng.random((n, k)) < 0.5
        got = [(m.a, m.b, m.height) for m in upgma(X).trace]
        ok_up &= [(a, b, h) for a, b, h in got] == [(a, b, float(h)) for a, b, h in naive_upgma(X)]
    checks["upgma"] = ok_up
    # solver against brute-force expectimax on the 1-1-2 tree
    tree = TreeStructure((-1, 0, 1, 2, 2))
    env = EnvironmentSpec("mini", tree, {lv: SUP[lv] for lv in (1, 2, 3)})
    table, V = solve(env), brute_force(env)
    checks["solver"] = all(abs(table.value(b) - V(b.values)) < 1e-9 for b in iter_beliefs(env))
    record(7, all(checks.values()), ", ".join(f"{k} {'ok' if v else 'MISMATCH'}" for k, v in checks.items()))


def test_criterion_8_cli_determinism(tables, predicates, tmp_path):
    from strategy_discovery.cli import main
    from strategy_discovery.lpp import formula_to_json

    tables("decreasing")
    vt = os.path.join(CACHE_DIR, "decreasing.vt")
    demos = str(tmp_path / "d.jsonl")
    main(["demos", "--env", "decreasing", "--n", "8", "--seed", "0", "--cache", vt, "--out", demos])
    fp = tmp_path / "f.json"
    fp.write_text(json.dumps(formula_to_json(formula_from_names(DNFS["decreasing"], predicates),
                                             predicates, "decreasing")))
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"kinds": ["decreasing"], "sizes": [8], "runs": 1, "rollouts": 1000,
                                 "cache_dir": CACHE_DIR, "interpret": {"max_depth": 2}}))
    commands = {
        "solve": ["solve", "--env", "decreasing", "--cache", vt],
        "demos": ["demos", "--env", "decreasing", "--n", "8", "--seed", "5", "--cache", vt],
        "interpret": ["interpret", "--method", "ai", "--demos", demos, "--rollouts", "2000",
                      "--clusters", "4", "--cache", vt],
        "pipeline": ["pipeline", "--env", "decreasing", "--n-demos", "8", "--rollouts", "2000",
                     "--cache", vt],
        "bench": ["bench", "--suite", str(suite)],
        "render": ["render", "--formula", str(fp), "--format", "dot"],
        "agreement": ["agreement", "--formula", str(fp), "--trajectories", demos, "--simulations", "500"],
    }
    bad = []
    for name, argv in commands.items():
        outs = []
        for k in range(2):
            out = tmp_path / f"{name}{k}"
            flag = "--out-dir" if name == "pipeline" else "--out"
            if main(argv + [flag, str(out)]) != 0:
                bad.append(f"{name} exited nonzero")
                break
            outs.append({p: (out / p).read_bytes() for p in sorted(os.listdir(out))}
                        if out.is_dir() else out.read_bytes())
        if len(outs) == 2 and outs[0] != outs[1]:
            bad.append(f"{name} differs")
    record(8, not bad, f"{len(commands)} commands repeated: " + ("byte-identical" if not bad else "; ".join(bad)))
