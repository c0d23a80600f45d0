"""Command-line entry points. Every command writes deterministic JSON or text."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict

from . import bench
from .demos import read_demonstrations, write_demonstrations, generate_demonstrations
from .dsl import enumerate_predicates, load_grammar
from .env import KINDS, build_environment
from .flowchart import click_agreement, formula_to_tree, render, strategy_mean_clicks
from .interpret import METHODS, InterpretConfig
from .lpp import formula_from_json, formula_to_json
from .pipeline import PipelineConfig, discover, select_tree, solve_cached


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def cmd_solve(a):
    env = build_environment(a.env)
    table = solve_cached(env, a.cache)
    q = table.q_values(env.initial_belief())
    _emit(_dump({
        "env": env.kind,
        "value": table.value(env.initial_belief()),
        "canonical_beliefs": table.state_count,
        "q_initial": {repr(c): v for c, v in q.items()},
    }), a.out)


def cmd_demos(a):
    env = build_environment(a.env)
    table = solve_cached(env, a.cache)
    write_demonstrations(generate_demonstrations(env, table, a.n, a.seed), a.out)


def _predicates(path):
    return enumerate_predicates(load_grammar(path) if path else None)


def cmd_interpret(a):
    demos = read_demonstrations(a.demos)
    env = build_environment(demos.env_kind)
    table = solve_cached(env, a.cache)
    ps = _predicates(a.grammar)
    cfg = InterpretConfig(alpha=a.alpha, delta=a.delta, rollouts=a.rollouts, max_depth=a.max_depth,
                          clusters=a.clusters, cut_size=a.cut_size, split=a.split,
                          patience=a.patience, seed=a.seed)
    res = METHODS[a.method](demos, ps, env, table, cfg)
    _emit(_dump(res.to_json(ps, env.kind)), a.out)


def cmd_pipeline(a):
    os.makedirs(a.out_dir, exist_ok=True)
    icfg = InterpretConfig(rollouts=a.rollouts)
    cfg = PipelineConfig(n_demos=a.n_demos, K=a.k, clusters_override=a.clusters_override,
                         seed=a.seed, interpret=icfg, cache=a.cache,
                         grammar=load_grammar(a.grammar) if a.grammar else None)
    cs = discover(a.env, cfg)
    ps, env = cs.predicate_set, build_environment(a.env)
    manifest = {"env": cs.env_kind, "expert_return": cs.m, "seed": a.seed,
                "n_demos": a.n_demos, "candidates": [], "failures": cs.diagnostics,
                "selected": None}
    if cs.elbow is not None:
        manifest["elbow"] = {"candidates": cs.elbow.candidates, "no_elbow": cs.elbow.no_elbow}
        _emit(cs.elbow.table(), os.path.join(a.out_dir, "clustering_value.tsv"))
    for i, c in enumerate(cs.candidates):
        stem = f"candidate_{i}"
        _emit(_dump(formula_to_json(c.formula, ps, env.kind)), os.path.join(a.out_dir, stem + ".json"))
        _emit(render(c.tree, ps, env, "dot"), os.path.join(a.out_dir, stem + ".dot"))
        manifest["candidates"].append({
            "N": c.N, "formula": c.formula.render(ps), "perf_ratio": c.perf_ratio,
            "m_f": c.result.m_f, "support_fraction": c.result.support_fraction,
            "tree_nodes": c.tree.node_count, "depth": c.tree.depth,
            "formula_file": stem + ".json", "dot_file": stem + ".dot"})
    if cs.candidates:
        best = select_tree(cs)
        manifest["selected"] = cs.candidates.index(best)
    _emit(_dump(manifest), os.path.join(a.out_dir, "manifest.json"))


def cmd_bench(a):
    with open(a.suite) as fh:
        cfg = bench.SuiteConfig.from_dict(json.load(fh))
    if a.runs is not None:
        cfg.runs = a.runs
    if a.fast:
        cfg = cfg.fast()
    _emit(bench.report_json(bench.run_benchmark_suite(cfg)), a.out)


def _load_formula(path, grammar):
    with open(path) as fh:
        obj = json.load(fh)
    ps = _predicates(grammar)
    kind = obj.get("env_kind")
    env = build_environment(kind) if kind else None
    return formula_from_json(obj, ps), ps, env


def cmd_render(a):
    formula, ps, env = _load_formula(a.formula, a.grammar)
    _emit(render(formula_to_tree(formula), ps, env, a.format), a.out)


def cmd_agreement(a):
    formula, ps, env = _load_formula(a.formula, a.grammar)
    demos = read_demonstrations(a.trajectories)
    env = build_environment(demos.env_kind)
    expected = strategy_mean_clicks(formula, ps, env, a.simulations, a.seed)
    scores = [click_agreement(t, formula, ps, env, expected_clicks=expected)
              for t in demos.trajectories]
    _emit(_dump({"expected_clicks": expected, "agreement": scores,
                 "mean_agreement": sum(scores) / len(scores) if scores else None}), a.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="strategy-discovery",
                                description="Discover interpretable planning strategies.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve an environment exactly")
    s.add_argument("--env", required=True, choices=KINDS)
    s.add_argument("--cache")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("demos", help="sample expert demonstrations")
    s.add_argument("--env", required=True, choices=KINDS)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cache")
    s.set_defaults(fn=cmd_demos)

    s = sub.add_parser("interpret", help="interpret a demonstration file")
    s.add_argument("--method", required=True, choices=sorted(METHODS))
    s.add_argument("--demos", required=True)
    s.add_argument("--grammar")
    s.add_argument("--alpha", type=float, default=0.7)
    s.add_argument("--delta", type=float, default=0.025)
    s.add_argument("--rollouts", type=int, default=100_000)
    s.add_argument("--max-depth", type=int, default=5)
    s.add_argument("--clusters", type=int, default=18)
    s.add_argument("--cut-size", type=float, default=0.025)
    s.add_argument("--split", type=float, default=0.7)
    s.add_argument("--patience", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--cache")
    s.set_defaults(fn=cmd_interpret)

    s = sub.add_parser("pipeline", help="run the full discovery pipeline")
    s.add_argument("--env", required=True, choices=KINDS)
    s.add_argument("--n-demos", type=int, default=64)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--clusters-override", type=int)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rollouts", type=int, default=100_000)
    s.add_argument("--grammar")
    s.add_argument("--cache")
    s.set_defaults(fn=cmd_pipeline)

    s = sub.add_parser("bench", help="run the benchmark suite")
    s.add_argument("--suite", required=True)
    s.add_argument("--runs", type=int)
    s.add_argument("--fast", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("render", help="draw a formula as a flowchart")
    s.add_argument("--formula", required=True)
    s.add_argument("--format", required=True, choices=("dot", "ascii"))
    s.add_argument("--out")
    s.add_argument("--grammar")
    s.set_defaults(fn=cmd_render)

    s = sub.add_parser("agreement", help="click agreement of trajectories with a formula")
    s.add_argument("--formula", required=True)
    s.add_argument("--trajectories", required=True)
    s.add_argument("--simulations", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--grammar")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_agreement)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except Exception as exc:  # noqa: BLE001 - reported as a structured record
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "command": args.command}, sort_keys=True) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
