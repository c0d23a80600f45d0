"""Benchmark suite: every method on every (environment, demo count) cell."""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .demos import estimate_mean_return, generate_demonstrations, negative_examples
from .dsl import enumerate_predicates, load_grammar
from .env import build_environment
from .features import FeatureSpace
from .flowchart import formula_to_tree
from .interpret import METHODS, InterpretConfig
from .lpp import induced_policy
from .pipeline import PipelineConfig, discover, select_tree, solve_cached

log = logging.getLogger(__name__)

DEFAULT_CLUSTERS = {"increasing": 18, "constant": 18, "decreasing": 23, "different": 18}
REPORT_STREAM = 0xBE7C


def perf_ratio(m_f: float | None, m: float) -> float:
    if m <= 0:
        raise ValueError("expert return must be positive")
    if m_f is None:
        return 0.0
    return m_f / m


def output_entropy(outcomes) -> float:
    """Natural-log entropy of run outcomes; ``None`` marks a failed run."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("need at least one outcome")
    counts = np.array(list(Counter(outcomes).values()), dtype=np.float64)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum()) + 0.0


def success_rate(outcomes) -> float:
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("need at least one outcome")
    return sum(o is not None for o in outcomes) / len(outcomes)


def mean_ci(values, level: float = 0.95) -> tuple[float, float]:
    """Mean and half-width of the t-distribution confidence interval."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2:
        return float(v.mean()), 0.0
    half = stats.t.ppf(0.5 + level / 2, len(v) - 1) * v.std(ddof=1) / math.sqrt(len(v))
    return float(v.mean()), float(half)


@dataclass
class SuiteConfig:
    kinds: tuple = ("increasing", "decreasing", "constant", "different")
    sizes: tuple = (8, 64, 128)
    methods: tuple = ("ai", "binary", "lpp")
    runs: int = 10
    seed: int = 0
    rollouts: int = 100_000
    ai_mode: str = "pipeline"   # "pipeline" (elbow + select_tree) or "fixed" (clusters per kind)
    K: int = 4
    clusters: dict = field(default_factory=lambda: dict(DEFAULT_CLUSTERS))
    interpret: dict = field(default_factory=dict)   # InterpretConfig overrides
    grammar: str | None = None
    cache_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        d = dict(d)
        for k in ("kinds", "sizes", "methods"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def fast(self) -> "SuiteConfig":
        return replace(self, rollouts=10_000, runs=min(self.runs, 3))


def _run_seed(cfg: SuiteConfig, kind: str, size: int, run: int) -> int:
    # one integer per (cell, run), shared by all methods so they see the same demos
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(cfg.kinds.index(kind), size, run))
    return int(ss.generate_state(1, np.uint32)[0])


def run_cell(cfg: SuiteConfig, kind: str, size: int, table, ps) -> list[dict]:
    env = build_environment(kind)
    m = table.value(env.initial_belief())
    records = []
    for run in range(cfg.runs):
        seed = _run_seed(cfg, kind, size, run)
        icfg = InterpretConfig(**{**cfg.interpret, "rollouts": cfg.rollouts, "seed": seed,
                                  "mean_expert_reward": m,
                                  "clusters": cfg.clusters.get(kind, 18)})
        demos = None
        space = None
        for method in cfg.methods:
            if method == "ai" and cfg.ai_mode == "pipeline":
                pcfg = PipelineConfig(n_demos=size, K=cfg.K, seed=seed, interpret=icfg,
                                      grammar=ps.config)
                cs = discover(kind, pcfg, table)
                formula = select_tree(cs).formula if cs.candidates else None
                support = select_tree(cs).result.support_fraction if cs.candidates else 0.0
            else:
                if demos is None:
                    demos = generate_demonstrations(env, table, size, seed, icfg.tie_epsilon)
                    space = FeatureSpace(env, demos, negative_examples(demos, table), ps)
                res = METHODS[method](demos, ps, env, table, icfg, space)
                formula = res.formula if res.found else None
                support = res.support_fraction
            m_f = None
            if formula is not None:
                m_f, _ = estimate_mean_return(env, induced_policy(formula, ps), cfg.rollouts,
                                              [seed, REPORT_STREAM])
            records.append({
                "env": kind, "size": size, "method": method, "run": run, "seed": seed,
                "found": formula is not None,
                "formula_digest": None if formula is None else formula.digest(),
                "formula": None if formula is None else formula.render(ps),
                "m_f": m_f, "m": m, "perf": perf_ratio(m_f, m),
                "complexity": None if formula is None else formula_to_tree(formula).node_count,
                "support": support if formula is not None else None,
            })
            log.info("%s x=%d %s run %d: %s", kind, size, method, run,
                     "found" if formula is not None else "failed")
    return records


def aggregate(records: list[dict]) -> list[dict]:
    """Per-(env, size, method) metrics from per-run records."""
    cells: dict = {}
    for r in records:
        cells.setdefault((r["env"], r["size"], r["method"]), []).append(r)
    out = []
    for (env, size, method), rs in cells.items():
        perf, half = mean_ci([r["perf"] for r in rs])
        outcomes = [r["formula_digest"] for r in rs]
        found = [r for r in rs if r["found"]]
        out.append({
            "env": env, "size": size, "method": method, "runs": len(rs),
            "perf": perf, "perf_ci": half,
            "entropy": output_entropy(outcomes), "success": success_rate(outcomes),
            "complexity": float(np.mean([r["complexity"] for r in found])) if found else None,
            "support": float(np.mean([r["support"] for r in found])) if found else None,
        })
    return out


def summarize(records: list[dict]) -> dict:
    by_method: dict = {}
    for r in records:
        by_method.setdefault(r["method"], []).append(r)
    out = {}
    for method, rs in sorted(by_method.items()):
        perf, half = mean_ci([r["perf"] for r in rs])
        out[method] = {"perf": perf, "perf_ci": half,
                       "success": sum(r["found"] for r in rs) / len(rs), "runs": len(rs)}
    return out


def run_benchmark_suite(cfg: SuiteConfig) -> dict:
    ps = enumerate_predicates(load_grammar(cfg.grammar) if cfg.grammar else None)
    records = []
    for kind in cfg.kinds:
        env = build_environment(kind)
        cache = None
        if cfg.cache_dir is not None:
            cache = f"{cfg.cache_dir}/{kind}.vt"
        table = solve_cached(env, cache)
        for size in cfg.sizes:
            records += run_cell(cfg, kind, size, table, ps)
    return {"config": asdict(cfg), "grammar_fingerprint": ps.fingerprint,
            "cells": aggregate(records), "summary": summarize(records), "runs": records}


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1) + "\n"
