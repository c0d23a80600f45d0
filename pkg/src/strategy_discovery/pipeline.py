"""End-to-end discovery: solve, demonstrate, interpret, draw."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import ClusterEvaluator, ElbowResult, elbow_candidates
from .demos import generate_demonstrations, negative_examples
from .dsl import GrammarConfig, enumerate_predicates
from .env import EnvironmentSpec, build_environment
from .features import FeatureSpace
from .flowchart import FlowTree, formula_to_tree
from .interpret import InterpretConfig, InterpretResult, ai_interpret
from .lpp import Formula
from .solver import ValueTable, load_table, solve

log = logging.getLogger(__name__)


def solve_cached(env: EnvironmentSpec, cache: str | os.PathLike | None = None) -> ValueTable:
    """Solve ``env``, reading/writing the value table at ``cache`` when given."""
    if cache is not None and os.path.exists(cache):
        return load_table(env, cache)
    table = solve(env)
    if cache is not None:
        table.save(cache)
    return table


@dataclass
class Candidate:
    N: int
    formula: Formula
    tree: FlowTree
    perf_ratio: float
    result: InterpretResult


@dataclass
class CandidateSet:
    env_kind: str
    candidates: list
    elbow: ElbowResult | None = None
    diagnostics: list = field(default_factory=list)
    m: float = 0.0
    predicate_set: object = None


@dataclass
class PipelineConfig:
    n_demos: int = 64
    K: int = 4
    grid: tuple = tuple(range(2, 31))
    clusters_override: int | None = None
    seed: int = 0
    interpret: InterpretConfig = field(default_factory=InterpretConfig)
    grammar: GrammarConfig | None = None
    cache: str | None = None


def discover(env_kind: str, config: PipelineConfig, table: ValueTable | None = None) -> CandidateSet:
    env = build_environment(env_kind)
    if table is None:
        table = solve_cached(env, config.cache)
    m = max(table.q_values(env.initial_belief()).values())
    demos = generate_demonstrations(env, table, config.n_demos, config.seed,
                                    config.interpret.tie_epsilon)
    ps = enumerate_predicates(config.grammar)
    space = FeatureSpace(env, demos, negative_examples(demos, table, config.interpret.tie_epsilon), ps)
    icfg = replace(config.interpret, mean_expert_reward=m, seed=config.seed)
    evaluator = ClusterEvaluator(space, icfg.max_depth, icfg.split, icfg.seed, icfg.lam,
                                 icfg.likelihood)
    elbow = None
    if config.clusters_override is not None:
        Ns = [config.clusters_override]
    else:
        elbow = elbow_candidates(evaluator, config.grid, icfg.cut_size, config.K)
        Ns = elbow.candidates
    out = CandidateSet(env.kind, [], elbow, [], m, ps)
    for N in Ns:
        res = ai_interpret(demos, ps, env, table, replace(icfg, clusters=N), space, evaluator)
        if res.found:
            out.candidates.append(Candidate(N, res.formula, formula_to_tree(res.formula),
                                            res.perf_ratio, res))
        else:
            out.diagnostics.append({"N": N, "reason": res.reason, "iterations": res.iterations})
        log.info("N=%d: %s", N, "found" if res.found else res.reason)
    return out


def select_tree(candidates) -> Candidate:
    """Fewest question nodes, then lowest depth, then canonical formula order."""
    cands = list(candidates.candidates if isinstance(candidates, CandidateSet) else candidates)
    if not cands:
        raise ValueError("no candidates to choose from")
    return min(cands, key=lambda c: (c.tree.node_count, c.tree.depth, c.formula.disjuncts))
