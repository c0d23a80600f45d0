"""Turning demonstrations into a formula: AI-Interpret and its two baselines.

All three share one inner step: split the chosen pairs into train and
validation, induce a formula for every depth up to ``max_depth``, estimate
each formula's return by simulation, drop formulas that are clearly worse
than another (by ``delta`` in return ratio), and keep the one using the
fewest distinct predicates. They differ in how they pick the pairs:

* ``lpp_baseline`` uses every pair once;
* ``ai_interpret`` clusters the pairs and drops the least interpretable
  cluster after each failure;
* ``binary_interpret`` halves (and regrows) a random subset.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .clustering import ClusterEvaluator, split_indices
from .demos import DemonstrationSet, estimate_mean_return, negative_examples
from .dsl import PredicateSet
from .env import EnvironmentSpec
from .features import FeatureSpace
from .lpp import Formula, formula_to_json, induced_policy
from .solver import DEFAULT_TIE_EPSILON, ValueTable

EVAL_STREAM = 0x5EED  # spawn key separating return estimates from everything else


@dataclass
class InterpretConfig:
    alpha: float = 0.7
    delta: float = 0.025
    rollouts: int = 100_000
    max_depth: int = 5
    clusters: int = 18
    cut_size: float = 0.025
    split: float = 0.7
    mean_expert_reward: float | None = None   # None: read from the value table
    tie_epsilon: float = DEFAULT_TIE_EPSILON
    patience: int = 8
    seed: int = 0
    lam: float = 1.0
    accept_with_slack: bool = False   # accept at alpha - delta instead of alpha
    likelihood: str = "geometric"

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not 0 < self.split < 1:
            raise ValueError("split must lie strictly between 0 and 1")
        if not 0 <= self.cut_size < 1:
            raise ValueError("cut size must lie in [0, 1)")
        if self.max_depth < 1 or self.rollouts < 1 or self.clusters < 1:
            raise ValueError("max_depth, rollouts and clusters must be positive")

    @property
    def threshold(self) -> float:
        return self.alpha - self.delta if self.accept_with_slack else self.alpha


@dataclass
class Candidate:
    formula: Formula
    depth: int
    m_f: float
    stderr: float
    ratio: float
    distinct_predicates: int


@dataclass
class InterpretResult:
    method: str
    found: bool
    formula: Formula | None = None
    m_f: float = 0.0
    stderr: float = 0.0
    perf_ratio: float = 0.0
    support_fraction: float = 0.0
    iterations: int = 0
    reason: str = ""
    candidates: list = field(default_factory=list)   # δ-filtered set at acceptance
    seed: int | None = None
    config: dict = field(default_factory=dict)

    def to_json(self, predicate_set: PredicateSet, env_kind: str | None = None) -> dict:
        out = {
            "method": self.method,
            "outcome": "found" if self.found else "no_solution",
            "formula": None if self.formula is None
            else formula_to_json(self.formula, predicate_set, env_kind),
            "formula_digest": None if self.formula is None else self.formula.digest(),
            "m_f": self.m_f,
            "stderr": self.stderr,
            "perf_ratio": self.perf_ratio,
            "support_fraction": self.support_fraction,
            "iterations": self.iterations,
            "reason": self.reason,
            "seed": self.seed,
            "config": self.config,
        }
        return out


class _Context:
    """Everything one interpretation run shares: features, m, return cache."""

    def __init__(self, demos, predicate_set, env, table, config: InterpretConfig, space=None):
        self.env, self.ps, self.cfg = env, predicate_set, config
        if space is None:
            neg = negative_examples(demos, table, config.tie_epsilon)
            space = FeatureSpace(env, demos, neg, predicate_set)
        self.space = space
        m = config.mean_expert_reward
        if m is None:
            m = table.value(env.initial_belief())
        if m <= 0:
            raise ValueError("the expert's mean reward must be positive")
        self.m = float(m)
        self._returns: dict = {}

    def estimate(self, formula: Formula) -> tuple[float, float]:
        # one evaluation stream per run, so candidates are compared on the same episodes
        key = formula.digest()
        if key not in self._returns:
            seed = [self.cfg.seed, EVAL_STREAM]
            self._returns[key] = estimate_mean_return(
                self.env, induced_policy(formula, self.ps), self.cfg.rollouts, seed)
        return self._returns[key]

    def attempt(self, groups, rng):
        """One split + depth loop over the union of ``groups``.

        Returns ``(accepted candidate or None, filtered candidates)``.
        """
        cfg = self.cfg
        train, val = [], []
        for g in groups:
            t, v = split_indices(g, cfg.split, rng)
            train.append(t)
            val.append(v)
        train = np.concatenate(train) if train else np.zeros(0, np.int64)
        val = np.concatenate(val) if val else np.zeros(0, np.int64)
        cands = {}
        for depth in range(1, cfg.max_depth + 1):
            r = self.space.lpp(train, val, depth, cfg.lam)
            if r is None or r.formula.digest() in cands:
                continue
            m_f, se = self.estimate(r.formula)
            cands[r.formula.digest()] = Candidate(r.formula, depth, m_f, se, m_f / self.m,
                                                  len(r.formula.predicates()))
        cands = list(cands.values())
        if not cands:
            return None, []
        kept = [f for f in cands if all(g.ratio < f.ratio + cfg.delta for g in cands)]
        best = min(kept, key=lambda c: (c.distinct_predicates, -c.ratio, c.formula.disjuncts))
        return (best if best.ratio >= cfg.threshold else None), kept


def _found(method, ctx, cand, support, iterations, kept, cfg) -> InterpretResult:
    return InterpretResult(method, True, cand.formula, cand.m_f, cand.stderr, cand.ratio,
                           support, iterations, "", kept, cfg.seed, asdict(cfg))


def _failed(method, reason, iterations, cfg) -> InterpretResult:
    return InterpretResult(method, False, None, 0.0, 0.0, 0.0, 0.0, iterations, reason,
                           [], cfg.seed, asdict(cfg))


def ai_interpret(demos: DemonstrationSet, predicate_set: PredicateSet, env: EnvironmentSpec,
                 table: ValueTable, config: InterpretConfig, space: FeatureSpace | None = None,
                 evaluator: ClusterEvaluator | None = None) -> InterpretResult:
    ctx = _Context(demos, predicate_set, env, table, config, space)
    n = ctx.space.n_pairs
    if evaluator is None:
        evaluator = ClusterEvaluator(ctx.space, config.max_depth, config.split, config.seed,
                                     config.lam, config.likelihood)
    clusters = evaluator.partition(config.clusters)
    values = [evaluator.value(c).V for c in clusters]
    keep = [i for i, c in enumerate(clusters) if len(c) / n >= config.cut_size]
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1,)))
    it = 0
    while keep:
        it += 1
        groups = [clusters[i] for i in keep]
        best, kept = ctx.attempt(groups, rng)
        if best is not None:
            support = sum(len(g) for g in groups) / n
            return _found("ai", ctx, best, support, it, kept, config)
        # drop the least valuable cluster; on ties the smaller, then the later one
        worst = min(keep, key=lambda i: (values[i], len(clusters[i]), -i))
        keep.remove(worst)
    return _failed("ai", "no formula reached the aspiration value on any cluster subset", it, config)


def lpp_baseline(demos: DemonstrationSet, predicate_set: PredicateSet, env: EnvironmentSpec,
                 table: ValueTable, config: InterpretConfig,
                 space: FeatureSpace | None = None) -> InterpretResult:
    ctx = _Context(demos, predicate_set, env, table, config, space)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1,)))
    best, kept = ctx.attempt([np.arange(ctx.space.n_pairs)], rng)
    if best is None:
        return _failed("lpp", "no formula reached the aspiration value", 1, config)
    return _found("lpp", ctx, best, 1.0, 1, kept, config)


def binary_interpret(demos: DemonstrationSet, predicate_set: PredicateSet, env: EnvironmentSpec,
                     table: ValueTable, config: InterpretConfig,
                     space: FeatureSpace | None = None) -> InterpretResult:
    """Binary search over the size of a random subset of the pairs.

    Failure discards a random half of the current subset; success after a
    removal grows the size by half of the last change and redraws the subset
    from all pairs. The search ends after the attempt that follows a change
    of at most ``patience`` pairs.
    """
    ctx = _Context(demos, predicate_set, env, table, config, space)
    n = ctx.space.n_pairs
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1,)))
    current = np.arange(n)
    last_change = None
    best = None
    it = 0
    while True:
        it += 1
        cand, kept = ctx.attempt([current], rng)
        ok = cand is not None
        if ok and (best is None or cand.ratio > best[0].ratio):
            best = (cand, len(current) / n, it, kept)
        if last_change is not None and last_change <= config.patience:
            break
        if ok:
            if len(current) == n:
                break
            change = math.ceil(last_change / 2)
            size = min(n, len(current) + change)
            current = np.sort(rng.choice(n, size=size, replace=False))
        else:
            change = len(current) // 2
            if change == 0:
                break
            current = np.sort(rng.choice(current, size=len(current) - change, replace=False))
        last_change = change
    if best is None:
        return _failed("binary", "no formula reached the aspiration value", it, config)
    cand, support, at, kept = best
    res = _found("binary", ctx, cand, support, it, kept, config)
    return res


METHODS = {"ai": ai_interpret, "binary": binary_interpret, "lpp": lpp_baseline}


def count_imitated(formula: Formula, demos: DemonstrationSet, predicate_set: PredicateSet,
                   env: EnvironmentSpec) -> int:
    """Pairs whose action is among the most likely under the formula's policy."""
    from .batch import BeliefBatch
    from .dsl import EvalContext
    from .lpp import acceptance

    if not demos.pairs:
        return 0
    batch = BeliefBatch.from_beliefs(env, [b for b, _ in demos.pairs])
    acc = acceptance(formula, predicate_set, EvalContext(batch))
    count = 0
    for i, (_, c) in enumerate(demos.pairs):
        if c.is_terminate:
            count += int(not acc[i].any())
        else:
            count += int(acc[i, c.node])
    return count
