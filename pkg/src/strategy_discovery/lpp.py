"""Logical program policies: DNF formulas induced from decision trees."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .batch import TERMINATE_ACTION, BeliefBatch, uniform_choice
from .dsl import EvalContext, PredicateSet, parse
from .env import Belief, Computation, EnvironmentSpec


@dataclass(frozen=True, order=True)
class Literal:
    index: int
    negated: bool = False

    def name(self, predicate_set) -> str:
        s = str(predicate_set[self.index])
        return f"not({s})" if self.negated else s


@dataclass(frozen=True)
class Formula:
    """Disjunction of conjunctions of literals, kept in canonical form.

    ``Formula(())`` rejects everything; ``Formula(((),))`` accepts everything.
    """

    disjuncts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "disjuncts", _canonical(self.disjuncts))

    @property
    def is_false(self) -> bool:
        return not self.disjuncts

    @property
    def is_true(self) -> bool:
        return self.disjuncts == ((),)

    @property
    def literal_count(self) -> int:
        return sum(len(c) for c in self.disjuncts)

    def predicates(self) -> list[int]:
        return sorted({lit.index for c in self.disjuncts for lit in c})

    def render(self, predicate_set) -> str:
        if self.is_false:
            return "False"
        if self.is_true:
            return "True"
        conj = [" and ".join(lit.name(predicate_set) for lit in c) for c in self.disjuncts]
        return " or ".join(f"({c})" for c in conj)

    def accepts_assignment(self, values) -> bool:
        return any(all(bool(values[l.index]) != l.negated for l in c) for c in self.disjuncts)

    def digest(self) -> str:
        return hashlib.sha256(repr(self.disjuncts).encode()).hexdigest()[:16]


def _canonical(disjuncts) -> tuple:
    conjs = set()
    for conj in disjuncts:
        lits = sorted(set(conj))
        idx = [l.index for l in lits]
        if len(idx) != len(set(idx)):
            continue  # p and not(p) together can never hold
        conjs.add(tuple(lits))
    if () in conjs:
        return ((),)
    return tuple(sorted(conjs))


TRUE = Formula(((),))
FALSE = Formula(())


def formula_from_names(conjunctions: Sequence[Sequence[str]], predicate_set: PredicateSet) -> Formula:
    """Build a formula from predicate names; ``not(...)`` marks a negated literal."""
    out = []
    for conj in conjunctions:
        lits = []
        for name in conj:
            name = name.strip()
            neg = False
            if name.startswith("not(") and name.endswith(")"):
                inner = name[4:-1]
                try:
                    idx = predicate_set.index(str(parse(inner)))
                    neg = True
                except (KeyError, ValueError):
                    idx = predicate_set.index(str(parse(name)))
            else:
                idx = predicate_set.index(str(parse(name)))
            lits.append(Literal(idx, neg))
        out.append(tuple(lits))
    return Formula(tuple(out))


def formula_to_json(formula: Formula, predicate_set: PredicateSet, env_kind: str | None = None) -> dict:
    return {
        "format_version": 1,
        "grammar_fingerprint": predicate_set.fingerprint,
        "env_kind": env_kind,
        "formula": [[lit.name(predicate_set) for lit in c] for c in formula.disjuncts],
    }


def formula_from_json(obj: dict, predicate_set: PredicateSet) -> Formula:
    if obj.get("grammar_fingerprint") != predicate_set.fingerprint:
        raise ValueError(
            f"formula was written for grammar {obj.get('grammar_fingerprint')}, "
            f"active grammar is {predicate_set.fingerprint}")
    return formula_from_names(obj["formula"], predicate_set)


# --------------------------------------------------------------------------
# evaluation on beliefs


def acceptance(formula: Formula, predicate_set, ctx: EvalContext) -> np.ndarray:
    """``(rows, nodes)`` mask of available clicks the formula accepts."""
    batch = ctx.batch
    out = np.zeros(batch.obs.shape, bool)
    for conj in formula.disjuncts:
        m = batch.available.copy()
        for lit in conj:
            v = predicate_set[lit.index].mask(ctx)
            m &= ~v if lit.negated else v
        out |= m
    return out & batch.available


def acceptance_from_tensor(formula: Formula, tensor: np.ndarray, available: np.ndarray) -> np.ndarray:
    """Same as :func:`acceptance` on precomputed ``tensor[belief, predicate, node]``."""
    out = np.zeros(available.shape, bool)
    for conj in formula.disjuncts:
        m = available.copy()
        for lit in conj:
            v = tensor[:, lit.index, :]
            m &= ~v if lit.negated else v
        out |= m
    return out & available


def induced_policy(formula: Formula, predicate_set):
    """Uniform over accepted clicks; terminate when nothing is accepted."""
    def policy(batch: BeliefBatch, rng):
        return uniform_choice(acceptance(formula, predicate_set, EvalContext(batch)), rng)
    policy.formula = formula
    return policy


def action_distribution(formula: Formula, predicate_set, env: EnvironmentSpec,
                        belief: Belief) -> dict[Computation, float]:
    batch = BeliefBatch.from_beliefs(env, [belief])
    acc = acceptance(formula, predicate_set, EvalContext(batch))[0]
    nodes = np.flatnonzero(acc)
    if nodes.size == 0:
        return {Computation(None): 1.0}
    return {Computation(int(n)): 1.0 / nodes.size for n in nodes}


def ensemble_policy(formulas: Sequence[Formula], weights: Sequence[float], predicate_set):
    """Action maximizing the weighted sum of the formulas' policies.

    Actions are ordered clicks by node id, then terminate; ties go to the
    first in that order.
    """
    if len(formulas) != len(weights) or not formulas:
        raise ValueError("need one weight per formula and at least one formula")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be nonnegative and not all zero")

    def policy(batch: BeliefBatch, rng=None):
        ctx = EvalContext(batch)
        n = batch.obs.shape[1]
        score = np.zeros((len(batch), n + 1))  # last column: terminate
        for f, wi in zip(formulas, w):
            acc = acceptance(f, predicate_set, ctx)
            k = acc.sum(axis=1)
            share = np.where(k[:, None] > 0, acc / np.maximum(k, 1)[:, None], 0.0)
            score[:, :n] += wi * share
            score[:, n] += wi * (k == 0)
        score[:, 0] = -np.inf  # the root is not an action
        pick = score.argmax(axis=1)
        return np.where(pick == n, TERMINATE_ACTION, pick)

    return policy


# --------------------------------------------------------------------------
# decision trees


@dataclass
class TreeNode:
    feature: int = -1          # -1 for leaves
    label: bool = False        # leaves only
    false_branch: "TreeNode | None" = None
    true_branch: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class BinaryDecisionTree:
    root: TreeNode

    @property
    def depth(self) -> int:
        def d(n):
            return 0 if n.is_leaf else 1 + max(d(n.false_branch), d(n.true_branch))
        return d(self.root)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, bool))
        out = np.zeros(X.shape[0], bool)
        for i, row in enumerate(X):
            n = self.root
            while not n.is_leaf:
                n = n.true_branch if row[n.feature] else n.false_branch
            out[i] = n.label
        return out

    def node_count(self) -> int:
        def c(n):
            return 1 if n.is_leaf else 1 + c(n.false_branch) + c(n.true_branch)
        return c(self.root)


def _gini_split_scores(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Weighted child Gini impurity (times n/2) of splitting on each column."""
    n = X.shape[0]
    n1 = X.sum(axis=0, dtype=np.int64)
    p1 = X[y].sum(axis=0, dtype=np.int64)
    n0 = n - n1
    p0 = int(y.sum()) - p1
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(n1 > 0, p1 * (n1 - p1) / np.maximum(n1, 1), 0.0) \
            + np.where(n0 > 0, p0 * (n0 - p0) / np.maximum(n0, 1), 0.0)
    s[(n1 == 0) | (n0 == 0)] = np.inf
    return np.round(s, 9)


def induce_tree(X, labels, max_depth: int) -> BinaryDecisionTree:
    """Greedy Gini tree; ties go to the lowest column, leaf ties to negative."""
    X = np.asarray(X, bool)
    y = np.asarray(labels, bool)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("need at least one feature column")
    if X.shape[0] == 0:
        raise ValueError("need at least one row")

    def leaf(rows):
        pos = int(y[rows].sum())
        return TreeNode(label=pos > rows.size - pos)

    def grow(rows, depth):
        pos = int(y[rows].sum())
        if depth >= max_depth or pos == 0 or pos == rows.size:
            return leaf(rows)
        scores = _gini_split_scores(X[rows], y[rows])
        j = int(np.argmin(scores))
        parent = round(pos * (rows.size - pos) / rows.size, 9)
        if not np.isfinite(scores[j]) or scores[j] >= parent:
            return leaf(rows)
        col = X[rows, j]
        node = TreeNode(feature=j)
        node.false_branch = grow(rows[~col], depth + 1)
        node.true_branch = grow(rows[col], depth + 1)
        if node.false_branch.is_leaf and node.true_branch.is_leaf \
                and node.false_branch.label == node.true_branch.label:
            return TreeNode(label=node.false_branch.label)
        return node

    return BinaryDecisionTree(grow(np.arange(X.shape[0]), 0))


def extract_dnf(tree: BinaryDecisionTree) -> Formula:
    conjs = []

    def walk(n, path):
        if n.is_leaf:
            if n.label:
                conjs.append(tuple(path))
            return
        walk(n.false_branch, path + [Literal(n.feature, True)])
        walk(n.true_branch, path + [Literal(n.feature, False)])

    walk(tree.root, [])
    return Formula(tuple(conjs))


# --------------------------------------------------------------------------
# scoring


def formula_prior(formula: Formula, lam: float = 1.0) -> float:
    """Log prior: minus ``lam`` per literal."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return -lam * formula.literal_count


def log_likelihood_from_tensor(formula: Formula, tensor, available, rows, nodes) -> float:
    """Log-probability of demonstrated pairs under the formula's policy.

    ``rows`` index beliefs of ``tensor``; ``nodes`` are clicked nodes, 0 for
    terminate steps.
    """
    rows = np.asarray(rows, dtype=np.int64)
    nodes = np.asarray(nodes, dtype=np.int64)
    if rows.size == 0:
        return 0.0
    acc = acceptance_from_tensor(formula, tensor[rows], available[rows])
    k = acc.sum(axis=1)
    term = nodes == TERMINATE_ACTION
    if np.any(term & (k > 0)):
        return -math.inf
    click = ~term
    if np.any(~acc[click, nodes[click]]):
        return -math.inf
    return float(-np.log(k[click]).sum())


def demo_likelihood(formula: Formula, pairs, predicate_set, env: EnvironmentSpec) -> float:
    pairs = list(pairs)
    if not pairs:
        return 1.0
    beliefs = [b for b, _ in pairs]
    batch = BeliefBatch.from_beliefs(env, beliefs)
    acc = acceptance(formula, predicate_set, EvalContext(batch))
    k = acc.sum(axis=1)
    total = 0.0
    for i, (_, c) in enumerate(pairs):
        if c.is_terminate:
            if k[i] > 0:
                return 0.0
        else:
            if not acc[i, c.node]:
                return 0.0
            total -= math.log(k[i])
    return math.exp(total)


@dataclass
class LPPResult:
    formula: Formula
    score: float            # log prior + validation log-likelihood
    log_likelihood: float
    n_validation: int
    tree: BinaryDecisionTree | None = None

    @property
    def mean_likelihood(self) -> float:
        """Geometric-mean likelihood per validation pair."""
        if self.n_validation == 0:
            return 1.0
        return math.exp(self.log_likelihood / self.n_validation)


def lpp_from_features(X_pos, X_neg, tensor, available, val_rows, val_nodes,
                      max_depth: int, lam: float = 1.0) -> LPPResult | None:
    """MAP formula from featurized train rows; None when no usable formula exists."""
    X_pos = np.asarray(X_pos, bool)
    X_neg = np.asarray(X_neg, bool)
    X = np.vstack([X_pos, X_neg])
    y = np.concatenate([np.ones(len(X_pos), bool), np.zeros(len(X_neg), bool)])
    if X.shape[0] == 0:
        return None
    tree = induce_tree(X, y, max_depth)
    formula = extract_dnf(tree)
    if formula.is_false:
        return None
    ll = log_likelihood_from_tensor(formula, tensor, available, val_rows, val_nodes)
    if ll == -math.inf:
        return None
    return LPPResult(formula, formula_prior(formula, lam) + ll, ll, len(val_rows), tree)


def lpp_map(train_pairs, validation_pairs, negatives, predicate_set, env: EnvironmentSpec,
            max_depth: int, lam: float = 1.0) -> LPPResult | None:
    """Pair-level entry point: featurizes, induces a tree, scores on validation.

    ``train_pairs`` are demonstrated clicks, ``negatives`` sub-optimal clicks,
    ``validation_pairs`` may contain terminate steps.
    """
    from .dsl import featurize

    X_pos = featurize(env, train_pairs, predicate_set).rows
    X_neg = featurize(env, negatives, predicate_set).rows
    val = list(validation_pairs)
    beliefs = [b for b, _ in val]
    batch = BeliefBatch.from_beliefs(env, beliefs) if beliefs else BeliefBatch.empty(env, 0)
    ctx = EvalContext(batch)
    tensor = np.zeros((len(beliefs), len(predicate_set), env.tree.node_count), bool)
    if beliefs:
        for j, p in enumerate(predicate_set):
            tensor[:, j, :] = p.mask(ctx)
    nodes = [0 if c.is_terminate else c.node for _, c in val]
    return lpp_from_features(X_pos, X_neg, tensor, batch.available, np.arange(len(val)),
                             nodes, max_depth, lam)


@dataclass
class FormulaStats:
    distinct_predicates: int
    literal_count: int
    tree_nodes: int
    depth: int


def formula_stats(formula: Formula) -> FormulaStats:
    from .flowchart import formula_to_tree

    ft = formula_to_tree(formula)
    return FormulaStats(len(formula.predicates()), formula.literal_count, ft.node_count, ft.depth)
