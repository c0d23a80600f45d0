"""Flowcharts, the hand-written reference strategies, and click agreement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .batch import TERMINATE_ACTION, BeliefBatch, rollout_returns, uniform_choice
from .dsl import EvalContext, english
from .env import ContractViolation, EnvironmentSpec
from .lpp import Formula, acceptance

CLICK = "Click it"
DONT = "Don't click it"


@dataclass(frozen=True)
class FlowNode:
    predicate: int = -1          # -1 for terminals
    yes: "FlowNode | None" = None
    no: "FlowNode | None" = None
    click: bool = False          # terminals only

    @property
    def is_terminal(self) -> bool:
        return self.predicate < 0


@dataclass(frozen=True)
class FlowTree:
    root: FlowNode

    @property
    def node_count(self) -> int:
        """Number of question nodes (terminals are not counted)."""
        def c(n):
            return 0 if n.is_terminal else 1 + c(n.yes) + c(n.no)
        return c(self.root)

    @property
    def depth(self) -> int:
        def d(n):
            return 0 if n.is_terminal else 1 + max(d(n.yes), d(n.no))
        return d(self.root)

    def classify(self, values) -> bool:
        n = self.root
        while not n.is_terminal:
            n = n.yes if values[n.predicate] else n.no
        return n.click


def formula_to_tree(formula: Formula) -> FlowTree:
    """Ask the literals of each conjunction in turn; shared prefixes are merged.

    The first literal of the first open conjunction is asked next; every
    conjunction is then simplified under the answer, so a question is never
    repeated on a path.
    """
    def build(conjs):
        if any(len(c) == 0 for c in conjs):
            return FlowNode(click=True)
        if not conjs:
            return FlowNode(click=False)
        p = conjs[0][0].index
        return FlowNode(p, build(_condition(conjs, p, True)), build(_condition(conjs, p, False)))

    return FlowTree(build([list(c) for c in formula.disjuncts]))


def _condition(conjs, p, value):
    out = []
    for c in conjs:
        lit = next((l for l in c if l.index == p), None)
        if lit is None:
            out.append(c)
        elif value != lit.negated:
            out.append([l for l in c if l.index != p])
    return out


def render(tree: FlowTree, predicate_set, env: EnvironmentSpec | None = None,
           fmt: str = "dot") -> str:
    """DOT digraph or indented ASCII outline of the flowchart."""
    if fmt not in ("dot", "ascii"):
        raise ValueError(f"unknown format {fmt!r}; expected 'dot' or 'ascii'")
    config = getattr(predicate_set, "config", None)

    def text(n):
        if n.is_terminal:
            return CLICK if n.click else DONT
        return english(predicate_set[n.predicate], env, config)

    if fmt == "ascii":
        lines = []

        def walk(n, indent, edge):
            prefix = "  " * indent + (f"[{edge}] " if edge else "")
            lines.append(prefix + text(n))
            if not n.is_terminal:
                walk(n.yes, indent + 1, "yes")
                walk(n.no, indent + 1, "no")

        walk(tree.root, 0, "")
        return "\n".join(lines) + "\n"

    out = ["digraph flowchart {", '  node [fontname="Helvetica"];']
    counter = [0]

    def emit(n):
        i = counter[0]
        counter[0] += 1
        label = text(n).replace("\\", "\\\\").replace('"', '\\"')
        shape = "box" if n.is_terminal else "ellipse"
        out.append(f'  n{i} [label="{label}", shape={shape}];')
        if not n.is_terminal:
            y = emit(n.yes)
            out.append(f'  n{i} -> n{y} [label="yes"];')
            k = emit(n.no)
            out.append(f'  n{i} -> n{k} [label="no"];')
        return i

    emit(tree.root)
    out.append("}")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# reference strategies


def _increasing(batch: BeliefBatch, rng) -> np.ndarray:
    # Click the deepest unobserved nodes until the last click revealed the maximum.
    level = np.asarray(batch.env.tree.level, dtype=np.int64)
    avail = batch.available
    deepest = np.where(avail, level[None, :], -1).max(axis=1)
    pick = uniform_choice(avail & (level[None, :] == deepest[:, None]), rng)
    rows = np.arange(len(batch))
    hit = (batch.last >= 0) & (batch.vals[rows, np.maximum(batch.last, 0)] == batch.env.max_value)
    return np.where(hit, TERMINATE_ACTION, pick)


def _decreasing(batch: BeliefBatch, rng) -> np.ndarray:
    # Click every level-1 node, then stop.
    level = np.asarray(batch.env.tree.level)
    return uniform_choice(batch.available & (level == 1)[None, :], rng)


def _leaf_matrix(tree) -> np.ndarray:
    m = np.zeros((tree.node_count, tree.node_count), bool)
    for n in tree.reward_nodes:
        for c in tree.subtree[n]:
            if c != n and not tree.children[c]:
                m[n, c] = True
    return m


def _constant(batch: BeliefBatch, rng) -> np.ndarray:
    """Explore inner nodes along the best path until a maximal value shows up,
    then inspect the leaves below it; stop if the best path runs through it."""
    tree = batch.env.tree
    level = np.asarray(tree.level)
    inner = (level >= 1) & (level < max(level))
    rows = np.arange(len(batch))
    tens = batch.obs & (batch.vals == batch.env.max_value) & inner[None, :]
    # the first maximal inner value observed is the one that counts
    order = np.where(tens, batch.order, np.iinfo(np.int64).max)
    first = order.argmin(axis=1)
    has = tens.any(axis=1)
    leaves = _leaf_matrix(tree)[first] & batch.available & has[:, None]
    stop = has & ~leaves.any(axis=1) & batch.on_best_path[rows, first]
    cand = batch.available & inner[None, :]
    score = np.where(cand, batch.best_through, -np.inf)
    top = score.max(axis=1, keepdims=True)
    explore = uniform_choice(cand & (score == top), rng)
    pick = np.where(leaves.any(axis=1), uniform_choice(leaves, rng), explore)
    return np.where(stop, TERMINATE_ACTION, pick)


REFERENCE = {"increasing": _increasing, "decreasing": _decreasing, "constant": _constant}


def reference_policy(env_kind: str):
    """Hand-coded policy of the published flowchart for ``env_kind``."""
    kind = env_kind.lower()
    if kind not in REFERENCE:
        raise ValueError(f"no reference strategy for {env_kind!r}; "
                         f"available: {sorted(REFERENCE)}")
    return REFERENCE[kind]


# --------------------------------------------------------------------------
# click agreement


def strategy_mean_clicks(formula: Formula, predicate_set, env: EnvironmentSpec,
                         simulations: int, seed: int = 0) -> float:
    from .lpp import induced_policy

    if simulations < 1:
        raise ValueError("need at least one simulation")
    _, clicks = rollout_returns(env, induced_policy(formula, predicate_set), simulations, seed)
    return float(clicks.mean())


def agreement_ratio(accepted: int, rejected: int, made: int, expected_clicks: float) -> float:
    shortfall = max(0, int(round(expected_clicks)) - made)
    bad = rejected + shortfall
    if accepted + bad == 0:
        return 1.0
    return accepted / (accepted + bad)


def click_agreement(trajectory, formula: Formula, predicate_set, env: EnvironmentSpec,
                    simulations: int = 1000, seed: int = 0,
                    expected_clicks: float | None = None) -> float:
    """Share of a trajectory's clicks the formula would make, with a shortfall
    penalty when the trajectory clicks less than the strategy does on average."""
    clicks = [(b, c) for b, c in trajectory.steps if not c.is_terminate]
    if expected_clicks is None:
        expected_clicks = strategy_mean_clicks(formula, predicate_set, env, simulations, seed)
    if not clicks:
        return agreement_ratio(0, 0, 0, expected_clicks)
    batch = BeliefBatch.from_beliefs(env, [b for b, _ in clicks])
    acc = acceptance(formula, predicate_set, EvalContext(batch))
    ok = sum(bool(acc[i, c.node]) for i, (_, c) in enumerate(clicks))
    return agreement_ratio(ok, len(clicks) - ok, len(clicks), expected_clicks)


def check_tree_matches(tree: FlowTree, formula: Formula, k: int) -> bool:
    """Exhaustive equivalence over all assignments of ``k`` predicates."""
    if k > 16:
        raise ContractViolation("exhaustive check limited to 16 predicates")
    for bits in range(1 << k):
        v = [(bits >> i) & 1 for i in range(k)]
        if tree.classify(v) != formula.accepts_assignment(v):
            return False
    return True
