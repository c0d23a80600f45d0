"""Mouselab planning trees as metalevel MDPs.

Node indexing for the 3-1-2 tree: root = 0, level-1 = 1, 2, 3, level-2 =
4, 5, 6 (children of 1, 2, 3), level-3 = 7, 8 (under 4), 9, 10 (under 5),
11, 12 (under 6). The root carries no reward and is never clickable.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

KINDS = ("increasing", "decreasing", "constant", "different")

SUPPORTS = {
    "increasing": {1: (-4, -2, 2, 4), 2: (-8, -4, 4, 8), 3: (-48, -24, 24, 48)},
    "decreasing": {1: (-48, -24, 24, 48), 2: (-8, -4, 4, 8), 3: (-4, -2, 2, 4)},
    "constant": {1: (-10, -5, 5, 10), 2: (-10, -5, 5, 10), 3: (-10, -5, 5, 10)},
    "different": {1: (-2, -1, 1, 2), 2: (-10, -5, 5, 10), 3: (-20, -10, 10, 20)},
}


class ContractViolation(ValueError):
    """Raised when an operation is called outside its precondition."""


@dataclass(frozen=True)
class TreeStructure:
    """A rooted tree given by its parent array (``parent[0]`` is -1)."""

    parent: tuple[int, ...]

    def __post_init__(self):
        if not self.parent or self.parent[0] != -1:
            raise ValueError("node 0 must be the root")
        for n, p in enumerate(self.parent[1:], start=1):
            if not 0 <= p < n:
                raise ValueError(f"node {n} has parent {p}; parents must precede children")

    @property
    def node_count(self) -> int:
        return len(self.parent)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in self.parent]
        for n, p in enumerate(self.parent[1:], start=1):
            kids[p].append(n)
        return tuple(tuple(k) for k in kids)

    @cached_property
    def level(self) -> tuple[int, ...]:
        lv = [0] * self.node_count
        for n in range(1, self.node_count):
            lv[n] = lv[self.parent[n]] + 1
        return tuple(lv)

    @property
    def reward_nodes(self) -> range:
        return range(1, self.node_count)

    @cached_property
    def paths(self) -> tuple[tuple[int, ...], ...]:
        """Root-to-leaf chains, root excluded."""
        out = []
        for n in self.reward_nodes:
            if not self.children[n]:
                chain = []
                while n != 0:
                    chain.append(n)
                    n = self.parent[n]
                out.append(tuple(reversed(chain)))
        return tuple(sorted(out))

    @cached_property
    def branch_of(self) -> tuple[int, ...]:
        """Level-1 ancestor of every node (0 for the root)."""
        out = [0] * self.node_count
        for n in self.reward_nodes:
            out[n] = n if self.parent[n] == 0 else out[self.parent[n]]
        return tuple(out)

    @cached_property
    def subtree(self) -> tuple[tuple[int, ...], ...]:
        """Nodes of the subtree rooted at each node, in preorder."""
        def walk(n):
            yield n
            for c in self.children[n]:
                yield from walk(c)
        return tuple(tuple(walk(n)) for n in range(self.node_count))

    @cached_property
    def symmetries(self) -> tuple[tuple[int, ...], ...]:
        """All automorphisms as node permutations ``perm[old] = new``."""
        return tuple(_automorphisms(self, 0))

    @cached_property
    def distance(self) -> np.ndarray:
        n = self.node_count
        depth = self.level
        out = np.zeros((n, n), dtype=np.int64)
        anc = [self._ancestors(i) for i in range(n)]
        for i in range(n):
            for j in range(n):
                common = max((a for a in anc[i] if a in anc[j]), key=lambda a: depth[a])
                out[i, j] = depth[i] + depth[j] - 2 * depth[common]
        return out

    def _ancestors(self, n: int) -> list[int]:
        out = [n]
        while self.parent[n] != -1:
            n = self.parent[n]
            out.append(n)
        return out


def _shape(tree: TreeStructure, n: int):
    return tuple(sorted(_shape(tree, c) for c in tree.children[n]))


def _isomorphisms(tree: TreeStructure, a: int, b: int) -> list[dict]:
    """All maps of subtree(a) onto subtree(b) preserving the parent relation."""
    if _shape(tree, a) != _shape(tree, b):
        return []
    ka, kb = tree.children[a], tree.children[b]
    out = []
    for order in itertools.permutations(kb):
        parts = [_isomorphisms(tree, x, y) for x, y in zip(ka, order)]
        if any(not p for p in parts):
            continue
        for combo in itertools.product(*parts):
            m = {a: b}
            for d in combo:
                m.update(d)
            out.append(m)
    return out


def _automorphisms(tree: TreeStructure, n: int) -> Iterator[tuple[int, ...]]:
    seen = set()
    for m in _isomorphisms(tree, n, n):
        perm = tuple(m.get(i, i) for i in range(tree.node_count))
        if perm not in seen:
            seen.add(perm)
            yield perm


def three_one_two() -> TreeStructure:
    return TreeStructure((-1, 0, 0, 0, 1, 2, 3, 4, 4, 5, 5, 6, 6))


@dataclass(frozen=True)
class EnvironmentSpec:
    kind: str
    tree: TreeStructure
    support: dict = field(hash=False)
    click_cost: float = 1
    discount: float = 1.0

    def __post_init__(self):
        for lv, vals in self.support.items():
            if sum(vals) != 0:
                raise ValueError(f"support for level {lv} is not zero-mean: {vals}")
        missing = {self.tree.level[n] for n in self.tree.reward_nodes} - set(self.support)
        if missing:
            raise ValueError(f"no support for levels {sorted(missing)}")
        if self.click_cost < 0:
            raise ValueError("click cost must be nonnegative")

    def node_support(self, n: int) -> tuple:
        return tuple(self.support[self.tree.level[n]])

    @cached_property
    def max_value(self):
        return max(max(v) for v in self.support.values())

    @cached_property
    def min_value(self):
        return min(min(v) for v in self.support.values())

    def fingerprint(self) -> str:
        sup = ";".join(f"{lv}:{','.join(map(str, v))}" for lv, v in sorted(self.support.items()))
        return f"{self.kind}|{','.join(map(str, self.tree.parent))}|{sup}|{self.click_cost}"

    def initial_belief(self) -> "Belief":
        return Belief((None,) * self.tree.node_count)

    def sample_ground_truth(self, rng: np.random.Generator) -> "GroundTruth":
        vals = [0] + [int(rng.choice(self.node_support(n))) for n in self.tree.reward_nodes]
        return GroundTruth(tuple(vals))


def build_environment(kind: str) -> EnvironmentSpec:
    """The published 3-1-2 environment of the given variance structure."""
    kind = kind.lower()
    if kind not in SUPPORTS:
        raise ValueError(f"unknown environment kind {kind!r}; expected one of {KINDS}")
    return EnvironmentSpec(kind, three_one_two(), dict(SUPPORTS[kind]), click_cost=1)


@dataclass(frozen=True)
class Belief:
    """Observed rewards per node (``None`` = unobserved; slot 0 is the root).

    ``last`` records the most recently clicked node. It is context for the
    predicate language only; the metalevel dynamics ignore it.
    """

    values: tuple
    last: int | None = None

    def observed(self, n: int) -> bool:
        return self.values[n] is not None

    def with_observation(self, n: int, value) -> "Belief":
        vals = list(self.values)
        vals[n] = value
        return Belief(tuple(vals), n)

    def to_list(self) -> list:
        return list(self.values[1:])

    @classmethod
    def from_list(cls, entries: Sequence, last: int | None = None) -> "Belief":
        return cls((None, *[None if v is None else int(v) for v in entries]), last)

    @property
    def n_observed(self) -> int:
        return sum(v is not None for v in self.values[1:])


@dataclass(frozen=True, order=True)
class Computation:
    """Click(node) or Terminate (``node is None``)."""

    node: int | None = None

    @property
    def is_terminate(self) -> bool:
        return self.node is None

    def __repr__(self):
        return "Terminate" if self.node is None else f"Click({self.node})"

    def to_json(self):
        return "terminate" if self.node is None else {"click": self.node}

    @classmethod
    def from_json(cls, obj) -> "Computation":
        if obj == "terminate":
            return TERMINATE
        return cls(int(obj["click"]))


TERMINATE = Computation(None)


def Click(n: int) -> Computation:
    return Computation(int(n))


@dataclass(frozen=True)
class GroundTruth:
    reward: tuple


def check_belief(env: EnvironmentSpec, belief: Belief) -> None:
    if len(belief.values) != env.tree.node_count or belief.values[0] is not None:
        raise ContractViolation("belief does not match the tree")
    for n in env.tree.reward_nodes:
        v = belief.values[n]
        if v is not None and v not in env.node_support(n):
            raise ContractViolation(f"node {n} observed {v}, outside its support")


def available_computations(env: EnvironmentSpec, belief: Belief) -> list[Computation]:
    out = [Computation(n) for n in env.tree.reward_nodes if belief.values[n] is None]
    out.append(TERMINATE)
    return out


def path_values(env: EnvironmentSpec, belief: Belief) -> list:
    return [sum(belief.values[n] or 0 for n in p) for p in env.tree.paths]


def termination_reward(env: EnvironmentSpec, belief: Belief):
    """Expected return of taking the best path now (unobserved nodes count 0)."""
    return max(path_values(env, belief))


def outcome_distribution(env: EnvironmentSpec, belief: Belief, click: Computation):
    if click.is_terminate or belief.observed(click.node):
        raise ContractViolation(f"{click!r} is not a legal click in this belief")
    sup = env.node_support(click.node)
    p = 1.0 / len(sup)
    return [(belief.with_observation(click.node, v), p) for v in sup]


def apply_computation(env: EnvironmentSpec, belief: Belief, c: Computation,
                      ground_truth: GroundTruth):
    """One metalevel step: returns ``(belief', reward, done)``."""
    if c.is_terminate:
        return belief, termination_reward(env, belief), True
    if not 1 <= c.node < env.tree.node_count or belief.observed(c.node):
        raise ContractViolation(f"{c!r} is not available")
    return belief.with_observation(c.node, ground_truth.reward[c.node]), -env.click_cost, False


def permute(belief: Belief, perm: Sequence[int]) -> Belief:
    vals = [None] * len(belief.values)
    for old, new in enumerate(perm):
        vals[new] = belief.values[old]
    last = None if belief.last is None else perm[belief.last]
    return Belief(tuple(vals), last)


def _sort_key(values):
    # None sorts before every observed value.
    return tuple((0, 0) if v is None else (1, v) for v in values)


def canonicalize(env: EnvironmentSpec, belief: Belief) -> Belief:
    """Least belief (by node-order lexicographic comparison) in the symmetry orbit."""
    images = (permute(Belief(belief.values), p) for p in env.tree.symmetries)
    return min(images, key=lambda b: _sort_key(b.values))


def iter_beliefs(env: EnvironmentSpec) -> Iterator[Belief]:
    """Every belief of the tree (exponential; only for small trees)."""
    choices = [(None, *env.node_support(n)) for n in env.tree.reward_nodes]
    for combo in itertools.product(*choices):
        yield Belief((None, *combo))
