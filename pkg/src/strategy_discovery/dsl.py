"""Predicate language over (belief, click) pairs.

Six kinds of predicates are generated from three vocabularies:

* node predicates (``is_observed``) describe the clicked node,
* general predicates (``is_previous_observed_max``) describe the belief only,
* among-predicates (``has_largest_depth``) rank a node inside a set of nodes
  and never appear on their own.

From these, ``among(conj)`` tests a conjunction of node literals,
``among(conj, A)`` asks whether the clicked node is among the best nodes of
the set selected by ``conj`` under ``A``, and ``all_(conj, A)`` asks whether
every node of that set ties under ``A``.

Every predicate evaluates on a :class:`BeliefBatch` to a ``(rows, nodes)``
boolean mask giving its truth value for each possible click target.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .batch import BeliefBatch
from .env import Belief, Computation, EnvironmentSpec

# --------------------------------------------------------------------------
# vocabulary semantics


def _level(b: BeliefBatch) -> np.ndarray:
    return np.asarray(b.env.tree.level)[None, :].repeat(len(b), 0)


def _parent_observed(b: BeliefBatch) -> np.ndarray:
    parent = np.asarray(b.env.tree.parent)
    out = b.obs[:, np.maximum(parent, 0)].copy()
    out[:, parent == 0] = True  # the start node is always known
    out[:, 0] = False
    return out


def _child_matrix(tree) -> np.ndarray:
    m = np.zeros((tree.node_count, tree.node_count), bool)
    for n, kids in enumerate(tree.children):
        m[n, list(kids)] = True
    return m


def _child_observed(b: BeliefBatch) -> np.ndarray:
    return (b.obs.astype(np.int64) @ _child_matrix(b.env.tree).T.astype(np.int64)) > 0


def _sibling_matrix(tree) -> np.ndarray:
    m = np.zeros((tree.node_count, tree.node_count), bool)
    for kids in tree.children:
        for a in kids:
            for c in kids:
                if a != c:
                    m[a, c] = True
    return m


def _sibling_observed(b: BeliefBatch) -> np.ndarray:
    return (b.obs.astype(np.int64) @ _sibling_matrix(b.env.tree).T.astype(np.int64)) > 0


def _unobserved_sibling(b: BeliefBatch) -> np.ndarray:
    avail = b.available.astype(np.int64)
    return (avail @ _sibling_matrix(b.env.tree).T.astype(np.int64)) > 0


def _branch_matrix(tree, leaves_only=False) -> np.ndarray:
    m = np.zeros((tree.node_count, tree.node_count), bool)
    for n in tree.reward_nodes:
        for c in tree.subtree[tree.branch_of[n]]:
            if not leaves_only or not tree.children[c]:
                m[n, c] = True
    return m


def _all_in(b: BeliefBatch, member: np.ndarray) -> np.ndarray:
    # member[n, c]: c belongs to the set attached to node n
    missing = (~b.obs).astype(np.int64) @ member.T.astype(np.int64)
    out = missing == 0
    out[:, 0] = False
    return out


def _ancestor_matrix(tree) -> np.ndarray:
    m = np.zeros((tree.node_count, tree.node_count), bool)
    for n in tree.reward_nodes:
        a = tree.parent[n]
        while a > 0:
            m[n, a] = True
            a = tree.parent[a]
    return m


def _successor_of_max(b: BeliefBatch) -> np.ndarray:
    return (b.max_observed.astype(np.int64) @ _ancestor_matrix(b.env.tree).T.astype(np.int64)) > 0


def _through_max(b: BeliefBatch) -> np.ndarray:
    pm = b.path_matrix.astype(np.int64)
    hot = (b.max_observed.astype(np.int64) @ pm.T) > 0
    return (hot.astype(np.int64) @ pm) > 0


def _shares_path(tree) -> np.ndarray:
    m = np.zeros((tree.node_count, tree.node_count), bool)
    for p in tree.paths:
        for a in p:
            for c in p:
                m[a, c] = True
    return m


def _previous(b: BeliefBatch, fn) -> np.ndarray:
    rows = np.arange(len(b))
    last = np.maximum(b.last, 0)
    return (b.last >= 0) & fn(b.vals[rows, last])


BASE = {
    "is_observed": lambda b: b.obs,
    "has_largest_depth": lambda b: _level(b) == max(b.env.tree.level),
    "has_smallest_depth": lambda b: _level(b) == 1,
    "depth_eq_2": lambda b: _level(b) == 2,
    "is_root_child": lambda b: (np.asarray(b.env.tree.parent) == 0)[None, :].repeat(len(b), 0),
    "has_parent_observed": _parent_observed,
    "has_child_observed": _child_observed,
    "is_on_best_expected_path": lambda b: b.on_best_path,
    "has_best_path_through_max": _through_max,
    "is_positive_observed": lambda b: b.obs & (b.vals > 0),
    "sibling_observed": _sibling_observed,
    "branch_fully_observed": lambda b: _all_in(b, _branch_matrix(b.env.tree)),
    "all_leaves_of_branch_observed": lambda b: _all_in(b, _branch_matrix(b.env.tree, True)),
    "is_successor_of_max_observed": _successor_of_max,
}


def _count_ge(k):
    return lambda b: b.obs.sum(axis=1) >= k


def _level_observed(b: BeliefBatch, level: int) -> np.ndarray:
    cols = [n for n in b.env.tree.reward_nodes if b.env.tree.level[n] == level]
    return b.obs[:, cols].all(axis=1)


def _previous_on_best_path(b: BeliefBatch) -> np.ndarray:
    rows = np.arange(len(b))
    return (b.last >= 0) & b.on_best_path[rows, np.maximum(b.last, 0)]


GENERAL = {
    "is_previous_observed_max": lambda b: _previous(b, lambda v: v == b.env.max_value),
    "is_previous_observed_min": lambda b: _previous(b, lambda v: v == b.env.min_value),
    "is_previous_observed_positive": lambda b: _previous(b, lambda v: v > 0),
    "exists_observed_max": lambda b: b.max_observed.any(axis=1),
    "exists_observed_min": lambda b: (b.obs & (b.vals == b.env.min_value)).any(axis=1),
    "count_observed_ge_1": _count_ge(1),
    "count_observed_ge_3": _count_ge(3),
    "count_observed_ge_6": _count_ge(6),
    "count_observed_ge_9": _count_ge(9),
    "all_level1_observed": lambda b: _level_observed(b, 1),
    "all_leaves_observed": lambda b: _level_observed(b, max(b.env.tree.level)),
    "best_path_value_positive": lambda b: b.termination_value > 0,
    "max_observed_on_best_path": lambda b: (b.max_observed & b.on_best_path).any(axis=1),
    "no_click_made_yet": lambda b: ~b.obs.any(axis=1),
    "previous_on_best_path": _previous_on_best_path,
}


def _unobserved_ancestors(b: BeliefBatch) -> np.ndarray:
    return -((~b.obs).astype(np.float64) @ _ancestor_matrix(b.env.tree).T.astype(np.float64))


def _closest_to_max(b: BeliefBatch) -> np.ndarray:
    dist = b.env.tree.distance.astype(np.float64)
    d = np.where(b.max_observed[:, None, :], dist[None], np.inf).min(axis=2)
    return np.where(np.isinf(d), 0.0, -d)


def _level_variance(b: BeliefBatch) -> np.ndarray:
    env = b.env
    var = np.zeros(env.tree.node_count)
    for n in env.tree.reward_nodes:
        var[n] = np.var(env.node_support(n))
    return np.broadcast_to(var, b.vals.shape)


def _relation_to_previous(matrix_fn):
    def score(b: BeliefBatch) -> np.ndarray:
        m = matrix_fn(b.env.tree)
        out = m[np.maximum(b.last, 0)].astype(np.float64)
        out[b.last < 0] = 0.0
        return out
    return score


def _positive_parent(b: BeliefBatch) -> np.ndarray:
    parent = np.maximum(np.asarray(b.env.tree.parent), 0)
    return (b.obs[:, parent] & (b.vals[:, parent] > 0)).astype(np.float64)


AMONG = {
    "has_largest_depth": lambda b: _level(b).astype(np.float64),
    "has_smallest_depth": lambda b: -_level(b).astype(np.float64),
    "has_best_expected_total": lambda b: b.best_through,
    "is_closest_to_root": _unobserved_ancestors,
    "is_closest_to_max_observed": _closest_to_max,
    "has_parent_observed": lambda b: _parent_observed(b).astype(np.float64),
    "has_child_observed": lambda b: _child_observed(b).astype(np.float64),
    "has_largest_level_variance": _level_variance,
    "is_sibling_of_previous": _relation_to_previous(_sibling_matrix),
    "lies_on_previous_path": _relation_to_previous(_shares_path),
    "has_positive_parent": _positive_parent,
    "has_unobserved_sibling": lambda b: _unobserved_sibling(b).astype(np.float64),
}

# --------------------------------------------------------------------------
# AST


class Predicate:
    """Base class; subclasses are frozen dataclasses hashed by structure."""

    def mask(self, ctx: "EvalContext") -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class BasePred(Predicate):
    name: str

    def __str__(self):
        return self.name

    def mask(self, ctx):
        return ctx.base(self.name)


@dataclass(frozen=True)
class GeneralPred(Predicate):
    name: str

    def __str__(self):
        return self.name

    def mask(self, ctx):
        return ctx.general(self.name)


@dataclass(frozen=True)
class Not(Predicate):
    inner: Predicate

    def __str__(self):
        return f"not({self.inner})"

    def mask(self, ctx):
        return ~self.inner.mask(ctx)


def _conj_str(conj) -> str:
    return " and ".join(map(str, conj))


@dataclass(frozen=True)
class Among(Predicate):
    conj: tuple

    def __str__(self):
        return f"among({_conj_str(self.conj)})"

    def mask(self, ctx):
        return ctx.conj(self.conj)


@dataclass(frozen=True)
class AmongWith(Predicate):
    conj: tuple
    among: str

    def __str__(self):
        return f"among({_conj_str(self.conj)}, {self.among})"

    def mask(self, ctx):
        members, best = ctx.ranked(self.conj, self.among)
        return members & best


@dataclass(frozen=True)
class AllWith(Predicate):
    conj: tuple
    among: str

    def __str__(self):
        return f"all_({_conj_str(self.conj)}, {self.among})"

    def mask(self, ctx):
        members, best = ctx.ranked(self.conj, self.among)
        every = ~(members & ~best).any(axis=1)
        return np.broadcast_to(every[:, None], members.shape)


class EvalContext:
    """Memoizes shared sub-results while evaluating many predicates on a batch."""

    def __init__(self, batch: BeliefBatch):
        self.batch = batch
        self._memo: dict = {}

    def _get(self, key, fn):
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    def base(self, name):
        return self._get(("b", name), lambda: np.asarray(BASE[name](self.batch), bool)
                         & self.batch.reward_mask)

    def general(self, name):
        def fn():
            v = np.asarray(GENERAL[name](self.batch), bool)
            return np.broadcast_to(v[:, None], self.batch.obs.shape)
        return self._get(("g", name), fn)

    def score(self, name):
        return self._get(("s", name), lambda: np.asarray(AMONG[name](self.batch), np.float64))

    def conj(self, conj):
        def fn():
            m = self.batch.reward_mask[None, :].repeat(len(self.batch), 0)
            for lit in conj:
                m = m & lit.mask(self)
            return m & self.batch.reward_mask
        return self._get(("c", conj), fn)

    def ranked(self, conj, among):
        def fn():
            members = self.conj(conj)
            s = self.score(among)
            top = np.where(members, s, -np.inf).max(axis=1, keepdims=True)
            return members, s == top
        return self._get(("r", conj, among), fn)


def evaluate_batch(predicate: Predicate, batch: BeliefBatch, ctx: EvalContext | None = None) -> np.ndarray:
    ctx = ctx or EvalContext(batch)
    return np.asarray(predicate.mask(ctx), bool)


def evaluate(predicate: Predicate, env: EnvironmentSpec, belief: Belief, click: Computation) -> bool:
    """Truth value of ``predicate`` for clicking ``click.node`` in ``belief``."""
    if click.is_terminate:
        raise ValueError("predicates are defined for clicks only")
    batch = BeliefBatch.from_beliefs(env, [belief])
    return bool(evaluate_batch(predicate, batch)[0, click.node])


# --------------------------------------------------------------------------
# grammar


@dataclass(frozen=True)
class GrammarConfig:
    base: tuple
    general: tuple
    among: tuple
    width: int = 2
    negation: bool = True
    templates: dict | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "GrammarConfig":
        return cls(tuple(d["base"]), tuple(d["general"]), tuple(d["among"]),
                   int(d.get("width", 2)), bool(d.get("negation", True)), d.get("templates"))

    def to_dict(self) -> dict:
        out = {"base": list(self.base), "general": list(self.general), "among": list(self.among),
               "width": self.width, "negation": self.negation}
        if self.templates is not None:
            out["templates"] = self.templates
        return out

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_grammar(path=None) -> GrammarConfig:
    if path is None:
        text = resources.files(__package__).joinpath("default_grammar.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return GrammarConfig.from_dict(json.loads(text))


def default_grammar() -> GrammarConfig:
    return load_grammar()


class PredicateSet(Sequence):
    """Ordered, duplicate-free predicates; column ``j`` of a feature matrix is ``self[j]``."""

    def __init__(self, predicates, config: GrammarConfig):
        self.predicates = list(predicates)
        self.config = config
        self.fingerprint = config.fingerprint()
        self._index = {p: i for i, p in enumerate(self.predicates)}
        self._by_name = {str(p): i for i, p in enumerate(self.predicates)}
        if len(self._index) != len(self.predicates):
            raise ValueError("duplicate predicates")

    def __getitem__(self, i):
        return self.predicates[i]

    def __len__(self):
        return len(self.predicates)

    def index(self, p) -> int:
        if isinstance(p, str):
            if p not in self._by_name:
                raise KeyError(f"predicate {p!r} is not in this predicate set")
            return self._by_name[p]
        return self._index[p]

    def names(self) -> list[str]:
        return [str(p) for p in self.predicates]


def _check_vocab(names, known, kind):
    if not names:
        raise ValueError(f"empty {kind} vocabulary")
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate {kind} names: {dup}")
    unknown = [n for n in names if n not in known]
    if unknown:
        raise ValueError(f"unknown {kind} predicate(s): {unknown}")


def conjunctions(config: GrammarConfig) -> list[tuple]:
    out = []
    signs = (False, True) if config.negation else (False,)
    for w in range(1, config.width + 1):
        for names in itertools.combinations(config.base, w):
            for neg in itertools.product(signs, repeat=w):
                out.append(tuple(Not(BasePred(n)) if s else BasePred(n) for n, s in zip(names, neg)))
    return out


def enumerate_predicates(config: GrammarConfig | None = None) -> PredicateSet:
    """All predicates of the grammar, in a fixed order."""
    config = config or default_grammar()
    _check_vocab(list(config.base), BASE, "node")
    _check_vocab(list(config.general), GENERAL, "general")
    _check_vocab(list(config.among), AMONG, "among")
    if config.width < 1:
        raise ValueError("conjunction width must be at least 1")
    preds: list[Predicate] = [BasePred(n) for n in config.base]
    preds += [GeneralPred(n) for n in config.general]
    conjs = conjunctions(config)
    preds += [Among(c) for c in conjs]
    preds += [AmongWith(c, a) for c in conjs for a in config.among]
    preds += [AllWith(c, a) for c in conjs for a in config.among]
    return PredicateSet(preds, config)


def parse(text: str) -> Predicate:
    """Inverse of ``str(predicate)``."""
    text = text.strip()
    for head, cls in (("among(", "among"), ("all_(", "all")):
        if text.startswith(head) and text.endswith(")"):
            inner = text[len(head):-1]
            conj_txt, among = _split_top_comma(inner)
            conj = tuple(parse(t) for t in conj_txt.split(" and "))
            if cls == "all":
                return AllWith(conj, among.strip())
            return AmongWith(conj, among.strip()) if among is not None else Among(conj)
    if text.startswith("not(") and text.endswith(")"):
        return Not(parse(text[4:-1]))
    if text in BASE:
        return BasePred(text)
    if text in GENERAL:
        return GeneralPred(text)
    raise ValueError(f"cannot parse predicate {text!r}")


def _split_top_comma(s: str):
    depth = 0
    for i in range(len(s) - 1, -1, -1):
        ch = s[i]
        if ch == ")":
            depth += 1
        elif ch == "(":
            depth -= 1
        elif ch == "," and depth == 0:
            return s[:i], s[i + 1:]
    return s, None


# --------------------------------------------------------------------------
# featurization


@dataclass
class BinaryMatrix:
    rows: np.ndarray      # (pairs, predicates) bool
    labels: np.ndarray    # (pairs,) bool, True = positive

    @property
    def shape(self):
        return self.rows.shape


def _belief_key(b: Belief):
    return (b.values, b.last)


def group_pairs(env: EnvironmentSpec, pairs: Sequence[tuple[Belief, Computation]]):
    """Unique beliefs as one batch, plus each pair's (row, node) coordinates."""
    keys: dict = {}
    beliefs = []
    rows = np.empty(len(pairs), dtype=np.int64)
    nodes = np.empty(len(pairs), dtype=np.int64)
    for i, (b, c) in enumerate(pairs):
        if c.is_terminate:
            raise ValueError("featurize takes click pairs only; drop Terminate steps first")
        k = _belief_key(b)
        if k not in keys:
            keys[k] = len(beliefs)
            beliefs.append(b)
        rows[i] = keys[k]
        nodes[i] = c.node
    return BeliefBatch.from_beliefs(env, beliefs), rows, nodes


def featurize(env: EnvironmentSpec, pairs, predicate_set: Sequence[Predicate],
              labels=None) -> BinaryMatrix:
    pairs = list(pairs)
    out = np.zeros((len(pairs), len(predicate_set)), dtype=bool)
    if pairs:
        batch, rows, nodes = group_pairs(env, pairs)
        ctx = EvalContext(batch)
        for j, p in enumerate(predicate_set):
            out[:, j] = p.mask(ctx)[rows, nodes]
    lab = np.ones(len(pairs), bool) if labels is None else np.asarray(labels, bool)
    return BinaryMatrix(out, lab)


# --------------------------------------------------------------------------
# English


def _article(word: str) -> str:
    return "an" if word[:1].lower() in "aeiou" else "a"


def _templates(config: GrammarConfig | None):
    if config is not None and config.templates is not None:
        return config.templates
    return default_grammar().templates


def _lit_phrase(lit: Predicate, tmpl, consts=None) -> tuple[str, str]:
    """``(kind, phrase)`` for a node literal; kind is ``adj`` or ``rel``."""
    neg = isinstance(lit, Not)
    base = lit.inner if neg else lit
    if not isinstance(base, BasePred):
        raise ValueError(f"{lit} is not a node literal")
    entry = tmpl["base"].get(base.name)
    if entry is None:
        raise KeyError(f"no English template for node predicate {base.name!r}")
    consts = consts or {}
    if "adj" in entry:
        return "adj", (entry["neg"] if neg else entry["adj"]).format(**consts)
    return "rel", (entry["neg_rel"] if neg else entry["rel"]).format(**consts)


def _noun_phrase(conj, tmpl, consts, plural=False) -> str:
    adjs, rels = [], []
    for lit in conj:
        kind, phrase = _lit_phrase(lit, tmpl, consts)
        (adjs if kind == "adj" else rels).append(phrase)
    words = " ".join(adjs + ["nodes" if plural else "node"])
    if rels:
        words += " " + " and ".join(rels)
    return words


def english(predicate: Predicate, env: EnvironmentSpec | None = None,
            config: GrammarConfig | None = None) -> str:
    """Question text for a predicate, with environment constants filled in."""
    tmpl = _templates(config)
    consts = {"max": "maximal reward", "min": "minimal reward"}
    if env is not None:
        consts = {"max": _fmt(env.max_value), "min": _fmt(env.min_value)}
    p = predicate
    if isinstance(p, GeneralPred):
        if p.name not in tmpl["general"]:
            raise KeyError(f"no English template for general predicate {p.name!r}")
        return tmpl["general"][p.name].format(**consts)
    if isinstance(p, (BasePred, Not)) and isinstance(p.inner if isinstance(p, Not) else p, BasePred):
        kind, phrase = _lit_phrase(p, tmpl, consts)
        return f"Is it {phrase}?" if kind == "adj" else f"Is it a node {phrase}?"
    if isinstance(p, Among):
        np_ = _noun_phrase(p.conj, tmpl, consts)
        return f"Is it {_article(np_)} {np_}?"
    if isinstance(p, (AmongWith, AllWith)):
        entry = tmpl["among"].get(p.among)
        if entry is None:
            raise KeyError(f"no English template for among-predicate {p.among!r}")
        if isinstance(p, AmongWith):
            nodes = _noun_phrase(p.conj, tmpl, consts, plural=True)
            return f"Is it {entry['among'].format(**consts)} among {nodes}?"
        nodes = _noun_phrase(p.conj, tmpl, consts, plural=True)
        return f"Are all {nodes} {entry['all'].format(**consts)}?"
    if isinstance(p, Not):
        return f"Not so: {english(p.inner, env, config)}"
    raise TypeError(f"cannot render {p!r}")


def _fmt(v) -> str:
    return str(int(v)) if float(v).is_integer() else str(v)
