"""Exact backward induction for Mouselab metalevel MDPs.

The tree below the root is a set of isomorphic branches. A belief is reduced
to the multiset of its canonical branch states (canonical under the
automorphisms of a single branch), which is exactly its orbit under the full
symmetry group. Multisets are stored as sorted tuples packed with the
combinatorial number system, so the whole value function is one flat array
filled layer by layer, from fully observed beliefs back to the empty one.
"""
from __future__ import annotations

import io
import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .env import (
    TERMINATE,
    Belief,
    Computation,
    ContractViolation,
    EnvironmentSpec,
    _isomorphisms,
    termination_reward,
)

log = logging.getLogger(__name__)

DEFAULT_TIE_EPSILON = 1e-9
CACHE_MAGIC = b"SDVT1\n"


class BranchModel:
    """Canonical states of one branch and their click successors."""

    def __init__(self, env: EnvironmentSpec):
        tree = env.tree
        roots = tree.children[0]
        if not roots:
            raise ValueError("tree has no reward nodes")
        template = tree.subtree[roots[0]]
        self.template = template
        # node_map[p][j]: node of branch p at template position j
        self.node_map = []
        for r in roots:
            isos = _isomorphisms(tree, roots[0], r)
            if not isos:
                raise ValueError("solver needs all root branches to be isomorphic")
            self.node_map.append(tuple(isos[0][t] for t in template))
        self.node_map = np.array(self.node_map, dtype=np.int64)
        self.position = {}
        for p, nodes in enumerate(self.node_map):
            for j, n in enumerate(nodes):
                self.position[int(n)] = (p, j)

        self.supports = [tuple(env.node_support(n)) for n in template]
        self.radix = [len(s) + 1 for s in self.supports]
        self.place = np.cumprod([1] + self.radix[:-1]).astype(np.int64)
        n_codes = int(np.prod(self.radix))

        local = {n: i for i, n in enumerate(template)}
        local_parent = [local.get(tree.parent[n], -1) for n in template]
        self.local_paths = [tuple(local[n] for n in p if n in local)
                            for p in tree.paths if p[0] == roots[0]]
        # Automorphisms of the branch as permutations of template positions.
        autos = []
        for m in _isomorphisms(tree, roots[0], roots[0]):
            autos.append(tuple(local[m[t]] for t in template))
        self.autos = autos
        del local_parent

        digits_all = list(itertools.product(*[range(r) for r in self.radix]))
        canon_code = np.empty(n_codes, dtype=np.int64)
        for digits in digits_all:
            code = self.encode(digits)
            best = None
            for a in autos:
                img = [0] * len(digits)
                for j, d in enumerate(digits):
                    img[a[j]] = d
                c = self.encode(img)
                best = c if best is None or c < best else best
            canon_code[code] = best
        reps = np.unique(canon_code)
        self.reps = reps
        self.n_states = len(reps)
        self.canon_id = np.searchsorted(reps, canon_code)

        self.rep_digits = np.array([self.decode(int(c)) for c in reps], dtype=np.int64)
        self.obs_count = (self.rep_digits > 0).sum(axis=1)
        self.term = np.array([self._path_best(d) for d in self.rep_digits], dtype=np.float64)

        J = len(template)
        omax = max(len(s) for s in self.supports)
        self.succ = np.full((self.n_states, J, omax), -1, dtype=np.int64)
        self.prob = np.zeros((J, omax))
        for j, s in enumerate(self.supports):
            self.prob[j, : len(s)] = 1.0 / len(s)
        for sid, d in enumerate(self.rep_digits):
            for j in range(J):
                if d[j]:
                    continue
                for o in range(len(self.supports[j])):
                    nd = d.copy()
                    nd[j] = o + 1
                    self.succ[sid, j, o] = self.canon_id[self.encode(nd)]

    def encode(self, digits) -> int:
        return int(sum(int(d) * int(p) for d, p in zip(digits, self.place)))

    def decode(self, code: int) -> list[int]:
        out = []
        for r in self.radix:
            out.append(code % r)
            code //= r
        return out

    def _path_best(self, digits) -> float:
        def val(j):
            return 0 if digits[j] == 0 else self.supports[j][digits[j] - 1]
        return max(sum(val(j) for j in path) for path in self.local_paths)

    def digits_of(self, belief: Belief, p: int) -> list[int]:
        out = []
        for j, n in enumerate(self.node_map[p]):
            v = belief.values[n]
            out.append(0 if v is None else self.supports[j].index(v) + 1)
        return out

    def state_of(self, belief: Belief, p: int) -> int:
        return int(self.canon_id[self.encode(self.digits_of(belief, p))])


class MultisetIndex:
    """Packs sorted k-tuples over ``range(n_states)`` into consecutive integers."""

    def __init__(self, n_states: int, k: int):
        self.n_states, self.k = n_states, k
        top = n_states + k
        self.binom = np.zeros((k + 1, top + 1), dtype=np.int64)
        for i in range(k + 1):
            for x in range(top + 1):
                self.binom[i, x] = math.comb(x, i)
        self.size = math.comb(n_states + k - 1, k)

    def pack(self, sorted_tuples: np.ndarray) -> np.ndarray:
        idx = np.zeros(sorted_tuples.shape[0], dtype=np.int64)
        for i in range(self.k):
            idx += self.binom[i + 1, sorted_tuples[:, i] + i]
        return idx

    def all_tuples(self) -> np.ndarray:
        """Every sorted tuple, in packed-index order."""
        block = np.arange(self.n_states, dtype=np.int16)[:, None]
        for i in range(2, self.k + 1):
            parts = []
            for v in range(self.n_states):
                head = block[: math.comb(v + i - 1, i - 1)]
                tail = np.full((head.shape[0], 1), v, dtype=np.int16)
                parts.append(np.hstack([head, tail]))
            block = np.vstack(parts)
        return block


@dataclass
class ValueTable:
    """Optimal values for every canonical belief of ``env``.

    Q values are not stored; they are one expectation away from ``values``
    and are recomputed on lookup.
    """

    env: EnvironmentSpec
    branches: BranchModel
    index: MultisetIndex
    values: np.ndarray

    @property
    def state_count(self) -> int:
        return int(self.values.shape[0])

    def _key(self, states) -> int:
        t = np.sort(np.asarray(states, dtype=np.int64))[None, :]
        return int(self.index.pack(t)[0])

    def _branch_states(self, belief: Belief) -> list[int]:
        return [self.branches.state_of(belief, p) for p in range(len(self.branches.node_map))]

    def value(self, belief: Belief) -> float:
        return float(self.values[self._key(self._branch_states(belief))])

    def q_values(self, belief: Belief) -> dict[Computation, float]:
        bm = self.branches
        states = self._branch_states(belief)
        out = {}
        for n in self.env.tree.reward_nodes:
            if belief.values[n] is not None:
                continue
            p, j = bm.position[n]
            digits = bm.digits_of(belief, p)
            total = 0.0
            for o in range(len(bm.supports[j])):
                d = list(digits)
                d[j] = o + 1
                st = list(states)
                st[p] = int(bm.canon_id[bm.encode(d)])
                total += bm.prob[j, o] * self.values[self._key(st)]
            out[Computation(n)] = -self.env.click_cost + total
        out[TERMINATE] = termination_reward(self.env, belief)
        return out

    def batch_codes(self, vals: np.ndarray, obs: np.ndarray) -> np.ndarray:
        """Raw (uncanonicalized) branch codes of belief rows given as arrays."""
        bm = self.branches
        k = len(bm.node_map)
        out = np.zeros((vals.shape[0], k), dtype=np.int64)
        for p in range(k):
            for j, n in enumerate(bm.node_map[p]):
                sup = np.asarray(bm.supports[j], dtype=np.float64)
                digit = np.where(obs[:, n], np.searchsorted(sup, vals[:, n]) + 1, 0)
                out[:, p] += digit * bm.place[j]
        return out

    def batch_q(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Q values for rows of raw branch codes.

        Returns ``(q_click, q_term)`` with ``q_click[b, p, j]`` the value of
        clicking position ``j`` of branch ``p`` (``-inf`` if already observed).
        """
        bm = self.branches
        B, k = codes.shape
        J, omax = bm.prob.shape
        states = bm.canon_id[codes]
        q = np.full((B, k, J), -np.inf)
        for p in range(k):
            for j in range(J):
                ok = (codes[:, p] // bm.place[j]) % bm.radix[j] == 0
                if not ok.any():
                    continue
                acc = np.zeros(int(ok.sum()))
                for o in range(len(bm.supports[j])):
                    st = states[ok].copy()
                    st[:, p] = bm.canon_id[codes[ok, p] + (o + 1) * bm.place[j]]
                    st.sort(axis=1)
                    acc += bm.prob[j, o] * self.values[self.index.pack(st)]
                q[ok, p, j] = -self.env.click_cost + acc
        q_term = bm.term[states].max(axis=1)
        return q, q_term

    def batch_node_q(self, vals: np.ndarray, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(q, q_term)`` with ``q[b, node]`` per click (``-inf`` if unavailable)."""
        q3, q_term = self.batch_q(self.batch_codes(vals, obs))
        q = np.full((vals.shape[0], self.env.tree.node_count), -np.inf)
        for p, nodes in enumerate(self.branches.node_map):
            q[:, nodes] = q3[:, p, :]
        return q, q_term

    def fingerprint(self) -> str:
        return self.env.fingerprint()

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            header = self.fingerprint().encode()
            fh.write(len(header).to_bytes(4, "little"))
            fh.write(header)
            buf = io.BytesIO()
            np.save(buf, self.values, allow_pickle=False)
            fh.write(buf.getvalue())


def load_table(env: EnvironmentSpec, path) -> ValueTable:
    with open(path, "rb") as fh:
        if fh.read(len(CACHE_MAGIC)) != CACHE_MAGIC:
            raise ValueError(f"{path} is not a value-table cache")
        n = int.from_bytes(fh.read(4), "little")
        header = fh.read(n).decode()
        if header != env.fingerprint():
            raise ValueError(f"cache {path} was built for {header!r}, not {env.fingerprint()!r}")
        values = np.load(io.BytesIO(fh.read()), allow_pickle=False)
    bm = BranchModel(env)
    return ValueTable(env, bm, MultisetIndex(bm.n_states, len(bm.node_map)), values)


def solve(env: EnvironmentSpec) -> ValueTable:
    bm = BranchModel(env)
    k = len(bm.node_map)
    index = MultisetIndex(bm.n_states, k)
    tuples = index.all_tuples()
    log.info("solving %s: %d branch states, %d canonical beliefs", env.kind, bm.n_states, index.size)
    values = bm.term[tuples].max(axis=1)
    table = ValueTable(env, bm, index, values)
    layer = bm.obs_count[tuples].sum(axis=1)
    J = len(bm.template)
    for depth in range(int(layer.max()) - 1, -1, -1):
        rows = np.flatnonzero(layer == depth)
        if rows.size == 0:
            continue
        states = tuples[rows].astype(np.int64)
        best = values[rows]
        for p in range(k):
            for j in range(J):
                nxt = bm.succ[states[:, p], j, :]
                ok = np.flatnonzero(nxt[:, 0] >= 0)
                if ok.size == 0:
                    continue
                acc = np.zeros(ok.size)
                for o in range(nxt.shape[1]):
                    if bm.prob[j, o] == 0:
                        continue
                    st = states[ok]
                    st[:, p] = nxt[ok, o]
                    st.sort(axis=1)
                    acc += bm.prob[j, o] * values[index.pack(st)]
                best[ok] = np.maximum(best[ok], acc - env.click_cost)
        values[rows] = best
    return table


def expert_policy(table: ValueTable, tie_epsilon: float = DEFAULT_TIE_EPSILON):
    """Uniform random choice over the optimal computations of each belief."""
    from .batch import uniform_choice

    def policy(batch, rng):
        q, q_term = table.batch_node_q(batch.vals, batch.obs)
        top = np.maximum(q.max(axis=1), q_term)
        mask = q >= (top - tie_epsilon)[:, None]
        mask[:, 0] = q_term >= top - tie_epsilon
        return uniform_choice(mask, rng)

    return policy


def q_values(table: ValueTable, belief: Belief) -> dict[Computation, float]:
    return table.q_values(belief)


def optimal_action_set(table: ValueTable, belief: Belief,
                       tie_epsilon: float = DEFAULT_TIE_EPSILON) -> list[Computation]:
    q = table.q_values(belief)
    top = max(q.values())
    return sorted((c for c, v in q.items() if v >= top - tie_epsilon),
                  key=lambda c: (c.is_terminate, c.node or 0))
