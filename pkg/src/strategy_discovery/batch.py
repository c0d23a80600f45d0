"""Vectorized beliefs and rollouts.

A policy is any callable ``policy(batch, rng) -> actions`` where ``actions``
holds one node id per row, and 0 (the root, never clickable) means
terminate.
"""
from __future__ import annotations

from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .env import TERMINATE, Belief, Computation, ContractViolation, EnvironmentSpec

TERMINATE_ACTION = 0

Policy = Callable[["BeliefBatch", np.random.Generator], np.ndarray]


class BeliefBatch:
    """Rows of beliefs as arrays.

    vals:  observed reward per node, 0 where unobserved
    obs:   observed mask (the root column is always False)
    last:  most recently clicked node, -1 before the first click
    order: click step at which each node was observed, -1 if unobserved
    """

    def __init__(self, env: EnvironmentSpec, vals, obs, last, order=None):
        self.env = env
        self.vals = np.asarray(vals, dtype=np.float64)
        self.obs = np.asarray(obs, dtype=bool)
        self.last = np.asarray(last, dtype=np.int64)
        if order is None:
            order = np.where(self.obs, 0, -1)
            rows = np.flatnonzero(self.last >= 0)
            order[rows, self.last[rows]] = 1
        self.order = np.asarray(order, dtype=np.int64)
        self._cache: dict = {}

    def __len__(self):
        return self.vals.shape[0]

    @classmethod
    def empty(cls, env: EnvironmentSpec, size: int) -> "BeliefBatch":
        n = env.tree.node_count
        return cls(env, np.zeros((size, n)), np.zeros((size, n), bool),
                   np.full(size, -1), np.full((size, n), -1))

    @classmethod
    def from_beliefs(cls, env: EnvironmentSpec, beliefs: Sequence[Belief]) -> "BeliefBatch":
        n = env.tree.node_count
        vals = np.zeros((len(beliefs), n))
        obs = np.zeros((len(beliefs), n), bool)
        last = np.full(len(beliefs), -1)
        for i, b in enumerate(beliefs):
            for j, v in enumerate(b.values):
                if v is not None and j > 0:
                    vals[i, j] = v
                    obs[i, j] = True
            if b.last is not None:
                last[i] = b.last
        return cls(env, vals, obs, last)

    def belief(self, i: int) -> Belief:
        values = [None] + [int(self.vals[i, j]) if self.obs[i, j] else None
                           for j in range(1, self.vals.shape[1])]
        last = int(self.last[i])
        return Belief(tuple(values), None if last < 0 else last)

    def take(self, rows) -> "BeliefBatch":
        return BeliefBatch(self.env, self.vals[rows], self.obs[rows], self.last[rows], self.order[rows])

    # Quantities shared by many predicates, computed once per batch.

    @cached_property
    def reward_mask(self) -> np.ndarray:
        m = np.ones(self.env.tree.node_count, bool)
        m[0] = False
        return m

    @cached_property
    def available(self) -> np.ndarray:
        return ~self.obs & self.reward_mask

    @cached_property
    def path_matrix(self) -> np.ndarray:
        tree = self.env.tree
        m = np.zeros((len(tree.paths), tree.node_count), bool)
        for i, p in enumerate(tree.paths):
            m[i, list(p)] = True
        return m

    @cached_property
    def path_values(self) -> np.ndarray:
        return self.vals @ self.path_matrix.T.astype(np.float64)

    @cached_property
    def termination_value(self) -> np.ndarray:
        return self.path_values.max(axis=1)

    @cached_property
    def best_paths(self) -> np.ndarray:
        return self.path_values == self.termination_value[:, None]

    @cached_property
    def best_through(self) -> np.ndarray:
        """Best path value among paths through each node (-inf for the root)."""
        pv = self.path_values[:, :, None]
        through = np.where(self.path_matrix[None], pv, -np.inf)
        return through.max(axis=1)

    @cached_property
    def on_best_path(self) -> np.ndarray:
        return (self.best_paths.astype(np.int64) @ self.path_matrix.astype(np.int64)) > 0

    @cached_property
    def max_observed(self) -> np.ndarray:
        return self.obs & (self.vals == self.env.max_value)


def step_rewards(env: EnvironmentSpec, batch: BeliefBatch, actions: np.ndarray) -> np.ndarray:
    return np.where(actions == TERMINATE_ACTION, batch.termination_value, -env.click_cost)


def uniform_choice(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform pick of a True column per row; TERMINATE_ACTION where none."""
    keys = rng.random(mask.shape)
    keys[~mask] = -1.0
    pick = keys.argmax(axis=1)
    return np.where(mask.any(axis=1), pick, TERMINATE_ACTION)


def run_batch(env: EnvironmentSpec, policy: Policy, size: int, rng: np.random.Generator,
              record: bool = False):
    """Roll out ``size`` independent episodes in lockstep.

    Returns ``(returns, clicks, steps)``. When ``record`` is set, ``steps`` is a
    list per episode of ``(Belief, Computation)`` pairs, else None.
    """
    tree = env.tree
    n = tree.node_count
    gt = np.zeros((size, n))
    for node in tree.reward_nodes:
        gt[:, node] = rng.choice(np.asarray(env.node_support(node), dtype=np.float64), size=size)
    batch = BeliefBatch.empty(env, size)
    returns = np.zeros(size)
    clicks = np.zeros(size, dtype=np.int64)
    live = np.arange(size)
    steps = [[] for _ in range(size)] if record else None
    t = 0
    while live.size:
        view = batch.take(live)
        actions = np.asarray(policy(view, rng), dtype=np.int64)
        if actions.shape != (live.size,):
            raise ContractViolation("policy returned the wrong number of actions")
        clicking = actions != TERMINATE_ACTION
        if np.any(view.obs[clicking, actions[clicking]]) or np.any(actions < 0) or np.any(actions >= n):
            raise ContractViolation("policy chose an unavailable computation")
        if record:
            for r, a in zip(live, actions):
                steps[r].append((batch.belief(r), TERMINATE if a == 0 else Computation(int(a))))
        returns[live] += step_rewards(env, view, actions)
        rows, cols = live[clicking], actions[clicking]
        batch.vals[rows, cols] = gt[rows, cols]
        batch.obs[rows, cols] = True
        batch.last[rows] = cols
        batch.order[rows, cols] = t
        clicks[rows] += 1
        live = rows
        t += 1
    return returns, clicks, steps


def rollout_returns(env: EnvironmentSpec, policy: Policy, n: int, seed: int,
                    chunk: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Returns and click counts of ``n`` episodes.

    Episodes are simulated in chunks of ``chunk``; chunk ``i`` draws from the
    stream ``SeedSequence(seed, spawn_key=(i,))``, so any chunk can be
    reproduced (or computed elsewhere) on its own.
    """
    rets, clks = [], []
    for i, start in enumerate(range(0, n, chunk)):
        size = min(chunk, n - start)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        r, c, _ = run_batch(env, policy, size, rng)
        rets.append(r)
        clks.append(c)
    return np.concatenate(rets), np.concatenate(clks)


def terminate_policy(batch: BeliefBatch, rng) -> np.ndarray:
    return np.zeros(len(batch), dtype=np.int64)
