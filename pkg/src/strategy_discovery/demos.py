"""Expert demonstrations, negative examples and Monte Carlo returns.

Trajectory ``i`` of a demonstration set with master seed ``s`` is simulated
from ``SeedSequence(s, spawn_key=(i,))``, so every trajectory can be
regenerated on its own.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .batch import BeliefBatch, rollout_returns, run_batch
from .env import (
    TERMINATE,
    Belief,
    Computation,
    ContractViolation,
    EnvironmentSpec,
    termination_reward,
)
from .solver import DEFAULT_TIE_EPSILON, ValueTable, expert_policy

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Trajectory:
    steps: tuple  # (Belief, Computation) pairs, the last one Terminate

    def __post_init__(self):
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        if not steps or not steps[-1][1].is_terminate:
            raise ContractViolation("a trajectory ends with exactly one Terminate")
        for k, (b, c) in enumerate(steps[:-1]):
            if c.is_terminate:
                raise ContractViolation("Terminate before the end of a trajectory")
            nxt = steps[k + 1][0]
            if b.observed(c.node) or not nxt.observed(c.node):
                raise ContractViolation(f"step {k} does not reveal node {c.node}")
            for n, (u, v) in enumerate(zip(b.values, nxt.values)):
                if n != c.node and u != v:
                    raise ContractViolation(f"step {k} changes node {n} without clicking it")

    def __len__(self):
        return len(self.steps)

    @property
    def clicks(self) -> list[int]:
        return [c.node for _, c in self.steps if not c.is_terminate]

    @property
    def final_belief(self) -> Belief:
        return self.steps[-1][0]

    def total_return(self, env: EnvironmentSpec) -> float:
        return termination_reward(env, self.final_belief) - env.click_cost * len(self.clicks)


@dataclass
class DemonstrationSet:
    env_kind: str
    trajectories: list
    seed: int | None = None
    pairs: list = field(init=False)
    trajectory_id: np.ndarray = field(init=False)
    step_index: np.ndarray = field(init=False)

    def __post_init__(self):
        self.pairs, tid, sid = [], [], []
        for i, t in enumerate(self.trajectories):
            for k, pair in enumerate(t.steps):
                self.pairs.append(pair)
                tid.append(i)
                sid.append(k)
        self.trajectory_id = np.asarray(tid, dtype=np.int64)
        self.step_index = np.asarray(sid, dtype=np.int64)

    def __len__(self):
        return len(self.pairs)

    @property
    def x(self) -> int:
        return len(self.trajectories)

    @property
    def is_click(self) -> np.ndarray:
        return np.array([not c.is_terminate for _, c in self.pairs], dtype=bool)

    def subset(self, idx) -> list:
        return [self.pairs[i] for i in idx]


@dataclass
class NegativeSet:
    pairs: list
    source: np.ndarray  # index of the demonstrated pair each negative comes from

    def __len__(self):
        return len(self.pairs)

    def restrict(self, demo_indices) -> list:
        keep = np.isin(self.source, np.asarray(list(demo_indices), dtype=np.int64))
        return [p for p, k in zip(self.pairs, keep) if k]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def sample_trajectory(env: EnvironmentSpec, policy, seed) -> Trajectory:
    """One episode of ``policy``; ground truth is drawn once from ``seed``."""
    _, _, steps = run_batch(env, policy, 1, _rng(seed), record=True)
    return Trajectory(tuple(steps[0]))


def generate_demonstrations(env: EnvironmentSpec, table: ValueTable, x: int, seed: int,
                            tie_epsilon: float = DEFAULT_TIE_EPSILON) -> DemonstrationSet:
    """``x`` trajectories of the expert (uniform over optimal computations)."""
    if x < 1:
        raise ValueError("need at least one demonstration")
    pol = expert_policy(table, tie_epsilon)
    trajs = [sample_trajectory(env, pol, np.random.SeedSequence(seed, spawn_key=(i,)))
             for i in range(x)]
    return DemonstrationSet(env.kind, trajs, seed)


def negative_examples(demos: DemonstrationSet, table: ValueTable,
                      tie_epsilon: float = DEFAULT_TIE_EPSILON) -> NegativeSet:
    """Every strictly sub-optimal click at every demonstrated belief.

    Terminate steps contribute their sub-optimal clicks too. A belief that
    occurs in several pairs yields its negatives once per pair.
    """
    if demos.env_kind != table.env.kind:
        raise ContractViolation("value table and demonstrations are for different environments")
    env = table.env
    if not demos.pairs:
        return NegativeSet([], np.zeros(0, np.int64))
    batch = BeliefBatch.from_beliefs(env, [b for b, _ in demos.pairs])
    q, q_term = table.batch_node_q(batch.vals, batch.obs)
    top = np.maximum(q.max(axis=1), q_term)
    bad = batch.available & (q < (top - tie_epsilon)[:, None])
    pairs, source = [], []
    for i, (b, _) in enumerate(demos.pairs):
        for n in np.flatnonzero(bad[i]):
            pairs.append((b, Computation(int(n))))
            source.append(i)
    return NegativeSet(pairs, np.asarray(source, dtype=np.int64))


def estimate_mean_return(env: EnvironmentSpec, policy, L: int, seed: int,
                         chunk: int = 10_000) -> tuple[float, float]:
    """Mean return of ``L`` episodes and its standard error."""
    if L < 1:
        raise ValueError("need at least one rollout")
    rets, _ = rollout_returns(env, policy, L, seed, chunk)
    se = float(rets.std(ddof=1) / np.sqrt(L)) if L > 1 else 0.0
    return float(rets.mean()), se


# --------------------------------------------------------------------------
# files


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_demonstrations(demos: DemonstrationSet, path) -> None:
    with open(path, "w") as fh:
        fh.write(_dump({"env_kind": demos.env_kind, "x": demos.x, "seed": demos.seed,
                        "format_version": FORMAT_VERSION}) + "\n")
        for (b, c), i, k in zip(demos.pairs, demos.trajectory_id, demos.step_index):
            fh.write(_dump({"trajectory_id": int(i), "step_index": int(k),
                            "belief": b.to_list(), "action": c.to_json()}) + "\n")


def read_demonstrations(path) -> DemonstrationSet:
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path} is empty")
    head = json.loads(lines[0])
    if head.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported demonstration format {head.get('format_version')!r}")
    steps: dict[int, list] = {}
    for ln in lines[1:]:
        rec = json.loads(ln)
        steps.setdefault(rec["trajectory_id"], []).append(rec)
    trajs = []
    for tid in sorted(steps):
        recs = sorted(steps[tid], key=lambda r: r["step_index"])
        out, last = [], None
        for r in recs:
            c = Computation.from_json(r["action"])
            out.append((Belief.from_list(r["belief"], last), c))
            last = c.node
        trajs.append(Trajectory(tuple(out)))
    if len(trajs) != head["x"]:
        raise ValueError(f"header announces {head['x']} trajectories, file has {len(trajs)}")
    return DemonstrationSet(head["env_kind"], trajs, head.get("seed"))


def pairs_from_trajectories(trajectories: Sequence[Trajectory]) -> list:
    return [p for t in trajectories for p in t.steps]
