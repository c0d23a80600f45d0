"""Predicate values of a demonstration set, computed once and shared.

Every predicate is evaluated on every distinct demonstrated belief, giving
``tensor[belief, predicate, node]``. Feature rows of positive pairs,
negative pairs and validation likelihoods are all slices of that tensor.
"""
from __future__ import annotations

import numpy as np

from .batch import TERMINATE_ACTION, BeliefBatch
from .demos import DemonstrationSet, NegativeSet
from .dsl import EvalContext, PredicateSet
from .env import EnvironmentSpec
from .lpp import LPPResult, Formula, acceptance_from_tensor, log_likelihood_from_tensor, lpp_from_features


class FeatureSpace:
    def __init__(self, env: EnvironmentSpec, demos: DemonstrationSet, negatives: NegativeSet,
                 predicate_set: PredicateSet):
        self.env = env
        self.demos = demos
        self.predicate_set = predicate_set
        keys: dict = {}
        beliefs = []
        rows = np.empty(len(demos.pairs), dtype=np.int64)
        for i, (b, _) in enumerate(demos.pairs):
            k = (b.values, b.last)
            if k not in keys:
                keys[k] = len(beliefs)
                beliefs.append(b)
            rows[i] = keys[k]
        self.batch = BeliefBatch.from_beliefs(env, beliefs)
        ctx = EvalContext(self.batch)
        P, n = len(predicate_set), env.tree.node_count
        self.tensor = np.zeros((len(beliefs), P, n), dtype=bool)
        for j, p in enumerate(predicate_set):
            self.tensor[:, j, :] = p.mask(ctx)
        self.available = self.batch.available
        self.pair_row = rows
        self.pair_node = np.array([TERMINATE_ACTION if c.is_terminate else c.node
                                   for _, c in demos.pairs], dtype=np.int64)
        self.is_click = self.pair_node != TERMINATE_ACTION
        self.click_index = np.flatnonzero(self.is_click)
        # positives: one row per demonstrated pair (zeros for terminate steps)
        self.X_pair = np.zeros((len(demos.pairs), P), dtype=bool)
        ci = self.click_index
        self.X_pair[ci] = self.tensor[rows[ci], :, self.pair_node[ci]]
        self.neg_source = np.asarray(negatives.source, dtype=np.int64)
        self.neg_node = np.array([c.node for _, c in negatives.pairs], dtype=np.int64)
        if len(self.neg_source):
            self.X_neg = self.tensor[rows[self.neg_source], :, self.neg_node]
        else:
            self.X_neg = np.zeros((0, P), dtype=bool)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_row)

    def click_vectors(self) -> np.ndarray:
        return self.X_pair[self.click_index]

    def training_rows(self, idx):
        """Positive and negative feature rows sourced from pairs ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        pos = self.X_pair[idx[self.is_click[idx]]]
        neg = self.X_neg[np.isin(self.neg_source, idx)]
        return pos, neg

    def log_likelihood(self, formula: Formula, idx) -> float:
        idx = np.asarray(idx, dtype=np.int64)
        return log_likelihood_from_tensor(formula, self.tensor, self.available,
                                          self.pair_row[idx], self.pair_node[idx])

    def acceptance(self, formula: Formula, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        rows = self.pair_row[idx]
        return acceptance_from_tensor(formula, self.tensor[rows], self.available[rows])

    def lpp(self, train_idx, val_idx, max_depth: int, lam: float = 1.0) -> LPPResult | None:
        pos, neg = self.training_rows(train_idx)
        if len(pos) == 0:
            return None
        val_idx = np.asarray(val_idx, dtype=np.int64)
        return lpp_from_features(pos, neg, self.tensor, self.available, self.pair_row[val_idx],
                                 self.pair_node[val_idx], max_depth, lam)
