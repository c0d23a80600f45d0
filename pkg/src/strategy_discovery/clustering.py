"""UPGMA clustering of demonstrations and cluster-quality heuristics.

Click pairs are clustered on their predicate vectors with average linkage
over l1 distances. Terminate steps carry no click to featurize; each one is
attached to the cluster holding the previous click of its trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .features import FeatureSpace


@dataclass(frozen=True)
class Merge:
    a: int          # cluster ids (smallest member index) being merged
    b: int
    height: float   # average l1 distance between the two


@dataclass
class Linkage:
    n: int
    trace: list

    def cut(self, N: int) -> list[np.ndarray]:
        """Clusters after merging down to ``N``, ordered by smallest member."""
        if not 1 <= N <= self.n:
            raise ValueError(f"cluster count must be in [1, {self.n}], got {N}")
        label = np.arange(self.n)
        for m in self.trace[: self.n - N]:
            label[label == m.b] = m.a
        return [np.flatnonzero(label == c) for c in np.unique(label)]


@dataclass
class ClusterPartition:
    clusters: list      # index arrays into the clustered items
    N: int
    linkage_trace: list = field(default_factory=list)


def l1_distances(vectors) -> np.ndarray:
    """Pairwise l1 distances of 0/1 vectors as exact integers."""
    X = np.asarray(vectors, dtype=np.float64)
    d = X @ (1 - X).T
    return np.rint(d + d.T).astype(np.int64)


def upgma(vectors) -> Linkage:
    """Average-linkage agglomeration; ties merge the lexicographically smallest pair.

    A cluster is named by its smallest member, so "smallest pair" compares
    ``(min(A), min(B))``. Average distances are compared exactly.
    """
    X = np.asarray(vectors)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need at least one vector")
    n = X.shape[0]
    S = l1_distances(X)            # sum of member distances between clusters
    size = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    trace = []
    iu = np.triu_indices(n, 1)
    for _ in range(n - 1):
        avg = S / np.outer(size, size)
        ok = active[iu[0]] & active[iu[1]]
        vals = np.where(ok, avg[iu], np.inf)
        low = vals.min()
        near = np.flatnonzero(vals <= low + 1e-9 * max(1.0, low))
        best = None
        for k in near:  # triu order is already lexicographic
            i, j = int(iu[0][k]), int(iu[1][k])
            v = Fraction(int(S[i, j]), int(size[i] * size[j]))
            if best is None or v < best[0]:
                best = (v, i, j)
        v, i, j = best
        trace.append(Merge(i, j, float(v)))
        S[i, :] += S[j, :]
        S[:, i] += S[:, j]
        S[i, i] = 0
        size[i] += size[j]
        active[j] = False
        S[j, :] = 0
        S[:, j] = 0
    return Linkage(n, trace)


def upgma_cut(vectors, N: int) -> ClusterPartition:
    link = upgma(vectors)
    return ClusterPartition(link.cut(N), N, link.trace)


# --------------------------------------------------------------------------
# demonstration clusters


def attach_terminations(space: FeatureSpace, click_clusters: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Map clusters of click rows to clusters of demonstration pairs.

    A terminate pair joins the cluster of its trajectory's previous click, or
    the largest cluster (first on ties) when the trajectory has no click.
    """
    demos = space.demos
    owner = np.full(space.n_pairs, -1, dtype=np.int64)
    for c, rows in enumerate(click_clusters):
        owner[space.click_index[rows]] = c
    sizes = [len(r) for r in click_clusters]
    largest = int(np.argmax(sizes))
    for i in np.flatnonzero(~space.is_click):
        k = demos.step_index[i]
        owner[i] = owner[i - 1] if k > 0 else largest
    return [np.flatnonzero(owner == c) for c in range(len(click_clusters))]


def split_indices(idx, split: float, rng: np.random.Generator):
    """Random ``split`` / ``1 - split`` partition; tiny groups go to training."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) <= 2:
        return idx, idx[:0]
    perm = rng.permutation(idx)
    k = min(max(int(round(split * len(idx))), 1), len(idx) - 1)
    return np.sort(perm[:k]), np.sort(perm[k:])


@dataclass(frozen=True)
class ClusterValue:
    index: int
    V: float
    likelihood: float = 0.0
    formula: object = None


def heuristic_value(space: FeatureSpace, members, max_depth: int, split: float,
                    rng: np.random.Generator, lam: float = 1.0, index: int = 0,
                    likelihood: str = "geometric") -> ClusterValue:
    """Likelihood of the cluster's MAP formula times its share of the data.

    The cluster is split into train/validation; a tree of each depth up to
    ``max_depth`` is induced and the best-scoring formula kept. Its
    per-pair geometric-mean validation likelihood (or the raw product with
    ``likelihood="product"``) is the probability factor; failure gives 0.
    """
    members = np.asarray(members, dtype=np.int64)
    if len(members) == 0:
        raise ValueError("empty cluster")
    train, val = split_indices(members, split, rng)
    best = None
    for depth in range(1, max_depth + 1):
        r = space.lpp(train, val, depth, lam)
        if r is not None and (best is None or r.score > best.score):
            best = r
    if best is None:
        return ClusterValue(index, 0.0)
    if likelihood == "geometric":
        p = best.mean_likelihood
    elif likelihood == "product":
        p = math.exp(best.log_likelihood)
    else:
        raise ValueError(f"unknown likelihood mode {likelihood!r}")
    return ClusterValue(index, p * len(members) / space.n_pairs, p, best.formula)


class ClusterEvaluator:
    """Cluster values over a single linkage, cached across cuts.

    Within one hierarchy a cluster is identified by (smallest member, size);
    its train/validation split is drawn from a stream keyed on that pair, so
    a cluster gets the same value in every cut it appears in.
    """

    def __init__(self, space: FeatureSpace, max_depth: int, split: float, seed: int,
                 lam: float = 1.0, likelihood: str = "geometric"):
        self.space = space
        self.max_depth, self.split, self.seed = max_depth, split, seed
        self.lam, self.likelihood = lam, likelihood
        self.linkage = upgma(space.click_vectors())
        self._cache: dict = {}

    def partition(self, N: int) -> list[np.ndarray]:
        N = min(N, self.linkage.n)
        return attach_terminations(self.space, self.linkage.cut(N))

    def value(self, members) -> ClusterValue:
        members = np.asarray(members, dtype=np.int64)
        key = (int(members.min()), len(members))
        if key not in self._cache:
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))
            self._cache[key] = heuristic_value(self.space, members, self.max_depth, self.split,
                                               rng, self.lam, likelihood=self.likelihood)
        return self._cache[key]

    def clustering_value(self, N: int, X: float) -> float:
        if not 0 <= X <= 1:
            raise ValueError("cut size must lie in [0, 1]")
        total = 0.0
        for c in self.partition(N):
            if len(c) / self.space.n_pairs >= X:
                total += self.value(c).V
        return total


def clustering_value(space: FeatureSpace, N: int, X: float, max_depth: int = 5,
                     split: float = 0.7, seed: int = 0) -> float:
    return ClusterEvaluator(space, max_depth, split, seed).clustering_value(N, X)


@dataclass
class ElbowResult:
    candidates: list
    grid: list
    values: list
    no_elbow: bool

    def table(self) -> str:
        """Two-column ``N<TAB>CV`` table for plotting."""
        return "N\tCV\n" + "".join(f"{n}\t{v:.6f}\n" for n, v in zip(self.grid, self.values))


def pick_elbows(grid: Sequence[int], values: Sequence[float], K: int) -> ElbowResult:
    """The ``K`` grid points with the largest increase over their predecessor."""
    grid, values = list(grid), list(values)
    if len(grid) < 2 or len(grid) != len(values):
        raise ValueError("need at least two grid points with one value each")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be increasing")
    if K < 1:
        raise ValueError("K must be at least 1")
    jumps = [(values[i] - values[i - 1], grid[i]) for i in range(1, len(grid))]
    no_elbow = max(j for j, _ in jumps) <= 1e-12
    order = sorted(jumps, key=lambda t: (-round(t[0], 12), t[1]))
    return ElbowResult([n for _, n in order[:K]], grid, values, no_elbow)


def elbow_candidates(evaluator: ClusterEvaluator, grid: Sequence[int] = tuple(range(2, 31)),
                     X: float = 0.025, K: int = 4) -> ElbowResult:
    grid = [n for n in grid if n <= evaluator.linkage.n] or [1]
    if len(grid) < 2:
        raise ValueError("grid shorter than 2 after clipping to the number of pairs")
    values = [evaluator.clustering_value(n, X) for n in grid]
    return pick_elbows(grid, values, K)
