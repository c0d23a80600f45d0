from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from strategy_discovery.clustering import (
    ClusterEvaluator,
    elbow_candidates,
    l1_distances,
    pick_elbows,
    split_indices,
    upgma,
    upgma_cut,
)
from strategy_discovery.demos import generate_demonstrations, negative_examples
from strategy_discovery.features import FeatureSpace


def naive_upgma(X):
    """Textbook average linkage with exact averages and lexicographic ties."""
    X = np.asarray(X, dtype=int)
    clusters = [[i] for i in range(len(X))]
    trace = []
    while len(clusters) > 1:
        best = None
        for A, B in combinations(sorted(clusters), 2):
            d = Fraction(sum(int(np.abs(X[a] - X[b]).sum()) for a in A for b in B), len(A) * len(B))
            if best is None or d < best[0]:
                best = (d, A, B)
        d, A, B = best
        trace.append((A[0], B[0], d))
        clusters.remove(A)
        clusters.remove(B)
        clusters.append(sorted(A + B))
    return trace


def test_three_vector_example():
    link = upgma([[0, 0, 0], [0, 0, 1], [1, 1, 1]])
    assert [(m.a, m.b) for m in link.trace] == [(0, 1), (0, 2)]
    assert [m.height for m in link.trace] == [1.0, 2.5]
    assert [c.tolist() for c in link.cut(2)] == [[0, 1], [2]]


def test_tie_goes_to_smallest_pair():
    # all three pairs at distance 2
    link = upgma([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert (link.trace[0].a, link.trace[0].b) == (0, 1)


def test_distances_exact():
    X = np.array([[1, 0, 1], [0, 0, 1], [1, 1, 0]], bool)
    assert l1_distances(X).tolist() == [[0, 1, 2], [1, 0, 3], [2, 3, 0]]


def test_bad_inputs():
    with pytest.raises(ValueError):
        upgma(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        upgma([[0]]).cut(2)


vectors = st.integers(1, 8).flatmap(
    lambda n: hnp.arrays(bool, st.tuples(st.just(n), st.integers(1, 5))))


@settings(max_examples=80, deadline=None)
@given(vectors)
def test_matches_naive_upgma(X):
    got = [(m.a, m.b, Fraction(m.height).limit_denominator(1000)) for m in upgma(X).trace]
    assert got == naive_upgma(X)


@settings(max_examples=60, deadline=None)
@given(vectors)
def test_cuts_nest_and_heights_monotone(X):
    link = upgma(X)
    h = [m.height for m in link.trace]
    assert all(a <= b + 1e-12 for a, b in zip(h, h[1:]))
    n = len(X)
    for N in range(1, n):
        fine = {tuple(c) for c in link.cut(N + 1)}
        coarse = [set(c) for c in link.cut(N)]
        assert len(coarse) == N
        assert all(any(set(f) <= c for c in coarse) for f in fine)
        assert sorted(i for c in coarse for i in c) == list(range(n))
    assert upgma_cut(X, n).clusters == [np.array([i]) for i in range(n)] or n == 0


def test_split_indices():
    rng = np.random.default_rng(0)
    tr, va = split_indices([4, 5], 0.7, rng)
    assert tr.tolist() == [4, 5] and len(va) == 0
    tr, va = split_indices(range(10), 0.7, rng)
    assert (len(tr), len(va)) == (7, 3) and sorted(tr.tolist() + va.tolist()) == list(range(10))
    tr, va = split_indices(range(3), 0.99, rng)
    assert (len(tr), len(va)) == (2, 1)


def test_pick_elbows():
    r = pick_elbows([10, 20, 30, 40], [0.1, 0.5, 0.55, 0.9], 2)
    assert r.candidates == [20, 40] and not r.no_elbow
    # equal jumps: smaller N first
    assert pick_elbows([1, 2, 3], [0.0, 0.5, 1.0], 1).candidates == [2]
    flat = pick_elbows([2, 3, 4], [0.5, 0.4, 0.4], 2)
    assert flat.no_elbow and len(flat.candidates) == 2
    assert flat.table().splitlines()[0] == "N\tCV"
    for args in (([2], [0.1], 1), ([3, 2], [0, 1], 1), ([2, 3], [0, 1], 0)):
        with pytest.raises(ValueError):
            pick_elbows(*args)


@pytest.fixture(scope="module")
def evaluator(tables, predicates):
    t = tables("decreasing")
    d = generate_demonstrations(t.env, t, 8, 3)
    space = FeatureSpace(t.env, d, negative_examples(d, t), predicates)
    return ClusterEvaluator(space, max_depth=3, split=0.7, seed=0)


def test_partition_covers_all_pairs(evaluator):
    n = evaluator.space.n_pairs
    for N in (1, 2, 5):
        parts = evaluator.partition(N)
        assert sorted(np.concatenate(parts).tolist()) == list(range(n))


def test_clustering_value_bounds(evaluator):
    for N in (1, 2, 4, 8):
        cv = [evaluator.clustering_value(N, X) for X in (0.0, 0.025, 0.2, 0.5)]
        assert all(0 <= v <= 1 + 1e-12 for v in cv)
        assert all(a >= b - 1e-12 for a, b in zip(cv, cv[1:]))
        assert evaluator.clustering_value(N, 1.0) <= cv[0]
    assert evaluator.clustering_value(2, 1.0) == 0.0
    with pytest.raises(ValueError):
        evaluator.clustering_value(2, 1.5)


def test_cluster_value_cached_and_deterministic(evaluator):
    c = evaluator.partition(3)[0]
    assert evaluator.value(c) is evaluator.value(c)
    fresh = ClusterEvaluator(evaluator.space, 3, 0.7, 0)
    assert fresh.value(c).V == evaluator.value(c).V


def test_elbow_candidates(evaluator):
    r = elbow_candidates(evaluator, grid=range(2, 8), K=2)
    assert len(r.candidates) == 2 and set(r.candidates) <= set(range(3, 8))
