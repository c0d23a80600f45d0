import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategy_discovery.demos import Trajectory, sample_trajectory
from strategy_discovery.env import build_environment
from strategy_discovery.flowchart import (
    CLICK,
    DONT,
    agreement_ratio,
    check_tree_matches,
    click_agreement,
    formula_to_tree,
    reference_policy,
    render,
)
from strategy_discovery.lpp import FALSE, TRUE, Formula, Literal, formula_from_names
from strategy_discovery.pipeline import Candidate, select_tree

DEC = build_environment("decreasing")


def F(*conjs):
    return Formula(tuple(tuple(Literal(abs(i) - 1, i < 0) for i in c) for c in conjs))


def test_shared_prefix_tree():
    # f1 or (not f1 and f2): ask f1, else ask f2
    t = formula_to_tree(F([1], [-1, 2]))
    assert (t.node_count, t.depth) == (2, 2)
    assert t.root.predicate == 0 and t.root.yes.click and t.root.no.predicate == 1


def test_constant_formulas():
    assert formula_to_tree(TRUE).node_count == 0 and formula_to_tree(TRUE).root.click
    assert formula_to_tree(FALSE).node_count == 0 and not formula_to_tree(FALSE).root.click


@st.composite
def formulas(draw):
    k = draw(st.integers(1, 12))
    lit = st.integers(1, k).flatmap(lambda i: st.sampled_from((i, -i)))
    conjs = draw(st.lists(st.lists(lit, min_size=1, max_size=4), max_size=4))
    return k, F(*conjs)


@settings(max_examples=80, deadline=None)
@given(formulas())
def test_tree_equivalent_to_formula(kf):
    k, f = kf
    tree = formula_to_tree(f)
    assert check_tree_matches(tree, f, k)
    # no question repeats on a path
    def paths(n, seen):
        if n.is_terminal:
            return True
        return n.predicate not in seen and paths(n.yes, seen | {n.predicate}) and \
            paths(n.no, seen | {n.predicate})
    assert paths(tree.root, frozenset())


def test_render_ascii_and_dot(predicates):
    f = formula_from_names([["among(not(is_observed) and has_smallest_depth)"]], predicates)
    tree = formula_to_tree(f)
    text = render(tree, predicates, DEC, "ascii")
    assert text.splitlines() == ["Is it an unobserved level-1 node?",
                                 f"  [yes] {CLICK}", f"  [no] {DONT}"]
    dot = render(tree, predicates, DEC, "dot")
    lines = dot.splitlines()
    assert lines[0] == "digraph flowchart {" and lines[-1] == "}"
    assert sum("->" in ln for ln in lines) == 2 * tree.node_count
    assert sum("shape=" in ln for ln in lines) == 2 * tree.node_count + 1
    assert render(tree, predicates, DEC, "dot") == dot
    with pytest.raises(ValueError):
        render(tree, predicates, DEC, "svg")


def test_select_tree():
    big = F([1, 2, 3], [-1, 4, 5])          # 5 questions
    deep = F([1, 2, 3])                      # 3 questions, depth 3
    shallow = F([1, 2], [-1, 3])             # 3 questions, depth 2
    cands = [Candidate(n, f, formula_to_tree(f), 0.9, None)
             for n, f in ((5, big), (6, deep), (7, shallow))]
    assert [c.tree.node_count for c in cands] == [5, 3, 3]
    assert select_tree(cands).N == 7
    with pytest.raises(ValueError):
        select_tree([])


def test_reference_policy_errors():
    with pytest.raises(ValueError):
        reference_policy("different")
    assert reference_policy("Increasing") is reference_policy("increasing")


def test_agreement_arithmetic():
    assert agreement_ratio(3, 1, 4, 4.0) == 0.75
    assert agreement_ratio(2, 1, 3, 5.0) == pytest.approx(2 / 5)
    assert agreement_ratio(0, 0, 0, 0.0) == 1.0
    assert agreement_ratio(0, 0, 0, 2.0) == 0.0
    assert agreement_ratio(4, 0, 4, 2.0) == 1.0


def test_click_agreement_on_reference_trajectory(predicates):
    f = formula_from_names([["among(not(is_observed) and has_smallest_depth)"]], predicates)
    t = sample_trajectory(DEC, reference_policy("decreasing"), 0)
    assert sorted(t.clicks) == [1, 2, 3]
    assert click_agreement(t, f, predicates, DEC, simulations=200) == 1.0
    empty = Trajectory(((DEC.initial_belief(), t.steps[-1][1]),))
    assert click_agreement(empty, f, predicates, DEC, expected_clicks=3.0) == 0.0
