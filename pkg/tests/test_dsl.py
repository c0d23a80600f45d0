import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategy_discovery.batch import BeliefBatch
from strategy_discovery.dsl import (
    AMONG,
    BASE,
    GENERAL,
    AllWith,
    Among,
    AmongWith,
    BasePred,
    EvalContext,
    GeneralPred,
    GrammarConfig,
    Not,
    default_grammar,
    english,
    enumerate_predicates,
    evaluate,
    featurize,
    parse,
)
from strategy_discovery.env import TERMINATE, Belief, Click, build_environment

INC = build_environment("increasing")
UNOBS = Not(BasePred("is_observed"))


def b0():
    return INC.initial_belief()


def test_vocabulary_sizes():
    g = default_grammar()
    assert (len(g.base), len(g.general), len(g.among)) == (14, 15, 12)
    assert set(g.base) <= set(BASE) and set(g.general) <= set(GENERAL) and set(g.among) <= set(AMONG)


def test_enumeration_size_and_order(predicates):
    # 14 + 15 + 378 conjunctions x (1 + 12 + 12)
    assert len(predicates) == 9829
    assert isinstance(predicates[0], BasePred)
    assert isinstance(predicates[14], GeneralPred)
    assert isinstance(predicates[29], Among)
    assert isinstance(predicates[-1], AllWith)


def test_parse_inverts_str(predicates):
    for p in predicates:
        assert parse(str(p)) == p


def test_grammar_validation():
    g = default_grammar()
    with pytest.raises(ValueError):
        enumerate_predicates(GrammarConfig(g.base + (g.base[0],), g.general, g.among))
    with pytest.raises(ValueError):
        enumerate_predicates(GrammarConfig(("nope",), g.general, g.among))
    with pytest.raises(ValueError):
        enumerate_predicates(GrammarConfig((), g.general, g.among))


def test_fingerprint_tracks_config():
    g = default_grammar()
    assert g.fingerprint() == default_grammar().fingerprint()
    assert GrammarConfig(g.base, g.general, g.among, width=1).fingerprint() != g.fingerprint()


def test_width_one_grammar_is_smaller():
    g = default_grammar()
    small = enumerate_predicates(GrammarConfig(g.base, g.general, g.among, width=1))
    assert len(small) == 14 + 15 + 28 * 25


def test_deepest_unobserved_at_start():
    p = AmongWith((UNOBS,), "has_largest_depth")
    for n in INC.tree.reward_nodes:
        assert evaluate(p, INC, b0(), Click(n)) == (INC.tree.level[n] == 3)


def test_deepest_unobserved_moves_up_when_leaves_done():
    b = b0()
    for leaf in (7, 8, 9, 10, 11, 12):
        b = b.with_observation(leaf, -24)
    p = AmongWith((UNOBS,), "has_largest_depth")
    assert [evaluate(p, INC, b, Click(n)) for n in (1, 4, 5, 6)] == [False, True, True, True]


def test_previous_observed_max():
    p = GeneralPred("is_previous_observed_max")
    b = b0().with_observation(7, 48)
    assert evaluate(p, INC, b, Click(8))
    assert not evaluate(p, INC, b.with_observation(9, 24), Click(8))
    assert not evaluate(p, INC, b0(), Click(8))


def test_unobserved_level_one():
    p = Among((UNOBS, BasePred("has_smallest_depth")))
    b = b0().with_observation(2, 4)
    assert [evaluate(p, INC, b, Click(n)) for n in (1, 2, 3, 4)] == [True, False, True, False]


def test_all_with_empty_set_is_true():
    b = b0()
    for n in INC.tree.reward_nodes:
        b = b.with_observation(n, INC.node_support(n)[0])
    p = AllWith((UNOBS,), "has_largest_depth")
    batch = BeliefBatch.from_beliefs(INC, [b])
    assert p.mask(EvalContext(batch))[0, 1:].all()


def test_evaluate_rejects_terminate():
    with pytest.raises(ValueError):
        evaluate(BasePred("is_observed"), INC, b0(), TERMINATE)


@st.composite
def beliefs(draw):
    vals = [None] + [draw(st.sampled_from((None,) + INC.node_support(n))) for n in INC.tree.reward_nodes]
    obs = [n for n in INC.tree.reward_nodes if vals[n] is not None]
    last = draw(st.sampled_from(obs)) if obs else None
    return Belief(tuple(vals), last)


@settings(max_examples=30, deadline=None)
@given(st.lists(beliefs(), min_size=1, max_size=6))
def test_among_with_implies_membership(bs):
    batch = BeliefBatch.from_beliefs(INC, bs)
    ctx = EvalContext(batch)
    for conj in [(UNOBS,), (UNOBS, BasePred("has_largest_depth")), (BasePred("is_on_best_expected_path"),)]:
        members = Among(conj).mask(ctx)
        for a in AMONG:
            assert not (AmongWith(conj, a).mask(ctx) & ~members).any()


@settings(max_examples=20, deadline=None)
@given(st.lists(beliefs(), min_size=2, max_size=6), st.randoms())
def test_featurize_commutes_with_row_permutation(bs, rnd):
    ps = enumerate_predicates()
    pairs = [(b, Click(next(n for n in INC.tree.reward_nodes if b.values[n] is None)))
             for b in bs if b.n_observed < 12]
    if not pairs:
        return
    sub = [ps[i] for i in range(0, len(ps), 97)]
    perm = list(range(len(pairs)))
    rnd.shuffle(perm)
    a = featurize(INC, pairs, sub).rows
    b = featurize(INC, [pairs[i] for i in perm], sub).rows
    assert np.array_equal(a[perm], b)


def test_featurize_rejects_terminate(predicates):
    with pytest.raises(ValueError):
        featurize(INC, [(b0(), TERMINATE)], predicates)


def test_english_templates():
    assert english(AmongWith((UNOBS,), "has_largest_depth"), INC) == \
        "Is it on the highest level among unobserved nodes?"
    assert english(GeneralPred("is_previous_observed_max"), INC) == \
        "Was the previously observed value a 48?"
    assert english(UNOBS) == "Is it unobserved?"
    assert english(Among((UNOBS, BasePred("has_smallest_depth"))), INC) == \
        "Is it an unobserved level-1 node?"


def test_english_uses_environment_constants():
    const = build_environment("constant")
    assert "10" in english(GeneralPred("is_previous_observed_max"), const)


def test_every_predicate_has_english(predicates):
    for p in predicates[::41]:
        assert english(p, INC).strip()
