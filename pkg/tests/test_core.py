import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fsmdp.core import (
    Basis,
    BasisFunction,
    FactoredSpace,
    WeightMatrix,
    all_states,
    counting_factor,
    enumerate_assignments,
    eval_value,
    factor_array,
    make_scope,
    project,
    rank,
    rank_rows,
    unrank,
)
from fsmdp.errors import ConfigError, ScaleError

cards_st = st.lists(st.integers(2, 4), min_size=1, max_size=5)


def test_enumerate_assignments_examples():
    sp = FactoredSpace((2, 3, 2))
    assert enumerate_assignments((), sp) == [()]
    assert enumerate_assignments((0, 2), sp) == [(0, 0), (1, 0), (0, 1), (1, 1)]
    assert len(enumerate_assignments((1,), sp)) == 3


def test_project_examples():
    assert project((1, 0, 1), (0, 2)) == (1, 1)
    assert project((1, 0, 1), (0, 1, 2)) == (1, 0, 1)
    assert project((1, 0, 1), ()) == ()


def test_counting_factor_examples():
    assert counting_factor(FactoredSpace((2, 2, 2)), (0,)) == 4
    assert counting_factor(FactoredSpace((2, 2, 2)), (0, 1, 2)) == 1
    assert counting_factor(FactoredSpace((2, 3, 2, 2)), (1,)) == 8


def test_scope_validation():
    with pytest.raises(ConfigError):
        make_scope((0, 0), 3)
    with pytest.raises(ConfigError):
        make_scope((3,), 3)
    assert make_scope((2, 0), 3) == (0, 2)


def test_space_validation_and_scale():
    with pytest.raises(ConfigError):
        FactoredSpace((1, 2))
    with pytest.raises(ConfigError):
        FactoredSpace(())
    with pytest.raises(ScaleError):
        all_states(FactoredSpace((2,) * 15))


@given(cards_st, st.data())
def test_rank_unrank_roundtrip(cards, data):
    r = data.draw(st.integers(0, math.prod(cards) - 1))
    assert rank(unrank(r, cards), cards) == r


@given(cards_st)
def test_all_states_in_rank_order(cards):
    sp = FactoredSpace(tuple(cards))
    states = all_states(sp)
    ranks = rank_rows(states, tuple(range(sp.m)), sp)
    assert np.array_equal(ranks, np.arange(states.shape[0]))
    assert all(rank(s, cards) == i for i, s in enumerate(states[:20]))


@given(cards_st, st.data())
def test_factor_array_matches_rank(cards, data):
    sp = FactoredSpace(tuple(cards))
    scope = tuple(sorted(data.draw(st.sets(st.integers(0, sp.m - 1), max_size=sp.m))))
    size = math.prod(sp.cards[i] for i in scope)
    flat = np.arange(size, dtype=float)
    arr = factor_array(flat, sp, scope)
    full = np.broadcast_to(arr, sp.cards)
    for s in all_states(sp)[:50]:
        assert full[tuple(s)] == flat[rank(project(s, scope), [sp.cards[i] for i in scope])]


def test_basis_rules():
    h = BasisFunction((0,), (0,), [0.0, 2.0])
    with pytest.raises(ConfigError):
        Basis((h,), 2.0)
    with pytest.raises(ConfigError):
        Basis.with_constant([h], 1.0)
    with pytest.raises(ConfigError):
        Basis.with_constant([BasisFunction((0,), (0,), [1.0, 2.0, 3.0])], 5.0).validate(FactoredSpace((2,)))
    assert Basis.with_constant([h], 2.0).phi == 2


def test_weight_matrix_terminal_row():
    with pytest.raises(ConfigError):
        WeightMatrix(np.ones((3, 2)))
    w = WeightMatrix.from_steps(np.array([[3.0, -1.0], [1.0, 2.0]]), W=3.0)
    assert w.tau == 2 and w.phi == 2
    assert np.allclose(w.norms(), [4.0, 3.0])
    assert not w.within_bound()


def test_eval_value_examples():
    sp = FactoredSpace((2, 2, 2))
    rng = np.random.default_rng(0)
    fns = [BasisFunction((0, 2), (0, 2), rng.normal(size=4)), BasisFunction((1,), (1,), rng.normal(size=2))]
    basis = Basis.with_constant(fns, 10.0)
    zero = WeightMatrix.zeros(2, 3)
    const = WeightMatrix.from_steps(np.array([[3.0, 0, 0], [0, 0, 0]]))
    w = WeightMatrix.from_steps(rng.normal(size=(2, 3)))
    for s in all_states(sp):
        assert eval_value(zero, 1, s, basis, sp) == 0.0
        assert eval_value(const, 1, s, basis, sp) == 3.0
        assert eval_value(w, 3, s, basis, sp) == 0.0
        direct = w.w[0, 0] + w.w[0, 1] * fns[0].table[s[0] + 2 * s[2]] + w.w[0, 2] * fns[1].table[s[1]]
        assert eval_value(w, 1, s, basis, sp) == pytest.approx(direct, abs=1e-12)
