import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fsmdp.core import Basis, FactoredSpace, WeightMatrix, all_states
from fsmdp.elimination import (
    EliminationOrder,
    batched_bracket_max,
    build_cost_network,
    default_order,
    generate_constraints,
    induced_width,
    min_degree_order,
)
from fsmdp.errors import ConfigError
from fsmdp.estimation import ModelStructure
from fsmdp.optimism import OptimisticTables
from fsmdp.oracles import brute_force_bracket_max, exact_treewidth, naive_bracket
from fsmdp.planner import SeparationOracle, extract_violating_state, solve_small_lp
from fsmdp.validate import random_structure, random_tables, random_weights


def test_cost_network_examples():
    assert build_cost_network([(0,), (1,), (2,)], 3).edges() == set()
    assert build_cost_network([(0, 1, 2, 3)], 4).edges() == set(itertools.combinations(range(4), 2))
    assert build_cost_network([(0, 1), (1, 2)], 3).edges() == {(0, 1), (1, 2)}


def test_induced_width_examples():
    edgeless = build_cost_network([(0,), (1,), (2,)], 3)
    assert all(induced_width(p, edgeless) == 0 for p in itertools.permutations(range(3)))
    path = build_cost_network([(0, 1), (1, 2), (2, 3)], 4)
    assert induced_width((0, 1, 2, 3), path) == 1
    cycle = build_cost_network([(0, 1), (1, 2), (2, 3), (3, 0)], 4)
    assert {induced_width(p, cycle) for p in itertools.permutations(range(4))} == {2}
    with pytest.raises(ConfigError):
        induced_width((0, 1), path)


def test_min_degree_examples():
    star = build_cost_network([(0, k) for k in range(1, 6)], 6)
    order = min_degree_order(star)
    assert order.order[-1] == 0 and order.width == 1
    assert min_degree_order(build_cost_network([(0, 1), (1, 2), (2, 3)], 4)).width == 1
    with pytest.raises(ConfigError):
        min_degree_order(build_cost_network([(0, 1, 2, 3)], 4), omega_max=2)


@given(st.integers(0, 10**6))
def test_min_degree_not_below_treewidth(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 9))
    scopes = [tuple(rng.choice(m, size=2, replace=False)) for _ in range(int(rng.integers(1, 2 * m)))]
    net = build_cost_network(scopes, m)
    assert min_degree_order(net).width >= exact_treewidth(net)


def test_explicit_order_checks():
    net = build_cost_network([(0, 1), (1, 2)], 3)
    assert EliminationOrder.explicit((0, 1, 2), net).width == 1
    with pytest.raises(ConfigError):
        EliminationOrder.explicit((0, 0, 2), net)
    with pytest.raises(ConfigError):
        EliminationOrder.explicit((1, 0, 2), net, omega_max=1)


def _one_var_instance():
    sp = FactoredSpace((2,), 1)
    st_ = ModelStructure(sp, Basis.with_constant([], 1.0), ((0,),), 5.0, 0.0, 1)
    tables = OptimisticTables(st_, (np.array([[1.0], [3.0]]),), (None,), (None,))
    return st_, tables


def test_single_variable_system_by_hand():
    st_, tables = _one_var_instance()
    w = WeightMatrix.from_steps(np.array([[0.5]]))
    sysm = generate_constraints(w, 1, 0, tables, default_order(st_))
    assert len(sysm.seeds) == 1 and len(sysm.blocks) == 1 and sysm.n_constraints == 2
    val, tight, u = solve_small_lp(sysm)
    assert val == pytest.approx(3.0 - 0.5)
    assert list(extract_violating_state(sysm, u)) == [1]
    assert "eliminate x0" in sysm.dump()


@given(st.integers(0, 10**6))
def test_system_and_batched_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    st_ = random_structure(rng, int(rng.integers(1, 8)))
    tables = random_tables(st_, rng)
    w = random_weights(rng, st_.tau, st_.phi)
    order = default_order(st_)
    batched = batched_bracket_max(w, tables, order)
    for ell in range(1, st_.tau + 1):
        for a in range(st_.n_actions):
            truth, _ = brute_force_bracket_max(w, tables, a, ell)
            sysm = generate_constraints(w, ell, a, tables, order)
            assert sysm.n_constraints <= sysm.constraint_bound()
            assert sysm.value(sysm.least_solution()) == pytest.approx(truth, abs=1e-9)
            assert batched.values[a, ell - 1] == pytest.approx(truth, abs=1e-9)
            s = batched.argmax_state(a, ell)
            assert naive_bracket(w, tables, s, a, ell) == pytest.approx(truth, abs=1e-9)


def test_zero_weights_reduce_to_reward_maximum(rng):
    st_ = random_structure(rng, 6)
    tables = random_tables(st_, rng)
    w = WeightMatrix.zeros(st_.tau, st_.phi)
    rsum = tables.reward_sum(all_states(st_.space))
    for a in range(st_.n_actions):
        sysm = generate_constraints(w, 1, a, tables, default_order(st_))
        assert solve_small_lp(sysm)[0] == pytest.approx(rsum[:, a].max(), abs=1e-12)


@given(st.integers(0, 10**6))
def test_oracle_routes_agree(seed):
    rng = np.random.default_rng(seed)
    st_ = random_structure(rng, int(rng.integers(1, 7)))
    tables = random_tables(st_, rng)
    w = random_weights(rng, st_.tau, st_.phi)
    res = {r: SeparationOracle(tables, 1e9, route=r)(w) for r in ("elimination", "system", "simplex")}
    base = res["elimination"]
    for r in ("system", "simplex"):
        assert res[r].feasible == base.feasible
        assert np.allclose(res[r].kappa, base.kappa, atol=1e-9)
        if not base.feasible:
            assert (res[r].action, res[r].step) == (base.action, base.step)
            assert res[r].hyperplane(w) == pytest.approx(base.hyperplane(w), abs=1e-9)


def test_order_missing_variable_is_rejected(rng):
    st_ = random_structure(rng, 4)
    tables = random_tables(st_, rng)
    bad = EliminationOrder((0, 1, 2), 0)
    with pytest.raises(ConfigError):
        generate_constraints(WeightMatrix.zeros(st_.tau, st_.phi), 1, 0, tables, bad)
