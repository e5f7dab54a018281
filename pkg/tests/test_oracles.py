import numpy as np
import pytest

from fsmdp.core import Basis, BasisFunction, FactoredSpace, WeightMatrix, all_states, basis_matrix
from fsmdp.env import Environment, InitialDistribution, JointTransitionSpec, RewardComponentSpec, TransitionCluster
from fsmdp.errors import ConfigError, ScaleError
from fsmdp.estimation import true_model
from fsmdp.optimism import tables_from_model
from fsmdp.oracles import (
    brute_force_bracket_max,
    exhaustive_lp_plan,
    exhaustive_multilevel_plan,
    naive_bracket,
    q_linearity_witness,
    tabular_vi,
    vertex_enum_transition_opt,
)
from fsmdp.validate import random_structure, random_tables, random_weights, tabular_instance


def _env(R, tau, m=2):
    sp = FactoredSpace((2,) * m, R.shape[1])
    full = tuple(range(m))
    S = 2**m
    T = np.random.default_rng(0).dirichlet(np.ones(S), size=(S, R.shape[1]))
    return Environment(sp, (RewardComponentSpec(full, R, 0.0, max(1.0, R.max())),),
                       JointTransitionSpec.product([TransitionCluster(full, full, table=T)]),
                       InitialDistribution(), tau)


def test_vi_examples():
    vi = tabular_vi(_env(np.zeros((4, 3)), 3))
    assert np.all(vi.V == 0)
    R = np.random.default_rng(1).uniform(0, 1, (4, 3))
    vi = tabular_vi(_env(R, 1))
    assert np.allclose(vi.V[0], R.max(axis=1)) and np.all(vi.V[1] == 0)


def test_bracket_oracles_agree(rng):
    for _ in range(20):
        st_ = random_structure(rng, int(rng.integers(1, 7)))
        tables = random_tables(st_, rng)
        w = random_weights(rng, st_.tau, st_.phi)
        for a in range(2):
            val, s = brute_force_bracket_max(w, tables, a, 1)
            assert naive_bracket(w, tables, s, a, 1) == pytest.approx(val, abs=1e-12)
            vals = [naive_bracket(w, tables, x, a, 1) for x in all_states(st_.space)]
            assert max(vals) == pytest.approx(val, abs=1e-12)
        zero = WeightMatrix.zeros(st_.tau, st_.phi)
        assert brute_force_bracket_max(zero, tables, 0, 1)[0] == pytest.approx(
            tables.reward_sum(all_states(st_.space))[:, 0].max())


def test_vertex_enum_examples():
    assert np.allclose(vertex_enum_transition_opt([0.3, 0.7], 0.0, [1.0, 0.0]), [0.3, 0.7])
    assert np.allclose(vertex_enum_transition_opt([0.5, 0.5], 0.3, [1.0, 0.0]), [0.8, 0.2])
    with pytest.raises(ScaleError):
        vertex_enum_transition_opt(np.full(6, 1 / 6), 0.1, np.arange(6.0))


def test_exhaustive_plans_match_vi():
    env, basis, W = tabular_instance()
    tables = tables_from_model(true_model(env, basis))
    vi = tabular_vi(env)
    H = basis_matrix(basis, env.space, all_states(env.space))
    w, value = exhaustive_lp_plan(tables, env.tau, W)
    assert value == pytest.approx(vi.V[0].sum(), abs=1e-7)
    assert np.allclose(H @ w.step(1), vi.V[0], atol=1e-7)
    wm, values = exhaustive_multilevel_plan(tables, env.tau, W)
    assert np.allclose(values, vi.V[:2].sum(axis=1), atol=1e-7)
    assert np.allclose(H @ wm.free.T, vi.V[:2].T, atol=1e-7)


def test_exhaustive_lp_refuses_large_instances():
    sp = FactoredSpace((2,) * 9, 2)
    st_ = random_structure(np.random.default_rng(0), 9)
    tables = random_tables(st_, np.random.default_rng(0))
    with pytest.raises(ScaleError):
        exhaustive_lp_plan(tables, 2, 10.0)
    st_ = random_structure(np.random.default_rng(0), 3, tau=4)
    with pytest.raises(ConfigError):
        exhaustive_lp_plan(random_tables(st_, np.random.default_rng(0)), 4, 10.0)
    assert sp.m == 9


def test_linearity_witness():
    rng = np.random.default_rng(0)
    H = rng.normal(size=(16, 5))
    r_h, r_aug, resid = q_linearity_witness(H @ rng.normal(size=5), H)
    assert r_h == r_aug == 5 and resid < 1e-10
    r_h, r_aug, resid = q_linearity_witness(rng.normal(size=16), H)
    assert r_aug == r_h + 1 and resid > 1e-3
