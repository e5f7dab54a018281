import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fsmdp.core import Basis, BasisFunction, FactoredSpace, WeightMatrix, all_states, basis_matrix
from fsmdp.env import make_safe_action_family, random_product_env
from fsmdp.errors import ConfigError
from fsmdp.estimation import ConfidenceState, ModelStructure, true_model
from fsmdp.optimism import build_tables, tables_from_model
from fsmdp.oracles import (
    exhaustive_constraint_slacks,
    exhaustive_lp_plan,
    exhaustive_multilevel_plan,
    naive_objective,
    tabular_vi,
)
from fsmdp.planner import (
    Planner,
    SeparationOracle,
    WeightSlice,
    bracket_hyperplane,
    cutting_plane_solve,
    ellipsoid_budget,
    evaluate_objective,
    objective_coefficients,
    trivial_feasible_point,
)
from fsmdp.validate import random_structure, random_tables, random_weights, tabular_instance


def _tabular_tables():
    env, basis, W = tabular_instance()
    model = true_model(env, basis)
    return env, basis, W, model.structure, tables_from_model(model)


def _vi_weights(env, vi):
    """Indicator-basis weights reproducing the VI values (h0 weight 0)."""
    steps = np.hstack([np.zeros((env.tau, 1)), vi.V[:env.tau]])
    return WeightMatrix.from_steps(steps)


def test_objective_examples():
    sp = FactoredSpace((2, 2, 2))
    basis = Basis.with_constant([], 1.0)
    assert evaluate_objective(WeightMatrix.zeros(2, 1), sp, basis) == 0.0
    assert evaluate_objective(WeightMatrix.from_steps(np.array([[1.0], [5.0]])), sp, basis) == 8.0


@given(st.integers(0, 10**6))
def test_objective_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    st_ = random_structure(rng, int(rng.integers(1, 11)))
    w = random_weights(rng, st_.tau, st_.phi)
    assert evaluate_objective(w, st_.space, st_.basis) == pytest.approx(
        naive_objective(w, st_.space, st_.basis), rel=1e-12, abs=1e-9)


def test_rho_weighted_objective():
    rng = np.random.default_rng(0)
    env = random_product_env(FactoredSpace((2, 2, 2)), rng)
    st_ = random_structure(rng, 3)
    w = random_weights(rng, st_.tau, st_.phi)
    states = all_states(st_.space)
    H = basis_matrix(st_.basis, st_.space, states)
    p = env.rho.probabilities(st_.space, states)
    assert evaluate_objective(w, st_.space, st_.basis, env.rho) == pytest.approx(float(p @ H @ w.step(1)))
    assert objective_coefficients(st_.space, st_.basis, 2).shape == (2, st_.phi)


def test_exact_tabular_weights_are_feasible():
    env, basis, W, st_, tables = _tabular_tables()
    w = _vi_weights(env, tabular_vi(env))
    assert SeparationOracle(tables, W).__call__(w).feasible


def test_cut_separates_sampled_feasible_points():
    env, basis, W, st_, tables = _tabular_tables()
    vi = tabular_vi(env)
    good = _vi_weights(env, vi).free.copy()
    bad = good.copy()
    bad[0, 0] = -5.0
    res = SeparationOracle(tables, W)(WeightMatrix.from_steps(bad, W))
    assert not res.feasible and res.hyperplane.kind == "bracket"
    assert res.hyperplane(WeightMatrix.from_steps(bad, W)) > 0
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(400):
        x = good + rng.uniform(0, 0.3, good.shape)  # raising values keeps the constraints
        x[:, 0] += rng.uniform(-0.05, 0.05)
        w = WeightMatrix.from_steps(x, W)
        if exhaustive_constraint_slacks(w, tables).min() >= 0 and w.within_bound(0):
            hits += 1
            assert res.hyperplane(w) <= 1e-9
    assert hits > 50


def test_norm_cut_comes_first():
    env, basis, W, st_, tables = _tabular_tables()
    steps = np.zeros((2, st_.phi))
    steps[1, 3] = W + 1.0
    res = SeparationOracle(tables, W)(WeightMatrix.from_steps(steps, W))
    assert res.hyperplane.kind == "norm" and res.kappa is None
    assert res.hyperplane(WeightMatrix.from_steps(steps, W)) == pytest.approx(1.0)


def test_trivial_point_is_feasible(rng):
    for _ in range(10):
        st_ = random_structure(rng, int(rng.integers(1, 7)))
        tables = random_tables(st_, rng)
        w = trivial_feasible_point(tables, st_.tau, 100.0)
        assert exhaustive_constraint_slacks(w, tables).min() >= -1e-12
        assert SeparationOracle(tables, 100.0)(w).feasible
    assert trivial_feasible_point(tables, st_.tau, 1e-6) is None or tables.reward[0].max() <= 0


@given(st.integers(0, 10**6), st.integers(1, 3))
def test_weight_slice_restrict(seed, step):
    rng = np.random.default_rng(seed)
    st_ = random_structure(rng, int(rng.integers(1, 6)), tau=3)
    tables = random_tables(st_, rng)
    base = rng.normal(size=(3, st_.phi))
    sl = WeightSlice(3, st_.phi, 10.0, step, base)
    s = all_states(st_.space)[0]
    hp = bracket_hyperplane(s, 0, step, np.ones(st_.phi, dtype=np.int64), tables, 3)
    x = rng.normal(size=sl.n)
    g, rhs = sl.restrict(hp)
    assert hp(sl.lift(x)) == pytest.approx(float(g @ x) - rhs, abs=1e-10)
    assert np.array_equal(sl.coords(sl.lift(x)), x)
    with pytest.raises(ConfigError):
        WeightSlice(3, st_.phi, 10.0, 4)


def test_budget_and_argument_checks():
    assert ellipsoid_budget(2, 1.0, 1.0, 1e-3) == math.ceil(2 * 2 * 3 * math.log(3e3))
    env, basis, W, st_, tables = _tabular_tables()
    oracle = SeparationOracle(tables, W)
    c = np.zeros(st_.tau * st_.phi)
    with pytest.raises(ConfigError):
        cutting_plane_solve(c, oracle, st_.tau, st_.phi, W, 0.0)
    with pytest.raises(ConfigError):
        cutting_plane_solve(c[:-1], oracle, st_.tau, st_.phi, W, 1e-2)


@pytest.mark.parametrize("formulation", ["multilevel", "joint"])
def test_planners_reach_the_tabular_optimum(formulation):
    env, basis, W, st_, tables = _tabular_tables()
    total = tabular_vi(env).V[0].sum()
    exact = Planner(st_, W, method="kelley", formulation=formulation).plan_tables(tables, 1e-3)
    assert exact.info.objective == pytest.approx(total, abs=1e-7)
    ell = Planner(st_, W, method="ellipsoid", formulation=formulation).plan_tables(tables, 1e-2)
    assert total - 1e-7 <= ell.info.objective <= total + 1e-2
    assert exhaustive_constraint_slacks(ell.w, tables).min() >= -1e-9


def test_halving_eps_never_worse_for_one_search():
    env, basis, W, st_, tables = _tabular_tables()
    oracle = SeparationOracle(tables, W)
    c = np.zeros((st_.tau, st_.phi))
    c[0] = objective_coefficients(st_.space, st_.basis, st_.tau)[0]
    start = trivial_feasible_point(tables, st_.tau, W)
    prev = math.inf
    for eps in (0.4, 0.2, 0.1, 0.05):
        _, info, _ = cutting_plane_solve(c.ravel(), oracle, st_.tau, st_.phi, W, eps, initial=start)
        assert info.objective <= prev
        prev = info.objective


def test_safe_family_zero_objective():
    env = make_safe_action_family(2, 0)
    full = (0, 1)
    basis = Basis.with_constant([BasisFunction(full, full, np.eye(4)[k]) for k in range(4)], 1.0)
    model = true_model(env, basis)
    res = Planner(model.structure, 2.0).plan_tables(tables_from_model(model), 1e-3)
    assert res.info.objective <= 1e-3


@given(st.integers(0, 10**6))
def test_random_instances_against_exhaustive(seed):
    rng = np.random.default_rng(seed)
    st_ = random_structure(rng, int(rng.integers(1, 5)), scope_max=2)
    tables = random_tables(st_, rng)
    W = 50.0
    _, values = exhaustive_multilevel_plan(tables, st_.tau, W)
    _, joint = exhaustive_lp_plan(tables, st_.tau, W)
    ml = Planner(st_, W, method="kelley").plan_tables(tables, 1e-6)
    assert exhaustive_constraint_slacks(ml.w, tables).min() >= -1e-8
    # the last step is solved first with nothing fixed, so its optimum is unique in value
    last = objective_coefficients(st_.space, st_.basis, st_.tau)[0] @ ml.w.step(st_.tau)
    assert last == pytest.approx(values[-1], abs=1e-7 * (1 + abs(values[-1])))
    jt = Planner(st_, W, method="kelley", formulation="joint").plan_tables(tables, 1e-6)
    assert jt.info.objective == pytest.approx(joint, abs=1e-7 * (1 + abs(joint)))
    # the joint optimum relaxes the step-by-step one
    assert jt.info.objective <= ml.info.objective + 1e-7 * (1 + abs(joint))


def _confidence(env, basis, episodes, delta, seed=0):
    st_ = ModelStructure.from_env(env, basis)
    conf = ConfidenceState(st_, delta, k=episodes + 1)
    rng = np.random.default_rng(seed)
    for _ in range(episodes):
        s = env.reset(rng)
        for _ in range(env.tau):
            a = int(rng.integers(2))
            nxt, obs = env.step(s, a, rng)
            conf.record_step(s, a, obs, nxt)
            s = nxt
    return st_, conf


def test_plan_is_deterministic(two_state):
    env, basis = two_state
    st_, conf = _confidence(env, basis, 30, 0.1)
    w1, t1 = Planner(st_, 6.0).plan(conf, 0.1)
    w2, t2 = Planner(st_, 6.0).plan(conf, 0.1)
    assert np.array_equal(w1.w, w2.w) and t1.equals(t2)


def test_wider_sets_never_lower_the_optimistic_value():
    rng = np.random.default_rng(5)
    env = random_product_env(FactoredSpace((2, 2)), rng, sigma=0.1)
    basis = Basis.with_constant([BasisFunction(c.scope, c.parents, rng.uniform(0, 1, 2))
                                 for c in env.transition.components[0]], 1.0)
    st_, conf = _confidence(env, basis, 40, 0.3)
    values = []
    for delta in (0.3, 0.1, 0.01, 1e-4):
        conf.delta = delta
        res = Planner(st_, 20.0, method="kelley", formulation="joint").plan_tables(build_tables(conf), 1e-6)
        values.append(res.info.objective)
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
