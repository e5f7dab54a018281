import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fsmdp.core import Basis, BasisFunction, FactoredSpace
from fsmdp.env import random_product_env
from fsmdp.errors import ConfigError
from fsmdp.estimation import (
    UNVISITED,
    ConfidenceState,
    ModelStructure,
    marginal_width,
    reward_width,
    true_model,
)


def _structure(two_state):
    env, basis = two_state
    return ModelStructure.from_env(env, basis)


def test_reward_width_examples():
    assert reward_width(1.0, 1, 2, 1, 0.1) == pytest.approx(4 * math.log(80), rel=1e-15)
    assert 4 * math.log(80) == pytest.approx(17.529, abs=1e-3)
    assert reward_width(0.0, 3, 10, 5, 0.1) == 0.0
    with pytest.raises(ConfigError):
        reward_width(1.0, 1, 2, 0, 0.1)


def test_marginal_width_formula_and_monotone():
    # 2 |Val(Z)| log 2 - 2 log(delta / (2 N |Pa| k^2)), recomputed term by term
    K, pa, N, k, delta = 3, 2, 16, 7, 0.05
    expect = 2 * K * math.log(2) + 2 * (math.log(2 * N * pa * k * k) - math.log(delta))
    assert marginal_width(K, pa, N, k, delta) == pytest.approx(expect, rel=1e-14)
    for k in range(1, 30):
        assert marginal_width(2, 1, 4, k + 1, 0.1) > marginal_width(2, 1, 4, k, 0.1)


def test_counts_after_one_and_repeated_steps(two_state):
    conf = ConfidenceState(_structure(two_state), 0.1)
    conf.record_step([1], 0, [0.25], [0])
    assert conf.reward_n[0][1, 0] == 1 and conf.trans_n[1][1, 0] == 1
    assert conf.reward_n[0].sum() == 1 and conf.trans_counts[1].sum() == 1
    for _ in range(4):
        conf.record_step([1], 0, [0.25], [0])
    assert np.array_equal(conf.empirical_marginal(1, 1, 0), [1.0, 0.0])
    assert conf.empirical_marginal(1, 0, 1) is UNVISITED
    with pytest.raises(ConfigError):
        conf.record_step([1], 0, [0.1, 0.2], [0])


def test_empirical_marginal_counts():
    sp = FactoredSpace((2,), 1)
    basis = Basis.with_constant([BasisFunction((0,), (0,), [0.0, 1.0])], 1.0)
    st_ = ModelStructure(sp, basis, ((0,),), 1.0, 0.0, 1)
    conf = ConfidenceState(st_, 0.1)
    for y in (0, 0, 0, 1):
        conf.record_step([0], 0, [0.0], [y])
    assert np.allclose(conf.empirical_marginal(1, 0, 0), [0.75, 0.25])


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 1), st.integers(0, 3)), max_size=60))
def test_interleaved_counts_match_replay(log):
    sp = FactoredSpace((2, 2), 2)
    basis = Basis.with_constant([BasisFunction((0, 1), (0, 1), np.arange(4.0) / 3)], 1.0)
    st_ = ModelStructure(sp, basis, ((0,),), 1.0, 0.0, 1)
    conf = ConfidenceState(st_, 0.1)
    for s, a, y in log:
        conf.record_step([s % 2, s // 2], a, [0.0], [y % 2, y // 2])
    ref = np.zeros((4, 2, 4), dtype=int)
    for s, a, y in log:
        ref[s, a, y] += 1
    assert np.array_equal(conf.trans_counts[1], ref)
    assert np.array_equal(conf.trans_n[1], ref.sum(axis=2))


def test_sampled_marginal_close_to_truth():
    env = random_product_env(FactoredSpace((2, 2)), 9)
    basis = Basis.with_constant([BasisFunction(c.scope, c.parents, [0.0, 1.0])
                                 for c in env.transition.components[0]], 1.0)
    conf = ConfidenceState(ModelStructure.from_env(env, basis), 0.1)
    rng = np.random.default_rng(1)
    s = np.array([0, 1])
    for _ in range(10_000):
        nxt, obs = env.step(s, 1, rng)
        conf.record_step(s, 1, obs, nxt)
    truth = true_model(env, basis)
    for j in (1, 2):
        z = ModelStructure.from_env(env, basis).parent_rank(j, s)
        assert np.abs(conf.empirical_marginal(j, z, 1) - truth.marginals[j][z, 1]).sum() <= 0.05


def test_contains_model_examples(two_state):
    env, basis = two_state
    st_ = _structure(two_state)
    conf = ConfidenceState(st_, 0.1)
    truth = true_model(env, basis)
    assert conf.contains_model(truth)
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = env.reset(rng)
        for a in (0, 1):
            nxt, obs = env.step(s, a, rng)
            conf.record_step(s, a, obs, nxt)
            s = nxt
    assert conf.contains_model(conf.empirical_model())
    far = true_model(env, basis)
    far.reward_means[0] = far.reward_means[0] + 10.0
    assert not conf.contains_model(far)


def test_coverage_over_seeded_runs(two_state):
    env, basis = two_state
    st_ = _structure(two_state)
    truth = true_model(env, basis)
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        conf = ConfidenceState(st_, 0.1)
        for k in range(1, 201):
            conf.k = k
            s = env.reset(rng)
            for _ in range(env.tau):
                a = int(rng.integers(2))
                nxt, obs = env.step(s, a, rng)
                conf.record_step(s, a, obs, nxt)
                s = nxt
        hits += conf.contains_model(truth)
    assert hits >= 45


def test_snapshot_roundtrip(two_state):
    env, _ = two_state
    st_ = _structure(two_state)
    conf = ConfidenceState(st_, 0.1, k=4)
    rng = np.random.default_rng(2)
    s = env.reset(rng)
    for _ in range(7):
        nxt, obs = env.step(s, int(rng.integers(2)), rng)
        conf.record_step(s, 1, obs, nxt)
        s = nxt
    back = ConfidenceState.from_json(st_, conf.to_json())
    assert back.k == 4 and back.snapshot() == conf.snapshot()
    cp = conf.copy()
    cp.record_step([0], 0, [0.0], [0])
    assert cp.total_transitions == conf.total_transitions + 1
