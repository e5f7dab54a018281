"""Episodic optimistic learning loop, regret accounting and the reference regret bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import BRUTE_FORCE_LIMIT, Basis, WeightMatrix, rank_rows
from .elimination import EliminationOrder
from .errors import ConfigError
from .estimation import ConfidenceState, ModelStructure
from .optimism import OptimisticTables, sign_index
from .oracles import JointMDP
from .planner import Planner


# ------------------------------------------------------------------- policy
def action_values(w: WeightMatrix, tables: OptimisticTables, state, ell: int) -> np.ndarray:
    """Optimistic one-step lookahead value of each action at ``state`` and step ``ell``."""
    st = tables.structure
    state = np.asarray(state, dtype=np.int64)
    q = np.zeros(st.n_actions)
    for i in range(st.l):
        q += tables.reward[i][st.reward_rank(i, state)]
    wn = w.step(ell + 1)
    q += wn[0]
    sgn = sign_index(wn)
    for j in range(1, st.phi):
        if wn[j] != 0.0:
            q += wn[j] * tables.expect[j][st.parent_rank(j, state), :, sgn[j]]
    return q


def greedy_action(w: WeightMatrix, tables: OptimisticTables, state, ell: int) -> int:
    """argmax_a of the optimistic lookahead, lowest action index on ties."""
    if not 1 <= ell <= w.tau:
        raise ConfigError(f"step {ell} outside [1, {w.tau}]")
    return int(np.argmax(action_values(w, tables, state, ell)))


def greedy_policy_table(w: WeightMatrix, tables: OptimisticTables, states: np.ndarray) -> np.ndarray:
    """greedy_action for every enumerated state and step, shape (tau, S)."""
    st = tables.structure
    sp = st.space
    S = states.shape[0]
    base = np.zeros((S, st.n_actions))
    for i, z in enumerate(st.reward_scopes):
        base += tables.reward[i][rank_rows(states, z, sp)]
    pranks = [None] + [rank_rows(states, st.basis[j].parent_scope, sp) for j in range(1, st.phi)]
    out = np.empty((w.tau, S), dtype=np.int64)
    for ell in range(1, w.tau + 1):
        wn = w.step(ell + 1)
        sgn = sign_index(wn)
        q = base + wn[0]
        for j in range(1, st.phi):
            q = q + wn[j] * tables.expect[j][pranks[j], :, sgn[j]]
        out[ell - 1] = np.argmax(q, axis=1)
    return out


# ------------------------------------------------------------------ episodes
@dataclass
class Trajectory:
    states: np.ndarray  # (tau + 1, m)
    actions: np.ndarray  # (tau,)
    rewards: np.ndarray  # (tau, l) per-component observations

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


def run_episode(env, w: WeightMatrix, tables: OptimisticTables, confidence: ConfidenceState,
                rng: np.random.Generator) -> tuple[Trajectory, float]:
    """Roll out tau steps of the greedy policy, recording every transition."""
    tau = env.tau
    states = np.empty((tau + 1, env.space.m), dtype=np.int64)
    actions = np.empty(tau, dtype=np.int64)
    rewards = np.empty((tau, env.n_components))
    s = env.reset(rng)
    states[0] = s
    for ell in range(1, tau + 1):
        a = greedy_action(w, tables, s, ell)
        nxt, obs = env.step(s, a, rng)
        confidence.record_step(s, a, obs, nxt)
        actions[ell - 1] = a
        rewards[ell - 1] = obs
        states[ell] = nxt
        s = nxt
    traj = Trajectory(states, actions, rewards)
    return traj, traj.total_reward


# --------------------------------------------------------------------- bound
def theoretical_bound(phi: int, tau: int, W: float, G: float, T: float, J: float, N: int, zeta: int,
                      delta: float) -> float:
    """tau * 30 phi W G sqrt(T J (J log 2 + log(2 N zeta T^2 / delta)))."""
    if W * G < 1:
        raise ConfigError(f"the regret bound assumes W*G >= 1, got W*G = {W * G}")
    inner = J * math.log(2.0) + math.log(2.0 * N * zeta * T * T / delta)
    return tau * 30.0 * phi * W * G * math.sqrt(T * J * inner)


def bound_parameters(structure: ModelStructure) -> dict:
    """phi, J = kappa^zeta, N and zeta read off the problem layout."""
    sp = structure.space
    kappa = max(sp.cards)
    sizes = [len(z) for z in structure.reward_scopes]
    sizes += [len(h.parent_scope) for h in structure.basis.functions[1:]]
    zeta = max(1, max(sizes, default=1))
    return {"phi": structure.phi, "tau": structure.tau, "G": structure.basis.G,
            "J": float(kappa) ** zeta, "N": max(1, structure.N), "zeta": zeta}


# --------------------------------------------------------------------- trace
@dataclass
class RegretTrace:
    k: list[int] = field(default_factory=list)
    realized_reward: list[float] = field(default_factory=list)
    v_star: list[float] = field(default_factory=list)
    regret: list[float] = field(default_factory=list)
    regret_is_proxy: list[bool] = field(default_factory=list)
    cumulative_regret: list[float] = field(default_factory=list)
    bound: list[float] = field(default_factory=list)
    eps: list[float] = field(default_factory=list)

    def append(self, k, realized, v_star, regret, proxy, cum, bound, eps) -> dict:
        self.k.append(k)
        self.realized_reward.append(realized)
        self.v_star.append(v_star)
        self.regret.append(regret)
        self.regret_is_proxy.append(proxy)
        self.cumulative_regret.append(cum)
        self.bound.append(bound)
        self.eps.append(eps)
        return self.row(-1)

    def row(self, idx: int) -> dict:
        return {"k": self.k[idx], "realized_reward": self.realized_reward[idx],
                "regret": self.regret[idx], "regret_is_proxy": self.regret_is_proxy[idx],
                "cumulative_regret": self.cumulative_regret[idx], "bound": self.bound[idx]}

    def __len__(self):
        return len(self.k)


class RegretEvaluator:
    """Exact per-episode regret V*_1(s0) - V^pi_1(s0) on enumerable environments."""

    def __init__(self, env):
        self.joint = JointMDP(env)
        self.v_star = self.joint.value_iteration().V
        self._cache: dict[bytes, np.ndarray] = {}

    def state_index(self, state) -> int:
        return int(rank_rows(np.asarray(state)[None, :], tuple(range(self.joint.env.space.m)),
                             self.joint.env.space)[0])

    def policy_values(self, policy: np.ndarray) -> np.ndarray:
        key = policy.tobytes()
        v = self._cache.get(key)
        if v is None:
            v = self.joint.evaluate(policy)
            if len(self._cache) < 4096:
                self._cache[key] = v
        return v


@dataclass
class LearnerConfig:
    W: float
    delta: float = 0.1
    method: str = "ellipsoid"
    formulation: str = "multilevel"
    order: EliminationOrder | None = None
    clip_rewards: bool = True
    rho_weighted: bool = False
    exact_regret_limit: int = BRUTE_FORCE_LIMIT
    track_coverage: bool = False


def planning_eps(k: int) -> float:
    return math.sqrt(1.0 / k)


class Learner:
    """One seeded learning run: confidence sets, planner, rng and the regret trace.

    ``episode()`` runs the next episode; ``state_dict``/``load_state_dict``
    capture everything needed to resume bit-for-bit.
    """

    def __init__(self, env, basis: Basis, config: LearnerConfig, seed=0, trace=None):
        self.env = env
        self.basis = basis
        self.config = config
        self.structure = ModelStructure.from_env(env, basis)
        st = self.structure
        if config.W < st.tau * max(0.0, float(np.sum(st.C))):
            raise ConfigError("W must be at least tau * sum(C) so the constant basis can certify feasibility")
        self.conf = ConfidenceState(st, config.delta)
        self.planner = Planner(st, config.W, config.order, config.method, clip_rewards=config.clip_rewards,
                               rho=env.rho if config.rho_weighted else None, trace=trace,
                               formulation=config.formulation)
        self.rng = np.random.default_rng(seed)
        self.exact = env.space.is_enumerable(config.exact_regret_limit)
        self.evaluator = RegretEvaluator(env) if self.exact else None
        self.params = bound_parameters(st)
        self.wg_ok = config.W * basis.G >= 1
        self.trace = RegretTrace()
        self.k = 0
        self.cumulative = 0.0
        self._true = None
        if config.track_coverage:
            from .estimation import true_model
            self._true = true_model(env, basis)
        self.covered: list[bool] = []

    def bound(self, k: int) -> float:
        if not self.wg_ok:
            return math.nan
        return theoretical_bound(W=self.config.W, T=k * self.structure.tau, delta=self.config.delta,
                                 **_bound_kwargs(self.params))

    def episode(self) -> dict:
        k = self.k + 1
        conf = self.conf
        conf.k = k
        if self._true is not None:
            self.covered.append(bool(conf.contains_model(self._true)))
        eps = planning_eps(k)
        w, tables = self.planner.plan(conf, eps)
        traj, realized = run_episode(self.env, w, tables, conf, self.rng)
        s0 = traj.states[0]
        if self.exact:
            ev = self.evaluator
            sidx = ev.state_index(s0)
            v_pi = ev.policy_values(greedy_policy_table(w, tables, ev.joint.states))[0, sidx]
            v_star = float(ev.v_star[0, sidx])
            regret, proxy = v_star - float(v_pi), False
        else:
            v_hat = float(sum(w.step(1)[j] * h(tuple(int(x) for x in s0[list(h.value_scope)]), self.env.space)
                              for j, h in enumerate(self.basis)))
            v_star, regret, proxy = math.nan, v_hat - realized, True
        self.k = k
        self.cumulative += regret
        return self.trace.append(k, realized, v_star, float(regret), proxy, self.cumulative, self.bound(k), eps)

    def state_dict(self) -> dict:
        return {"k": self.k, "cumulative": self.cumulative, "confidence": self.conf.snapshot(),
                "rng": self.rng.bit_generator.state, "covered": list(self.covered),
                "warm_keys": _encode_keys(self.planner._warm_keys),
                "warm_basis": _encode_keys(self.planner._warm_basis)}

    def load_state_dict(self, state: dict) -> None:
        self.k = int(state["k"])
        self.cumulative = float(state["cumulative"])
        self.conf = ConfidenceState.from_snapshot(self.structure, state["confidence"])
        self.rng.bit_generator.state = state["rng"]
        self.covered = list(state.get("covered", []))
        self.planner._warm_keys = _decode_keys(state.get("warm_keys", []))
        self.planner._warm_basis = _decode_keys(state.get("warm_basis", []))


def _to_tuple(x):
    return tuple(_to_tuple(v) for v in x) if isinstance(x, (list, tuple)) else x


def _encode_keys(d: dict) -> list:
    return [[k, v] for k, v in d.items()]


def _decode_keys(items: list) -> dict:
    return {k: (None if v is None else [_to_tuple(x) for x in v]) for k, v in items}


def run(env, basis: Basis, K: int, config: LearnerConfig, seed=0,
        callback: Callable[[int, dict, "Learner"], None] | None = None) -> RegretTrace:
    """Run K episodes and return the regret trace.

    ``callback(k, row, learner)`` is invoked after each episode.
    """
    if K < 1:
        raise ConfigError("K must be >= 1")
    learner = Learner(env, basis, config, seed)
    for _ in range(K):
        row = learner.episode()
        if callback is not None:
            callback(learner.k, row, learner)
    return learner.trace


def _bound_kwargs(params: dict) -> dict:
    return {key: params[key] for key in ("phi", "tau", "G", "J", "N", "zeta")}
