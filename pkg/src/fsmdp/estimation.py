"""Model containers, visit counts, empirical estimates and confidence widths."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Basis, FactoredSpace, Scope, make_scope, scope_cards, scope_size
from .errors import ConfigError


class _Unvisited:
    """Sentinel returned for (parent, action) cells with no data."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNVISITED"

    def __bool__(self):
        return False


UNVISITED = _Unvisited()


def _radix(space: FactoredSpace, scope: Scope) -> np.ndarray:
    cards = scope_cards(space, scope)
    return np.cumprod((1,) + cards[:-1]).astype(np.int64) if cards else np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class ModelStructure:
    """Everything about the parameter layout that does not depend on data."""

    space: FactoredSpace
    basis: Basis
    reward_scopes: tuple[Scope, ...]
    C: np.ndarray
    sigma: np.ndarray
    tau: int
    low: np.ndarray = field(default=None)

    def __post_init__(self):
        scopes = tuple(make_scope(z, self.space) for z in self.reward_scopes)
        object.__setattr__(self, "reward_scopes", scopes)
        l = len(scopes)
        for name in ("C", "sigma"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (l,)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        low = np.zeros(l) if self.low is None else np.broadcast_to(np.asarray(self.low, float), (l,)).copy()
        low.setflags(write=False)
        object.__setattr__(self, "low", low)
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        self.basis.validate(self.space)
        object.__setattr__(self, "_reward_radix", tuple(_radix(self.space, z) for z in scopes))
        object.__setattr__(
            self,
            "_parent_radix",
            tuple(_radix(self.space, h.parent_scope) for h in self.basis),
        )
        object.__setattr__(
            self,
            "_value_radix",
            tuple(_radix(self.space, h.value_scope) for h in self.basis),
        )

    @classmethod
    def from_env(cls, env, basis: Basis) -> "ModelStructure":
        return cls(
            env.space,
            basis,
            tuple(r.scope for r in env.rewards),
            np.array([r.C for r in env.rewards]),
            np.array([r.sigma for r in env.rewards]),
            env.tau,
            np.array([r.low for r in env.rewards]),
        )

    @property
    def l(self) -> int:
        return len(self.reward_scopes)

    @property
    def phi(self) -> int:
        return self.basis.phi

    @property
    def n_actions(self) -> int:
        return self.space.n_actions

    def reward_size(self, i: int) -> int:
        return scope_size(self.space, self.reward_scopes[i])

    def parent_size(self, j: int) -> int:
        return scope_size(self.space, self.basis[j].parent_scope)

    def value_size(self, j: int) -> int:
        return scope_size(self.space, self.basis[j].value_scope)

    @property
    def N(self) -> int:
        """Number of distinct (basis marginal, parent assignment, action) cells."""
        return self.n_actions * sum(self.parent_size(j) for j in range(1, self.phi))

    def reward_rank(self, i: int, state: np.ndarray) -> int:
        return int(state[list(self.reward_scopes[i])] @ self._reward_radix[i])

    def parent_rank(self, j: int, state: np.ndarray) -> int:
        return int(state[list(self.basis[j].parent_scope)] @ self._parent_radix[j])

    def value_rank(self, j: int, state: np.ndarray) -> int:
        return int(state[list(self.basis[j].value_scope)] @ self._value_radix[j])


@dataclass
class FsmdpModel:
    """Reward means and basis-marginal transition tables: one (R, P) parameter point.

    ``marginals[0]`` is None (the constant basis has a trivial marginal).
    """

    structure: ModelStructure
    reward_means: list[np.ndarray]
    marginals: list[np.ndarray | None]

    def validate(self) -> None:
        st = self.structure
        if len(self.reward_means) != st.l or len(self.marginals) != st.phi:
            raise ConfigError("model scopes do not match the structure")
        for i, t in enumerate(self.reward_means):
            if t.shape != (st.reward_size(i), st.n_actions):
                raise ConfigError(f"reward table {i} has shape {t.shape}")
        for j in range(1, st.phi):
            want = (st.parent_size(j), st.n_actions, st.value_size(j))
            if self.marginals[j] is None or self.marginals[j].shape != want:
                raise ConfigError(f"marginal {j} must have shape {want}")


def true_model(env, basis: Basis) -> FsmdpModel:
    """The environment's exact reward means and basis marginals."""
    st = ModelStructure.from_env(env, basis)
    margs: list[np.ndarray | None] = [None]
    for h in basis.functions[1:]:
        margs.append(env.marginal_table(h.value_scope, h.parent_scope))
    return FsmdpModel(st, [np.array(r.mean_table) for r in env.rewards], margs)


# ------------------------------------------------------------------ widths
def reward_width(sigma: float, l: int, x_size: int, k: int, delta: float) -> float:
    """d^R = 4 sigma^2 log(4 l |X[Z]| k / delta)."""
    if k < 1:
        raise ConfigError("episode index k must be >= 1")
    return 4.0 * sigma**2 * math.log(4.0 * l * x_size * k / delta)


def marginal_width(n_outcomes: int, n_parent_vars: int, N: int, k: int, delta: float) -> float:
    """d^P = 2 |Val(Z)| log 2 - 2 log(delta / (2 N |Pa| k^2))."""
    if k < 1:
        raise ConfigError("episode index k must be >= 1")
    pa = max(1, n_parent_vars)
    return 2.0 * n_outcomes * math.log(2.0) - 2.0 * math.log(delta / (2.0 * N * pa * k * k))


class ConfidenceState:
    """Visit counts and running sums behind the reward and transition confidence sets."""

    def __init__(self, structure: ModelStructure, delta: float, k: int = 1):
        if not 0 < delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        self.structure = structure
        self.delta = float(delta)
        self.k = int(k)
        st = structure
        A = st.n_actions
        self.reward_n = [np.zeros((st.reward_size(i), A), dtype=np.int64) for i in range(st.l)]
        self.reward_sum = [np.zeros((st.reward_size(i), A)) for i in range(st.l)]
        self.trans_n: list[np.ndarray | None] = [None]
        self.trans_counts: list[np.ndarray | None] = [None]
        for j in range(1, st.phi):
            self.trans_n.append(np.zeros((st.parent_size(j), A), dtype=np.int64))
            self.trans_counts.append(np.zeros((st.parent_size(j), A, st.value_size(j)), dtype=np.int64))

    # ---------------------------------------------------------------- updates
    def record_step(self, state, action: int, reward_observations: Sequence[float], next_state) -> None:
        st = self.structure
        obs = np.asarray(reward_observations, dtype=float)
        if obs.shape != (st.l,):
            raise ConfigError(f"expected {st.l} reward observations, got {obs.shape}")
        state = np.asarray(state, dtype=np.int64)
        next_state = np.asarray(next_state, dtype=np.int64)
        for i in range(st.l):
            z = st.reward_rank(i, state)
            self.reward_n[i][z, action] += 1
            self.reward_sum[i][z, action] += obs[i]
        for j in range(1, st.phi):
            z = st.parent_rank(j, state)
            y = st.value_rank(j, next_state)
            self.trans_n[j][z, action] += 1
            self.trans_counts[j][z, action, y] += 1

    def advance(self) -> None:
        """Move to the next episode index."""
        self.k += 1

    # --------------------------------------------------------------- estimates
    def empirical_marginal(self, j: int, z: int, a: int):
        n = self.trans_n[j][z, a]
        if n == 0:
            return UNVISITED
        return self.trans_counts[j][z, a] / n

    def empirical_marginals(self, j: int) -> np.ndarray:
        """All empirical rows for marginal j; unvisited rows are NaN."""
        n = self.trans_n[j][..., None].astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, self.trans_counts[j] / np.maximum(n, 1), np.nan)

    def empirical_reward(self, i: int) -> np.ndarray:
        n = self.reward_n[i]
        return np.where(n > 0, self.reward_sum[i] / np.maximum(n, 1), np.nan)

    # ------------------------------------------------------------------ widths
    def reward_width(self, i: int, k: int | None = None) -> float:
        st = self.structure
        return reward_width(st.sigma[i], st.l, st.reward_size(i) * st.n_actions, self.k if k is None else k,
                            self.delta)

    def marginal_width(self, j: int, k: int | None = None) -> float:
        st = self.structure
        h = st.basis[j]
        return marginal_width(st.value_size(j), len(h.parent_scope), st.N, self.k if k is None else k, self.delta)

    def width_schedule(self, kind: str, index: int, k: int | None = None) -> float:
        if kind == "reward":
            return self.reward_width(index, k)
        if kind == "marginal":
            if index == 0:
                raise ConfigError("the constant basis has no confidence set")
            return self.marginal_width(index, k)
        raise ConfigError(f"unknown width kind {kind!r}")

    # -------------------------------------------------------------- membership
    def contains_model(self, model: FsmdpModel, tol: float = 1e-12) -> bool:
        st = self.structure
        if model.structure.reward_scopes != st.reward_scopes or model.structure.phi != st.phi:
            raise ConfigError("model scopes do not match the confidence state")
        for j in range(1, st.phi):
            if (model.structure.basis[j].value_scope != st.basis[j].value_scope
                    or model.structure.basis[j].parent_scope != st.basis[j].parent_scope):
                raise ConfigError("model basis scopes do not match the confidence state")
        model.validate()
        for i in range(st.l):
            n = self.reward_n[i]
            seen = n > 0
            if not seen.any():
                continue
            dev = np.abs(model.reward_means[i][seen] - self.reward_sum[i][seen] / n[seen])
            if np.any(dev > np.sqrt(self.reward_width(i) / n[seen]) + tol):
                return False
        for j in range(1, st.phi):
            n = self.trans_n[j]
            seen = n > 0
            if not seen.any():
                continue
            emp = self.trans_counts[j][seen] / n[seen][:, None]
            l1 = np.abs(model.marginals[j][seen] - emp).sum(axis=1)
            if np.any(l1 > np.sqrt(self.marginal_width(j) / n[seen]) + tol):
                return False
        return True

    def empirical_model(self) -> FsmdpModel:
        """Empirical estimates; unvisited cells filled with a reward of 0 / uniform rows."""
        st = self.structure
        rewards = [np.nan_to_num(self.empirical_reward(i), nan=0.0) for i in range(st.l)]
        margs: list[np.ndarray | None] = [None]
        for j in range(1, st.phi):
            e = self.empirical_marginals(j)
            margs.append(np.where(np.isnan(e), 1.0 / e.shape[-1], e))
        return FsmdpModel(st, rewards, margs)

    @property
    def total_transitions(self) -> int:
        return int(self.reward_n[0].sum()) if self.reward_n else 0

    # ---------------------------------------------------------- persistence
    def copy(self) -> "ConfidenceState":
        new = ConfidenceState.__new__(ConfidenceState)
        new.structure = self.structure
        new.delta = self.delta
        new.k = self.k
        new.reward_n = [a.copy() for a in self.reward_n]
        new.reward_sum = [a.copy() for a in self.reward_sum]
        new.trans_n = [None if a is None else a.copy() for a in self.trans_n]
        new.trans_counts = [None if a is None else a.copy() for a in self.trans_counts]
        return new

    def snapshot(self) -> dict:
        return {
            "k": self.k,
            "delta": self.delta,
            "reward_n": [a.tolist() for a in self.reward_n],
            "reward_sum": [a.tolist() for a in self.reward_sum],
            "trans_n": [None if a is None else a.tolist() for a in self.trans_n],
            "trans_counts": [None if a is None else a.tolist() for a in self.trans_counts],
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot())

    @classmethod
    def from_snapshot(cls, structure: ModelStructure, snap: dict) -> "ConfidenceState":
        cs = cls(structure, snap["delta"], snap["k"])
        for i, (n, s) in enumerate(zip(snap["reward_n"], snap["reward_sum"])):
            cs.reward_n[i] = np.array(n, dtype=np.int64).reshape(cs.reward_n[i].shape)
            cs.reward_sum[i] = np.array(s, dtype=float).reshape(cs.reward_sum[i].shape)
        for j in range(1, structure.phi):
            cs.trans_n[j] = np.array(snap["trans_n"][j], dtype=np.int64).reshape(cs.trans_n[j].shape)
            cs.trans_counts[j] = np.array(snap["trans_counts"][j], dtype=np.int64).reshape(cs.trans_counts[j].shape)
        return cs

    @classmethod
    def from_json(cls, structure: ModelStructure, text: str) -> "ConfidenceState":
        return cls.from_snapshot(structure, json.loads(text))
