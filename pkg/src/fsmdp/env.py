"""Ground-truth factored environments and the two demonstration generators.

Transitions are specified as a product of cluster conditionals
P_k(s'[C_k] | s[Pa_k], a), or a finite mixture of such products that share
one cluster layout.  Mixtures make clusters correlated while keeping exact
marginalisation cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    BRUTE_FORCE_LIMIT,
    FactoredSpace,
    Scope,
    all_states,
    make_scope,
    rank_rows,
    scope_cards,
    scope_size,
    unrank,
)
from .errors import ConfigError

ROW_TOL = 1e-12
NOISE_CLIP = 4.0


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class RewardComponentSpec:
    """One individually observed reward component R_i over state scope ``scope``.

    ``mean_table`` has shape (|Val(scope)|, |A|); means must lie in [low, C].
    """

    scope: Scope
    mean_table: np.ndarray = field(repr=False)
    sigma: float = 0.0
    C: float = 1.0
    low: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(self.scope))
        t = np.array(self.mean_table, dtype=float)
        if t.ndim == 1:
            t = t[:, None]
        t.setflags(write=False)
        object.__setattr__(self, "mean_table", t)
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.low > self.C:
            raise ConfigError(f"reward bounds: low={self.low} exceeds C={self.C}")

    def validate(self, space: FactoredSpace) -> None:
        if make_scope(self.scope, space) != self.scope:
            raise ConfigError(f"reward scope {self.scope} must be sorted and duplicate-free")
        want = (scope_size(space, self.scope), space.n_actions)
        if self.mean_table.shape != want:
            raise ConfigError(f"reward table shape {self.mean_table.shape}, expected {want}")
        if np.any(self.mean_table > self.C + 1e-12) or np.any(self.mean_table < self.low - 1e-12):
            raise ConfigError(f"reward means must lie in [{self.low}, {self.C}]")


@dataclass(frozen=True)
class TransitionCluster:
    """Conditional P(s'[scope] | s[parents], a) for one cluster.

    Either a dense ``table`` of shape (|Val(parents)|, |A|, |Val(scope)|) or an
    integer ``successors`` array of shape (|Val(parents)|, |A|) for
    deterministic clusters too large to store densely.
    """

    scope: Scope
    parents: Scope
    table: np.ndarray | None = field(default=None, repr=False)
    successors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(self.scope))
        object.__setattr__(self, "parents", tuple(self.parents))
        if (self.table is None) == (self.successors is None):
            raise ConfigError("cluster needs exactly one of table / successors")
        if self.table is not None:
            t = np.array(self.table, dtype=float)
            t.setflags(write=False)
            object.__setattr__(self, "table", t)
            cdf = np.cumsum(t, axis=-1)
            cdf[..., -1] = 1.0
            cdf.setflags(write=False)
            object.__setattr__(self, "_cdf", cdf)
        else:
            s = np.array(self.successors, dtype=np.int64)
            s.setflags(write=False)
            object.__setattr__(self, "successors", s)

    @property
    def deterministic(self) -> bool:
        return self.successors is not None

    def validate(self, space: FactoredSpace) -> None:
        for name, sc in (("scope", self.scope), ("parents", self.parents)):
            if make_scope(sc, space) != sc:
                raise ConfigError(f"cluster {name} {sc} must be sorted and duplicate-free")
        npa, nout = scope_size(space, self.parents), scope_size(space, self.scope)
        if self.table is not None:
            want = (npa, space.n_actions, nout)
            if self.table.shape != want:
                raise ConfigError(f"cluster table shape {self.table.shape}, expected {want}")
            if np.any(self.table < -ROW_TOL):
                raise ConfigError("cluster table has negative probabilities")
            if np.any(np.abs(self.table.sum(axis=-1) - 1.0) > ROW_TOL):
                raise ConfigError("cluster table rows must sum to 1")
        else:
            want = (npa, space.n_actions)
            if self.successors.shape != want:
                raise ConfigError(f"cluster successors shape {self.successors.shape}, expected {want}")
            if np.any(self.successors < 0) or np.any(self.successors >= nout):
                raise ConfigError("cluster successors out of range")

    def rows(self, pa_ranks: np.ndarray, a: int, n_out: int) -> np.ndarray:
        """Dense conditional rows for an array of parent ranks."""
        pa_ranks = np.asarray(pa_ranks)
        if self.table is not None:
            return self.table[pa_ranks, a]
        out = np.zeros(pa_ranks.shape + (n_out,))
        np.put_along_axis(out, self.successors[pa_ranks, a][..., None], 1.0, axis=-1)
        return out

    def sample(self, pa_rank: int, a: int, u: float) -> int:
        if self.successors is not None:
            return int(self.successors[pa_rank, a])
        return int(np.searchsorted(self._cdf[pa_rank, a], u, side="right"))


@dataclass(frozen=True)
class JointTransitionSpec:
    """Product (one component) or mixture of products sharing a cluster layout."""

    components: tuple[tuple[TransitionCluster, ...], ...]
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        comps = tuple(tuple(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ConfigError("transition needs at least one component")
        w = np.ones(1) if self.weights is None else np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if w.shape != (len(comps),) or np.any(w < 0) or abs(w.sum() - 1.0) > ROW_TOL:
            raise ConfigError("mixture weights must be nonnegative, one per component, summing to 1")
        layout = [c.scope for c in comps[0]]
        for comp in comps[1:]:
            if [c.scope for c in comp] != layout:
                raise ConfigError("mixture components must share the same cluster scopes")
        object.__setattr__(self, "_cdf", np.cumsum(w))

    @classmethod
    def product(cls, clusters: Sequence[TransitionCluster]) -> "JointTransitionSpec":
        return cls((tuple(clusters),), np.ones(1))

    @classmethod
    def mixture(cls, components, weights) -> "JointTransitionSpec":
        return cls(tuple(tuple(c) for c in components), weights)

    @property
    def form(self) -> str:
        return "product" if len(self.components) == 1 else "mixture"

    @property
    def cluster_scopes(self) -> list[Scope]:
        return [c.scope for c in self.components[0]]

    def validate(self, space: FactoredSpace) -> None:
        seen: list[int] = []
        for sc in self.cluster_scopes:
            if not sc:
                raise ConfigError("cluster scopes must be nonempty")
            seen.extend(sc)
        if sorted(seen) != list(range(space.m)):
            raise ConfigError("cluster scopes must partition the state variables")
        for comp in self.components:
            for c in comp:
                c.validate(space)


@dataclass(frozen=True)
class InitialDistribution:
    """Point mass, uniform, or product of per-variable marginals."""

    kind: str = "uniform"
    state: tuple[int, ...] | None = None
    marginals: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    def validate(self, space: FactoredSpace) -> None:
        if self.kind == "point":
            if self.state is None or len(self.state) != space.m:
                raise ConfigError("rho: point mass needs a full state")
            if any(not 0 <= v < c for v, c in zip(self.state, space.cards)):
                raise ConfigError("rho: point-mass state out of range")
        elif self.kind == "product":
            if self.marginals is None or len(self.marginals) != space.m:
                raise ConfigError("rho: product form needs one marginal per variable")
            for p, c in zip(self.marginals, space.cards):
                p = np.asarray(p, dtype=float)
                if p.shape != (c,) or np.any(p < 0) or abs(p.sum() - 1) > ROW_TOL:
                    raise ConfigError("rho: invalid per-variable marginal")
        elif self.kind != "uniform":
            raise ConfigError(f"rho: unknown kind {self.kind!r}")

    def variable_marginals(self, space: FactoredSpace) -> list[np.ndarray]:
        if self.kind == "uniform":
            return [np.full(c, 1.0 / c) for c in space.cards]
        if self.kind == "point":
            out = []
            for v, c in zip(self.state, space.cards):
                e = np.zeros(c)
                e[v] = 1.0
                out.append(e)
            return out
        return [np.asarray(p, dtype=float) for p in self.marginals]

    def sample(self, space: FactoredSpace, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "point":
            return np.array(self.state, dtype=np.int64)
        if self.kind == "uniform":
            return rng.integers(0, np.array(space.cards))
        return np.array([rng.choice(len(p), p=p) for p in self.marginals], dtype=np.int64)

    def probabilities(self, space: FactoredSpace, states: np.ndarray) -> np.ndarray:
        margs = self.variable_marginals(space)
        p = np.ones(states.shape[0])
        for i, mi in enumerate(margs):
            p = p * mi[states[:, i]]
        return p


@dataclass(frozen=True)
class Environment:
    space: FactoredSpace
    rewards: tuple[RewardComponentSpec, ...]
    transition: JointTransitionSpec
    rho: InitialDistribution
    tau: int

    def __post_init__(self):
        object.__setattr__(self, "rewards", tuple(self.rewards))
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        if not self.rewards:
            raise ConfigError("at least one reward component is required")
        for r in self.rewards:
            r.validate(self.space)
        self.transition.validate(self.space)
        self.rho.validate(self.space)

    @property
    def n_components(self) -> int:
        return len(self.rewards)

    # ------------------------------------------------------------- sampling
    def reset(self, rng) -> np.ndarray:
        return self.rho.sample(self.space, _as_rng(rng))

    def step(self, state, action: int, rng) -> tuple[np.ndarray, np.ndarray]:
        """Sample the next state and the per-component reward observations."""
        rng = _as_rng(rng)
        state = np.asarray(state, dtype=np.int64)
        obs = np.empty(len(self.rewards))
        for i, r in enumerate(self.rewards):
            z = int(rank_rows(state[None, :], r.scope, self.space)[0])
            obs[i] = r.mean_table[z, action] + _truncated_noise(r.sigma, rng)
        tr = self.transition
        c = 0 if len(tr.components) == 1 else int(np.searchsorted(tr._cdf, rng.random(), side="right"))
        c = min(c, len(tr.components) - 1)
        nxt = np.empty_like(state)
        for cl in tr.components[c]:
            pa = int(rank_rows(state[None, :], cl.parents, self.space)[0])
            out = cl.sample(pa, action, rng.random() if not cl.deterministic else 0.0)
            nxt[list(cl.scope)] = unrank(out, scope_cards(self.space, cl.scope))
        return nxt, obs

    # ------------------------------------------------------- exact quantities
    def marginal_table(self, value_scope: Sequence[int], parent_scope: Sequence[int]) -> np.ndarray:
        """Exact P(s'[value_scope] | s[parent_scope], a) as (|Val(Pa)|, |A|, |Val(Z)|).

        ``value_scope`` must be a union of cluster scopes and every cluster
        parent involved must lie inside ``parent_scope``.
        """
        sp = self.space
        vs = make_scope(value_scope, sp)
        ps = make_scope(parent_scope, sp)
        layout = self.transition.cluster_scopes
        used = [k for k, sc in enumerate(layout) if set(sc) <= set(vs)]
        covered = sorted(v for k in used for v in layout[k])
        if covered != list(vs):
            raise ConfigError(f"scope {vs} is not a union of transition cluster scopes {layout}")
        for comp in self.transition.components:
            for k in used:
                if not set(comp[k].parents) <= set(ps):
                    raise ConfigError(
                        f"cluster parents {comp[k].parents} not contained in parent scope {ps}"
                    )
        pa_states = np.zeros((scope_size(sp, ps), sp.m), dtype=np.int64)
        for r in range(pa_states.shape[0]):
            pa_states[r, list(ps)] = unrank(r, scope_cards(sp, ps))
        out_states = np.zeros((scope_size(sp, vs), sp.m), dtype=np.int64)
        for r in range(out_states.shape[0]):
            out_states[r, list(vs)] = unrank(r, scope_cards(sp, vs))
        table = np.zeros((pa_states.shape[0], sp.n_actions, out_states.shape[0]))
        for wgt, comp in zip(self.transition.weights, self.transition.components):
            for a in range(sp.n_actions):
                prob = np.ones((pa_states.shape[0], out_states.shape[0]))
                for k in used:
                    cl = comp[k]
                    rows = cl.rows(rank_rows(pa_states, cl.parents, sp), a, scope_size(sp, cl.scope))
                    prob *= rows[:, rank_rows(out_states, cl.scope, sp)]
                table[:, a, :] += wgt * prob
        return table

    def marginalize_joint(self, value_scope, parent_scope, z: Sequence[int], action: int) -> np.ndarray:
        """Exact marginal over Val(value_scope) given parent assignment ``z``."""
        ps = make_scope(parent_scope, self.space)
        pr = 0
        radix = 1
        for v, c in zip(z, scope_cards(self.space, ps)):
            pr += int(v) * radix
            radix *= c
        return self.marginal_table(value_scope, ps)[pr, action]

    def transition_block(self, state_ranks: np.ndarray, action: int, limit: int = BRUTE_FORCE_LIMIT) -> np.ndarray:
        """Full joint rows P(. | s, a) for the given joint state ranks, shape (len, S)."""
        sp = self.space
        states = all_states(sp, limit)
        cur = states[np.asarray(state_ranks)]
        out = np.zeros((cur.shape[0], states.shape[0]))
        for wgt, comp in zip(self.transition.weights, self.transition.components):
            prob = np.ones_like(out)
            for cl in comp:
                rows = cl.rows(rank_rows(cur, cl.parents, sp), action, scope_size(sp, cl.scope))
                prob *= rows[:, rank_rows(states, cl.scope, sp)]
            out += wgt * prob
        return out

    def mean_reward_matrix(self, states: np.ndarray) -> np.ndarray:
        """Summed mean reward for each state row and action, shape (S, |A|)."""
        total = np.zeros((states.shape[0], self.space.n_actions))
        for r in self.rewards:
            total += r.mean_table[rank_rows(states, r.scope, self.space)]
        return total


def _truncated_noise(sigma: float, rng: np.random.Generator) -> float:
    if sigma == 0.0:
        return 0.0
    while True:
        x = rng.normal()
        if abs(x) <= NOISE_CLIP:
            return sigma * x


# ----------------------------------------------------------------- generators
def make_safe_action_family(m: int, seed, n_opt: int | None = None) -> Environment:
    """Horizon-one family where action 0 is safe and action 1 is a random trap.

    Action 0 sends every state to a fixed ``S_opt`` with reward 0.  Action 1
    sends state i to a random j(i) != S_opt with reward drawn from {-1, -1/2}.
    """
    if not 1 <= m <= 20:
        raise ConfigError("safe-action family supports 1 <= m <= 20")
    rng = np.random.default_rng(seed)
    space = FactoredSpace((2,) * m, 2)
    S = 2**m
    opt = int(rng.integers(S)) if n_opt is None else int(n_opt)
    others = rng.integers(S - 1, size=S)
    jumps = others + (others >= opt)
    succ = np.stack([np.full(S, opt), jumps], axis=1)
    penalty = rng.choice([-1.0, -0.5], size=S)
    rewards = np.stack([np.zeros(S), penalty], axis=1)
    full = tuple(range(m))
    return Environment(
        space=space,
        rewards=(RewardComponentSpec(full, rewards, sigma=0.0, C=0.0, low=-1.0),),
        transition=JointTransitionSpec.product([TransitionCluster(full, full, successors=succ)]),
        rho=InitialDistribution("uniform"),
        tau=1,
    )


S_PENALTY, S_SAFE = 0, 1
RISKY, SAFE = 0, 1


def make_two_state_env(
    variant: str = "penalty",
    tau: int = 2,
    p_risk: float = 0.5,
    p_return: float = 1.0,
    sigma: float = 0.1,
) -> Environment:
    """One binary variable: value 0 is the penalised state s, value 1 is s'.

    From s' the risky action (index 0) falls to s with probability ``p_risk``
    and the safe action (index 1) stays put; from s both actions return to
    s' with probability ``p_return``.  The episode starts at s'.

    ``penalty``: r(s) = -1, r(s') = 0, so V* is identically 0 on s'.
    ``reward``:  r(s) = 0, r(s') = 1.
    """
    if variant == "penalty":
        means, C, low = np.array([[-1.0, -1.0], [0.0, 0.0]]), 0.0, -1.0
    elif variant == "reward":
        means, C, low = np.array([[0.0, 0.0], [1.0, 1.0]]), 1.0, 0.0
    else:
        raise ConfigError(f"unknown two-state variant {variant!r}")
    if not (0 <= p_risk <= 1 and 0 <= p_return <= 1):
        raise ConfigError("probabilities must lie in [0, 1]")
    table = np.zeros((2, 2, 2))
    table[S_PENALTY, :, S_SAFE] = p_return
    table[S_PENALTY, :, S_PENALTY] = 1 - p_return
    table[S_SAFE, RISKY] = [p_risk, 1 - p_risk]
    table[S_SAFE, SAFE] = [0.0, 1.0]
    return Environment(
        space=FactoredSpace((2,), 2),
        rewards=(RewardComponentSpec((0,), means, sigma=sigma, C=C, low=low),),
        transition=JointTransitionSpec.product([TransitionCluster((0,), (0,), table=table)]),
        rho=InitialDistribution("point", state=(S_SAFE,)),
        tau=tau,
    )


def random_product_env(
    space: FactoredSpace,
    rng,
    tau: int = 2,
    cluster_scopes: Sequence[Scope] | None = None,
    max_parents: int = 2,
    reward_scopes: Sequence[Scope] | None = None,
    sigma: float = 0.0,
    C: float = 1.0,
    n_mix: int = 1,
    dirichlet: float = 1.0,
) -> Environment:
    """Random environment for tests and experiments (rewards in [0, C])."""
    rng = _as_rng(rng)
    m = space.m
    if cluster_scopes is None:
        cluster_scopes = [(i,) for i in range(m)]
    parents = []
    for sc in cluster_scopes:
        k = int(rng.integers(1, max_parents + 1))
        extra = rng.choice(m, size=min(k, m), replace=False)
        parents.append(tuple(sorted(set(int(v) for v in extra) | {sc[0]})))
    comps = []
    for _ in range(n_mix):
        clusters = []
        for sc, pa in zip(cluster_scopes, parents):
            shape = (scope_size(space, pa), space.n_actions, scope_size(space, sc))
            t = rng.dirichlet(np.full(shape[-1], dirichlet), size=shape[:-1])
            clusters.append(TransitionCluster(tuple(sc), pa, table=t))
        comps.append(clusters)
    weights = rng.dirichlet(np.ones(n_mix)) if n_mix > 1 else np.ones(1)
    if reward_scopes is None:
        reward_scopes = [tuple(sorted(rng.choice(m, size=min(2, m), replace=False).tolist()))]
    rewards = tuple(
        RewardComponentSpec(
            tuple(sc),
            rng.uniform(0, C, size=(scope_size(space, tuple(sc)), space.n_actions)),
            sigma=sigma,
            C=C,
        )
        for sc in reward_scopes
    )
    return Environment(space, rewards, JointTransitionSpec(tuple(map(tuple, comps)), weights),
                       InitialDistribution("uniform"), tau)

