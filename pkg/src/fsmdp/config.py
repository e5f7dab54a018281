"""Experiment configuration: schema, validation and construction of the runtime objects.

Configs are JSON.  Tables are given as (nested) arrays whose assignment axes
follow the canonical mixed-radix order (lowest variable index fastest).
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import Basis, BasisFunction, FactoredSpace, scope_size
from .elimination import EliminationOrder, build_cost_network, oracle_scopes
from .env import (
    Environment,
    InitialDistribution,
    JointTransitionSpec,
    RewardComponentSpec,
    TransitionCluster,
    make_safe_action_family,
    make_two_state_env,
)
from .errors import ConfigError
from .estimation import ModelStructure

SCOPE_EQUALITY = (
    "scope-equality assumption: the transition cluster scopes and the basis value scopes must be the same sets"
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RewardCfg(_Strict):
    scope: list[int]
    means: list[list[float]]  # (|Val(scope)|, |A|)
    sigma: float = 0.0
    C: float = 1.0
    low: float = 0.0


class ClusterCfg(_Strict):
    scope: list[int]
    parents: list[int]
    table: Optional[list] = None  # (|Val(parents)|, |A|, |Val(scope)|)
    successors: Optional[list[list[int]]] = None  # (|Val(parents)|, |A|)

    @model_validator(mode="after")
    def _one_form(self):
        if (self.table is None) == (self.successors is None):
            raise ValueError("a cluster needs exactly one of 'table' or 'successors'")
        return self


class TransitionCfg(_Strict):
    components: list[list[ClusterCfg]]
    weights: Optional[list[float]] = None


class InitialCfg(_Strict):
    kind: Literal["uniform", "point", "product"] = "uniform"
    state: Optional[list[int]] = None
    marginals: Optional[list[list[float]]] = None


class InlineEnvCfg(_Strict):
    cards: list[int]
    n_actions: int = 2
    tau: int
    rewards: list[RewardCfg]
    transition: TransitionCfg
    initial: InitialCfg = InitialCfg()


class GeneratorEnvCfg(_Strict):
    generator: Literal["two-state", "safe-action"]
    params: dict[str, Any] = Field(default_factory=dict)


class FileEnvCfg(_Strict):
    file: str


class BasisFnCfg(_Strict):
    value_scope: list[int]
    parent_scope: list[int]
    table: list[float]


class BasisCfg(_Strict):
    """``explicit`` lists the functions; ``tabular`` puts one indicator per
    assignment of every cluster scope; ``random`` draws ``size`` uniform
    tables per cluster scope from ``seed``.  The constant function is always
    prepended."""

    kind: Literal["explicit", "tabular", "random"] = "explicit"
    functions: list[BasisFnCfg] = Field(default_factory=list)
    G: Optional[float] = None
    size: int = 1
    seed: int = 0


class ExperimentConfig(_Strict):
    environment: Union[GeneratorEnvCfg, FileEnvCfg, InlineEnvCfg]
    basis: BasisCfg
    order: Union[Literal["min-degree"], list[int]] = "min-degree"
    W: float
    delta: float = 0.1
    sigma: Optional[float] = None
    C: Optional[float] = None
    K: int = 100
    seeds: list[int] = Field(default_factory=lambda: [0])
    output_dir: str = "results"
    rho_weighted: bool = False
    unclipped_rewards: bool = False
    method: Literal["ellipsoid", "kelley"] = "ellipsoid"
    formulation: Literal["multilevel", "joint"] = "multilevel"
    workers: int = 1
    snapshot_every: int = 0
    planner_trace: bool = False
    track_coverage: bool = True

    @field_validator("W")
    @classmethod
    def _w_positive(cls, v):
        if not v > 0 or not math.isfinite(v):
            raise ValueError("W must be a positive finite number")
        return v

    @field_validator("delta")
    @classmethod
    def _delta_range(cls, v):
        if not 0 < v < 1:
            raise ValueError("delta must lie in (0, 1)")
        return v

    @field_validator("K", "workers")
    @classmethod
    def _positive(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v or len(set(v)) != len(v):
            raise ValueError("seeds must be a nonempty list of distinct integers")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        env = build_environment(self)
        basis = build_basis(self, env)
        check_scopes(env, basis)
        C_total = sum(max(r.C, 0.0) for r in env.rewards)
        if self.W < env.tau * C_total:
            raise ValueError(f"W = {self.W} is below tau * sum(C) = {env.tau * C_total}")
        if isinstance(self.order, list):
            _explicit_order(self.order, env, basis)
        return self

    # -------------------------------------------------------------- helpers
    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def environment_obj(self) -> Environment:
        return build_environment(self)

    def basis_obj(self, env: Environment | None = None) -> Basis:
        return build_basis(self, env if env is not None else build_environment(self))

    def elimination_order(self, env: Environment | None = None) -> EliminationOrder | None:
        if self.order == "min-degree":
            return None
        env = env if env is not None else build_environment(self)
        return _explicit_order(self.order, env, build_basis(self, env))


# ---------------------------------------------------------------- builders
def _explicit_order(order, env: Environment, basis: Basis) -> EliminationOrder:
    structure = ModelStructure.from_env(env, basis)
    return EliminationOrder.explicit(order, build_cost_network(oracle_scopes(structure), env.space.m))


def _inline_env(cfg: InlineEnvCfg, sigma=None, C=None) -> Environment:
    space = FactoredSpace(tuple(cfg.cards), cfg.n_actions)
    rewards = tuple(
        RewardComponentSpec(tuple(r.scope), np.array(r.means, dtype=float),
                            sigma=r.sigma if sigma is None else sigma, C=r.C if C is None else C, low=r.low)
        for r in cfg.rewards
    )
    comps = []
    for comp in cfg.transition.components:
        comps.append(tuple(
            TransitionCluster(tuple(c.scope), tuple(c.parents),
                              table=None if c.table is None else np.array(c.table, dtype=float),
                              successors=None if c.successors is None else np.array(c.successors))
            for c in comp))
    weights = None if cfg.transition.weights is None else np.array(cfg.transition.weights)
    init = cfg.initial
    rho = InitialDistribution(init.kind, None if init.state is None else tuple(init.state),
                              None if init.marginals is None else tuple(np.array(p) for p in init.marginals))
    return Environment(space, rewards, JointTransitionSpec(tuple(comps), weights), rho, cfg.tau)


def build_environment(cfg: ExperimentConfig) -> Environment:
    spec = cfg.environment
    if isinstance(spec, FileEnvCfg):
        path = Path(spec.file)
        try:
            spec = InlineEnvCfg.model_validate_json(path.read_text())
        except OSError as exc:
            raise ConfigError(f"environment.file: cannot read {path}: {exc}") from None
    if isinstance(spec, InlineEnvCfg):
        return _inline_env(spec, cfg.sigma, cfg.C)
    params = dict(spec.params)
    if spec.generator == "two-state":
        if cfg.sigma is not None:
            params["sigma"] = cfg.sigma
        if cfg.C is not None:
            raise ConfigError("C is fixed by the two-state generator's variant")
        return make_two_state_env(**params)
    if cfg.sigma is not None or cfg.C is not None:
        raise ConfigError("sigma and C are fixed by the safe-action generator")
    return make_safe_action_family(**params)


def build_basis(cfg: ExperimentConfig, env: Environment) -> Basis:
    b = cfg.basis
    sp = env.space
    parents = _cluster_parents(env)
    if b.kind == "explicit":
        fns = [BasisFunction(tuple(f.value_scope), tuple(f.parent_scope), np.array(f.table, dtype=float))
               for f in b.functions]
    elif b.kind == "tabular":
        fns = []
        for sc in env.transition.cluster_scopes:
            n = scope_size(sp, sc)
            fns.extend(BasisFunction(sc, parents[sc], np.eye(n)[r]) for r in range(n))
    else:
        rng = np.random.default_rng(b.seed)
        fns = [BasisFunction(sc, parents[sc], rng.uniform(0.0, 1.0, scope_size(sp, sc)))
               for sc in env.transition.cluster_scopes for _ in range(b.size)]
    G = b.G if b.G is not None else max([1.0] + [f.max_abs() for f in fns])
    basis = Basis.with_constant(fns, G)
    basis.validate(sp)
    return basis


def _cluster_parents(env: Environment) -> dict:
    """Union of each cluster's parents over all mixture components."""
    out: dict = {}
    for comp in env.transition.components:
        for c in comp:
            out[c.scope] = tuple(sorted(set(out.get(c.scope, ())) | set(c.parents)))
    return out


def check_scopes(env: Environment, basis: Basis) -> None:
    """Basis value scopes equal the cluster scopes, and each basis parent scope covers its cluster's parents."""
    clusters = set(env.transition.cluster_scopes)
    values = {h.value_scope for h in basis.functions[1:]}
    if values != clusters:
        raise ConfigError(f"{SCOPE_EQUALITY}; clusters {sorted(clusters)} vs basis {sorted(values)}")
    parents = _cluster_parents(env)
    for j, h in enumerate(basis.functions[1:], start=1):
        missing = set(parents[h.value_scope]) - set(h.parent_scope)
        if missing:
            raise ConfigError(f"basis function {j}: parent scope {h.parent_scope} misses cluster parents "
                              f"{sorted(missing)}")


# ------------------------------------------------------------------ loading
def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if 0 < exc.lineno <= len(text.splitlines()) else ""
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}") from None
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_validation(exc)}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))
