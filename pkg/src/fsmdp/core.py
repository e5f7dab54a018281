"""Factored state spaces, scoped assignments, basis functions and value weights.

Assignments over a scope are ranked in mixed radix with the *lowest* scope
index as the fastest-varying digit.  Every flat table in the package
(basis tables, reward tables, transition rows) is laid out in that order,
which is the same as numpy's Fortran order for an array whose axes follow
the scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ScaleError

Scope = tuple[int, ...]
Assignment = tuple[int, ...]

INT64_LIMIT = 2**63 - 1
BRUTE_FORCE_LIMIT = 2**14


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FactoredSpace:
    """State space S_1 x ... x S_m together with the action count."""

    cards: tuple[int, ...]
    n_actions: int = 2

    def __post_init__(self):
        cards = tuple(int(c) for c in self.cards)
        object.__setattr__(self, "cards", cards)
        if not cards:
            raise ConfigError("cards: a factored space needs at least one state variable")
        if any(c < 2 for c in cards):
            raise ConfigError(f"cards: every state variable needs cardinality >= 2, got {cards}")
        if int(self.n_actions) < 1:
            raise ConfigError("n_actions: at least one action is required")
        object.__setattr__(self, "n_actions", int(self.n_actions))

    @property
    def m(self) -> int:
        return len(self.cards)

    def joint_size(self, limit: int | None = INT64_LIMIT) -> int:
        size = math.prod(self.cards)
        if limit is not None and size > limit:
            raise ScaleError(size, limit)
        return size

    def is_enumerable(self, limit: int = BRUTE_FORCE_LIMIT) -> bool:
        return math.prod(self.cards) <= limit


def make_scope(indices: Iterable[int], space: FactoredSpace | int) -> Scope:
    """Validate and canonicalise a scope (sorted, duplicate-free, in range)."""
    m = space if isinstance(space, int) else space.m
    idx = [int(i) for i in indices]
    if len(set(idx)) != len(idx):
        raise ConfigError(f"scope {idx} contains duplicate indices")
    for i in idx:
        if i < 0 or i >= m:
            raise ConfigError(f"scope index {i} out of range for m={m}")
    return tuple(sorted(idx))


def scope_cards(space: FactoredSpace, scope: Scope) -> tuple[int, ...]:
    return tuple(space.cards[i] for i in scope)


def scope_size(space: FactoredSpace, scope: Scope) -> int:
    return math.prod(scope_cards(space, scope))


def rank(values: Sequence[int], cards: Sequence[int]) -> int:
    r, radix = 0, 1
    for v, c in zip(values, cards):
        r += int(v) * radix
        radix *= c
    return r


def unrank(r: int, cards: Sequence[int]) -> Assignment:
    out = []
    for c in cards:
        out.append(r % c)
        r //= c
    return tuple(out)


def enumerate_assignments(scope: Sequence[int], space: FactoredSpace) -> list[Assignment]:
    """All assignments to ``scope`` in canonical rank order."""
    scope = make_scope(scope, space)
    cards = scope_cards(space, scope)
    return [unrank(r, cards) for r in range(math.prod(cards))]


def project(state: Sequence[int], scope: Sequence[int]) -> Assignment:
    return tuple(state[i] for i in scope)


def all_states(space: FactoredSpace, limit: int = BRUTE_FORCE_LIMIT) -> np.ndarray:
    """Every joint state as rows of an (S, m) int array, in canonical rank order."""
    size = space.joint_size(limit)
    idx = np.arange(size)
    out = np.empty((size, space.m), dtype=np.int64)
    for k, c in enumerate(space.cards):
        out[:, k] = idx % c
        idx = idx // c
    return out


def rank_rows(states: np.ndarray, scope: Sequence[int], space: FactoredSpace) -> np.ndarray:
    """Vectorised ``rank(project(s, scope))`` for each row of ``states``."""
    states = np.atleast_2d(states)
    r = np.zeros(states.shape[0], dtype=np.int64)
    radix = 1
    for i in scope:
        r += states[:, i] * radix
        radix *= space.cards[i]
    return r


def counting_factor(space: FactoredSpace, value_scope: Sequence[int]) -> int:
    """Number of joint states sharing each assignment of ``value_scope``."""
    inside = set(make_scope(value_scope, space))
    g = 1
    for i, c in enumerate(space.cards):
        if i not in inside:
            g *= c
            if g > INT64_LIMIT:
                raise ScaleError(g, INT64_LIMIT)
    return g


@dataclass(frozen=True)
class BasisFunction:
    """Table-valued basis function h_j over ``value_scope``.

    ``parent_scope`` is the set of current-state variables the next-step
    marginal over ``value_scope`` conditions on.
    """

    value_scope: Scope
    parent_scope: Scope
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "value_scope", tuple(self.value_scope))
        object.__setattr__(self, "parent_scope", tuple(self.parent_scope))
        object.__setattr__(self, "table", _frozen(self.table).ravel())

    @property
    def is_constant(self) -> bool:
        return not self.value_scope and not self.parent_scope

    @property
    def factor_scope(self) -> Scope:
        """Scope of the oracle term -w h_j(s) + w' E[h_j]: value and parent variables."""
        return tuple(sorted(set(self.value_scope) | set(self.parent_scope)))

    def __call__(self, assignment: Sequence[int], space: FactoredSpace) -> float:
        return float(self.table[rank(assignment, scope_cards(space, self.value_scope))])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.table)))


def constant_basis() -> BasisFunction:
    return BasisFunction((), (), [1.0])


@dataclass(frozen=True)
class Basis:
    """Ordered basis h_0, ..., h_{phi-1}; index 0 is always the constant function."""

    functions: tuple[BasisFunction, ...]
    G: float

    def __post_init__(self):
        funcs = tuple(self.functions)
        object.__setattr__(self, "functions", funcs)
        if not funcs or not funcs[0].is_constant or funcs[0].table[0] != 1.0:
            raise ConfigError("basis: index 0 must be the constant function h0 = 1 with empty scopes")
        for j, h in enumerate(funcs[1:], start=1):
            if h.is_constant:
                raise ConfigError(f"basis[{j}]: only h0 may have empty scopes")
        bound = max(h.max_abs() for h in funcs)
        if bound > self.G + 1e-12:
            raise ConfigError(f"G: basis entries reach {bound}, above the declared bound G={self.G}")

    @classmethod
    def with_constant(cls, functions: Iterable[BasisFunction], G: float) -> "Basis":
        return cls((constant_basis(), *functions), G)

    @property
    def phi(self) -> int:
        return len(self.functions)

    def __len__(self):
        return len(self.functions)

    def __getitem__(self, j) -> BasisFunction:
        return self.functions[j]

    def __iter__(self):
        return iter(self.functions)

    def validate(self, space: FactoredSpace) -> None:
        for j, h in enumerate(self.functions):
            vs = make_scope(h.value_scope, space)
            ps = make_scope(h.parent_scope, space)
            if vs != h.value_scope or ps != h.parent_scope:
                raise ConfigError(f"basis[{j}]: scopes must be sorted and duplicate-free")
            if h.table.size != scope_size(space, vs):
                raise ConfigError(
                    f"basis[{j}]: table has {h.table.size} entries, Val(Z) has {scope_size(space, vs)}"
                )


@dataclass(frozen=True)
class WeightMatrix:
    """Per-step value weights; row ``l-1`` holds w^(l), row ``tau`` is pinned to zero."""

    w: np.ndarray
    W: float = math.inf

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] < 2:
            raise ConfigError("weights must have shape (tau + 1, phi)")
        if np.any(w[-1] != 0.0):
            raise ConfigError("w^(tau+1) must be identically zero")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_steps(cls, steps, W: float = math.inf) -> "WeightMatrix":
        """Build from a (tau, phi) array (or flat vector) of the free weights."""
        steps = np.asarray(steps, dtype=float)
        if steps.ndim == 1:
            raise ConfigError("from_steps needs a 2-d (tau, phi) array")
        return cls(np.vstack([steps, np.zeros((1, steps.shape[1]))]), W)

    @classmethod
    def zeros(cls, tau: int, phi: int, W: float = math.inf) -> "WeightMatrix":
        return cls(np.zeros((tau + 1, phi)), W)

    @property
    def tau(self) -> int:
        return self.w.shape[0] - 1

    @property
    def phi(self) -> int:
        return self.w.shape[1]

    @property
    def free(self) -> np.ndarray:
        """The (tau, phi) block of optimised weights."""
        return self.w[:-1]

    def step(self, ell: int) -> np.ndarray:
        return self.w[ell - 1]

    def norms(self) -> np.ndarray:
        return np.abs(self.free).sum(axis=1)

    def within_bound(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.norms() <= self.W + tol))


def eval_value(w: WeightMatrix, ell: int, state: Sequence[int], basis: Basis, space: FactoredSpace) -> float:
    """V_ell(s) = sum_j w_j^(ell) h_j(s[Z_j])."""
    if not 1 <= ell <= w.tau + 1:
        raise ConfigError(f"step {ell} outside [1, {w.tau + 1}]")
    if ell == w.tau + 1:
        return 0.0
    row = w.step(ell)
    return float(sum(row[j] * h(project(state, h.value_scope), space) for j, h in enumerate(basis)))


def basis_matrix(basis: Basis, space: FactoredSpace, states: np.ndarray) -> np.ndarray:
    """(S, phi) matrix of h_j(s[Z_j]) for the given state rows."""
    cols = [h.table[rank_rows(states, h.value_scope, space)] for h in basis]
    return np.stack(cols, axis=1)


def factor_array(flat: np.ndarray, space: FactoredSpace, scope: Scope, lead: tuple[int, ...] = ()) -> np.ndarray:
    """Reshape a canonical flat table (with optional leading batch axes) into a
    full-rank broadcastable array: ``lead + (card_i if i in scope else 1 for i in range(m))``."""
    flat = np.asarray(flat)
    cards = scope_cards(space, scope)
    arr = flat.reshape(lead + cards[::-1]) if cards else flat.reshape(lead)
    # reversed C-order reshape == Fortran order over the scope; put axes back in scope order
    nl = len(lead)
    if len(cards) > 1:
        arr = arr.transpose(tuple(range(nl)) + tuple(range(nl + len(cards) - 1, nl - 1, -1)))
    shape = list(lead) + [1] * space.m
    for i, c in zip(scope, cards):
        shape[nl + i] = c
    return arr.reshape(shape)
