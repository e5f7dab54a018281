"""Cost networks, elimination orders and max-sum variable elimination.

For fixed weights, an action a and a step l, the quantity

    max_s  sum_i Rbar_i(s[Z_i], a)
           + sum_j ( -w_j^(l) h_j(s[Z_j]) + w_j^(l+1) E_j(s[Pa_j], a, sign w_j^(l+1)) )

is a maximum of a sum of small factors.  Two routes compute it:

* ``generate_constraints`` writes the elimination out as an explicit linear
  system (u-variables, >= constraints, provenance) whose minimum equals the
  maximum above; it is solved by forward propagation or by the simplex core.
* ``eliminate_max`` runs the same elimination directly on numpy arrays,
  batched over all actions and steps, and keeps argmax tables for backtracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import FactoredSpace, Scope, WeightMatrix, factor_array, make_scope, scope_cards, unrank
from .errors import ConfigError, InvariantError
from .optimism import OptimisticTables, sign_index


# ------------------------------------------------------------- cost network
@dataclass(frozen=True)
class CostNetwork:
    """Undirected co-occurrence graph over the m state variables."""

    m: int
    adj: tuple[frozenset, ...]

    def edges(self) -> set[tuple[int, int]]:
        return {(u, v) for u in range(self.m) for v in self.adj[u] if u < v}

    def degree(self, v: int) -> int:
        return len(self.adj[v])


def build_cost_network(scopes: Iterable[Sequence[int]], m: int) -> CostNetwork:
    adj = [set() for _ in range(m)]
    for sc in scopes:
        sc = make_scope(sc, m)
        for u in sc:
            adj[u].update(v for v in sc if v != u)
    return CostNetwork(m, tuple(frozenset(a) for a in adj))


def induced_width(order: Sequence[int], network: CostNetwork) -> int:
    """Largest neighbour set met while eliminating ``order`` (clique size minus one)."""
    _check_permutation(order, network.m)
    adj = [set(a) for a in network.adj]
    width = 0
    for v in order:
        nbrs = adj[v]
        width = max(width, len(nbrs))
        for u in nbrs:
            adj[u].discard(v)
            adj[u].update(x for x in nbrs if x != u)
        adj[v] = set()
    return width


def _check_permutation(order: Sequence[int], m: int) -> None:
    if sorted(int(v) for v in order) != list(range(m)):
        raise ConfigError(f"elimination order {list(order)} is not a permutation of range({m})")


@dataclass(frozen=True)
class EliminationOrder:
    order: tuple[int, ...]
    width: int

    @classmethod
    def explicit(cls, order: Sequence[int], network: CostNetwork, omega_max: int | None = None) -> "EliminationOrder":
        order = tuple(int(v) for v in order)
        _check_permutation(order, network.m)
        w = induced_width(order, network)
        if omega_max is not None and w > omega_max:
            raise ConfigError(f"elimination order has induced width {w} > omega_max={omega_max}")
        return cls(order, w)

    def validate(self, network: CostNetwork) -> None:
        if induced_width(self.order, network) != self.width:
            raise ConfigError("stored induced width does not match the order")


def min_degree_order(network: CostNetwork, omega_max: int | None = None) -> EliminationOrder:
    """Greedy minimum-degree ordering; ties go to the lower original degree, then the lower index."""
    adj = [set(a) for a in network.adj]
    remaining = set(range(network.m))
    order, width = [], 0
    while remaining:
        v = min(remaining, key=lambda x: (len(adj[x]), network.degree(x), x))
        nbrs = adj[v]
        width = max(width, len(nbrs))
        for u in nbrs:
            adj[u].discard(v)
            adj[u].update(x for x in nbrs if x != u)
        adj[v] = set()
        remaining.discard(v)
        order.append(v)
    if omega_max is not None and width > omega_max:
        raise ConfigError(
            f"min-degree ordering has induced width {width} > omega_max={omega_max}; "
            "supply an explicit elimination order"
        )
    return EliminationOrder(tuple(order), width)


def oracle_scopes(structure) -> list[Scope]:
    """Scopes of all factors that enter the per-(a, l) maximisation."""
    scopes = list(structure.reward_scopes)
    for h in structure.basis.functions[1:]:
        scopes.append(h.value_scope)
        scopes.append(h.parent_scope)
    return [s for s in scopes if s]


def default_order(structure, omega_max: int | None = None) -> EliminationOrder:
    return min_degree_order(build_cost_network(oracle_scopes(structure), structure.space.m), omega_max)


# ---------------------------------------------------------- bracket factors
@dataclass(frozen=True)
class Seed:
    """A looked-up table entering the elimination: kind is reward / value / backup."""

    kind: str
    index: int
    scope: Scope
    values: np.ndarray = field(repr=False)


def bracket_seeds(w: WeightMatrix, ell: int, a: int, tables: OptimisticTables) -> tuple[list[Seed], float]:
    """Seeds for one (a, l) and the constant contributed by the constant basis."""
    st = tables.structure
    wl, wn = w.step(ell), w.step(ell + 1)
    seeds = [Seed("reward", i, z, tables.reward[i][:, a]) for i, z in enumerate(st.reward_scopes)]
    sgn = sign_index(wn)
    for j in range(1, st.phi):
        h = st.basis[j]
        seeds.append(Seed("value", j, h.value_scope, -wl[j] * h.table))
        seeds.append(Seed("backup", j, h.parent_scope, wn[j] * tables.expect[j][:, a, sgn[j]]))
    return seeds, float(-wl[0] + wn[0])


def batched_factors(w: WeightMatrix, tables: OptimisticTables) -> tuple[list[tuple[Scope, np.ndarray]], np.ndarray]:
    """Bracket factors for every (a, l) at once, each shaped (|A|, tau, *per-variable dims).

    Returns the factor list and the (|A|, tau) constant from the constant basis.
    """
    st = tables.structure
    sp = st.space
    A, tau = st.n_actions, w.tau
    W = w.w
    factors = []
    for i, z in enumerate(st.reward_scopes):
        # reward tables are (|Val|, A): move the action axis first
        factors.append((z, factor_array(tables.reward[i].T, sp, z, (A, 1))))
    sgn = sign_index(W[1:])  # (tau, phi): sign of w^(l+1) for l = 1..tau
    for j in range(1, st.phi):
        h = st.basis[j]
        val = -W[:tau, j][:, None] * h.table[None, :]  # (tau, |Val(Z_j)|)
        factors.append((h.value_scope, factor_array(val, sp, h.value_scope, (1, tau))))
        e = tables.expect[j]  # (|Val(Pa)|, A, 2)
        picked = e[:, :, sgn[:, j]]  # (|Val(Pa)|, A, tau)
        back = np.transpose(picked, (1, 2, 0)) * W[1:, j][None, :, None]
        factors.append((h.parent_scope, factor_array(back, sp, h.parent_scope, (A, tau))))
    const = np.broadcast_to(-W[:tau, 0] + W[1:, 0], (A, tau)).copy()
    return factors, const


@dataclass
class EliminationResult:
    """Batched maxima and the argmax tables needed for backtracking."""

    values: np.ndarray  # (|A|, tau)
    steps: list[tuple[int, np.ndarray]]
    m: int

    def argmax_state(self, a: int, ell: int) -> np.ndarray:
        s = np.zeros(self.m, dtype=np.int64)
        for v, arg in reversed(self.steps):
            lead = (a if arg.shape[0] > 1 else 0, ell - 1 if arg.shape[1] > 1 else 0)
            idx = lead + tuple(int(s[i]) if arg.shape[2 + i] > 1 else 0 for i in range(self.m))
            s[v] = arg[idx]
        return s


def eliminate_max(factors: list[tuple[Scope, np.ndarray]], const: np.ndarray, order: EliminationOrder,
                  m: int) -> EliminationResult:
    """Max-sum elimination over arrays with two leading batch axes."""
    nl = 2
    pool = [(set(sc), arr) for sc, arr in factors]
    terminal = np.array(const, dtype=float)
    steps = []
    for v in order.order:
        bucket = [f for f in pool if v in f[0]]
        if not bucket:
            continue
        pool = [f for f in pool if v not in f[0]]
        total = bucket[0][1]
        scope = set(bucket[0][0])
        for sc, arr in bucket[1:]:
            total = total + arr
            scope |= sc
        scope.discard(v)
        steps.append((v, np.argmax(total, axis=nl + v, keepdims=True)))
        mx = np.max(total, axis=nl + v, keepdims=True)
        if scope:
            pool.append((scope, mx))
        else:
            terminal = terminal + mx.reshape(mx.shape[:nl])
    for sc, arr in pool:
        if sc:
            raise ConfigError(f"elimination order misses variables {sorted(sc)}")
        terminal = terminal + arr.reshape(arr.shape[:nl])
    return EliminationResult(terminal, steps, m)


def batched_bracket_max(w: WeightMatrix, tables: OptimisticTables, order: EliminationOrder) -> EliminationResult:
    factors, const = batched_factors(w, tables)
    return eliminate_max(factors, const, order, tables.structure.space.m)


# --------------------------------------------------------- constraint system
@dataclass(frozen=True)
class Block:
    """u-variables introduced when eliminating ``var``; one per assignment of ``scope``."""

    id: int
    var: int
    scope: Scope
    offset: int
    size: int


@dataclass
class ConstraintSystem:
    """u_target >= const + sum(u_children) rows, plus seeds and the terminal pool.

    Minimising the sum of terminal u-variables (plus ``terminal_const``) gives
    the bracket maximum.  Row provenance records the elimination block, the
    residual-assignment rank and the eliminated variable's value.
    """

    space: FactoredSpace
    order: EliminationOrder
    seeds: list[Seed]
    blocks: list[Block]
    n_vars: int
    target: np.ndarray
    children: list[np.ndarray]
    const: np.ndarray
    row_block: np.ndarray
    row_resid: np.ndarray
    row_value: np.ndarray
    terminal_vars: list[int]
    terminal_const: float
    step_rows: list[tuple[int, int]]
    action: int = 0
    ell: int = 1

    @property
    def n_constraints(self) -> int:
        return int(self.target.size)

    def constraint_bound(self) -> int:
        """Sum over elimination steps of |Val(residual)| * card(eliminated var)."""
        cards = self.space.cards
        return sum(b.size * cards[b.var] for b in self.blocks)

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with the rows written as A u >= b."""
        A = np.zeros((self.n_constraints, self.n_vars))
        rows = np.arange(self.n_constraints)
        A[rows, self.target] = 1.0
        for (lo, hi), ch in zip(self.step_rows, self.children):
            for c in range(ch.shape[1]):
                np.add.at(A, (np.arange(lo, hi), ch[:, c]), -1.0)
        return A, self.const.copy()

    def objective(self, eta: float = 1.0) -> np.ndarray:
        """Unit weight on terminal variables and ``eta`` > 0 elsewhere.

        Every coefficient is positive, so the unique minimiser is the least
        feasible point, whose terminal sum is the bracket maximum.
        """
        c = np.full(self.n_vars, float(eta))
        c[self.terminal_vars] = 1.0
        return c

    def least_solution(self) -> np.ndarray:
        """Componentwise least feasible u, by forward propagation (children precede targets)."""
        u = np.full(self.n_vars, -np.inf)
        for (lo, hi), ch in zip(self.step_rows, self.children):
            rhs = self.const[lo:hi] + (u[ch].sum(axis=1) if ch.shape[1] else 0.0)
            np.maximum.at(u, self.target[lo:hi], rhs)
        return u

    def value(self, u: np.ndarray) -> float:
        return float(u[self.terminal_vars].sum() + self.terminal_const)

    def slacks(self, u: np.ndarray) -> np.ndarray:
        out = np.empty(self.n_constraints)
        for (lo, hi), ch in zip(self.step_rows, self.children):
            rhs = self.const[lo:hi] + (u[ch].sum(axis=1) if ch.shape[1] else 0.0)
            out[lo:hi] = u[self.target[lo:hi]] - rhs
        return out

    def dump(self, max_rows: int = 200) -> str:
        lines = [f"# constraint system: action={self.action} step={self.ell} order={list(self.order.order)}"]
        for s in self.seeds:
            lines.append(f"seed {s.kind}[{s.index}] scope={list(s.scope)} values={np.round(s.values, 6).tolist()}")
        lines.append(f"terminal_const = {self.terminal_const:.6g}")
        for b in self.blocks:
            lines.append(f"block e{b.id}: eliminate x{b.var}, residual scope {list(b.scope)}, u[{b.offset}:{b.offset + b.size}]")
        for r in range(min(self.n_constraints, max_rows)):
            blk = self.blocks[self.row_block[r]]
            step = self.row_block[r]
            lo = self.step_rows[step][0]
            ch = self.children[step][r - lo]
            rhs = " + ".join([f"{self.const[r]:.6g}"] + [f"u{c}" for c in ch])
            lines.append(f"u{self.target[r]} >= {rhs}    [x{blk.var}={self.row_value[r]}, resid#{self.row_resid[r]}]")
        if self.n_constraints > max_rows:
            lines.append(f"... {self.n_constraints - max_rows} more rows")
        lines.append("minimise " + " + ".join(f"u{v}" for v in self.terminal_vars) + " + terminal_const")
        return "\n".join(lines)


def _assignments(space: FactoredSpace, scope: Scope) -> np.ndarray:
    cards = scope_cards(space, scope)
    n = math.prod(cards)
    out = np.zeros((n, len(scope)), dtype=np.int64)
    for r in range(n):
        out[r] = unrank(r, cards)
    return out


def _local_rank(assign: np.ndarray, union: Scope, scope: Scope, space: FactoredSpace) -> np.ndarray:
    pos = {v: k for k, v in enumerate(union)}
    r = np.zeros(assign.shape[0], dtype=np.int64)
    radix = 1
    for v in scope:
        r += assign[:, pos[v]] * radix
        radix *= space.cards[v]
    return r


def generate_constraints(w: WeightMatrix, ell: int, a: int, tables: OptimisticTables,
                         order: EliminationOrder) -> ConstraintSystem:
    """Explicit elimination system for one (action, step)."""
    st = tables.structure
    sp = st.space
    _check_permutation(order.order, sp.m)
    if not 1 <= ell <= w.tau:
        raise ConfigError(f"step {ell} outside [1, {w.tau}]")
    seeds, const0 = bracket_seeds(w, ell, a, tables)
    # pool entries: (scope, kind, payload); payload = seed values or Block
    pool: list[tuple[Scope, str, object]] = []
    terminal_const = const0
    for s in seeds:
        if s.scope:
            pool.append((s.scope, "seed", s.values))
        else:
            terminal_const += float(s.values[0])
    blocks: list[Block] = []
    n_vars = 0
    targets, consts, children, rblock, rresid, rvalue, step_rows = [], [], [], [], [], [], []
    terminal_vars: list[int] = []
    n_rows = 0
    for v in order.order:
        bucket = [f for f in pool if v in f[0]]
        if not bucket:
            continue
        pool = [f for f in pool if v not in f[0]]
        union = tuple(sorted(set().union(*(set(f[0]) for f in bucket))))
        resid = tuple(x for x in union if x != v)
        assign = _assignments(sp, union)
        size = math.prod(scope_cards(sp, resid))
        blk = Block(len(blocks), v, resid, n_vars, size)
        blocks.append(blk)
        n_vars += size
        rres = _local_rank(assign, union, resid, sp)
        c = np.zeros(assign.shape[0])
        ch = []
        for sc, kind, payload in bucket:
            loc = _local_rank(assign, union, sc, sp)
            if kind == "seed":
                c += payload[loc]
            else:
                ch.append(payload.offset + loc)
        targets.append(blk.offset + rres)
        consts.append(c)
        children.append(np.stack(ch, axis=1) if ch else np.zeros((assign.shape[0], 0), dtype=np.int64))
        rblock.append(np.full(assign.shape[0], blk.id))
        rresid.append(rres)
        rvalue.append(assign[:, union.index(v)])
        step_rows.append((n_rows, n_rows + assign.shape[0]))
        n_rows += assign.shape[0]
        if resid:
            pool.append((resid, "block", blk))
        else:
            terminal_vars.append(blk.offset)
    if pool:
        raise ConfigError("elimination order misses variables " + str(sorted(set().union(*(set(f[0]) for f in pool)))))
    cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt))
    return ConstraintSystem(
        space=sp, order=order, seeds=seeds, blocks=blocks, n_vars=n_vars,
        target=cat(targets, np.int64), children=children, const=cat(consts, float),
        row_block=cat(rblock, np.int64), row_resid=cat(rresid, np.int64), row_value=cat(rvalue, np.int64),
        terminal_vars=terminal_vars, terminal_const=terminal_const, step_rows=step_rows, action=a, ell=ell,
    )


def backtrack_state(system: ConstraintSystem, u: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Read a maximising state off the constraints that are tight at ``u``.

    Blocks are visited in reverse creation order; each residual assignment is
    already fixed by later eliminations, so exactly one group of rows applies.
    Variables in no scope stay 0.
    """
    sp = system.space
    slack = system.slacks(u)
    s = np.zeros(sp.m, dtype=np.int64)
    for blk in reversed(system.blocks):
        lo, hi = system.step_rows[blk.id]
        r = 0
        radix = 1
        for x in blk.scope:
            r += int(s[x]) * radix
            radix *= sp.cards[x]
        rows = np.arange(lo, hi)[system.row_resid[lo:hi] == r]
        tight = rows[slack[rows] <= tol * (1.0 + abs(u[blk.offset + r]))]
        if tight.size == 0:
            raise InvariantError(
                f"no tight constraint for block e{blk.id} (x{blk.var}) residual #{r}; "
                f"min slack {slack[rows].min():.3g}\n" + system.dump()
            )
        s[blk.var] = system.row_value[tight[0]]
    return s
