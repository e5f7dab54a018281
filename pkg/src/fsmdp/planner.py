"""Optimistic planner: objective, separation oracle and cutting-plane drivers.

The planner looks for per-step weights w minimising sum_s V_1(s) subject to

    V_l(s) >= sum_i Rbar_i(s[Z_i], a) + sum_j w_j^(l+1) E_j(s[Pa_j], a)   for all s, a, l,
    ||w^(l)||_1 <= W,

where E_j is the optimistic expectation of h_j picked by the sign of the
weight.  The constraint family is exponential in the number of state
variables; the separation oracle checks it through variable elimination and
returns a violated constraint as a hyperplane when it fails.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from .core import Basis, FactoredSpace, WeightMatrix, counting_factor, rank_rows
from .elimination import (
    ConstraintSystem,
    EliminationOrder,
    backtrack_state,
    batched_bracket_max,
    default_order,
    generate_constraints,
)
from .errors import ConfigError, InfeasibleError, InvariantError, SolverError
from .estimation import ConfidenceState, ModelStructure
from .optimism import OptimisticTables, build_tables, sign_index
from .simplex import linprog_geq

DEFAULT_MARGIN = 1e-12


# ------------------------------------------------------------------ objective
def objective_coefficients(space: FactoredSpace, basis: Basis, tau: int, rho=None) -> np.ndarray:
    """Linear objective over the (tau, phi) free weights.

    Uniform form: coefficient of w_j^(1) is g(Z_j) * sum_z h_j(z), the total of
    h_j over the joint space without enumerating it.  With ``rho`` (an initial
    distribution) the coefficient is E_rho[h_j(s[Z_j])] instead.
    """
    c = np.zeros((tau, basis.phi))
    for j, h in enumerate(basis):
        if rho is None:
            c[0, j] = counting_factor(space, h.value_scope) * float(h.table.sum())
        else:
            margs = rho.variable_marginals(space)
            p = np.ones(1)
            for v in h.value_scope:  # outer product in canonical (lowest-fastest) order
                p = np.outer(margs[v], p).ravel()
            c[0, j] = float(p @ h.table)
    return c


def evaluate_objective(w: WeightMatrix, space: FactoredSpace, basis: Basis, rho=None) -> float:
    """sum_s V_1(s) (or its rho-expectation), computed scope by scope."""
    return float(np.sum(objective_coefficients(space, basis, w.tau, rho) * w.free))


# ---------------------------------------------------------------- hyperplanes
@dataclass(frozen=True)
class Hyperplane:
    """hp(w) = <coef, w.free> + offset; every feasible w has hp(w) <= 0."""

    coef: np.ndarray
    offset: float
    kind: str
    key: tuple = ()

    def __call__(self, w) -> float:
        x = w.free if isinstance(w, WeightMatrix) else np.asarray(w).reshape(self.coef.shape)
        return float(np.sum(self.coef * x) + self.offset)


def bracket_hyperplane(state: np.ndarray, a: int, ell: int, signs: np.ndarray,
                       tables: OptimisticTables, tau: int) -> Hyperplane:
    """The (s, a, l) constraint with the optimistic marginals of the given sign pattern fixed.

    ``signs`` holds the PLUS/MINUS index per basis function for w^(l+1).
    """
    st = tables.structure
    state = np.asarray(state, dtype=np.int64)
    coef = np.zeros((tau, st.phi))
    offset = sum(float(tables.reward[i][st.reward_rank(i, state), a]) for i in range(st.l))
    coef[ell - 1, 0] = -1.0
    if ell < tau:
        coef[ell, 0] = 1.0
    for j in range(1, st.phi):
        coef[ell - 1, j] = -float(st.basis[j].table[st.value_rank(j, state)])
        if ell < tau:
            coef[ell, j] = float(tables.expect[j][st.parent_rank(j, state), a, signs[j]])
    key = ("bracket", tuple(int(v) for v in state), int(a), int(ell), tuple(int(x) for x in signs))
    return Hyperplane(coef, offset, "bracket", key)


def norm_hyperplane(ell: int, signs: np.ndarray, W: float, tau: int) -> Hyperplane:
    coef = np.zeros((tau, signs.size))
    coef[ell - 1] = signs
    return Hyperplane(coef, -float(W), "norm", ("norm", int(ell), tuple(int(x) for x in signs)))


def hyperplane_from_key(key: tuple, tables: OptimisticTables, W: float, tau: int) -> Hyperplane:
    if key[0] == "norm":
        return norm_hyperplane(key[1], np.array(key[2], dtype=float), W, tau)
    return bracket_hyperplane(np.array(key[1]), key[2], key[3], np.array(key[4]), tables, tau)


# -------------------------------------------------------------- LP utilities
def solve_small_lp(system: ConstraintSystem, tol: float = 1e-9):
    """Minimum of the terminal sum of ``system`` via the simplex core.

    Returns (value, tight row indices, u).  The LP objective puts a positive
    weight on every u-variable, so its unique optimum is the least feasible
    point; its terminal sum is the required minimum and every u-variable has
    a tight defining row.
    """
    A, b = system.dense()
    if system.n_vars == 0:
        return system.terminal_const, np.zeros(0, dtype=np.int64), np.zeros(0)
    try:
        res = linprog_geq(system.objective(), A, b, tight_tol=tol)
    except SolverError as exc:
        raise SolverError(str(exc), system.dump()) from None
    return system.value(res.x), res.tight, res.x


def extract_violating_state(system: ConstraintSystem, u: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Walk the elimination backwards through tight rows to a full maximising state."""
    return backtrack_state(system, u, tol)


# ------------------------------------------------------------------- oracle
@dataclass
class OracleResult:
    feasible: bool
    hyperplane: Hyperplane | None = None
    kappa: np.ndarray | None = None
    state: np.ndarray | None = None
    action: int | None = None
    step: int | None = None
    violation: float = 0.0


class SeparationOracle:
    """Strong separation oracle for the optimistic constraint family.

    ``route`` selects how each (a, l) maximum is computed: ``"elimination"``
    (batched array elimination), ``"system"`` (explicit constraint system,
    forward propagation) or ``"simplex"`` (explicit system solved by the LP core).
    """

    def __init__(self, tables: OptimisticTables, W: float, order: EliminationOrder | None = None,
                 margin: float = DEFAULT_MARGIN, route: str = "elimination", trace: TextIO | None = None,
                 steps=None):
        self.tables = tables
        self.structure = tables.structure
        self.W = float(W)
        self.order = order if order is not None else default_order(self.structure)
        self.margin = margin
        if route not in ("elimination", "system", "simplex"):
            raise ConfigError(f"unknown oracle route {route!r}")
        self.route = route
        self.trace = trace
        self.calls = 0
        tau = self.structure.tau
        self.steps = tuple(range(1, tau + 1)) if steps is None else tuple(int(x) for x in steps)
        if not self.steps or any(not 1 <= x <= tau for x in self.steps):
            raise ConfigError(f"oracle steps {self.steps} outside [1, {tau}]")
        self._step_mask = np.zeros(tau, dtype=bool)
        self._step_mask[[x - 1 for x in self.steps]] = True
        self._reward_scale = sum(float(np.abs(r).max()) for r in tables.reward)

    def tolerance(self, w: WeightMatrix) -> float:
        return self.margin * (1.0 + float(np.abs(w.free).sum()) * self.structure.basis.G + self._reward_scale)

    def kappa(self, w: WeightMatrix):
        """(|A|, tau) array of bracket maxima and a callable giving the maximiser."""
        st = self.structure
        if self.route == "elimination":
            res = batched_bracket_max(w, self.tables, self.order)
            return res.values, res.argmax_state
        A, tau = st.n_actions, w.tau
        vals = np.empty((A, tau))
        states = {}
        vals[:] = -np.inf
        for ell in self.steps:
            for a in range(A):
                sysm = generate_constraints(w, ell, a, self.tables, self.order)
                if self.route == "system":
                    u = sysm.least_solution()
                    vals[a, ell - 1] = sysm.value(u)
                else:
                    vals[a, ell - 1], _, u = solve_small_lp(sysm)
                states[(a, ell)] = (sysm, u)
        return vals, lambda a, ell: extract_violating_state(*states[(a, ell)])

    def __call__(self, w: WeightMatrix) -> OracleResult:
        self.calls += 1
        tau = w.tau
        norms = w.norms()
        excess = np.where(self._step_mask, norms - self.W, -np.inf)
        if excess.max() > self.margin * (1.0 + self.W):
            ell = int(np.argmax(excess)) + 1
            signs = np.where(w.step(ell) < 0, -1.0, 1.0)
            hp = norm_hyperplane(ell, signs, self.W, tau)
            out = OracleResult(False, hp, None, None, None, ell, float(excess.max()))
            self._log(w, out)
            return out
        kappa, argmax = self.kappa(w)
        if not self._step_mask.all():
            kappa = np.where(self._step_mask[None, :], kappa, -np.inf)
        top = float(kappa.max())
        if top <= self.tolerance(w):
            out = OracleResult(True, None, kappa, violation=top)
            self._log(w, out)
            return out
        # lexicographic (l, a) among maximisers
        flat = np.flatnonzero(kappa.T.ravel() == top)[0]
        ell, a = divmod(int(flat), kappa.shape[0])
        ell += 1
        s = argmax(a, ell)
        signs = sign_index(w.step(ell + 1))
        hp = bracket_hyperplane(s, a, ell, signs, self.tables, tau)
        if abs(hp(w) - top) > 1e-8 * (1.0 + abs(top)):
            raise InvariantError(f"cut value {hp(w)} does not match bracket maximum {top}")
        out = OracleResult(False, hp, kappa, s, a, ell, top)
        self._log(w, out)
        return out

    def _log(self, w: WeightMatrix, res: OracleResult) -> None:
        if self.trace is None:
            return
        rec = {"call": self.calls, "query": w.free.tolist(), "feasible": res.feasible,
               "violation": res.violation}
        if res.hyperplane is not None:
            rec.update(kind=res.hyperplane.kind, step=res.step, action=res.action,
                       state=None if res.state is None else res.state.tolist(),
                       coef=res.hyperplane.coef.tolist(), offset=res.hyperplane.offset)
        self.trace.write(json.dumps(rec) + "\n")


def separation_oracle(w: WeightMatrix, tables: OptimisticTables, order: EliminationOrder | None, W: float,
                      margin: float = DEFAULT_MARGIN) -> OracleResult:
    return SeparationOracle(tables, W, order, margin)(w)


def trivial_feasible_point(tables: OptimisticTables, tau: int, W: float) -> WeightMatrix | None:
    """Constant-basis-only weights w_0^(l) = (tau - l + 1) * max_s,a sum_i Rbar_i.

    Every bracket is then <= 0.  Returns None if the point leaves the W-ball.
    """
    top = sum(float(r.max()) for r in tables.reward)
    steps = np.zeros((tau, tables.structure.phi))
    steps[:, 0] = (tau - np.arange(tau)) * top
    if abs(top) * tau > W:
        return None
    return WeightMatrix.from_steps(steps, W)


# ----------------------------------------------------------------- ellipsoid
@dataclass
class EllipsoidState:
    center: np.ndarray
    B: np.ndarray
    iteration: int = 0
    best_x: np.ndarray | None = None
    best_value: float = math.inf
    logdet: float = 0.0
    logdet_history: list[float] = field(default_factory=list)

    @property
    def P(self) -> np.ndarray:
        """Shape matrix: the ellipsoid is {x : (x - c)' P^-1 (x - c) <= 1}."""
        return self.B @ self.B.T

    def width(self, g: np.ndarray) -> float:
        """sqrt(g' P g), the half-width of the ellipsoid along g."""
        return float(np.linalg.norm(self.B.T @ g))


@dataclass
class SolveInfo:
    method: str
    iterations: int
    oracle_calls: int
    objective: float
    lower_bound: float = -math.inf
    budget: int = 0
    stop: str = ""
    cuts: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    active: list = field(default_factory=list)
    basis_keys: list | None = None


def ellipsoid_budget(n: int, R: float, Phi: float, eps: float) -> int:
    """2 n (n+1) ln(3 R Phi / eps), at least one iteration."""
    ratio = 3.0 * R * max(Phi, 1e-300) / eps
    return max(1, int(math.ceil(2 * n * (n + 1) * math.log(max(ratio, math.e)))))


def _ellipsoid_cut(state: EllipsoidState, g: np.ndarray, alpha: float, n: int) -> None:
    """Deep cut {x : g.x <= g.c - alpha sqrt(g'Pg)}, applied to the factor B (P = B B')."""
    Bg = state.B.T @ g
    p = Bg / np.linalg.norm(Bg)
    gh = state.B @ p
    if n == 1:
        state.center = state.center - 0.5 * (1 + alpha) * gh
        shrink = 0.5 * (1 - alpha)
        state.B = state.B * shrink
        state.logdet += 2 * math.log(shrink)
        return
    state.center = state.center - (1 + n * alpha) / (n + 1) * gh
    scale = n * n * (1 - alpha * alpha) / (n * n - 1.0)
    rank1 = 2 * (1 + n * alpha) / ((n + 1) * (1 + alpha))
    # B' = sqrt(scale) B (I - (1 - sqrt(1 - rank1)) p p')
    state.B = math.sqrt(scale) * (state.B - (1 - math.sqrt(1 - rank1)) * np.outer(gh, p))
    state.logdet += n * math.log(scale) + math.log(1 - rank1)


@dataclass
class WeightSlice:
    """Affine coordinates for the search: every free step, or a single step with the rest held at ``base``."""

    tau: int
    phi: int
    W: float
    step: int | None = None
    base: np.ndarray | None = None

    def __post_init__(self):
        if self.step is not None:
            if not 1 <= self.step <= self.tau:
                raise ConfigError(f"slice step {self.step} outside [1, {self.tau}]")
            self.base = np.zeros((self.tau, self.phi)) if self.base is None else np.array(self.base, dtype=float)

    @property
    def n(self) -> int:
        return self.phi if self.step is not None else self.tau * self.phi

    def lift(self, x: np.ndarray) -> WeightMatrix:
        if self.step is None:
            return WeightMatrix.from_steps(np.asarray(x).reshape(self.tau, self.phi), self.W)
        steps = self.base.copy()
        steps[self.step - 1] = x
        return WeightMatrix.from_steps(steps, self.W)

    def coords(self, w: WeightMatrix) -> np.ndarray:
        return w.free.ravel().copy() if self.step is None else w.step(self.step).copy()

    def restrict(self, hp: Hyperplane) -> tuple[np.ndarray, float]:
        """(g, rhs) such that hp(lift(x)) <= 0 reads g.x <= rhs."""
        if self.step is None:
            return hp.coef.ravel(), -hp.offset
        g = hp.coef[self.step - 1]
        rest = float(np.sum(hp.coef * self.base) - g @ self.base[self.step - 1])
        return g, -hp.offset - rest


def cutting_plane_solve(objective: np.ndarray, oracle: Callable[[WeightMatrix], OracleResult], tau: int, phi: int,
                        W: float, eps: float, initial: WeightMatrix | None = None,
                        max_iter: int | None = None, space: WeightSlice | None = None
                        ) -> tuple[WeightMatrix, SolveInfo, EllipsoidState]:
    """Sliding-objective ellipsoid method over the free weights (or a ``space`` slice of them).

    Feasibility cuts come from the oracle; after each feasible center the
    objective cut c.x <= best is applied (deep cut when the center is not
    the incumbent).  The run stops when the iteration budget is spent, when
    the ellipsoid certifies best - min_E c.x <= eps, or when it degenerates.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    space = space if space is not None else WeightSlice(tau, phi, W)
    n = space.n
    c = np.asarray(objective, dtype=float).ravel()
    if c.size != n:
        raise ConfigError(f"objective has {c.size} coefficients, search space has {n}")
    R = W * math.sqrt(n)
    Phi = float(np.linalg.norm(c))
    budget = ellipsoid_budget(n, R, Phi, eps) if max_iter is None else max_iter
    st = EllipsoidState(np.zeros(n), np.eye(n) * R, logdet=2 * n * math.log(R) if R > 0 else 0.0)
    if initial is not None:
        res = oracle(initial)
        if res.feasible:
            st.best_x = space.coords(initial)
            st.best_value = float(c @ st.best_x)
    calls = 1 if initial is not None else 0
    stop = "budget"
    lower = -math.inf
    while st.iteration < budget:
        res = oracle(space.lift(st.center))
        calls += 1
        if res.feasible:
            val = float(c @ st.center)
            if val < st.best_value:
                st.best_value, st.best_x = val, st.center.copy()
            g, rhs = c, st.best_value
        else:
            g, rhs = space.restrict(res.hyperplane)
        gw = st.width(g)
        if gw <= 1e-150:
            stop = "degenerate"
            break
        alpha = (float(g @ st.center) - rhs) / gw
        if Phi > 0 and st.best_x is not None:
            lower = max(lower, float(c @ st.center) - st.width(c))
            if st.best_value - lower <= eps:
                stop = "certified"
                break
        if alpha >= 1.0:
            stop = "exhausted"
            break
        _ellipsoid_cut(st, g, max(alpha, 0.0), n)
        st.logdet_history.append(st.logdet)
        st.iteration += 1
    if st.best_x is None:
        raise InfeasibleError("ellipsoid never met a feasible point within its budget")
    w = space.lift(st.best_x)
    info = SolveInfo("ellipsoid", st.iteration, calls, st.best_value, lower, budget, stop)
    return w, info, st


# -------------------------------------------------------------------- Kelley
def kelley_solve(objective: np.ndarray, oracle: Callable[[WeightMatrix], OracleResult], tau: int, phi: int,
                 W: float, warm: list[Hyperplane] = (), max_iter: int = 10_000,
                 space: WeightSlice | None = None, warm_basis: list[tuple] | None = None
                 ) -> tuple[WeightMatrix, SolveInfo]:
    """Outer approximation: minimise over the box plus collected cuts until the oracle accepts.

    Every cut is valid for the true feasible set, so the LP value is a lower
    bound throughout and the first accepted LP optimum is an exact optimum.
    ``warm_basis`` lists the row identities (``("box", r)`` or cut keys) of a
    previous optimal LP basis to start the first LP from.
    """
    space = space if space is not None else WeightSlice(tau, phi, W)
    n = space.n
    c = np.asarray(objective, dtype=float).ravel()
    if c.size != n:
        raise ConfigError(f"objective has {c.size} coefficients, search space has {n}")
    cuts: list[Hyperplane] = list(warm)
    keys = {hp.key for hp in cuts}
    rows = [space.restrict(hp) for hp in cuts]
    box_A = np.vstack([np.eye(n), -np.eye(n)])
    box_b = np.full(2 * n, -float(W))
    hint = None
    if warm_basis is not None:
        pos = {hp.key: 2 * n + i for i, hp in enumerate(cuts)}
        idx = [key[1] if key[0] == "box" else pos.get(key, -1) for key in warm_basis]
        hint = idx if min(idx, default=-1) >= 0 else None
    calls = 0
    for it in range(1, max_iter + 1):
        if rows:
            G = np.array([g for g, _ in rows])
            rhs = np.array([r for _, r in rows])
            A = np.vstack([box_A, -G])
            b = np.concatenate([box_b, -rhs])
        else:
            A, b = box_A, box_b
        lp = linprog_geq(c, A, b, basis_hint=hint)
        hint = lp.basis
        wm = space.lift(lp.x)
        res = oracle(wm)
        calls += 1
        if res.feasible:
            active = [cuts[t - 2 * n] for t in lp.tight if t >= 2 * n]
            basis_keys = [("box", int(t)) if t < 2 * n else cuts[t - 2 * n].key for t in lp.basis]
            return wm, SolveInfo("kelley", it, calls, float(c @ lp.x), float(c @ lp.x), max_iter, "optimal", cuts,
                                 active=active, basis_keys=basis_keys)
        hp = res.hyperplane
        if hp.key in keys:
            raise SolverError(f"cutting plane repeated a cut {hp.key}; LP tolerance too loose")
        keys.add(hp.key)
        cuts.append(hp)
        rows.append(space.restrict(hp))
    raise SolverError(f"Kelley method did not converge in {max_iter} iterations")


# -------------------------------------------------------------------- planner
@dataclass
class PlanResult:
    w: WeightMatrix
    tables: OptimisticTables
    info: SolveInfo


class Planner:
    """Builds the episode's optimistic tables once and solves for the weights.

    ``formulation`` is ``"multilevel"`` (default) or ``"joint"``.  The joint
    form minimises sum_s V_1(s) over all steps at once, which fixes V_1 but
    leaves the later steps anywhere in the feasible set.  The multilevel form
    solves step tau first and works backwards, each step minimising its own
    sum_s V_l(s) with the later weights held fixed, so every V_l is the
    least value the basis allows given V_(l+1).

    ``method`` is ``"ellipsoid"`` or ``"kelley"``; the latter keeps the
    identities of the cuts active at the previous episode's optimum and
    regenerates them against the new tables as a warm start.
    """

    def __init__(self, structure: ModelStructure, W: float, order: EliminationOrder | None = None,
                 method: str = "ellipsoid", margin: float = DEFAULT_MARGIN, clip_rewards: bool = True,
                 rho=None, trace: TextIO | None = None, route: str = "elimination",
                 formulation: str = "multilevel"):
        if method not in ("ellipsoid", "kelley"):
            raise ConfigError(f"unknown planner method {method!r}")
        if formulation not in ("multilevel", "joint"):
            raise ConfigError(f"unknown planner formulation {formulation!r}")
        self.structure = structure
        self.W = float(W)
        self.order = order if order is not None else default_order(structure)
        self.method = method
        self.formulation = formulation
        self.margin = margin
        self.clip_rewards = clip_rewards
        self.rho = rho
        self.trace = trace
        self.route = route
        self.objective = objective_coefficients(structure.space, structure.basis, structure.tau, rho)
        self._warm_keys: dict[int | None, list[tuple]] = {}
        self._warm_basis: dict[int | None, list[tuple] | None] = {}
        self.last: PlanResult | None = None

    def _oracle(self, tables: OptimisticTables, steps=None) -> SeparationOracle:
        return SeparationOracle(tables, self.W, self.order, self.margin, self.route, self.trace, steps)

    def level_eps(self, eps: float, ell: int) -> float:
        """Accuracy for step ``ell``: an excess d at a later step lifts every earlier V by at most d,
        so the later steps share eps / 2 after scaling by the state count in the objective."""
        tau = self.structure.tau
        if tau == 1:
            return eps
        if ell == 1:
            return eps / 2
        return eps / (2 * (tau - 1) * max(1.0, abs(float(self.objective[0, 0]))))

    def plan_tables(self, tables: OptimisticTables, eps: float) -> PlanResult:
        if self.formulation == "joint":
            return self._plan_joint(tables, eps)
        return self._plan_multilevel(tables, eps)

    def _plan_joint(self, tables: OptimisticTables, eps: float) -> PlanResult:
        tau, phi = self.structure.tau, self.structure.phi
        oracle = self._oracle(tables)
        if self.method == "kelley":
            warm = [hyperplane_from_key(k, tables, self.W, tau) for k in self._warm_keys.get(None, [])]
            w, info = kelley_solve(self.objective, oracle, tau, phi, self.W, warm,
                                   warm_basis=self._warm_basis.get(None))
            self._warm_keys[None] = [hp.key for hp in info.active]
            self._warm_basis[None] = info.basis_keys
        else:
            init = trivial_feasible_point(tables, tau, self.W)
            w, info, _ = cutting_plane_solve(self.objective, oracle, tau, phi, self.W, eps, init)
        return PlanResult(w, tables, info)

    def _plan_multilevel(self, tables: OptimisticTables, eps: float) -> PlanResult:
        tau, phi = self.structure.tau, self.structure.phi
        c = self.objective[0]
        steps = np.zeros((tau, phi))
        infos = []
        for ell in range(tau, 0, -1):
            space = WeightSlice(tau, phi, self.W, ell, steps)
            oracle = self._oracle(tables, (ell,))
            if self.method == "kelley":
                warm = [hyperplane_from_key(k, tables, self.W, tau) for k in self._warm_keys.get(ell, [])]
                w, info = kelley_solve(c, oracle, tau, phi, self.W, warm, space=space,
                                       warm_basis=self._warm_basis.get(ell))
                self._warm_keys[ell] = [hp.key for hp in info.active]
                self._warm_basis[ell] = info.basis_keys
            else:
                init = level_feasible_point(oracle, space)
                w, info, _ = cutting_plane_solve(c, oracle, tau, phi, self.W, self.level_eps(eps, ell), init,
                                                 space=space)
            steps[ell - 1] = w.step(ell)
            infos.append(info)
        w = WeightMatrix.from_steps(steps, self.W)
        top = infos[-1]
        info = SolveInfo(self.method, sum(i.iterations for i in infos), sum(i.oracle_calls for i in infos),
                         float(c @ steps[0]), top.lower_bound, sum(i.budget for i in infos), top.stop,
                         [hp for i in infos for hp in i.cuts], infos)
        return PlanResult(w, tables, info)

    def plan(self, confidence: ConfidenceState, eps: float) -> tuple[WeightMatrix, OptimisticTables]:
        tables = build_tables(confidence, clip=self.clip_rewards)
        res = self.plan_tables(tables, eps)
        self.last = res
        return res.w, res.tables


def level_feasible_point(oracle: SeparationOracle, space: WeightSlice) -> WeightMatrix | None:
    """Constant-only weights for one step: w_0 = largest bracket with that step's weights at zero.

    Every bracket of that step is then <= 0.  None if the point leaves the W-ball.
    """
    zero = space.lift(np.zeros(space.n))
    kappa, _ = oracle.kappa(zero)
    top = float(kappa[:, space.step - 1].max())
    if abs(top) > space.W:
        return None
    x = np.zeros(space.n)
    x[0] = top
    return space.lift(x)


def value_table(w: WeightMatrix, space: FactoredSpace, basis: Basis, states: np.ndarray) -> np.ndarray:
    """(tau + 1, S) table of V_l(s) = sum_j w_j^(l) h_j(s[Z_j]) over the given state rows."""
    H = np.stack([h.table[rank_rows(states, h.value_scope, space)] for h in basis], axis=1)
    return w.w @ H.T
