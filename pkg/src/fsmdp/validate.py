"""Cross-checks of the optimized components against the brute-force oracles.

Each ``check_*`` function builds its own seeded instances, runs the fast path
and the oracle side by side and returns a :class:`CheckResult` with the
metrics it compared.  The ``oracle-suite`` CLI command and the acceptance
tests both call these.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import Basis, BasisFunction, FactoredSpace, WeightMatrix, all_states, basis_matrix
from .elimination import EliminationOrder, build_cost_network, generate_constraints, min_degree_order, oracle_scopes
from .env import (
    Environment,
    InitialDistribution,
    JointTransitionSpec,
    RewardComponentSpec,
    TransitionCluster,
    make_safe_action_family,
    make_two_state_env,
    random_product_env,
)
from .estimation import ConfidenceState, ModelStructure, true_model
from .learner import Learner, LearnerConfig
from .optimism import MINUS, PLUS, OptimisticTables, optimize_marginal, tables_from_model
from .oracles import (
    JointMDP,
    brute_force_bracket_max,
    exhaustive_constraint_slacks,
    exhaustive_lp_plan,
    naive_bracket,
    naive_objective,
    q_linearity_witness,
    tabular_vi,
    vertex_enum_transition_opt,
)
from .planner import (
    Planner,
    SeparationOracle,
    evaluate_objective,
    extract_violating_state,
    solve_small_lp,
    value_table,
)

TWO_STATE_W = 6.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.metrics.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name} ({self.seconds:.1f}s): {shown}"


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# -------------------------------------------------------- random instances
def _random_scope(rng, m: int, max_size: int, must=None) -> tuple[int, ...]:
    size = int(rng.integers(1, min(max_size, m) + 1))
    pick = set(int(v) for v in rng.choice(m, size=size, replace=False))
    if must is not None:
        pick |= set(must)
        while len(pick) > max_size:
            pick.discard(next(v for v in sorted(pick) if v not in must))
    return tuple(sorted(pick))


def random_structure(rng, m: int, tau: int = 2, n_actions: int = 2, scope_max: int = 3,
                     n_rewards: int | None = None, n_basis: int | None = None) -> ModelStructure:
    """Binary variables, random reward scopes and basis functions, every scope of size <= scope_max."""
    space = FactoredSpace((2,) * m, n_actions)
    l = int(rng.integers(1, 4)) if n_rewards is None else n_rewards
    nb = int(rng.integers(1, 5)) if n_basis is None else n_basis
    rscopes = [_random_scope(rng, m, scope_max) for _ in range(l)]
    fns = []
    for _ in range(nb):
        vs = _random_scope(rng, m, min(2, scope_max))
        ps = _random_scope(rng, m, scope_max, must=vs)
        fns.append(BasisFunction(vs, ps, rng.normal(size=2 ** len(vs))))
    basis = Basis.with_constant(fns, max(1.0, max(f.max_abs() for f in fns)))
    return ModelStructure(space, basis, tuple(rscopes), np.ones(l), np.full(l, 0.1), tau)


def random_tables(structure: ModelStructure, rng) -> OptimisticTables:
    """Optimistic tables with arbitrary rewards and random PLUS / MINUS rows.

    Each pair of rows is ordered so the PLUS row has the larger h-expectation,
    as it does for tables built from a confidence set.
    """
    st = structure
    A = st.n_actions
    reward = tuple(rng.uniform(-1.0, 1.0, (st.reward_size(i), A)) for i in range(st.l))
    trans, expect = [None], [None]
    for j in range(1, st.phi):
        K = st.value_size(j)
        t = rng.dirichlet(np.ones(K), size=(st.parent_size(j), A, 2))
        e = t @ st.basis[j].table
        swap = e[..., PLUS] < e[..., MINUS]
        t[swap] = t[swap][:, ::-1]
        trans.append(t)
        expect.append(t @ st.basis[j].table)
    return OptimisticTables(st, reward, tuple(trans), tuple(expect))


def random_weights(rng, tau: int, phi: int, scale: float = 1.0) -> WeightMatrix:
    return WeightMatrix.from_steps(rng.normal(scale=scale, size=(tau, phi)))


def _random_order(rng, structure: ModelStructure) -> EliminationOrder:
    net = build_cost_network(oracle_scopes(structure), structure.space.m)
    if rng.random() < 0.5:
        return min_degree_order(net)
    return EliminationOrder.explicit([int(v) for v in rng.permutation(structure.space.m)], net)


# -------------------------------------------------------------- criteria
@_timed
def check_elimination(n: int = 200, seed: int = 0, m_max: int = 10) -> CheckResult:
    """Constraint-system minimum (LP and forward propagation) and the batched path versus enumeration.

    The backtracked state is re-scored with the scalar bracket loop.
    """
    rng = np.random.default_rng(seed)
    worst_value = worst_state = 0.0
    pairs = 0
    for _ in range(n):
        st = random_structure(rng, int(rng.integers(1, m_max + 1)))
        tables = random_tables(st, rng)
        w = random_weights(rng, st.tau, st.phi)
        order = _random_order(rng, st)
        batched = SeparationOracle(tables, math.inf, order).kappa(w)[0]
        for ell in range(1, st.tau + 1):
            for a in range(st.n_actions):
                truth, _ = brute_force_bracket_max(w, tables, a, ell)
                sysm = generate_constraints(w, ell, a, tables, order)
                lp_val, _, u = solve_small_lp(sysm)
                fwd = sysm.value(sysm.least_solution())
                s_star = extract_violating_state(sysm, u)
                rescored = naive_bracket(w, tables, s_star, a, ell)
                scale = 1.0 + abs(truth)
                worst_value = max(worst_value, abs(lp_val - truth) / scale, abs(fwd - truth) / scale,
                                  abs(batched[a, ell - 1] - truth) / scale)
                worst_state = max(worst_state, abs(rescored - truth) / scale)
                pairs += 1
    ok = worst_value <= 1e-9 and worst_state <= 1e-9
    return CheckResult("elimination exactness", ok,
                       {"instances": n, "brackets": pairs, "max_value_err": worst_value,
                        "max_argmax_err": worst_state})


@_timed
def check_marginal(n: int = 100, seed: int = 0, support_max: int = 5) -> CheckResult:
    """Sort-and-boost optimistic marginal versus polytope vertex enumeration."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        K = int(rng.integers(1, support_max + 1))
        p = rng.dirichlet(np.ones(K))
        if K > 1 and rng.random() < 0.3:
            p[rng.integers(K)] = 0.0
            p /= p.sum()
        hw = float(rng.choice([0.0, rng.uniform(0, 0.2), rng.uniform(0, 1.2)]))
        h = rng.normal(size=K)
        if rng.random() < 0.3:
            h = np.round(h)  # ties
        sign = int(rng.choice([PLUS, MINUS]))
        d = h if sign == PLUS else -h
        fast = optimize_marginal(p, hw, h, sign)[0]
        ref = vertex_enum_transition_opt(p, hw, h, sign)
        worst = max(worst, abs(float(d @ fast) - float(d @ ref)))
    return CheckResult("optimistic marginal optimality", worst <= 1e-12, {"instances": n, "max_obj_err": worst})


def tabular_instance(seed: int = 3, W: float = 20.0):
    """8-state, two-action, horizon-two MDP with an indicator basis over the full joint."""
    rng = np.random.default_rng(seed)
    space = FactoredSpace((2, 2, 2), 2)
    full = (0, 1, 2)
    T = rng.dirichlet(np.ones(8), size=(8, 2))
    R = rng.uniform(0, 1, (8, 2))
    env = Environment(space, (RewardComponentSpec(full, R, 0.0, 1.0),),
                      JointTransitionSpec.product([TransitionCluster(full, full, table=T)]),
                      InitialDistribution(), 2)
    basis = Basis.with_constant([BasisFunction(full, full, np.eye(8)[k]) for k in range(8)], 1.0)
    return env, basis, W


@_timed
def check_planner_exactness(eps: float = 1e-3, seed: int = 3) -> CheckResult:
    """Ellipsoid planner on the indicator-basis instance at zero confidence width."""
    env, basis, W = tabular_instance(seed)
    model = true_model(env, basis)
    tables = tables_from_model(model)
    vi_total = float(tabular_vi(env).V[0].sum())
    _, lp_value = exhaustive_lp_plan(tables, env.tau, W)
    res = Planner(model.structure, W, method="ellipsoid").plan_tables(tables, eps)
    obj = res.info.objective
    err_lp, err_vi = abs(obj - lp_value), abs(obj - vi_total)
    return CheckResult("planner exactness at zero width", err_lp <= eps and err_vi <= eps,
                       {"planner": obj, "exhaustive_lp": lp_value, "vi_total": vi_total,
                        "err_lp": err_lp, "err_vi": err_vi, "stop": res.info.stop})


def random_tiny_fsmdp(rng, m: int | None = None, tau: int = 2):
    m = int(rng.integers(2, 4)) if m is None else m
    space = FactoredSpace((2,) * m, 2)
    env = random_product_env(space, rng, tau=tau, sigma=0.1, C=1.0)
    parents = {c.scope: c.parents for c in env.transition.components[0]}
    fns = [BasisFunction(sc, parents[sc], rng.uniform(0, 1, 2))
           for sc in env.transition.cluster_scopes for _ in range(int(rng.integers(1, 3)))]
    return env, Basis.with_constant(fns, 1.0)


def _collect(env, conf: ConfidenceState, episodes: int, rng) -> None:
    for _ in range(episodes):
        s = env.reset(rng)
        for _ in range(env.tau):
            a = int(rng.integers(env.space.n_actions))
            nxt, obs = env.step(s, a, rng)
            conf.record_step(s, a, obs, nxt)
            s = nxt


@_timed
def check_optimism(n: int = 20, seed: int = 0, W: float = 10.0, delta: float = 0.1) -> CheckResult:
    """Planned values dominate the optimal values whenever the true model lies in the confidence set."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    done = skipped = 0
    while done < n:
        env, basis = random_tiny_fsmdp(rng)
        st = ModelStructure.from_env(env, basis)
        k = int(rng.integers(1, 200))
        conf = ConfidenceState(st, delta)
        _collect(env, conf, k - 1, rng)
        conf.k = k
        if not conf.contains_model(true_model(env, basis)):
            skipped += 1
            continue
        eps = math.sqrt(1.0 / k)
        w, _ = Planner(st, W, method="ellipsoid").plan(conf, eps)
        states = JointMDP(env).states
        v_hat = value_table(w, env.space, basis, states)[0]
        v_star = tabular_vi(env).V[0]
        worst = max(worst, float(np.max(v_star - (v_hat + eps))))
        done += 1
    return CheckResult("optimism", worst <= 1e-6,
                       {"instances": n, "max_shortfall": worst, "skipped_uncovered": skipped})


def _interior_point(tables: OptimisticTables, tau: int, margin: float) -> np.ndarray:
    top = sum(float(r.max()) for r in tables.reward)
    steps = np.zeros((tau, tables.structure.phi))
    steps[:, 0] = (tau - np.arange(tau)) * (top + margin)
    return steps


def _feasible(steps: np.ndarray, tables, W: float) -> bool:
    w = WeightMatrix.from_steps(steps, W)
    return bool(w.within_bound(0.0) and exhaustive_constraint_slacks(w, tables).min() >= 0.0)


def _sample_feasible(tables, tau: int, W: float, centre: np.ndarray, count: int, rng,
                     radius: float, max_draws: int = 200_000) -> np.ndarray:
    """Rejection sampling from a box around ``centre``; the radius shrinks while acceptance is poor."""
    out, draws, accepted_in_round, round_draws = [], 0, 0, 0
    while len(out) < count and draws < max_draws:
        x = centre + rng.uniform(-radius, radius, centre.shape)
        draws += 1
        round_draws += 1
        if _feasible(x, tables, W):
            out.append(x)
            accepted_in_round += 1
        if round_draws == 200:
            if accepted_in_round < 20:
                radius *= 0.5
            accepted_in_round = round_draws = 0
    return np.array(out)


def _near_boundary(oracle, inside: np.ndarray, outside: np.ndarray, W: float, feasible_side: bool) -> np.ndarray:
    """Bisect the segment between two points to within 1e-10 of the feasible set's boundary."""
    lo, hi = 0.0, 1.0
    if oracle(WeightMatrix.from_steps(outside, W)).feasible:
        return outside
    for _ in range(34):
        mid = 0.5 * (lo + hi)
        if oracle(WeightMatrix.from_steps(inside + mid * (outside - inside), W)).feasible:
            lo = mid
        else:
            hi = mid
    t = lo if feasible_side else hi
    return inside + t * (outside - inside)


@_timed
def check_oracle_soundness(n_instances: int = 20, queries: int = 10, n_feasible: int = 1000, seed: int = 0,
                           m_max: int = 10) -> CheckResult:
    """Feasible answers pass the exhaustive constraint check; every cut separates the query
    from a rejection-sampled cloud of feasible points."""
    rng = np.random.default_rng(seed)
    routes = ("elimination", "system", "simplex")
    worst_feasible_slack = math.inf
    worst_cut_on_feasible = -math.inf
    min_cut_at_query = math.inf
    counts = {"feasible": 0, "norm": 0, "bracket": 0}
    short = 0
    for inst in range(n_instances):
        st = random_structure(rng, int(rng.integers(1, m_max + 1)))
        tables = random_tables(st, rng)
        tau, phi = st.tau, st.phi
        G = st.basis.G
        centre = _interior_point(tables, tau, 1.0)
        radius = 1.5 / (G * phi)
        W = float(np.abs(centre).sum(axis=1).max() + 2.0 + phi * radius)
        cloud = _sample_feasible(tables, tau, W, centre, n_feasible, rng, radius)
        short += n_feasible - len(cloud)
        for q in range(queries):
            oracle = SeparationOracle(tables, W, route=routes[(inst + q) % 3])
            kind = q % 4
            if kind == 0:
                x = centre + rng.uniform(-3 * radius, 3 * radius, centre.shape)
            elif kind == 1:
                x = rng.uniform(-W, W, centre.shape)
            elif kind == 2:
                x = rng.uniform(-W, W, centre.shape) / phi
            else:
                x = _near_boundary(oracle, centre, rng.uniform(-W, W, centre.shape) / phi, W, q % 8 == 3)
            w = WeightMatrix.from_steps(x, W)
            res = oracle(w)
            if res.feasible:
                counts["feasible"] += 1
                slack = float(exhaustive_constraint_slacks(w, tables).min())
                worst_feasible_slack = min(worst_feasible_slack, slack)
                continue
            hp = res.hyperplane
            counts[hp.kind] += 1
            min_cut_at_query = min(min_cut_at_query, hp(w))
            if len(cloud):
                vals = np.array([hp(WeightMatrix.from_steps(y, W)) for y in cloud])
                worst_cut_on_feasible = max(worst_cut_on_feasible, float(vals.max()))
    ok = (worst_feasible_slack >= -1e-7 and min_cut_at_query > 0 and worst_cut_on_feasible <= 1e-7
          and short == 0 and counts["feasible"] > 0 and counts["bracket"] > 0)
    return CheckResult("oracle soundness", ok,
                       {**counts, "min_feasible_slack": worst_feasible_slack,
                        "min_cut_at_query": min_cut_at_query, "max_cut_on_feasible": worst_cut_on_feasible,
                        "missing_samples": short})


def _two_state_config(track_coverage: bool, delta: float = 0.1) -> LearnerConfig:
    return LearnerConfig(W=TWO_STATE_W, delta=delta, method="kelley", track_coverage=track_coverage)


@_timed
def check_coverage(n_seeds: int = 50, K: int = 500, delta: float = 0.1) -> CheckResult:
    """Fraction of seeded runs whose confidence set holds the true model at every episode."""
    env = make_two_state_env()
    basis = Basis.with_constant([BasisFunction((0,), (0,), np.array([0.0, 1.0]))], 1.0)
    covered = []
    for seed in range(n_seeds):
        learner = Learner(env, basis, _two_state_config(True, delta), seed=seed)
        for _ in range(K):
            learner.episode()
        covered.append(all(learner.covered))
    rate = float(np.mean(covered))
    return CheckResult("confidence coverage", rate >= 0.9,
                       {"runs": n_seeds, "episodes": K, "all_episode_coverage_rate": rate})


def two_state_regret(seed: int, K: int, delta: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """(per-episode regret, bound) arrays for one seeded run on the two-state environment."""
    env = make_two_state_env()
    basis = Basis.with_constant([BasisFunction((0,), (0,), np.array([0.0, 1.0]))], 1.0)
    learner = Learner(env, basis, _two_state_config(False, delta), seed=seed)
    for _ in range(K):
        learner.episode()
    return np.array(learner.trace.regret), np.array(learner.trace.bound)


@_timed
def check_regret(n_seeds: int = 20, K: int = 20_000, delta: float = 0.1) -> CheckResult:
    """Cumulative regret under the bound at power-of-two checkpoints, and decaying average regret."""
    checkpoints = [2**i for i in range(int(math.log2(K)) + 1)]
    below, regrets = [], []
    for seed in range(n_seeds):
        r, b = two_state_regret(seed, K, delta)
        cum = np.cumsum(r)
        below.append(all(cum[c - 1] < b[c - 1] for c in checkpoints))
        regrets.append(r)
    mean = np.mean(regrets, axis=0)
    early = float(mean[: max(1, K // 10)].mean())
    late = float(mean[K // 2 - 1:].mean())
    rate = float(np.mean(below))
    ok = rate >= 0.9 and late <= 0.5 * early
    return CheckResult("regret behaviour", ok,
                       {"seeds": n_seeds, "K": K, "below_bound_rate": rate, "early_avg": early,
                        "late_avg": late, "final_cum_mean": float(np.mean([r.sum() for r in regrets]))})


@_timed
def check_safe_family(ms=(4, 6, 8), n_seeds: int = 10, seed: int = 0) -> CheckResult:
    """Optimal value is identically zero, and the trap action's values defeat a fixed small basis."""
    rng = np.random.default_rng(seed)
    worst_v = 0.0
    witnesses = {}
    for m in ms:
        space = FactoredSpace((2,) * m, 2)
        basis = Basis.with_constant([BasisFunction((i,), (i,), rng.uniform(0, 1, 2)) for i in range(m)], 1.0)
        H = basis_matrix(basis, space, all_states(space))
        hits = 0
        for s in range(n_seeds):
            env = make_safe_action_family(m, s)
            vi = tabular_vi(env)
            worst_v = max(worst_v, float(np.abs(vi.V[0]).max()))
            r_h, r_aug, _ = q_linearity_witness(vi.Q[0][:, 1], H)
            hits += r_aug > r_h
        witnesses[m] = hits
    ok = worst_v <= 1e-12 and all(v > 0 for v in witnesses.values())
    return CheckResult("safe-action family", ok,
                       {"max_abs_V1": worst_v, **{f"witness_m{m}": f"{v}/{n_seeds}" for m, v in witnesses.items()}})


@_timed
def check_objective(n: int = 50, seed: int = 0, m_max: int = 10) -> CheckResult:
    """Counting-factor objective versus summing V_1 over every joint state."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        st = random_structure(rng, int(rng.integers(1, m_max + 1)))
        w = random_weights(rng, st.tau, st.phi)
        fast = evaluate_objective(w, st.space, st.basis)
        ref = naive_objective(w, st.space, st.basis)
        worst = max(worst, abs(fast - ref) / (1.0 + abs(ref)))
    return CheckResult("objective simplification", worst <= 1e-9, {"instances": n, "max_rel_err": worst})


# ------------------------------------------------------------------ suite
FULL = {
    "elimination": dict(n=200),
    "marginal": dict(n=100),
    "planner": dict(),
    "optimism": dict(n=20),
    "oracle": dict(n_instances=20, queries=10, n_feasible=1000),
    "coverage": dict(n_seeds=50, K=500),
    "regret": dict(n_seeds=20, K=20_000),
    "safe_family": dict(ms=(4, 6, 8), n_seeds=10),
    "objective": dict(n=50),
}

QUICK = {
    "elimination": dict(n=30, m_max=7),
    "marginal": dict(n=100),
    "planner": dict(),
    "optimism": dict(n=4),
    "oracle": dict(n_instances=3, queries=6, n_feasible=100, m_max=6),
    "coverage": dict(n_seeds=5, K=200),
    "regret": dict(n_seeds=2, K=2000),
    "safe_family": dict(ms=(4, 6), n_seeds=3),
    "objective": dict(n=20),
}

CHECKS = {
    "elimination": check_elimination,
    "marginal": check_marginal,
    "planner": check_planner_exactness,
    "optimism": check_optimism,
    "oracle": check_oracle_soundness,
    "coverage": check_coverage,
    "regret": check_regret,
    "safe_family": check_safe_family,
    "objective": check_objective,
}


# wall-clock budgets in seconds for the full-size runs
TIME_LIMITS = {
    "elimination": 60.0,
    "marginal": 5.0,
    "planner": 60.0,
    "optimism": 120.0,
    "oracle": 120.0,
    "coverage": 180.0,
    "regret": 600.0,
    "safe_family": 60.0,
    "objective": 10.0,
}


def run_check(name: str, quick: bool = False) -> CheckResult:
    """One check at full (or quick) size; a full run over its time budget fails."""
    res = CHECKS[name](**(QUICK if quick else FULL)[name])
    if not quick:
        limit = TIME_LIMITS[name]
        res.metrics["time_limit_s"] = limit
        if res.seconds > limit:
            res.passed = False
    return res


def run_suite(quick: bool = False, only=None, report=None) -> list[CheckResult]:
    """Run the selected checks; ``report(result)`` is called as each one finishes."""
    out = []
    for name in CHECKS:
        if only and name not in only:
            continue
        res = run_check(name, quick)
        out.append(res)
        if report is not None:
            report(res)
    return out
