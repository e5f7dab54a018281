"""Brute-force reference computations for small instances.

Nothing here calls the elimination code or the optimistic-marginal routine;
every quantity is recomputed by enumerating joint states, polytope vertices
or orderings directly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import BRUTE_FORCE_LIMIT, Basis, FactoredSpace, WeightMatrix, all_states, project, rank_rows
from .errors import ConfigError, ScaleError
from .simplex import linprog_geq

LP_PLAN_LIMIT = 2**8
VERTEX_SUPPORT_LIMIT = 5


@dataclass
class TabularValueFunction:
    """V[l-1, s] for l = 1..tau+1 (last row zero), Q[l-1, s, a], greedy policy[l-1, s]."""

    V: np.ndarray
    Q: np.ndarray
    policy: np.ndarray


DENSE_JOINT_LIMIT = 2**11


class JointMDP:
    """Enumerated view of an environment: mean rewards and joint transitions.

    Transition matrices are materialised up to ``DENSE_JOINT_LIMIT`` states and
    streamed in row blocks beyond that.
    """

    def __init__(self, env, limit: int = BRUTE_FORCE_LIMIT):
        self.env = env
        self.states = all_states(env.space, limit)
        self.S = self.states.shape[0]
        self.A = env.space.n_actions
        self.tau = env.tau
        self.R = env.mean_reward_matrix(self.states)
        self.P = None
        if self.S <= DENSE_JOINT_LIMIT:
            self.P = np.stack([env.transition_block(np.arange(self.S), a, limit) for a in range(self.A)])

    def expected_next(self, V_next: np.ndarray, chunk: int = 512) -> np.ndarray:
        """E[V_next(s') | s, a] for every joint state and action, shape (S, |A|)."""
        if self.P is not None:
            return (self.P @ V_next).T
        out = np.empty((self.S, self.A))
        for a in range(self.A):
            for lo in range(0, self.S, chunk):
                idx = np.arange(lo, min(self.S, lo + chunk))
                out[idx, a] = self.env.transition_block(idx, a, BRUTE_FORCE_LIMIT) @ V_next
        return out

    def value_iteration(self) -> "TabularValueFunction":
        V = np.zeros((self.tau + 1, self.S))
        Q = np.zeros((self.tau, self.S, self.A))
        for ell in range(self.tau, 0, -1):
            Q[ell - 1] = self.R + self.expected_next(V[ell])
            V[ell - 1] = Q[ell - 1].max(axis=1)
        return TabularValueFunction(V, Q, Q.argmax(axis=2))

    def evaluate(self, policy: np.ndarray) -> np.ndarray:
        """Values of a deterministic Markov policy (policy[l-1, s] = action), shape (tau+1, S)."""
        V = np.zeros((self.tau + 1, self.S))
        rows = np.arange(self.S)
        for ell in range(self.tau, 0, -1):
            pick = policy[ell - 1]
            V[ell - 1] = self.R[rows, pick] + self.expected_next(V[ell])[rows, pick]
        return V


def tabular_vi(env) -> TabularValueFunction:
    """Exact finite-horizon backward induction over the enumerated joint space."""
    return JointMDP(env).value_iteration()


def policy_evaluation(env, policy: np.ndarray) -> np.ndarray:
    """Values of a deterministic Markov policy over the enumerated joint space."""
    return JointMDP(env).evaluate(np.asarray(policy))


# --------------------------------------------------------------- brackets
def bracket_table(w: WeightMatrix, tables) -> np.ndarray:
    """Bracket value for every (state, action, step), shape (S, |A|, tau), by enumeration."""
    st = tables.structure
    sp = st.space
    states = all_states(sp, BRUTE_FORCE_LIMIT)
    S, A, tau = states.shape[0], sp.n_actions, w.tau
    out = np.zeros((S, A, tau))
    rew = np.zeros((S, A))
    for i, z in enumerate(st.reward_scopes):
        rew += tables.reward[i][rank_rows(states, z, sp)]
    out += rew[:, :, None]
    for ell in range(1, tau + 1):
        wl, wn = w.w[ell - 1], w.w[ell]
        out[:, :, ell - 1] += -wl[0] + wn[0]
        for j in range(1, st.phi):
            h = st.basis[j]
            hv = h.table[rank_rows(states, h.value_scope, sp)]
            sgn = 1 if wn[j] < 0 else 0
            e = tables.trans[j][rank_rows(states, h.parent_scope, sp)][:, :, sgn, :] @ h.table
            out[:, :, ell - 1] += (-wl[j] * hv)[:, None] + wn[j] * e
    return out


def brute_force_bracket_max(w: WeightMatrix, tables, action: int, ell: int) -> tuple[float, np.ndarray]:
    """Maximum over all joint states of the (action, ell) bracket, with the first maximiser."""
    vals = bracket_table(w, tables)[:, action, ell - 1]
    s = int(np.argmax(vals))
    return float(vals[s]), all_states(tables.structure.space, BRUTE_FORCE_LIMIT)[s]


def naive_bracket(w: WeightMatrix, tables, state, action: int, ell: int) -> float:
    """Scalar loop version of the bracket at one state (third, scope-naive route)."""
    st = tables.structure
    sp = st.space
    total = 0.0
    for i, z in enumerate(st.reward_scopes):
        sub = project(state, z)
        r, radix = 0, 1
        for v, k in zip(sub, z):
            r += v * radix
            radix *= sp.cards[k]
        total += tables.reward[i][r, action]
    wl, wn = w.w[ell - 1], w.w[ell]
    total += -wl[0] + wn[0]
    for j in range(1, st.phi):
        h = st.basis[j]
        total -= wl[j] * h(project(state, h.value_scope), sp)
        pr, radix = 0, 1
        for k in h.parent_scope:
            pr += state[k] * radix
            radix *= sp.cards[k]
        row = tables.trans[j][pr, action, 1 if wn[j] < 0 else 0]
        total += wn[j] * sum(row[q] * h.table[q] for q in range(h.table.size))
    return float(total)


def exhaustive_constraint_slacks(w: WeightMatrix, tables) -> np.ndarray:
    """V_l(s) - [Rbar(s, a) + optimistic E V_{l+1}] for all (s, a, l); feasible iff all >= 0."""
    st = tables.structure
    sp = st.space
    states = all_states(sp, BRUTE_FORCE_LIMIT)
    H = np.stack([h.table[rank_rows(states, h.value_scope, sp)] for h in st.basis], axis=1)
    V = H @ w.w.T  # (S, tau+1)
    S, A, tau = states.shape[0], sp.n_actions, w.tau
    rhs = np.zeros((S, A, tau))
    for i, z in enumerate(st.reward_scopes):
        rhs += tables.reward[i][rank_rows(states, z, sp)][:, :, None]
    for ell in range(1, tau + 1):
        wn = w.w[ell]
        rhs[:, :, ell - 1] += wn[0]
        for j in range(1, st.phi):
            h = st.basis[j]
            rows = tables.trans[j][rank_rows(states, h.parent_scope, sp)]  # (S, A, 2, K)
            both = rows @ h.table * wn[j]  # (S, A, 2)
            rhs[:, :, ell - 1] += both.max(axis=2)
    return V[:, None, :tau] - rhs


def naive_objective(w: WeightMatrix, space: FactoredSpace, basis: Basis) -> float:
    """sum over every joint state of V_1(s)."""
    states = all_states(space, BRUTE_FORCE_LIMIT)
    total = 0.0
    for j, h in enumerate(basis):
        total += w.w[0, j] * h.table[rank_rows(states, h.value_scope, space)].sum()
    return float(total)


# -------------------------------------------------------- vertex enumeration
def vertex_enum_transition_opt(p_hat, half_width: float, h, sign: int = 0, tol: float = 1e-12) -> np.ndarray:
    """Best vertex of {P in simplex : ||P - p_hat||_1 <= 2 half_width} for objective +-h.P.

    Vertices of this polytope have every coordinate at 0 or at p_hat except at
    most two free ones (two only when the L1 constraint is tight), so all such
    points are enumerated, filtered for feasibility and scored.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    h = np.asarray(h, dtype=float)
    K = p_hat.size
    if K > VERTEX_SUPPORT_LIMIT:
        raise ScaleError(K, VERTEX_SUPPORT_LIMIT)
    r = 2.0 * half_width
    direction = h if sign == 0 else -h
    best, best_val = None, -np.inf

    def consider(P):
        nonlocal best, best_val
        if np.any(P < -tol) or abs(P.sum() - 1) > 1e-9 or np.abs(P - p_hat).sum() > r + 1e-9:
            return
        val = float(direction @ P)
        if val > best_val + 1e-15:
            best, best_val = np.clip(P, 0, None), val

    for free in itertools.chain(itertools.combinations(range(K), 1), itertools.combinations(range(K), 2)):
        fixed = [i for i in range(K) if i not in free]
        for pattern in itertools.product((0, 1), repeat=len(fixed)):
            P = np.zeros(K)
            for i, kind in zip(fixed, pattern):
                P[i] = p_hat[i] if kind else 0.0
            rest = 1.0 - P.sum()
            if len(free) == 1:
                P[free[0]] = rest
                consider(P)
                continue
            a, b = free
            used = np.abs(P[fixed] - p_hat[fixed]).sum()
            # |Pa - pa| + |Pb - pb| = r - used with Pa + Pb = rest
            for sa, sb in itertools.product((1, -1), repeat=2):
                # sa (Pa - pa) + sb (Pb - pb) = r - used
                rhs = r - used + sa * p_hat[a] + sb * p_hat[b]
                M = np.array([[1.0, 1.0], [sa, sb]])
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                Pa, Pb = np.linalg.solve(M, [rest, rhs])
                Q = P.copy()
                Q[a], Q[b] = Pa, Pb
                consider(Q)
    if best is None:  # pragma: no cover - p_hat itself is always a candidate region point
        raise ConfigError("empty polytope")
    return best


# ----------------------------------------------------------- exponential LP
def exhaustive_lp_plan(tables, tau: int, W: float) -> tuple[WeightMatrix, float]:
    """Solve the planning LP with every (s, a, l) constraint written out.

    The sign-dependent optimistic expectation is handled by a lifted variable
    y >= w * E_plus, y >= w * E_minus per (basis, parent assignment, action, step).
    """
    st = tables.structure
    sp = st.space
    S = sp.joint_size(LP_PLAN_LIMIT)
    if tau > 3:
        raise ConfigError("exhaustive LP planning supports tau <= 3")
    states = all_states(sp, LP_PLAN_LIMIT)
    A, phi = sp.n_actions, st.phi
    nw = tau * phi
    ycells = []
    for ell in range(1, tau):
        for j in range(1, phi):
            for z in range(st.parent_size(j)):
                for a in range(A):
                    ycells.append((ell, j, z, a))
    yidx = {c: nw + k for k, c in enumerate(ycells)}
    toff = nw + len(ycells)
    nvar = toff + nw
    H = np.stack([h.table[rank_rows(states, h.value_scope, sp)] for h in st.basis], axis=1)
    rew = np.zeros((S, A))
    for i, z in enumerate(st.reward_scopes):
        rew += tables.reward[i][rank_rows(states, z, sp)]
    pranks = [None] + [rank_rows(states, st.basis[j].parent_scope, sp) for j in range(1, phi)]
    rows, rhs = [], []
    for ell in range(1, tau + 1):
        for a in range(A):
            for s in range(S):
                row = np.zeros(nvar)
                row[(ell - 1) * phi:(ell) * phi] = H[s]
                if ell < tau:
                    row[ell * phi] -= 1.0
                    for j in range(1, phi):
                        row[yidx[(ell, j, int(pranks[j][s]), a)]] -= 1.0
                rows.append(row)
                rhs.append(rew[s, a])
    for (ell, j, z, a), col in yidx.items():
        e = tables.trans[j][z, a] @ st.basis[j].table  # (2,)
        for val in e:
            row = np.zeros(nvar)
            row[col] = 1.0
            row[ell * phi + j] = -val
            rows.append(row)
            rhs.append(0.0)
    for k in range(nw):
        for sgn in (1.0, -1.0):
            row = np.zeros(nvar)
            row[toff + k] = 1.0
            row[k] = -sgn
            rows.append(row)
            rhs.append(0.0)
    for ell in range(tau):
        row = np.zeros(nvar)
        row[toff + ell * phi: toff + (ell + 1) * phi] = -1.0
        rows.append(row)
        rhs.append(-float(W))
    c = np.zeros(nvar)
    c[:phi] = H.sum(axis=0)
    res = linprog_geq(c, np.array(rows), np.array(rhs))
    w = WeightMatrix.from_steps(res.x[:nw].reshape(tau, phi), W)
    return w, float(res.value)


def exhaustive_multilevel_plan(tables, tau: int, W: float) -> tuple[WeightMatrix, np.ndarray]:
    """Step-by-step planning LPs with every (s, a) constraint written out, last step first.

    Step l minimises sum_s V_l(s) with w^(l+1) already fixed, so the right-hand
    sides are constants.  Returns the weights and the per-step optimal values
    (index l - 1).
    """
    st = tables.structure
    sp = st.space
    S = sp.joint_size(LP_PLAN_LIMIT)
    states = all_states(sp, LP_PLAN_LIMIT)
    A, phi = sp.n_actions, st.phi
    H = np.stack([h.table[rank_rows(states, h.value_scope, sp)] for h in st.basis], axis=1)
    rew = np.zeros((S, A))
    for i, z in enumerate(st.reward_scopes):
        rew += tables.reward[i][rank_rows(states, z, sp)]
    steps = np.zeros((tau + 1, phi))
    values = np.zeros(tau)
    for ell in range(tau, 0, -1):
        wn = steps[ell]
        rhs = rew + wn[0]
        for j in range(1, phi):
            h = st.basis[j]
            rows = tables.trans[j][rank_rows(states, h.parent_scope, sp)]  # (S, A, 2, K)
            rhs = rhs + (rows @ h.table * wn[j]).max(axis=2)
        # variables: w (phi), t (phi) with t >= |w|, sum t <= W
        G = [np.hstack([H[s], np.zeros(phi)]) for s in range(S) for _ in range(A)]
        b = [rhs[s, a] for s in range(S) for a in range(A)]
        for k in range(phi):
            for sgn in (1.0, -1.0):
                row = np.zeros(2 * phi)
                row[phi + k] = 1.0
                row[k] = -sgn
                G.append(row)
                b.append(0.0)
        G.append(np.concatenate([np.zeros(phi), -np.ones(phi)]))
        b.append(-float(W))
        c = np.concatenate([H.sum(axis=0), np.zeros(phi)])
        res = linprog_geq(c, np.array(G), np.array(b))
        steps[ell - 1] = res.x[:phi]
        values[ell - 1] = res.value
    return WeightMatrix(steps, W), values


# ------------------------------------------------------------- misc oracles
def exact_treewidth(network) -> int:
    """Minimum induced width over all elimination orders (small m only)."""
    best = network.m
    for order in itertools.permutations(range(network.m)):
        adj = [set(a) for a in network.adj]
        width = 0
        for v in order:
            nb = adj[v]
            width = max(width, len(nb))
            if width >= best:
                break
            for u in nb:
                adj[u].discard(v)
                adj[u] |= nb - {u}
            adj[v] = set()
        best = min(best, width)
    return best


def q_linearity_witness(q_values: np.ndarray, features: np.ndarray) -> tuple[int, int, float]:
    """Rank test for q = H w: returns (rank H, rank [H | q], least-squares residual norm).

    rank [H | q] > rank H means no weight vector reproduces q exactly.
    """
    H = np.asarray(features, dtype=float)
    q = np.asarray(q_values, dtype=float).reshape(-1, 1)
    r_h = int(np.linalg.matrix_rank(H))
    r_aug = int(np.linalg.matrix_rank(np.hstack([H, q])))
    sol, *_ = np.linalg.lstsq(H, q, rcond=None)
    return r_h, r_aug, float(np.linalg.norm(H @ sol - q))
