"""Optimistic rewards and transition marginals inside the confidence sets.

For every (basis j, parent assignment, action) two marginals are stored: the
one maximising E[h_j] (used when the next-step weight is >= 0) and the one
minimising it (weight < 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Basis, rank_rows
from .estimation import UNVISITED, ConfidenceState, FsmdpModel, ModelStructure

PLUS, MINUS = 0, 1


def sign_index(w) -> np.ndarray:
    """0 for w >= 0 (zero counts as positive), 1 for w < 0."""
    return (np.asarray(w) < 0).astype(np.int64)


def outcome_order(h: np.ndarray, sign: int) -> np.ndarray:
    """Outcome ranks sorted by h (descending for PLUS, ascending for MINUS), ties by rank."""
    h = np.asarray(h, dtype=float)
    key = -h if sign == PLUS else h
    return np.lexsort((np.arange(h.size), key))


def optimize_marginal(p_hat, half_width, h, sign: int = PLUS) -> np.ndarray:
    """Extreme point of {P in simplex : ||P - p_hat||_1 <= 2 half_width} in the direction +-h.

    Works on a batch of rows.  Rows of ``p_hat`` containing NaN, or with an
    infinite half-width, are treated as unvisited and become a point mass on
    the best outcome.
    """
    p_hat = np.atleast_2d(np.asarray(p_hat, dtype=float))
    R, K = p_hat.shape
    hw = np.broadcast_to(np.asarray(half_width, dtype=float), (R,))
    order = outcome_order(h, sign)
    unvisited = np.isnan(p_hat).any(axis=1) | ~np.isfinite(hw)
    P = np.where(unvisited[:, None], 0.0, p_hat[:, order])
    P[:, 0] = np.minimum(1.0, P[:, 0] + np.where(unvisited, 1.0, hw))
    for i in range(K - 1, 0, -1):
        excess = P.sum(axis=1) - 1.0
        P[:, i] = np.maximum(0.0, P[:, i] - np.maximum(excess, 0.0))
    out = np.empty_like(P)
    out[:, order] = P
    return out


@dataclass(frozen=True)
class OptimisticTables:
    """Lookup tables consumed by the separation oracle and the greedy policy.

    ``reward[i]``: (|Val(Z_i)|, |A|).  ``trans[j]``: (|Val(Pa_j)|, |A|, 2, |Val(Z_j)|)
    with axis 2 indexed by PLUS / MINUS.  ``expect[j]`` = sum_z h_j(z) trans[j][..., z].
    Index 0 of ``trans`` / ``expect`` is None (constant basis).
    """

    structure: ModelStructure
    reward: tuple[np.ndarray, ...]
    trans: tuple[np.ndarray | None, ...]
    expect: tuple[np.ndarray | None, ...]

    @property
    def basis(self) -> Basis:
        return self.structure.basis

    def reward_sum(self, states: np.ndarray) -> np.ndarray:
        """sum_i Rbar_i(s[Z_i], a) for state rows, shape (S, |A|)."""
        st = self.structure
        total = np.zeros((states.shape[0], st.n_actions))
        for i, z in enumerate(st.reward_scopes):
            total += self.reward[i][rank_rows(states, z, st.space)]
        return total

    def equals(self, other: "OptimisticTables") -> bool:
        same = all(np.array_equal(a, b) for a, b in zip(self.reward, other.reward))
        return same and all(
            (a is None and b is None) or np.array_equal(a, b) for a, b in zip(self.trans, other.trans)
        )


def optimistic_reward_table(conf: ConfidenceState, i: int, clip: bool = True) -> np.ndarray:
    st = conf.structure
    n = conf.reward_n[i]
    C = st.C[i]
    with np.errstate(invalid="ignore", divide="ignore"):
        val = conf.reward_sum[i] / n + np.sqrt(conf.reward_width(i) / n)
    if clip:
        val = np.minimum(val, C)
    return np.where(n > 0, val, C)


def optimistic_reward(i: int, z: int, a: int, conf: ConfidenceState, clip: bool = True) -> float:
    """Empirical mean plus sqrt(d/n), clipped at C; C when never observed."""
    return float(optimistic_reward_table(conf, i, clip)[z, a])


def half_widths(conf: ConfidenceState, j: int) -> np.ndarray:
    n = conf.trans_n[j].astype(float)
    with np.errstate(divide="ignore"):
        return np.where(n > 0, 0.5 * np.sqrt(conf.marginal_width(j) / np.maximum(n, 1)), np.inf)


def optimistic_marginal(j: int, z: int, a: int, sign: int, conf: ConfidenceState) -> np.ndarray:
    h = conf.structure.basis[j].table
    emp = conf.empirical_marginal(j, z, a)
    if emp is UNVISITED:
        emp = np.full(h.size, np.nan)
    return optimize_marginal(emp, half_widths(conf, j)[z, a], h, sign)[0]


def _assemble(st: ModelStructure, rewards, rows_fn) -> OptimisticTables:
    trans: list[np.ndarray | None] = [None]
    expect: list[np.ndarray | None] = [None]
    for j in range(1, st.phi):
        h = st.basis[j].table
        t = rows_fn(j, h)
        t.setflags(write=False)
        e = t @ h
        e.setflags(write=False)
        trans.append(t)
        expect.append(e)
    for r in rewards:
        r.setflags(write=False)
    return OptimisticTables(st, tuple(rewards), tuple(trans), tuple(expect))


def build_tables(conf: ConfidenceState, clip: bool = True) -> OptimisticTables:
    """All optimistic rewards and both sign variants of every marginal, for episode ``conf.k``."""
    st = conf.structure

    def rows(j, h):
        emp = conf.empirical_marginals(j)
        hw = half_widths(conf, j)
        npa, A, K = emp.shape
        flat = emp.reshape(-1, K)
        out = np.empty((npa, A, 2, K))
        out[:, :, PLUS] = optimize_marginal(flat, hw.ravel(), h, PLUS).reshape(npa, A, K)
        out[:, :, MINUS] = optimize_marginal(flat, hw.ravel(), h, MINUS).reshape(npa, A, K)
        return out

    rewards = [optimistic_reward_table(conf, i, clip).astype(float) for i in range(st.l)]
    return _assemble(st, rewards, rows)


def tables_from_model(model: FsmdpModel) -> OptimisticTables:
    """Zero-width tables: the model's own parameters for both signs."""
    st = model.structure

    def rows(j, h):
        m = np.asarray(model.marginals[j], dtype=float)
        return np.repeat(m[:, :, None, :], 2, axis=2)

    return _assemble(st, [np.array(r, dtype=float) for r in model.reward_means], rows)
