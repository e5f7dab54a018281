"""Dense revised simplex (Bland's rule) for small linear programs.

The public entry point solves

    min c.x   subject to   A x >= b,   x free

through its dual  max b.y  s.t.  A^T y = c, y >= 0,  which is already in
standard form.  The primal solution is read off the simplex multipliers of
the optimal dual basis, and the rows of that basis are tight in the primal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError

PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    tight: np.ndarray
    slack: np.ndarray
    pivots: int
    basis: np.ndarray  # constraint rows forming the optimal basis; reusable as a warm start


class _Unbounded(Exception):
    pass


def _simplex(E: np.ndarray, f: np.ndarray, cost: np.ndarray, basis: np.ndarray, tol: float,
             max_pivots: int, pivots: int = 0):
    """Minimise cost.y subject to E y = f, y >= 0 from a feasible basis."""
    rows = E.shape[0]
    Binv = np.linalg.inv(E[:, basis])
    xB = Binv @ f
    since = 0
    while True:
        red = cost - (cost[basis] @ Binv) @ E
        red[basis] = 0.0
        neg = (red < -tol).nonzero()[0]
        if neg.size == 0:
            return basis, xB, Binv, pivots
        j = int(neg[0])
        d = Binv @ E[:, j]
        pos = d > tol
        if not pos.any():
            raise _Unbounded()
        ratios = np.where(pos, np.maximum(xB, 0.0) / np.where(pos, d, 1.0), np.inf)
        rmin = ratios.min()
        ties = (ratios <= rmin + tol * max(1.0, abs(rmin)) * 1e-3).nonzero()[0]
        r = int(ties[basis[ties].argmin()]) if ties.size > 1 else int(ties[0])
        theta = max(xB[r], 0.0) / d[r]
        xB = xB - theta * d
        xB[r] = theta
        prow = Binv[r] / d[r]
        Binv = Binv - d[:, None] * prow[None, :]
        Binv[r] = prow
        basis[r] = j
        pivots += 1
        since += 1
        if since >= REFACTOR_EVERY:
            Binv = np.linalg.inv(E[:, basis])
            xB = Binv @ f
            since = 0
        if pivots > max_pivots:
            raise SolverError(f"simplex exceeded pivot budget {max_pivots}")


def _crash_basis(E: np.ndarray, f: np.ndarray) -> np.ndarray | None:
    """A feasible basis of signed unit columns (column = sign(f_r) e_r for every row r), if one exists."""
    rows, _ = E.shape
    nz = E != 0
    unit = np.flatnonzero(nz.sum(axis=0) == 1)
    if unit.size < rows:
        return None
    r_of = nz[:, unit].argmax(axis=0)
    v = E[r_of, unit]
    ok = (np.abs(v) == 1.0) & (v * f[r_of] >= 0)
    basis = np.full(rows, -1)
    basis[r_of[ok][::-1]] = unit[ok][::-1]  # first qualifying column wins
    return basis if (basis >= 0).all() else None


def _hinted_basis(E: np.ndarray, f: np.ndarray, hint, tol: float) -> np.ndarray | None:
    """``hint`` if it indexes a nonsingular, primal-feasible basis of E y = f."""
    rows, cols = E.shape
    hint = np.asarray(hint, dtype=np.int64)
    if hint.size != rows or hint.min(initial=0) < 0 or hint.max(initial=0) >= cols or np.unique(hint).size != rows:
        return None
    try:
        xB = np.linalg.solve(E[:, hint], f)
    except np.linalg.LinAlgError:
        return None
    return hint.copy() if (xB >= -tol).all() else None


def _standard_form(E: np.ndarray, f: np.ndarray, cost: np.ndarray, tol: float, max_pivots: int, hint=None):
    """Two-phase solve.  Returns (basis, multipliers for all rows, kept-row mask, pivots, y).

    A feasible starting basis is taken from ``hint`` or from signed unit
    columns when available, skipping phase one.
    """
    rows, cols = E.shape
    crash = _hinted_basis(E, f, hint, tol) if hint is not None else None
    if crash is None:
        crash = _crash_basis(E, f)
    if crash is not None:
        try:
            basis, xB, Binv, pivots = _simplex(E, f, cost, crash, tol, max_pivots)
        except _Unbounded:
            raise SolverError("linear program is infeasible (dual unbounded)")
        y = np.zeros(cols)
        y[basis] = xB
        return basis, cost[basis] @ Binv, np.ones(rows, dtype=bool), pivots, y
    flip = np.where(f < 0, -1.0, 1.0)
    Ef = E * flip[:, None]
    ff = f * flip
    aug = np.hstack([Ef, np.eye(rows)])
    c1 = np.concatenate([np.zeros(cols), np.ones(rows)])
    basis = np.arange(cols, cols + rows)
    try:
        basis, xB, Binv, pivots = _simplex(aug, ff, c1, basis, tol, max_pivots)
    except _Unbounded:  # pragma: no cover - phase one is bounded below by 0
        raise SolverError("phase one unbounded")
    infeas = float(c1[basis] @ xB)
    if infeas > tol * max(1.0, np.abs(ff).max(initial=0.0)) * 1e3:
        raise SolverError(f"linear program is unbounded (dual infeasible, phase-one residual {infeas:.3g})")
    keep = np.ones(rows, dtype=bool)
    # drive artificial variables out of the basis, dropping redundant rows
    for r in range(rows):
        if basis[r] < cols:
            continue
        row = Binv[r] @ Ef
        row[basis[basis < cols]] = 0.0
        k = np.flatnonzero(np.abs(row) > tol)
        if k.size:
            k = int(k[0])
            d = Binv @ Ef[:, k]
            prow = Binv[r] / d[r]
            Binv = Binv - np.outer(d, prow)
            Binv[r] = prow
            basis[r] = k
        else:
            keep[r] = False
    basis = basis[keep]
    E2, f2 = Ef[keep], ff[keep]
    try:
        basis, xB, Binv, pivots = _simplex(E2, f2, cost, basis.copy(), tol, max_pivots, pivots)
    except _Unbounded:
        raise SolverError("linear program is infeasible (dual unbounded)")
    pi = cost[basis] @ Binv
    full = np.zeros(rows)
    full[keep] = pi * flip[keep]
    y = np.zeros(cols)
    y[basis] = xB
    return basis, full, keep, pivots, y


def linprog_geq(c, A, b, tol: float = PIVOT_TOL, max_pivots: int | None = None,
                tight_tol: float = 1e-9, basis_hint=None) -> LPResult:
    """Minimise c.x subject to A x >= b with x unrestricted in sign.

    ``basis_hint`` (row indices, e.g. a previous result's ``basis``) is used
    as the starting basis when it is nonsingular and dual feasible.
    """
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    n = c.size
    if A.shape != (b.size, n):
        raise SolverError(f"shape mismatch: A {A.shape}, b {b.shape}, c {c.shape}")
    if max_pivots is None:
        max_pivots = 50 * (A.shape[0] + n) + 1000
    scale = max(1.0, float(np.abs(b).max(initial=0.0)), float(np.abs(c).max(initial=0.0)))
    basis, mult, keep, pivots, _ = _standard_form(A.T, c, -b, tol, max_pivots, basis_hint)
    x = -mult
    slack = A @ x - b
    if slack.size and slack.min() < -1e-7 * scale:
        raise SolverError(f"simplex returned an infeasible point (min slack {slack.min():.3g})")
    tight = np.flatnonzero(slack <= tight_tol * scale)
    return LPResult(x, float(c @ x), tight, slack, pivots, np.sort(basis))
