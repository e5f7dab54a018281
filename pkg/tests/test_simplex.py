import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from fsmdp.errors import SolverError
from fsmdp.simplex import linprog_geq


def _random_lp(seed, m, n, degenerate=False):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    if degenerate:
        A = np.vstack([A, A[: m // 2]])
        A = np.round(A)
    x0 = rng.normal(size=n)
    slack = rng.exponential(size=A.shape[0]) * (rng.random(A.shape[0]) < 0.6)
    b = A @ x0 - slack
    y = rng.exponential(size=A.shape[0]) * (rng.random(A.shape[0]) < 0.7)
    c = A.T @ y
    return c, A, b


def _scipy_value(c, A, b):
    res = linprog(c, A_ub=-A, b_ub=-b, bounds=[(None, None)] * c.size, method="highs")
    assert res.status == 0
    return res.fun


def test_two_constraint_example():
    res = linprog_geq([1.0], [[1.0], [1.0]], [3.0, 5.0])
    assert res.value == pytest.approx(5.0)
    assert list(res.tight) == [1]


@given(st.integers(0, 10**6), st.integers(1, 25), st.integers(1, 8), st.booleans())
def test_matches_scipy(seed, m, n, degenerate):
    c, A, b = _random_lp(seed, max(m, n), n, degenerate)
    res = linprog_geq(c, A, b)
    ref = _scipy_value(c, A, b)
    scale = 1.0 + abs(ref)
    assert res.value == pytest.approx(ref, abs=1e-7 * scale)
    assert res.slack.min() >= -1e-7 * scale
    assert np.all(res.slack[res.tight] <= 1e-8 * scale)
    # the optimal basis restarts to the same optimum, with no pivots when no dual row was dropped
    again = linprog_geq(c, A, b, basis_hint=res.basis)
    assert again.value == pytest.approx(res.value, abs=1e-9 * scale)
    if np.linalg.matrix_rank(A) == n:
        assert again.pivots == 0


@given(st.integers(0, 10**6))
def test_constraint_system_sized_lps(seed):
    """Larger sparse systems shaped like elimination systems (u_target >= const + sum children)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 200))
    rows, b = [], []
    for t in range(n):
        for _ in range(2):
            row = np.zeros(n)
            row[t] = 1.0
            if t:
                kids = rng.choice(t, size=min(t, int(rng.integers(0, 3))), replace=False)
                row[kids] -= 1.0
            rows.append(row)
            b.append(rng.normal())
    A, b = np.array(rows), np.array(b)
    c = np.ones(n)
    res = linprog_geq(c, A, b)
    assert res.value == pytest.approx(_scipy_value(c, A, b), abs=1e-8 * (1 + abs(res.value)))


def test_hint_that_is_not_a_basis_is_ignored():
    c, A, b = _random_lp(3, 12, 4)
    ref = linprog_geq(c, A, b)
    for hint in ([0, 0, 0, 0], [0, 1], list(range(12))):
        assert linprog_geq(c, A, b, basis_hint=hint).value == pytest.approx(ref.value, abs=1e-9)


def test_infeasible_and_unbounded_raise():
    with pytest.raises(SolverError):
        linprog_geq([1.0], [[1.0], [-1.0]], [1.0, 0.0])  # x >= 1 and x <= 0
    with pytest.raises(SolverError):
        linprog_geq([1.0], [[-1.0]], [0.0])  # min x with x <= 0
    with pytest.raises(SolverError):
        linprog_geq([1.0, 1.0], [[1.0]], [0.0])
