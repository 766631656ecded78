import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbmkl.linalg import (EPS_ABS, FactorizationError, SymmetricFactorization, quadratic_form,
                          ridge_for, solve_spd)


def test_ridge_floor_and_relative():
    assert ridge_for(np.zeros((3, 3))) == EPS_ABS
    A = np.diag([300.0, 0.0, 0.0])
    assert ridge_for(A) == pytest.approx(1e-8 * 100.0)


def test_solve_matches_dense(rng):
    B = rng.standard_normal((6, 6))
    A = B @ B.T + np.eye(6)
    f = SymmetricFactorization(A)
    rhs = rng.standard_normal((6, 2))
    np.testing.assert_allclose(A @ f.solve(rhs), rhs, atol=1e-10)


def test_ridge_makes_singular_solvable(rng):
    v = rng.standard_normal(4)
    A = np.outer(v, v)
    with pytest.raises(FactorizationError):
        SymmetricFactorization(A)
    f = SymmetricFactorization(A, ridge=1e-6)
    x = f.solve(v)
    np.testing.assert_allclose((A + 1e-6 * np.eye(4)) @ x, v, rtol=1e-8)


def test_bad_inputs():
    with pytest.raises(ValueError):
        SymmetricFactorization(np.ones((2, 3)))
    with pytest.raises(ValueError):
        SymmetricFactorization(np.array([[1.0, np.nan], [np.nan, 1.0]]))
    f = SymmetricFactorization(np.eye(2))
    with pytest.raises(ValueError, match="leading dimension"):
        solve_spd(f, np.ones(3))
    with pytest.raises(ValueError):
        solve_spd(f, np.array([1.0, np.inf]))


def test_quadratic_form():
    M = np.array([[2.0, 1.0], [0.0, 3.0]])
    assert quadratic_form(M, [1, 1]) == 6.0
    assert quadratic_form(M, [1, 0], [0, 1]) == 1.0
    with pytest.raises(ValueError):
        quadratic_form(M, [1, 2, 3])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1), st.floats(1e-8, 1.0))
def test_ridged_solve_residual(n, seed, ridge):
    r = np.random.default_rng(seed)
    B = r.standard_normal((n, max(1, n // 2)))
    A = B @ B.T
    f = SymmetricFactorization(A, ridge)
    b = r.standard_normal(n)
    x = f.solve(b)
    assert np.linalg.norm((A + ridge * np.eye(n)) @ x - b) <= 1e-6 * (1 + np.linalg.norm(b)) / ridge
