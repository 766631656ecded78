"""Dense linear-algebra helpers.

Every inverse of the structure matrix ``A`` is taken as ``(A + eps*I)^-1``
because ``A`` is rank deficient under the shared/task-specific weight
split.  Solves go through a Cholesky factorization that is built once and
reused.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg as sla

EPS_ABS = 1e-10
EPS_REL = 1e-8


class FactorizationError(np.linalg.LinAlgError):
    """Raised when ``A + eps*I`` is not numerically positive definite."""


def ridge_for(A, eps_abs=EPS_ABS, eps_rel=EPS_REL):
    """Default ridge ``max(eps_abs, eps_rel * trace(A) / dim)``."""
    A = np.asarray(A, dtype=float)
    return max(eps_abs, eps_rel * float(np.trace(A)) / A.shape[0])


class SymmetricFactorization:
    """Cholesky factor of ``A + ridge * I``.

    Parameters
    ----------
    A : (p, p) array_like
        Symmetric positive semidefinite matrix.
    ridge : float
        Nonnegative diagonal shift.  With ``ridge == 0`` a singular ``A``
        is rejected with :class:`FactorizationError`.
    """

    def __init__(self, A, ridge=0.0):
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("matrix has non-finite entries")
        if ridge < 0:
            raise ValueError("ridge must be nonnegative")
        self.dimension = A.shape[0]
        self.ridge = float(ridge)
        self.matrix = A
        shifted = A + self.ridge * np.eye(self.dimension)
        try:
            c, low = sla.cho_factor(shifted, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(f"factorization failed: {exc}") from exc
        # Cholesky can succeed on a singular matrix with a round-off pivot.
        piv = np.diag(c) ** 2
        scale = max(float(np.max(np.abs(np.diag(shifted)))), 1.0)
        if np.min(piv) <= self.dimension * np.finfo(float).eps * scale:
            raise FactorizationError(
                f"matrix is numerically singular (smallest pivot {np.min(piv):.3e})"
            )
        self._cho = (c, low)

    def solve(self, rhs):
        return solve_spd(self, rhs)


def solve_spd(fact, rhs):
    """Solve ``(A + ridge*I) x = rhs``; ``rhs`` may be a vector or a matrix."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != fact.dimension:
        raise ValueError(
            f"rhs has leading dimension {rhs.shape[0]}, expected {fact.dimension}"
        )
    if not np.all(np.isfinite(rhs)):
        raise ValueError("rhs has non-finite entries")
    return sla.cho_solve(fact._cho, rhs, check_finite=False)


def quadratic_form(M, x, y=None):
    """Return ``x' M y`` (``y`` defaults to ``x``)."""
    M = np.asarray(M, dtype=float)
    x = np.asarray(x, dtype=float)
    y = x if y is None else np.asarray(y, dtype=float)
    if M.ndim != 2 or M.shape != (x.shape[0], y.shape[0]):
        raise ValueError(
            f"shape mismatch: M{M.shape}, x({x.shape[0]},), y({y.shape[0]},)"
        )
    return float(x @ M @ y)
