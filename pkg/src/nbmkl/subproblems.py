"""The kernel-weight QP and the neighborhood-matrix update."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .blocks import per_task, unstack

log = logging.getLogger(__name__)


@dataclass
class ThetaParams:
    """Concatenated weights ``[mu ; lambda]`` in the ``blocks`` ordering."""

    vec: np.ndarray
    M: int
    T: int

    def __post_init__(self):
        self.vec = np.asarray(self.vec, dtype=float)
        if self.vec.shape != (self.M + self.M * self.T,):
            raise ValueError(f"theta has shape {self.vec.shape}, expected ({self.M + self.M * self.T},)")
        if not np.all(np.isfinite(self.vec)):
            raise ValueError("theta has non-finite entries")

    @classmethod
    def uniform(cls, M, T):
        """``mu = 1/M``, ``lambda = 0``."""
        vec = np.zeros(M + M * T)
        vec[:M] = 1.0 / M
        return cls(vec, M, T)

    @classmethod
    def from_task_weights(cls, W):
        """All weight in the task-specific blocks; ``W`` has shape ``(T, M)``."""
        W = np.asarray(W, dtype=float)
        T, M = W.shape
        return cls(np.concatenate([np.zeros(M), W.T.ravel()]), M, T)

    @property
    def mu(self):
        return unstack(self.vec, self.M, self.T)[0]

    @property
    def lambdas(self):
        """Task-specific weights as ``(T, M)``."""
        return unstack(self.vec, self.M, self.T)[1].T

    def task_weights(self):
        """``theta_t = mu + lambda_t`` for every task, shape ``(T, M)``."""
        return per_task(self.vec, self.M, self.T)


@dataclass
class NeighborhoodSet:
    """Symmetric, possibly indefinite matrices ``Khat_t = sum_m coef[t, m] K_t^m``."""

    matrices: list
    coef: np.ndarray | None = None

    @classmethod
    def from_coef(cls, bank, coef):
        coef = np.asarray(coef, dtype=float)
        mats = [np.tensordot(coef[t], G, axes=1) for t, G in enumerate(bank.gram)]
        return cls(mats, coef)

    @classmethod
    def targets(cls, labels):
        """Fixed label targets ``y_t y_t'``."""
        return cls([np.outer(y, y) for y in map(np.asarray, labels)])


@dataclass
class HyperParams:
    C: float = 1.0
    eta: float = 64.0
    beta: float = 1.0
    epsilon: float = 0.1
    svm_tol: float = 1e-5
    theta_tol: float = 1e-8
    max_outer: int = 50
    rel_tol: float = 1e-5

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.beta > 0 and not self.eta > 4 * self.beta:
            raise ValueError(
                f"eta={self.eta} must exceed 4*beta={4 * self.beta}: the "
                "neighborhood subproblem is not strictly convex otherwise"
            )
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


def combined_kernel(bank, theta, task):
    """``K_t(theta) = sum_m theta_t^m K_t^m``."""
    w = theta.task_weights()[task] if isinstance(theta, ThetaParams) else np.asarray(theta, float)
    return np.tensordot(w, bank.gram[task], axes=1)


# ---------------------------------------------------------------------------
# nonnegative QP
# ---------------------------------------------------------------------------

def nonneg_qp(H, r, max_iter=None):
    """Minimize ``0.5 x'Hx - r'x`` over ``x >= 0`` for PSD ``H``.

    ``H`` is factored as ``E'E`` from its eigendecomposition, dropping
    eigenvalues below ``n * eps * max_eig``; the QP then becomes a
    nonnegative least-squares problem ``|Ex - f|^2`` solved by an active
    set method.  Components of ``r`` in the dropped eigenspace are treated
    as round-off.

    Returns ``(x, pg)`` with ``pg = |x - max(x - (Hx - r), 0)|_inf``.
    """
    H = np.asarray(H, dtype=float)
    r = np.asarray(r, dtype=float)
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(r))):
        raise ValueError("QP data has non-finite entries")
    n = r.shape[0]
    if n == 0:
        return np.zeros(0), 0.0
    w, U = np.linalg.eigh(0.5 * (H + H.T))
    cut = max(float(w[-1]), 0.0) * n * np.finfo(float).eps
    keep = w > cut
    if not keep.any():
        # H is zero: the objective is linear
        if np.any(r > 0):
            raise ValueError("QP is unbounded below")
        return np.zeros(n), 0.0
    root = np.sqrt(w[keep])
    E = root[:, None] * U[:, keep].T
    f = (U[:, keep].T @ r) / root
    iters = max_iter if max_iter is not None else max(50, 3 * n)
    x, _ = optimize.nnls(E, f, maxiter=iters)
    g = H @ x - r
    pgn = float(np.max(np.abs(x - np.maximum(x - g, 0.0)), initial=0.0))
    return x, pgn


def theta_objective(A, b, q, theta, eta, printed=False):
    """``(eta/2) t'At - t'((eta/2) b + q)``, or ``t'At - t'(b + q)`` if ``printed``."""
    th = theta.vec if isinstance(theta, ThetaParams) else np.asarray(theta, float)
    if printed:
        return float(th @ A @ th - th @ (b + q))
    return float(0.5 * eta * th @ A @ th - th @ (0.5 * eta * b + q))


def solve_theta(cache, b, q, eta, tol=1e-8, printed=False):
    """Minimize the kernel-weight objective over ``theta >= 0``.

    The default objective is ``(eta/2) theta'A theta - theta'((eta/2) b + q)``;
    ``printed=True`` uses ``theta'A theta - theta'(b + q)`` (identical at
    ``eta = 2``).
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    b = np.asarray(b, dtype=float)
    q = np.asarray(q, dtype=float)
    if b.shape != (cache.dim,) or q.shape != (cache.dim,):
        raise ValueError(f"b and q must have length {cache.dim}")
    if printed:
        H, r = 2.0 * cache.A, b + q
    else:
        H, r = eta * cache.A, 0.5 * eta * b + q
    x, pg = nonneg_qp(H, r)
    if pg > tol * max(1.0, float(np.max(np.abs(r), initial=0.0))):
        # expected when A has eigenvalues at round-off level
        log.debug("theta step stationarity %.3g above tolerance", pg)
    return ThetaParams(x, cache.M, cache.T)


# ---------------------------------------------------------------------------
# neighborhood update
# ---------------------------------------------------------------------------

def neighborhood_coef(cache, theta, eta, beta, form="printed"):
    """Stacked coefficients ``x`` of the minimizing ``Khat = V x``.

    ``form="exact"`` minimizes ``(eta/2) sum |K_t - Khat_t|^2 + (beta/2) Omega``
    with ``b_t^m = 2 tr(K_t^m Khat_t)`` and ``A^-1 = (A + eps I)^-1``::

        ((eta - 2 beta) A + (eta - 4 beta) eps I) x = eta (A + eps I) theta - beta d

    ``form="printed"`` is the range-space closed form of the projected
    quadratic with ``Sigma = (eta - 4 beta) I + (beta/2) P``::

        x = (eta theta - beta (A + eps I)^-1 d) / (2 eta - 7 beta)
    """
    if beta > 0 and not eta > 4 * beta:
        raise ValueError(f"eta={eta} must exceed 4*beta={4 * beta}")
    if not eta > 0:
        raise ValueError("eta must be positive")
    th = theta.vec if isinstance(theta, ThetaParams) else np.asarray(theta, float)
    if form not in ("printed", "exact"):
        raise ValueError(f"unknown neighborhood form {form!r}")
    if beta == 0:
        # both forms reduce analytically; skip the eta*th/(2 eta) round-off
        return 0.5 * th if form == "printed" else th.copy()
    if form == "printed":
        g = cache.solve(cache.d)
        return (eta * th - beta * g) / (2.0 * eta - 7.0 * beta)
    eps = cache.ridge
    lhs = (eta - 2.0 * beta) * cache.A + (eta - 4.0 * beta) * eps * np.eye(cache.dim)
    rhs = eta * (cache.A @ th + eps * th) - beta * cache.d
    return sla.solve(lhs, rhs, assume_a="pos", check_finite=False)


def solve_neighborhood(cache, bank, theta, eta, beta, form="printed"):
    """Neighborhood matrices ``Khat_t`` for fixed kernel weights.

    The default closed form returns ``K_t(theta)/2`` at ``beta = 0``; it is
    not the minimizer of the neighborhood block of the training objective,
    so the trainer asks for ``form="exact"``.
    """
    x = neighborhood_coef(cache, theta, eta, beta, form)
    coef = per_task(x, cache.M, cache.T)
    return NeighborhoodSet.from_coef(bank, coef)
