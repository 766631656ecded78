"""Complexity regularizer, Rademacher bound and the sign-vector moment identity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import build_b, build_c, build_u, per_task
from .subproblems import nonneg_qp


class NegativeRadicandError(ValueError):
    pass


def omega(cache, b, c):
    """``d'A^-1 b + 0.5 b'A^-1 b - 4c`` with the ridge-regularized inverse."""
    b = np.asarray(b, dtype=float)
    Ainv_b = cache.solve(b)
    return float(cache.d @ Ainv_b + 0.5 * b @ Ainv_b - 4.0 * c)


def omega_of(cache, bank, nbhd):
    return omega(cache, build_b(bank, nbhd), build_c(nbhd))


def omega_gradient(cache, bank, nbhd):
    """Gradient of ``omega`` w.r.t. the entries of each ``Khat_t``."""
    b = build_b(bank, nbhd)
    w = per_task(cache.solve(cache.d + b), cache.M, cache.T)
    return [2.0 * np.tensordot(w[t], G, axes=1) - 8.0 * np.asarray(K).T
            for t, (G, K) in enumerate(zip(bank.gram, nbhd.matrices))]


@dataclass
class BoundInputs:
    R: float
    rho: float
    n: int
    cache: object
    b: np.ndarray
    c: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be positive")


def bound_radicand(inputs):
    cache, b = inputs.cache, np.asarray(inputs.b, dtype=float)
    Ainv_b = cache.solve(b)
    Ainv_d = cache.solve(cache.d)
    return float(cache.d @ Ainv_b
                 + 0.5 * ((cache.d @ Ainv_d + 2.0 * cache.trace_term())
                          + (b @ Ainv_b + 4.0 * (inputs.rho - inputs.c))))


def rademacher_bound(inputs):
    """Upper bound on the empirical Rademacher complexity for fixed neighborhoods."""
    rad = bound_radicand(inputs)
    if rad < 0:
        raise NegativeRadicandError(f"bound radicand is negative ({rad:.6g})")
    T = inputs.cache.T
    return float(np.sqrt(inputs.R / (2.0 * T)) * np.sqrt(rad) / inputs.n)


def rademacher_quartic_expectation(A, B):
    """``E[(s'As)(s'Bs)]`` over independent uniform signs ``s``.

    Evaluates ``tr(A)tr(B) + 2(tr(AB) - tr(A o B))`` on the symmetric parts
    (a quadratic form only sees the symmetric part of its matrix).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise ValueError(f"need two square matrices of equal size, got {A.shape} and {B.shape}")
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    return float(np.trace(A) * np.trace(B)
                 + 2.0 * (np.sum(A * B.T) - np.sum(np.diag(A) * np.diag(B))))


def _sign_draws(rng, sizes, draws):
    return [rng.choice((-1.0, 1.0), size=(draws, n)) for n in sizes]


def closed_form_supremum(cache, b, c, rho, u):
    """``sup sqrt(theta'u)`` over ``theta'A theta - theta'b + c <= rho`` (sign constraint dropped)."""
    Ainv_b = cache.solve(b)
    radius2 = 0.25 * b @ Ainv_b + rho - c
    if radius2 < 0:
        raise NegativeRadicandError(f"constraint set is empty (radius^2 = {radius2:.6g})")
    U = np.atleast_2d(u)
    Ainv_U = cache.solve(U.T).T
    lin = 0.5 * U @ Ainv_b
    quad = np.sqrt(np.maximum(np.einsum("ij,ij->i", U, Ainv_U), 0.0))
    val = np.sqrt(np.maximum(lin + quad * np.sqrt(radius2), 0.0))
    return val if np.ndim(u) > 1 else float(val[0])


def exact_supremum(cache, b, c, rho, u, tol=1e-10):
    """``sup sqrt(theta'u)`` over ``theta >= 0`` inside the alignment ball.

    Scans the Lagrange multiplier ``g`` of the quadratic constraint: for each
    ``g`` the maximizer solves ``min g (theta'A theta - theta'b) - u'theta``
    over ``theta >= 0``; bisection makes the constraint tight.
    """
    b = np.asarray(b, dtype=float)
    u = np.asarray(u, dtype=float)

    def theta_at(g):
        x, _ = nonneg_qp(2.0 * g * cache.A, g * b + u)
        return x, float(x @ cache.A @ x - x @ b + c)

    lo, hi = 1e-8, 1.0
    while theta_at(hi)[1] > rho:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("could not bracket the multiplier")
    x, h = theta_at(lo)
    if h <= rho:
        return float(np.sqrt(max(x @ u, 0.0)))
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if theta_at(mid)[1] > rho:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 < tol:
            break
    x, _ = theta_at(hi)
    return float(np.sqrt(max(x @ u, 0.0)))


def monte_carlo_complexity(inputs, bank, draws=5000, seed=0, exact=False):
    """Sampled estimate of ``(1/n) sqrt(R/T) E sup sqrt(theta'u)``.

    ``exact=False`` uses the closed-form supremum at each draw; ``exact=True``
    solves the sign-constrained problem with :func:`exact_supremum` (slow).
    """
    cache = inputs.cache
    rng = np.random.default_rng(seed)
    signs = _sign_draws(rng, bank.sizes, draws)
    U = np.stack([build_u(bank, [s[k] for s in signs]) for k in range(draws)])
    if exact:
        vals = np.array([exact_supremum(cache, inputs.b, inputs.c, inputs.rho, u) for u in U])
    else:
        vals = closed_form_supremum(cache, inputs.b, inputs.c, inputs.rho, U)
    return float(np.sqrt(inputs.R / cache.T) * np.mean(vals) / inputs.n)


def bound_inputs(cache, bank, nbhd, R=1.0, rho=None, n=None):
    """Convenience constructor; ``rho`` defaults to ``c + 1``."""
    b = build_b(bank, nbhd)
    c = build_c(nbhd)
    if n is None:
        n = min(bank.sizes)
    return BoundInputs(R, c + 1.0 if rho is None else rho, n, cache, b, c)
