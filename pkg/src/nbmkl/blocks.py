"""Structure objects ``A, b, c, d, q, u`` and the implicit matrix ``V``.

Weight vectors are ordered ``[mu^1..mu^M, lambda_1^1..lambda_T^1,
lambda_1^2..lambda_T^2, ...]``: after the shared block, the task-specific
weights are grouped by base kernel, then by task.  Every stacked vector
built from an ``M x T`` matrix ``B`` is ``[B @ 1_T ; B.ravel()]``, which
realizes ``[B 1 ; vec(B')]`` under that ordering.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import EPS_ABS, EPS_REL, SymmetricFactorization, ridge_for, solve_spd

V_ROW_CAP = 10_000


def stack_blocks(B):
    """``[B 1_T ; vec(B')]`` for an ``M x T`` matrix."""
    B = np.asarray(B, dtype=float)
    return np.concatenate([B.sum(axis=1), B.ravel()])


def unstack(vec, M, T):
    """Split a length ``M + MT`` vector into ``(shared (M,), specific (M, T))``."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (M + M * T,):
        raise ValueError(f"expected length {M + M * T}, got {vec.shape}")
    return vec[:M], vec[M:].reshape(M, T)


def per_task(vec, M, T):
    """Effective per-task weights ``theta_t = mu + lambda_t`` as an ``(T, M)`` array."""
    mu, lam = unstack(vec, M, T)
    return (mu[:, None] + lam).T


def null_directions(M, T):
    """Basis of the structural null space: ``+e_mu^m`` and ``-e_lambda_t^m`` for all t."""
    out = []
    for m in range(M):
        v = np.zeros(M + M * T)
        v[m] = 1.0
        v[M + m * T: M + (m + 1) * T] = -1.0
        out.append(v)
    return out


def _grams(bank):
    return bank.gram if hasattr(bank, "gram") else [np.asarray(G, float) for G in bank]


def task_traces(bank):
    """``trace(K_t^a K_t^b)`` for every task, shape ``(T, M, M)``."""
    out = []
    for G in _grams(bank):
        flat = G.reshape(G.shape[0], -1)
        out.append(flat @ flat.T)
    return np.stack(out)


@dataclass
class StructureCache:
    """``A``, ``d`` and a ridge-regularized factorization of ``A``."""

    A: np.ndarray
    d: np.ndarray
    fact: SymmetricFactorization
    traces: np.ndarray
    M: int
    T: int

    @property
    def ridge(self):
        return self.fact.ridge

    @property
    def dim(self):
        return self.M + self.M * self.T

    def solve(self, rhs):
        """``(A + eps I)^-1 rhs``."""
        return solve_spd(self.fact, rhs)

    def trace_term(self):
        """``trace(V (A+eps I)^-1 V') = trace((A+eps I)^-1 A)``."""
        return float(np.trace(self.solve(self.A)))


def assemble_A(traces):
    T, M, _ = traces.shape
    p = M + M * T
    A = np.zeros((p, p))
    A[:M, :M] = traces.sum(axis=0)
    for t in range(T):
        lam = M + np.arange(M) * T + t
        A[:M, lam] = traces[t]
        A[lam, :M] = traces[t]
        A[np.ix_(lam, lam)] = traces[t]
    return A


def build_d(bank):
    D = np.stack([np.trace(G, axis1=1, axis2=2) for G in _grams(bank)], axis=1)
    return stack_blocks(D)


def build_A(bank, ridge=None, eps_abs=EPS_ABS, eps_rel=EPS_REL):
    """Assemble ``A`` and ``d`` and factor ``A + eps I``.

    ``ridge=None`` selects ``max(eps_abs, eps_rel * trace(A) / dim)``.
    """
    traces = task_traces(bank)
    T, M, _ = traces.shape
    A = assemble_A(traces)
    if ridge is None:
        ridge = ridge_for(A, eps_abs, eps_rel)
    fact = SymmetricFactorization(A, ridge)
    return StructureCache(A, build_d(bank), fact, traces, M, T)


def _matrices(nbhd):
    return nbhd.matrices if hasattr(nbhd, "matrices") else list(nbhd)


def build_b(bank, nbhd):
    """``b`` with ``b_t^m = 2 trace(K_t^m Khat_t)``."""
    grams = _grams(bank)
    mats = _matrices(nbhd)
    if len(mats) != len(grams):
        raise ValueError(f"{len(mats)} neighborhood matrices for {len(grams)} tasks")
    cols = []
    for G, Kh in zip(grams, mats):
        Kh = np.asarray(Kh, dtype=float)
        if Kh.shape != G.shape[1:]:
            raise ValueError(f"neighborhood matrix shape {Kh.shape} != {G.shape[1:]}")
        cols.append(2.0 * np.einsum("mij,ji->m", G, Kh))
    return stack_blocks(np.stack(cols, axis=1))


def build_c(nbhd):
    """``sum_t trace(Khat_t Khat_t)``."""
    return float(sum(np.einsum("ij,ji->", K, K) for K in map(np.asarray, _matrices(nbhd))))


def build_q(bank, duals, labels=None):
    """``q`` with ``q_t^m = 0.5 (Y a)' K_t^m (Y a)``.

    With ``labels=None`` the duals are taken as already signed
    (``beta = alpha - alpha*`` for regression).
    """
    grams = _grams(bank)
    if len(duals) != len(grams):
        raise ValueError(f"{len(duals)} dual vectors for {len(grams)} tasks")
    cols = []
    for t, G in enumerate(grams):
        a = np.asarray(duals[t], dtype=float)
        if labels is not None:
            a = a * np.asarray(labels[t], dtype=float)
        if a.shape != (G.shape[1],):
            raise ValueError(f"dual vector length {a.shape} != task size {G.shape[1]}")
        cols.append(0.5 * np.einsum("i,mij,j->m", a, G, a))
    return stack_blocks(np.stack(cols, axis=1))


def build_u(bank, signs):
    """``u`` with ``u_t^m = s_t' K_t^m s_t`` for sign vectors ``s_t``."""
    return 2.0 * build_q(bank, signs)


def materialize_V(bank, cap=V_ROW_CAP):
    """Explicit ``V`` (``sum_t n_t^2`` rows).  Only meant for small instances."""
    grams = _grams(bank)
    T = len(grams)
    M = grams[0].shape[0]
    rows = sum(G.shape[1] ** 2 for G in grams)
    if rows > cap:
        raise ValueError(f"V would have {rows} rows, above the cap of {cap}")
    V = np.zeros((rows, M + M * T))
    r = 0
    for t, G in enumerate(grams):
        n2 = G.shape[1] ** 2
        # vec() stacks columns; Grams are symmetric but keep the convention explicit
        Vt = np.stack([K.ravel(order="F") for K in G], axis=1)
        V[r:r + n2, :M] = Vt
        V[r:r + n2, M + np.arange(M) * T + t] = Vt
        r += n2
    return V


def vec_stack(nbhd):
    """``[vec(Khat_1); ...; vec(Khat_T)]``."""
    return np.concatenate([np.asarray(K, float).ravel(order="F") for K in _matrices(nbhd)])
