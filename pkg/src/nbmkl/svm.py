"""Per-task dual solvers: soft-margin classification and epsilon-SVR.

Both reduce to ``min 0.5 a'Qa + p'a  s.t.  y'a = 0, 0 <= a <= C`` and are
solved by SMO with maximal-violating-pair selection.  The inner loop runs in
the compiled ``_smo`` extension when it is importable, otherwise in the
pure-Python ``_smo_py`` module.  Set ``NBMKL_PURE_PYTHON=1`` to force the
fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _smo_py

if os.environ.get("NBMKL_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from ._smo import smo_loop as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
LOOPS = {"python": _smo_py.smo_loop}
if _compiled is not None:
    LOOPS["cython"] = _compiled


class DegenerateTaskError(ValueError):
    """A classification task whose training labels are all identical."""


@dataclass
class SvmSolution:
    """Dual solution of one task.

    ``alpha`` holds the classification duals, or ``(alpha, alpha_star)``
    stacked as one length-``2n`` vector for regression.  ``coef`` is the
    signed expansion used for prediction.
    """

    kind: str
    alpha: np.ndarray
    coef: np.ndarray
    bias: float
    objective: float
    violation: float
    n_iter: int

    @property
    def duals(self):
        if self.kind == "classification":
            return self.alpha
        n = self.coef.shape[0]
        return self.alpha[:n], self.alpha[n:]


def _run(Q, p, y, C, alpha, tol, max_iter, backend):
    loop = LOOPS[backend or BACKEND]
    Q = np.ascontiguousarray(Q, dtype=float)
    grad = Q @ alpha + p
    n_iter, viol = loop(Q, np.ascontiguousarray(p), np.ascontiguousarray(y),
                        np.ascontiguousarray(C), alpha, grad, float(tol), int(max_iter))
    return alpha, grad, int(n_iter), float(viol)


def _bias(alpha, grad, y, C):
    """``-rho`` with rho averaged over free variables (interval midpoint if none)."""
    yg = y * grad
    at_ub = alpha >= C
    at_lb = alpha <= 0
    free = ~(at_ub | at_lb)
    if free.any():
        return -float(np.mean(yg[free]))
    ub_set = (at_ub & (y < 0)) | (at_lb & (y > 0))
    lb_set = (at_ub & (y > 0)) | (at_lb & (y < 0))
    ub = np.min(yg[ub_set]) if ub_set.any() else np.inf
    lb = np.max(yg[lb_set]) if lb_set.any() else -np.inf
    if not np.isfinite(ub):
        ub = lb
    if not np.isfinite(lb):
        lb = ub
    return -0.5 * float(ub + lb)


def _check_kernel(K, n):
    K = np.asarray(K, dtype=float)
    if K.shape != (n, n):
        raise ValueError(f"kernel shape {K.shape} does not match {n} samples")
    if not np.all(np.isfinite(K)):
        raise ValueError("kernel matrix has non-finite entries")
    return K


def _default_iter(n):
    return max(1_000_000, 200 * n)


def solve_svc(K, y, C, tol=1e-3, alpha0=None, max_iter=None, backend=None):
    """Soft-margin SVM dual: ``max a'1 - 0.5 a'YKYa``, ``0 <= a <= C``, ``y'a = 0``."""
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    K = _check_kernel(K, n)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("classification labels must be -1 or +1")
    if np.all(y == y[0]):
        raise DegenerateTaskError("all training labels are identical")
    if not C > 0:
        raise ValueError("C must be positive")
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n) if alpha0 is None else np.clip(np.array(alpha0, float), 0, C)
    Cv = np.full(n, float(C))
    alpha, grad, it, viol = _run(Q, -np.ones(n), y, Cv, alpha, tol,
                                 max_iter or _default_iter(n), backend)
    # a'1 - 0.5 a'Qa with grad = Qa - 1
    obj = -float(0.5 * alpha @ (grad - 1.0))
    return SvmSolution("classification", alpha, alpha * y, _bias(alpha, grad, y, Cv),
                       obj, viol, it)


def solve_svr(K, y, C, epsilon=0.1, tol=1e-3, alpha0=None, max_iter=None, backend=None):
    """epsilon-SVR dual over ``(alpha, alpha*)`` with ``1'(alpha - alpha*) = 0``."""
    t = np.asarray(y, dtype=float).ravel()
    n = t.shape[0]
    K = _check_kernel(K, n)
    if not C > 0:
        raise ValueError("C must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    sgn = np.concatenate([np.ones(n), -np.ones(n)])
    Q = np.block([[K, -K], [-K, K]])
    p = np.concatenate([epsilon - t, epsilon + t])
    alpha = np.zeros(2 * n) if alpha0 is None else np.clip(np.array(alpha0, float), 0, C)
    Cv = np.full(2 * n, float(C))
    alpha, grad, it, viol = _run(Q, p, sgn, Cv, alpha, tol,
                                 max_iter or _default_iter(2 * n), backend)
    obj = -float(0.5 * alpha @ (grad + p))
    coef = alpha[:n] - alpha[n:]
    return SvmSolution("regression", alpha, coef, _bias(alpha, grad, sgn, Cv), obj, viol, it)


def decision(model, k_rows):
    """Scores for one kernel row (vector) or several rows (matrix)."""
    k_rows = np.asarray(k_rows, dtype=float)
    if k_rows.shape[-1] != model.coef.shape[0]:
        raise ValueError(
            f"kernel row length {k_rows.shape[-1]} != training size {model.coef.shape[0]}"
        )
    return k_rows @ model.coef + model.bias


def predict(model, k_rows):
    """Class label (ties go to +1) or regression value."""
    score = decision(model, k_rows)
    if model.kind == "classification":
        return np.where(score >= 0, 1.0, -1.0) if np.ndim(score) else (1.0 if score >= 0 else -1.0)
    return score
