"""Pure-Python SMO loop (fallback for the compiled ``_smo`` extension).

Solves ``min 0.5 a'Qa + p'a  s.t.  y'a = 0, 0 <= a <= C`` where ``Q`` is the
label-signed matrix and ``y`` is in {-1, +1}.  ``alpha`` and ``grad``
(``Q alpha + p``) are updated in place.
"""
import numpy as np

TAU = 1e-12


def select_pair(alpha, grad, y, C):
    """Maximal violating pair; returns ``(i, j, violation)`` with -1 when none."""
    score = -y * grad
    up = np.where(y > 0, alpha < C, alpha > 0)
    low = np.where(y > 0, alpha > 0, alpha < C)
    if not up.any() or not low.any():
        return -1, -1, 0.0
    iu = np.flatnonzero(up)
    il = np.flatnonzero(low)
    i = iu[np.argmax(score[iu])]
    j = il[np.argmin(score[il])]
    return int(i), int(j), float(score[i] - score[j])


def smo_loop(Q, p, y, C, alpha, grad, tol, max_iter):
    n_iter = 0
    viol = 0.0
    diagQ = np.diag(Q)
    while n_iter < max_iter:
        i, j, viol = select_pair(alpha, grad, y, C)
        if i < 0 or viol < tol:
            break
        Ci, Cj = C[i], C[j]
        ai, aj = alpha[i], alpha[j]
        Qi, Qj = Q[i], Q[j]
        if y[i] != y[j]:
            quad = diagQ[i] + diagQ[j] + 2.0 * Qi[j]
            if quad <= 0:
                quad = TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > Ci - Cj:
                if ni > Ci:
                    ni, nj = Ci, Ci - diff
            elif nj > Cj:
                nj, ni = Cj, Cj + diff
        else:
            quad = diagQ[i] + diagQ[j] - 2.0 * Qi[j]
            if quad <= 0:
                quad = TAU
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > Ci:
                if ni > Ci:
                    ni, nj = Ci, total - Ci
            elif nj < 0:
                nj, ni = 0.0, total
            if total > Cj:
                if nj > Cj:
                    nj, ni = Cj, total - Cj
            elif ni < 0:
                ni, nj = 0.0, total
        alpha[i] = ni
        alpha[j] = nj
        grad += Qi * (ni - ai) + Qj * (nj - aj)
        n_iter += 1
    return n_iter, viol
