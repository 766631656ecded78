# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled SMO loop; same algorithm and tie-breaking as ``_smo_py``."""

cdef double TAU = 1e-12


def smo_loop(const double[:, ::1] Q, const double[::1] p, const double[::1] y,
             const double[::1] C, double[::1] alpha, double[::1] grad,
             double tol, long max_iter):
    cdef Py_ssize_t n = alpha.shape[0]
    cdef Py_ssize_t t, i, j
    cdef long n_iter = 0
    cdef double viol = 0.0
    cdef double gmax, gmin, s, quad, delta, diff, total
    cdef double ai, aj, ni, nj, Ci, Cj, dai, daj
    cdef bint up, low
    while n_iter < max_iter:
        i = -1
        j = -1
        gmax = 0.0
        gmin = 0.0
        for t in range(n):
            s = -y[t] * grad[t]
            if y[t] > 0:
                up = alpha[t] < C[t]
                low = alpha[t] > 0
            else:
                up = alpha[t] > 0
                low = alpha[t] < C[t]
            if up and (i < 0 or s > gmax):
                gmax = s
                i = t
            if low and (j < 0 or s < gmin):
                gmin = s
                j = t
        if i < 0 or j < 0:
            viol = 0.0
            break
        viol = gmax - gmin
        if viol < tol:
            break
        Ci = C[i]
        Cj = C[j]
        ai = alpha[i]
        aj = alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ni = ai + delta
            nj = aj + delta
            if diff > 0:
                if nj < 0:
                    nj = 0.0
                    ni = diff
            elif ni < 0:
                ni = 0.0
                nj = -diff
            if diff > Ci - Cj:
                if ni > Ci:
                    ni = Ci
                    nj = Ci - diff
            elif nj > Cj:
                nj = Cj
                ni = Cj + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ni = ai - delta
            nj = aj + delta
            if total > Ci:
                if ni > Ci:
                    ni = Ci
                    nj = total - Ci
            elif nj < 0:
                nj = 0.0
                ni = total
            if total > Cj:
                if nj > Cj:
                    nj = Cj
                    ni = total - Cj
            elif ni < 0:
                ni = 0.0
                nj = total
        alpha[i] = ni
        alpha[j] = nj
        dai = ni - ai
        daj = nj - aj
        for t in range(n):
            grad[t] = grad[t] + (Q[i, t] * dai + Q[j, t] * daj)
        n_iter += 1
    return n_iter, viol
