"""Compiled coordinate-descent kernel for penalized weighted least squares.

Solves, for column-centred ``Xc`` and fixed per-row weights ``u``,

    min_b  0.5 * sum_i u_i (r0_i - Xc_i b)^2 + l1 * |b|_1 + 0.5 * l2 * |b|_2^2

updating ``beta`` and the residual ``r`` in place.
"""

import numpy as np
from numba import njit

# relative slack on the soft-threshold so coefficients at lambda_max stay exactly 0
_THRESH_SLACK = 1e-12
# active passes between exact sign-fixed solves, and the largest active set tried
_SOLVE_AFTER = 1
_SOLVE_MAX_ACTIVE = 1000


@njit(cache=True, nogil=True)
def _update(Xc, r, u, xx, l1, l2, beta, j):
    n = Xc.shape[0]
    g = 0.0
    for i in range(n):
        g += u[i] * Xc[i, j] * r[i]
    bj = beta[j]
    t = g + xx[j] * bj
    if abs(t) <= l1 * (1.0 + _THRESH_SLACK):
        nb = 0.0
    elif t > 0:
        nb = (t - l1) / (xx[j] + l2)
    else:
        nb = (t + l1) / (xx[j] + l2)
    d = nb - bj
    if d != 0.0:
        for i in range(n):
            r[i] -= d * Xc[i, j]
        beta[j] = nb
    return abs(d) * np.sqrt(xx[j])


@njit(cache=True, nogil=True)
def _objective(r, u, beta, l1, l2):
    s = 0.0
    for i in range(r.shape[0]):
        s += u[i] * r[i] * r[i]
    pen = 0.0
    for j in range(beta.shape[0]):
        pen += l1 * abs(beta[j]) + 0.5 * l2 * beta[j] * beta[j]
    return 0.5 * s + pen


@njit(cache=True, nogil=True)
def _solve_psd(A, m, diag):
    """Solve the symmetric PSD m x m system in A[:m, :m], right-hand side A[:m, m].

    Elimination runs without pivoting. Returns -1 on success (solution in
    A[:m, m]) or the position of a column that is numerically dependent on
    the earlier ones.
    """
    for c in range(m):
        if A[c, c] <= 1e-9 * diag[c]:
            return c
        for q in range(c + 1, m):
            f = A[q, c] / A[c, c]
            if f != 0.0:
                for k in range(c, m + 1):
                    A[q, k] -= f * A[c, k]
    for a in range(m - 1, -1, -1):
        s = A[a, m]
        for k in range(a + 1, m):
            s -= A[a, k] * A[k, m]
        A[a, m] = s / A[a, a]
    return -1


@njit(cache=True, nogil=True)
def _move(Xc, r, beta, j, value):
    d = value - beta[j]
    if d != 0.0:
        for i in range(Xc.shape[0]):
            r[i] -= d * Xc[i, j]
        beta[j] = value


@njit(cache=True, nogil=True)
def _sign_fixed_solve(Xc, r, u, l1, l2, beta, active, na):
    """Minimize exactly over the active columns, keeping their signs.

    Each round solves the sign-fixed stationarity system, moves toward its
    solution up to the first sign crossing and drops that column at zero.
    Columns dependent on others are held at their current value. Every move
    lowers the objective.
    """
    n = Xc.shape[0]
    W = np.empty((n, na))
    sgn = np.empty(na)
    for a in range(na):
        ja = active[a]
        sgn[a] = 1.0 if beta[ja] > 0 else -1.0
        for i in range(n):
            W[i, a] = np.sqrt(u[i]) * Xc[i, ja]
    H = np.dot(W.T, W)
    c = np.empty(na)
    for a in range(na):
        g = 0.0
        ja = active[a]
        for i in range(n):
            g += u[i] * Xc[i, ja] * r[i]
        for b in range(na):
            g += H[a, b] * beta[active[b]]
        c[a] = g  # Xc_a' U r0, invariant while beta moves
    free = np.ones(na, dtype=np.bool_)
    idx = np.empty(na, dtype=np.int64)
    A = np.empty((na, na + 1))
    diag = np.empty(na)
    rounds = 0
    while rounds < 2 * na + 2:
        rounds += 1
        m = 0
        for a in range(na):
            if free[a]:
                idx[m] = a
                m += 1
        if m == 0:
            return
        for p in range(m):
            ip = idx[p]
            rhs = c[ip] - l1 * sgn[ip]
            for a in range(na):
                if not free[a]:
                    rhs -= H[ip, a] * beta[active[a]]
            for q in range(m):
                A[p, q] = H[ip, idx[q]]
            A[p, p] += l2
            diag[p] = A[p, p]
            A[p, m] = rhs
        dep = _solve_psd(A, m, diag)
        if dep >= 0:
            free[idx[dep]] = False
            continue
        t = 1.0
        hit = -1
        for p in range(m):
            b0 = beta[active[idx[p]]]
            if A[p, m] * sgn[idx[p]] <= 0.0:
                frac = b0 / (b0 - A[p, m])
                if frac < t:
                    t = frac
                    hit = p
        for p in range(m):
            j = active[idx[p]]
            if p == hit:
                _move(Xc, r, beta, j, 0.0)
            else:
                _move(Xc, r, beta, j, beta[j] + t * (A[p, m] - beta[j]))
        if hit < 0:
            return
        free[idx[hit]] = False


@njit(cache=True, nogil=True)
def solve_wls(Xc, r, u, xx, l1, l2, beta, cols, tol, max_sweeps, trace):
    """Cyclic coordinate descent with active-set passes over the columns ``cols``.

    A full pass over ``cols`` alternates with passes restricted to the
    nonzero coefficients until those converge; the solve ends when a full
    pass moves no coefficient by more than ``tol`` (in units of the column's
    weighted norm). Slowly converging active passes are shortcut by
    ``_sign_fixed_solve``. Returns the number of passes, or -1 if ``max_sweeps``
    was exceeded. When ``trace`` is non-empty the penalized objective after
    each pass is written to it (up to its length).
    """
    p = Xc.shape[1]
    sweeps = 0
    ntrace = 0
    while True:
        maxd = 0.0
        for j in cols:
            if xx[j] > 0.0:
                d = _update(Xc, r, u, xx, l1, l2, beta, j)
                if d > maxd:
                    maxd = d
        sweeps += 1
        if ntrace < trace.shape[0]:
            trace[ntrace] = _objective(r, u, beta, l1, l2)
            ntrace += 1
        if maxd < tol:
            return sweeps
        if sweeps >= max_sweeps:
            return -1
        active = np.empty(p, dtype=np.int64)
        na = 0
        for j in range(p):
            if beta[j] != 0.0:
                active[na] = j
                na += 1
        since = 0
        while True:
            if na > 0 and since >= _SOLVE_AFTER and na <= _SOLVE_MAX_ACTIVE:
                since = 0
                _sign_fixed_solve(Xc, r, u, l1, l2, beta, active, na)
                m = 0
                for k in range(na):
                    if beta[active[k]] != 0.0:
                        active[m] = active[k]
                        m += 1
                na = m
            since += 1
            maxd = 0.0
            for k in range(na):
                d = _update(Xc, r, u, xx, l1, l2, beta, active[k])
                if d > maxd:
                    maxd = d
            sweeps += 1
            if ntrace < trace.shape[0]:
                trace[ntrace] = _objective(r, u, beta, l1, l2)
                ntrace += 1
            if maxd < tol:
                break
            if sweeps >= max_sweeps:
                return -1


@njit(cache=True, nogil=True)
def weighted_gram_diag(Xc, u):
    n, p = Xc.shape
    out = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += u[i] * Xc[i, j] * Xc[i, j]
        out[j] = s
    return out
