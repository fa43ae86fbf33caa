"""Hot numeric kernels.

Each kernel is written once in a numba-compatible subset of numpy and built
either as plain Python (the reference path) or, when numba is importable, as
``@njit`` functions. The choice is made once at import time;
``RPPMARKET_NUMBA=0`` forces the pure-numpy path.

Kernels:

``qp_active_set``
    min 0.5 q'diag(h)q + g'q  s.t.  sum(q) = b,  -T <= M q + f0 <= T
    with a single add/drop working-set loop over the line limits.
``qp_active_set_batch``
    the same problem for a stack of (g, f0, b) rows sharing h, M, T.
``so_reduce``
    per-scenario elimination used by the social-optimum Newton step.
"""

from __future__ import annotations

import os

import numpy as np

# status codes returned by the QP kernels
OK = 0
CYCLE = 1
SINGULAR = 2

# reciprocal condition number below which a KKT matrix is treated as singular
RCOND_MIN = 1e-10


def _env_wants_numba() -> bool:
    return os.environ.get("RPPMARKET_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False
    njit = None

USE_NUMBA = NUMBA_AVAILABLE and _env_wants_numba()
BACKEND = "numba" if USE_NUMBA else "numpy"


def kernel(func):
    """``njit(cache=True)`` when the numba path is selected, else identity."""
    if USE_NUMBA:
        return njit(cache=True)(func)
    return func


@kernel
def kkt_solve(h, M, f0, T, b, g, sign):
    n = h.shape[0]
    m = M.shape[0]
    na = 0
    for l in range(m):
        if sign[l] != 0:
            na += 1
    dim = n + na + 1
    Z = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    for i in range(n):
        Z[i, i] = h[i]
        Z[i, dim - 1] = 1.0
        Z[dim - 1, i] = 1.0
        rhs[i] = -g[i]
    rhs[dim - 1] = b
    rows = np.empty(na, np.int64)
    a = 0
    for l in range(m):
        s = sign[l]
        if s != 0:
            rows[a] = l
            for i in range(n):
                Z[n + a, i] = s * M[l, i]
                Z[i, n + a] = s * M[l, i]
            rhs[n + a] = T[l] - s * f0[l]
            a += 1
    sv = np.linalg.svd(Z)[1]
    if sv[-1] <= RCOND_MIN * sv[0]:
        return np.zeros(dim), rows, False
    return np.linalg.solve(Z, rhs), rows, True


@kernel
def qp_active_set(h, g, M, f0, T, b, tol, max_iter):
    n = h.shape[0]
    m = M.shape[0]
    sign = np.zeros(m, np.int64)
    history = np.zeros((max_iter, m), np.int64)
    q = np.zeros(n)
    gamma = np.zeros(m)
    tau = 0.0
    for it in range(max_iter):
        for k in range(it):
            same = True
            for l in range(m):
                if history[k, l] != sign[l]:
                    same = False
                    break
            if same:
                return q, sign, gamma, tau, CYCLE, it
        history[it, :] = sign
        sol, rows, ok = kkt_solve(h, M, f0, T, b, g, sign)
        if not ok:
            return q, sign, gamma, tau, SINGULAR, it
        na = rows.shape[0]
        q = sol[:n].copy()
        gamma = np.zeros(m)
        for a in range(na):
            gamma[rows[a]] = sol[n + a]
        tau = sol[n + na]
        # drop the most negative multiplier; ties go to the lowest line id
        drop = -1
        worst = -tol
        for a in range(na):
            if sol[n + a] < worst:
                worst = sol[n + a]
                drop = rows[a]
        if drop >= 0:
            sign[drop] = 0
            continue
        # add the most violated limit; forward before reverse on ties
        flows = M @ q + f0
        add = -1
        add_s = 0
        best = tol
        for l in range(m):
            if sign[l] != 0:
                continue
            v = flows[l] - T[l]
            if v > best:
                best = v
                add = l
                add_s = 1
            v = -flows[l] - T[l]
            if v > best:
                best = v
                add = l
                add_s = -1
        if add >= 0:
            sign[add] = add_s
            continue
        return q, sign, gamma, tau, OK, it + 1
    return q, sign, gamma, tau, CYCLE, max_iter


@kernel
def qp_active_set_batch(h, G, M, F0, T, B, tol, max_iter):
    S = G.shape[0]
    n = h.shape[0]
    m = M.shape[0]
    Q = np.zeros((S, n))
    SIGN = np.zeros((S, m), np.int64)
    GAMMA = np.zeros((S, m))
    TAU = np.zeros(S)
    STATUS = np.zeros(S, np.int64)
    for s in range(S):
        q, sign, gamma, tau, status, _ = qp_active_set(h, G[s], M, F0[s], T, B[s], tol, max_iter)
        Q[s] = q
        SIGN[s] = sign
        GAMMA[s] = gamma
        TAU[s] = tau
        STATUS[s] = status
    return Q, SIGN, GAMMA, TAU, STATUS


@kernel
def so_reduce(hess_rt, lin_rt, cross, dhess, dlin, BR, BD, H0, T, active, r, psi):
    """Eliminate scenario dispatches for a fixed hinge-activity pattern.

    Scenario ``y`` contributes the quadratic
        0.5 q'Hq + q'C d + 0.5 d'D d + g'q + e'd
    with ``sum(q) + sum(d) = r[y]``. Returns the reduced Hessian and
    gradient in the DA dispatch ``d`` and the affine maps q = Mq d + mq.
    """
    S = H0.shape[0]
    J = BR.shape[1]
    I = BD.shape[1]
    m = BR.shape[0]
    red_h = np.zeros((I, I))
    red_l = np.zeros(I)
    Mq = np.zeros((S, J, I))
    mq = np.zeros((S, J))
    for y in range(S):
        H = hess_rt[y].copy()
        C = cross[y].copy()
        D = dhess[y].copy()
        g = lin_rt[y].copy()
        e = dlin[y].copy()
        for l in range(m):
            s = active[y, l]
            if s == 0:
                continue
            w = 2.0 * psi
            off = H0[y, l] - s * T[l]
            for i in range(J):
                g[i] += w * off * BR[l, i]
                for j in range(J):
                    H[i, j] += w * BR[l, i] * BR[l, j]
                for j in range(I):
                    C[i, j] += w * BR[l, i] * BD[l, j]
            for i in range(I):
                e[i] += w * off * BD[l, i]
                for j in range(I):
                    D[i, j] += w * BD[l, i] * BD[l, j]
        K = np.zeros((J + 1, J + 1))
        K[:J, :J] = H
        K[:J, J] = 1.0
        K[J, :J] = 1.0
        R = np.zeros((J + 1, I + 1))
        R[:J, :I] = -C
        R[J, :I] = -1.0
        R[:J, I] = -g
        R[J, I] = r[y]
        X = np.linalg.solve(K, R)
        My = np.ascontiguousarray(X[:J, :I])
        my = np.ascontiguousarray(X[:J, I])
        Mq[y] = My
        mq[y] = my
        MyT = np.ascontiguousarray(My.T)
        CT = np.ascontiguousarray(C.T)
        red_h += MyT @ (H @ My) + MyT @ C + CT @ My + D
        red_l += MyT @ (H @ my) + CT @ my + MyT @ g + e
    return red_h, red_l, Mq, mq

