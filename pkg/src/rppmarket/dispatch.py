"""Exact DA and RT economic dispatch on the DC network.

Both problems are strictly convex QPs with one balance equality and two-sided
line limits. They are solved by the working-set kernel in ``_kernels``; when
that cycles, the solver checks feasibility with an LP and then falls back to
enumerating small congestion patterns. This module does not use the
closed-form maps, so it can serve as their oracle.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from .closedform import CongestionPattern
from .market import MarketParticipants, System, build_system
from .network import NetworkCase

logger = logging.getLogger(__name__)

# $/MW; multipliers at or below this are treated as degenerate (not congested)
GAMMA_TOL = 1e-8
# MW; primal violation tolerance inside the working-set loop
FEAS_TOL = 1e-9
DEFAULT_MAX_PATTERN_SIZE = 2
DEFAULT_FD_EPS = 1e-4


class DispatchInfeasible(RuntimeError):
    pass


class DispatchNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class QpSolution:
    q: np.ndarray
    sign: np.ndarray  # working set per line: 0, +1, -1
    gamma: np.ndarray  # per line, zero off the working set
    tau: float
    iterations: int
    method: str


@dataclass(frozen=True)
class DispatchResult:
    dispatch: np.ndarray
    lmps: np.ndarray
    pattern: CongestionPattern
    objective: float
    gamma: np.ndarray  # per line
    tau: float
    flows: np.ndarray
    method: str = "active-set"

    @property
    def duals(self) -> tuple[np.ndarray, float]:
        return self.gamma, self.tau


def _qp_objective(h, g, q):
    return 0.5 * np.dot(h * q, q) + np.dot(g, q)


def is_feasible(M, f0, T, b) -> bool:
    """LP check: does any q satisfy sum(q) = b and |M q + f0| <= T?"""
    n = M.shape[1]
    if M.shape[0] == 0:
        return n > 0 or abs(b) <= 1e-9
    res = linprog(
        np.zeros(n),
        A_ub=np.vstack([M, -M]),
        b_ub=np.concatenate([T - f0, T + f0]),
        A_eq=np.ones((1, n)),
        b_eq=[b],
        bounds=[(None, None)] * n,
        method="highs",
    )
    return res.status == 0


def enumerate_solve(h, g, M, f0, T, b, max_size: int) -> QpSolution | None:
    """Exhaustive search over working sets of at most ``max_size`` lines.

    Returns the KKT point that is primal and dual feasible, or None.
    """
    m = M.shape[0]
    best = None
    for size in range(0, min(max_size, m) + 1):
        for lines in itertools.combinations(range(m), size):
            for signs in itertools.product((1, -1), repeat=size):
                sign = np.zeros(m, np.int64)
                sign[list(lines)] = signs
                sol, rows, ok = _kernels.kkt_solve(h, M, f0, T, b, g, sign)
                if not ok:
                    continue
                n = h.size
                q = sol[:n]
                gam = sol[n:n + size]
                if np.any(gam < -1e-9):
                    continue
                flows = M @ q + f0
                if np.any(np.abs(flows) > T + 1e-7):
                    continue
                obj = _qp_objective(h, g, q)
                if best is None or obj < best[0] - 1e-12:
                    gamma = np.zeros(m)
                    gamma[rows] = gam
                    best = (obj, QpSolution(q.copy(), sign, gamma, float(sol[-1]), 0, "enumeration"))
    return None if best is None else best[1]


def active_set_solve(h, g, M, f0, T, b, max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE) -> QpSolution:
    """min 0.5 q'diag(h)q + g'q  s.t. sum(q) = b, |M q + f0| <= T."""
    h = np.ascontiguousarray(h, dtype=float)
    g = np.ascontiguousarray(g, dtype=float)
    M = np.ascontiguousarray(M, dtype=float)
    f0 = np.ascontiguousarray(f0, dtype=float)
    T = np.ascontiguousarray(T, dtype=float)
    max_iter = 4 * M.shape[0] + 20
    q, sign, gamma, tau, status, it = _kernels.qp_active_set(h, g, M, f0, T, float(b), FEAS_TOL, max_iter)
    if status == _kernels.OK:
        return QpSolution(q, sign, gamma, float(tau), int(it), "active-set")
    if not is_feasible(M, f0, T, b):
        raise DispatchInfeasible("no dispatch satisfies the balance and line limits")
    logger.debug("working-set loop stopped with status %d; enumerating patterns", status)
    sol = enumerate_solve(h, g, M, f0, T, b, max_pattern_size)
    if sol is None:
        raise DispatchNotConverged(
            f"no optimal pattern with at most {max_pattern_size} binding lines"
        )
    return sol


def _result(system: System, sol: QpSolution, M, f0, objective: float, stage: str) -> DispatchResult:
    ptdf = system.ptdf
    flows = M @ sol.q + f0
    active = [(l, int(sol.sign[l])) for l in range(ptdf.shape[0]) if sol.sign[l] != 0 and sol.gamma[l] > GAMMA_TOL]
    gamma = np.where(sol.sign != 0, sol.gamma, 0.0)
    # bus price = -tau - sum_l gamma_l * s_l * PTDF_l,u
    lmps = -sol.tau - (gamma * sol.sign) @ ptdf
    return DispatchResult(
        dispatch=sol.q, lmps=lmps, pattern=CongestionPattern(tuple(active), stage),
        objective=float(objective), gamma=gamma, tau=sol.tau, flows=flows, method=sol.method,
    )


def _da_problem(system: System, c, load_shift=None):
    inc = system.inc
    loads = system.loads if load_shift is None else system.loads + load_shift
    M = system.ptdf @ inc.e_g_da
    f0 = system.ptdf @ (inc.e_r @ c - loads)
    b = loads.sum() - np.sum(c)
    return system.alpha_da, system.beta_da, M, f0, b


def _rt_problem(system: System, q_da, x, rt_load=None):
    inc = system.inc
    h = system.alpha_rt
    g = system.beta_rt + h * (inc.e_g_dr @ q_da)
    M = system.ptdf @ inc.e_g_rt
    net = inc.e_g_da @ q_da + inc.e_r @ x - system.loads
    if rt_load is not None:
        net = net - rt_load
    f0 = system.ptdf @ net
    b = -net.sum()
    return h, g, M, f0, b


def solve_da_system(system: System, c, max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE, load_shift=None) -> DispatchResult:
    c = np.asarray(c, dtype=float)
    h, g, M, f0, b = _da_problem(system, c, load_shift)
    sol = active_set_solve(h, g, M, f0, system.caps, b, max_pattern_size)
    return _result(system, sol, M, f0, system.da_cost(sol.q), "DA")


def solve_rt_system(system: System, c, q_da, x, max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE, rt_load=None) -> DispatchResult:
    q_da = np.asarray(q_da, dtype=float)
    x = np.asarray(x, dtype=float)
    h, g, M, f0, b = _rt_problem(system, q_da, x, rt_load)
    sol = active_set_solve(h, g, M, f0, system.caps, b, max_pattern_size)
    return _result(system, sol, M, f0, system.rt_cost(sol.q, q_da), "RT")


def solve_da(case: NetworkCase, participants: MarketParticipants, c, max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE) -> DispatchResult:
    """Optimal DA dispatch with the RPP commitments ``c`` taken as firm."""
    return solve_da_system(build_system(case, participants), c, max_pattern_size)


def solve_rt(case: NetworkCase, participants: MarketParticipants, c, q_da, x,
             max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE) -> DispatchResult:
    """Optimal RT redispatch given the DA schedule ``q_da`` and realizations ``x``.

    ``c`` only enters through ``q_da`` (the DA schedule already nets out the
    commitments); it is accepted for symmetry with the market description.
    """
    return solve_rt_system(build_system(case, participants), c, q_da, x, max_pattern_size)


@dataclass(frozen=True)
class RtBatch:
    dispatch: np.ndarray  # S x J
    lmps: np.ndarray  # S x N
    sign: np.ndarray  # S x lines, reported pattern (degenerate lines zeroed)
    feasible: np.ndarray  # S bool
    cost: np.ndarray  # S

    def pattern_matches(self, pattern: CongestionPattern) -> np.ndarray:
        target = np.zeros(self.sign.shape[1], np.int64)
        for l, s in pattern.entries:
            target[l] = s
        return self.feasible & np.all(self.sign == target, axis=1)


def solve_rt_batch(system: System, q_da, X, max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE) -> RtBatch:
    """RT dispatch for every row of ``X`` with a fixed DA schedule."""
    q_da = np.asarray(q_da, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    inc = system.inc
    S = X.shape[0]
    h = np.ascontiguousarray(system.alpha_rt)
    g = system.beta_rt + h * (inc.e_g_dr @ q_da)
    M = np.ascontiguousarray(system.ptdf @ inc.e_g_rt)
    net = (inc.e_g_da @ q_da - system.loads)[None, :] + X @ inc.e_r.T
    F0 = np.ascontiguousarray(net @ system.ptdf.T)
    B = np.ascontiguousarray(-net.sum(axis=1))
    G = np.ascontiguousarray(np.broadcast_to(g, (S, g.size)))
    T = np.ascontiguousarray(system.caps)
    max_iter = 4 * M.shape[0] + 20
    Q, SIGN, GAMMA, TAU, STATUS = _kernels.qp_active_set_batch(h, G, M, F0, T, B, FEAS_TOL, max_iter)
    feasible = np.ones(S, bool)
    for s in np.flatnonzero(STATUS != _kernels.OK):
        try:
            sol = active_set_solve(h, g, M, F0[s], T, B[s], max_pattern_size)
        except (DispatchInfeasible, DispatchNotConverged):
            feasible[s] = False
            continue
        Q[s], SIGN[s], GAMMA[s], TAU[s] = sol.q, sol.sign, sol.gamma, sol.tau
    gamma = np.where(SIGN != 0, GAMMA, 0.0)
    lmps = -TAU[:, None] - (gamma * SIGN) @ system.ptdf
    reported = np.where(gamma > GAMMA_TOL, SIGN, 0)
    cost = system.rt_cost(Q, q_da)
    lmps[~feasible] = np.nan
    cost[~feasible] = np.nan
    return RtBatch(Q, lmps, reported, feasible, cost)


def lmp_finite_difference(case: NetworkCase, participants: MarketParticipants, c, bus: int,
                          eps: float = DEFAULT_FD_EPS, stage: str = "DA", q_da=None, x=None,
                          max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE) -> float:
    """Marginal cost of serving more load at ``bus``, by central difference with step ``eps`` MW.

    For ``stage="RT"`` the DA schedule ``q_da`` (default: the DA optimum at
    ``c``) is held fixed and the extra load enters the RT balance only.
    """
    system = build_system(case, participants)
    c = np.asarray(c, dtype=float)
    if stage == "DA":
        def solve(shift):
            return solve_da_system(system, c, max_pattern_size, load_shift=shift)
    else:
        if q_da is None:
            q_da = solve_da_system(system, c, max_pattern_size).dispatch
        x = c if x is None else np.asarray(x, dtype=float)

        def solve(shift):
            return solve_rt_system(system, c, q_da, x, max_pattern_size, rt_load=shift)

    # central difference: exact for quadratic costs while the binding set holds
    base = solve(None)
    for _ in range(4):
        shift = np.zeros(case.n_buses)
        shift[bus] = eps
        up, down = solve(shift), solve(-shift)
        if up.pattern.same_as(base.pattern) and down.pattern.same_as(base.pattern):
            return (up.objective - down.objective) / (2 * eps)
        eps /= 10
    raise DispatchNotConverged("binding set changed under every finite-difference step")
