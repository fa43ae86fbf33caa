"""Scenario-based social optimum: the efficiency benchmark for the NE.

A planner who knows the RPP distribution picks the DA schedule and one RT
redispatch per scenario, minimizing DA cost plus expected RT cost. Line
limits are soft: flow beyond capacity is charged ``psi * excess**2`` per line
and scenario (not probability-weighted).

The excess terms are squared hinges, so the objective is convex and piecewise
quadratic. It is minimized by a Newton iteration over hinge activity: fix
which (scenario, line, direction) hinges are active, minimize the resulting
quadratic exactly (scenario dispatches eliminated block by block), then
backtrack on the true objective if needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .market import MarketParticipants, System, build_system
from .network import NetworkCase

logger = logging.getLogger(__name__)

DEFAULT_PSI = 5000.0
DEFAULT_SCENARIOS = 500
# std/mean above which sampled outputs are truncated at zero
TRUNCATE_RATIO = 0.3
# penalty continuation: start at psi * 10**-PSI_STAGES
PSI_STAGES = 6


@dataclass(frozen=True)
class ScenarioSet:
    x: np.ndarray  # S x K realizations, MW
    prob: np.ndarray  # S
    penalty: float = DEFAULT_PSI

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        prob = np.asarray(self.prob, dtype=float)
        if prob.shape != (x.shape[0],):
            raise ValueError("one probability per scenario")
        if np.any(prob <= 0) or abs(prob.sum() - 1.0) > 1e-9:
            raise ValueError("scenario probabilities must be positive and sum to 1")
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "prob", prob)

    def __len__(self) -> int:
        return self.x.shape[0]

    def with_penalty(self, psi: float) -> "ScenarioSet":
        return ScenarioSet(self.x, self.prob, psi)


def sample_realizations(mu, sigma, n: int, seed: int, truncate_ratio: float = TRUNCATE_RATIO) -> np.ndarray:
    """Independent normal draws, ``n`` rows by ``len(mu)`` columns.

    Columns with std/mean above ``truncate_ratio`` are drawn from the normal
    truncated at zero through an inverse-CDF map of the same standard normal
    draw, so a given seed keeps common random numbers across std levels.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    z = np.random.default_rng(seed).standard_normal((n, mu.size))
    x = mu + sigma * z
    ratio = np.divide(sigma, np.abs(mu), out=np.full_like(sigma, np.inf), where=mu != 0)
    for k in np.flatnonzero((ratio > truncate_ratio) & (sigma > 0)):
        lo = ndtr(-mu[k] / sigma[k])
        u = lo + ndtr(z[:, k]) * (1.0 - lo)
        x[:, k] = mu[k] + sigma[k] * ndtri(np.clip(u, 1e-300, 1 - 1e-16))
    return x


def split_realizations(x, parts: int) -> np.ndarray:
    """Scenario rows for RPPs split by ``MarketParticipants.split_rpps``.

    Every part of an original RPP receives the same share of its realized
    output, so the parts are perfectly correlated.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.repeat(x / parts, parts, axis=1)


def generate_scenarios(participants: MarketParticipants, n: int = DEFAULT_SCENARIOS, seed: int = 0,
                       psi: float = DEFAULT_PSI) -> ScenarioSet:
    if n < 1:
        raise ValueError("need at least one scenario")
    x = sample_realizations(participants.mu, participants.sigma, n, seed)
    return ScenarioSet(x, np.full(n, 1.0 / n), psi)


@dataclass(frozen=True)
class SocialOptimum:
    q_da: np.ndarray
    q_rt: np.ndarray  # S x J
    u_plus: np.ndarray  # S x lines, excess flow from->to
    u_minus: np.ndarray  # S x lines, excess flow to->from
    expected_cost: float  # penalty excluded
    expected_cost_with_penalty: float
    iterations: int

    @property
    def penalty_cost(self) -> float:
        return self.expected_cost_with_penalty - self.expected_cost


class _Problem:
    def __init__(self, system: System, scenarios: ScenarioSet):
        inc = system.inc
        self.system = system
        self.zeta = scenarios.prob
        self.psi = float(scenarios.penalty)
        self.BR = np.ascontiguousarray(system.ptdf @ inc.e_g_rt)
        self.BD = np.ascontiguousarray(system.ptdf @ inc.e_g_da)
        self.H0 = np.ascontiguousarray((scenarios.x @ inc.e_r.T - system.loads) @ system.ptdf.T)
        self.r = np.ascontiguousarray(system.loads.sum() - scenarios.x.sum(axis=1))
        self.T = np.ascontiguousarray(system.caps)
        ups = np.diag(system.alpha_rt)
        E = inc.e_g_dr
        z = self.zeta[:, None, None]
        self.hess_rt = np.ascontiguousarray(z * ups)
        self.lin_rt = np.ascontiguousarray(self.zeta[:, None] * system.beta_rt)
        self.cross = np.ascontiguousarray(z * (ups @ E))
        self.dhess = np.ascontiguousarray(z * (E.T @ ups @ E))
        self.dlin = np.ascontiguousarray(self.zeta[:, None] * (E.T @ system.beta_rt))

    def flows(self, d, Q):
        return Q @ self.BR.T + d @ self.BD.T + self.H0

    def activity(self, d, Q) -> np.ndarray:
        F = self.flows(d, Q)
        return (F > self.T).astype(np.int64) - (F < -self.T).astype(np.int64)

    def parts(self, d, Q) -> tuple[float, float]:
        s = self.system
        cost = float(s.da_cost(d) + self.zeta @ s.rt_cost(Q, d))
        excess = np.maximum(np.abs(self.flows(d, Q)) - self.T, 0.0)
        return cost, self.psi * float(np.sum(excess**2))

    def objective(self, d, Q) -> float:
        return sum(self.parts(d, Q))

    def minimize_model(self, active):
        red_h, red_l, Mq, mq = _kernels.so_reduce(
            self.hess_rt, self.lin_rt, self.cross, self.dhess, self.dlin,
            self.BR, self.BD, self.H0, self.T, np.ascontiguousarray(active), self.r, self.psi,
        )
        red_h = red_h + np.diag(self.system.alpha_da)
        red_l = red_l + self.system.beta_da
        d = np.linalg.solve(red_h, -red_l)
        Q = np.einsum("sji,i->sj", Mq, d) + mq
        return d, Q

    def slope(self, d, Q, dd, dQ):
        """Directional derivative along (dd, dQ) as a function of the step t.

        The smooth part contributes ``a + b t``; the hinge part is piecewise
        linear with breakpoints where a flow crosses a limit.
        """
        s = self.system
        E = s.inc.e_g_dr
        qh, dqh = Q + d @ E.T, dQ + dd @ E.T
        a = float(np.dot(s.alpha_da * d + s.beta_da, dd) + self.zeta @ np.sum((s.alpha_rt * qh + s.beta_rt) * dqh, axis=1))
        b = float(np.dot(s.alpha_da * dd, dd) + self.zeta @ np.sum(s.alpha_rt * dqh * dqh, axis=1))
        F0 = self.flows(d, Q)
        dF = dQ @ self.BR.T + dd @ self.BD.T

        def at(t):
            F = F0 + t * dF
            exc = np.maximum(F - self.T, 0.0) - np.maximum(-F - self.T, 0.0)
            return a + b * t + 2.0 * self.psi * float(np.sum(exc * dF))

        with np.errstate(divide="ignore", invalid="ignore"):
            bps = np.concatenate([((self.T - F0) / dF).ravel(), ((-self.T - F0) / dF).ravel()])
        return at, bps[np.isfinite(bps) & (bps > 0)]

    def exact_step(self, d, Q, dd, dQ, t_max: float = 4.0) -> float:
        """Minimizer of the objective along the direction, for t in [0, t_max]."""
        at, bps = self.slope(d, Q, dd, dQ)
        if at(0.0) >= 0.0:
            return 0.0
        pts = np.unique(np.concatenate([[0.0], bps[bps < t_max], [t_max]]))
        vals_hi = at(pts[-1])
        if vals_hi <= 0.0:
            return float(pts[-1])
        lo, hi = 0, pts.size - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if at(pts[mid]) < 0.0:
                lo = mid
            else:
                hi = mid
        t0, t1 = pts[lo], pts[hi]
        g0, g1 = at(t0), at(t1)
        # slope is linear between consecutive breakpoints
        return float(t0 - g0 * (t1 - t0) / (g1 - g0)) if g1 > g0 else float(t1)


def _newton(prob: _Problem, d, Q, max_iter: int):
    """Semismooth Newton on hinge activity with exact line search."""
    for it in range(1, max_iter + 1):
        active = prob.activity(d, Q)
        d_new, Q_new = prob.minimize_model(active)
        if np.array_equal(prob.activity(d_new, Q_new), active):
            return d_new, Q_new, it, True
        dd, dQ = d_new - d, Q_new - Q
        step = prob.exact_step(d, Q, dd, dQ)
        d, Q = d + step * dd, Q + step * dQ
    return d, Q, max_iter, False


def solve_social_optimum_system(system: System, scenarios: ScenarioSet, max_iter: int = 100) -> SocialOptimum:
    """Minimize expected cost plus line-excess penalty over all scenarios.

    The penalty weight is raised geometrically from a small value up to
    ``scenarios.penalty``, warm-starting each stage, which keeps the number
    of hinge flips per Newton step small.
    """
    prob = _Problem(system, scenarios)
    psi = prob.psi
    S, m = len(scenarios), system.caps.size
    d, Q = prob.minimize_model(np.zeros((S, m), np.int64))
    total = 0
    for stage_psi in [psi * 10.0**-e for e in range(PSI_STAGES, 0, -1)] + [psi]:
        prob.psi = stage_psi
        d, Q, it, ok = _newton(prob, d, Q, max_iter)
        total += it
    if not ok:
        logger.warning("social optimum: hinge activity still changing after %d iterations", max_iter)
    it = total
    F = prob.flows(d, Q)
    cost, pen = prob.parts(d, Q)
    return SocialOptimum(
        q_da=d, q_rt=Q,
        u_plus=np.maximum(F - prob.T, 0.0), u_minus=np.maximum(-F - prob.T, 0.0),
        expected_cost=cost, expected_cost_with_penalty=cost + pen, iterations=it,
    )


def solve_social_optimum(case: NetworkCase, participants: MarketParticipants, scenarios: ScenarioSet,
                         max_iter: int = 100) -> SocialOptimum:
    return solve_social_optimum_system(build_system(case, participants), scenarios, max_iter)
