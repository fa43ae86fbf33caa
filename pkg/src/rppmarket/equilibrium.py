"""RPP payoffs, best responses and the congestion-pattern search for pure NE."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .closedform import (
    CongestionPattern,
    DaAffineMaps,
    RtAffineMaps,
    SingularPatternError,
    build_da_maps,
    build_rt_maps,
    enumerate_patterns,
)
from .dispatch import (
    DEFAULT_MAX_PATTERN_SIZE,
    DispatchInfeasible,
    DispatchNotConverged,
    RtBatch,
    solve_da_system,
    solve_rt_batch,
)
from .market import MarketParticipants, System, build_system
from .network import NetworkCase
from .socialopt import DEFAULT_SCENARIOS, sample_realizations

logger = logging.getLogger(__name__)

CONCAVITY_TOL = 1e-10
PAYOFF_MODES = ("exact", "mean_field")


class CandidateRejected(ValueError):
    pass


@dataclass(frozen=True)
class PayoffMaps:
    """pi(c) = (a c + a0) * c + (r c + r0) * (mu - c) + var, elementwise in k.

    ``a``/``a0`` are the DA price at each RPP's bus, ``r``/``r0`` the expected
    RT price there, and ``var`` the covariance of the RT price with the
    RPP's own output (zero in ``mean_field`` mode).
    """

    a: np.ndarray
    a0: np.ndarray
    r: np.ndarray
    r0: np.ndarray
    mu: np.ndarray
    var: np.ndarray

    def __call__(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        return (self.a @ c + self.a0) * c + (self.r @ c + self.r0) * (self.mu - c) + self.var

    @property
    def own_curvature(self) -> np.ndarray:
        return 2.0 * (np.diag(self.a) - np.diag(self.r))

    def gradient_system(self) -> tuple[np.ndarray, np.ndarray]:
        """``(B, b)`` with d pi_k / d c_k = (B c + b)_k."""
        diff = self.a - self.r
        B = np.diag(np.diag(diff)) + diff
        b = self.a0 - self.r0 + np.diag(self.r) * self.mu
        return B, b


def payoff_maps(system: System, da_maps: DaAffineMaps, rt_maps: RtAffineMaps, mode: str = "exact") -> PayoffMaps:
    if mode not in PAYOFF_MODES:
        raise ValueError(f"payoff mode must be one of {PAYOFF_MODES}")
    Er = system.inc.e_r
    mu = system.mu
    cross = Er.T @ rt_maps.h2
    var = np.diag(cross) * system.sigma**2 if mode == "exact" else np.zeros(mu.size)
    return PayoffMaps(
        a=Er.T @ da_maps.h1, a0=Er.T @ da_maps.h2,
        r=Er.T @ rt_maps.h1, r0=Er.T @ (rt_maps.h2 @ mu + rt_maps.h3),
        mu=mu, var=var,
    )


def expected_payoffs(da_maps: DaAffineMaps, rt_maps: RtAffineMaps, system: System, c, mode: str = "exact") -> np.ndarray:
    return payoff_maps(system, da_maps, rt_maps, mode)(c)


def best_response_solve(da_maps: DaAffineMaps, rt_maps: RtAffineMaps, system: System) -> np.ndarray:
    """Commitments where every RPP's payoff is stationary in its own commitment."""
    pm = payoff_maps(system, da_maps, rt_maps, "mean_field")
    if np.any(pm.own_curvature > CONCAVITY_TOL):
        raise CandidateRejected("payoff is not concave in the own commitment")
    B, b = pm.gradient_system()
    if B.size and np.linalg.cond(B) > 1e10:
        raise CandidateRejected("best-response system is singular")
    return np.linalg.solve(B, -b)


def best_response_residual(da_maps: DaAffineMaps, rt_maps: RtAffineMaps, system: System, c) -> float:
    B, b = payoff_maps(system, da_maps, rt_maps, "mean_field").gradient_system()
    return float(np.max(np.abs(B @ c + b), initial=0.0))


@dataclass
class EquilibriumCandidate:
    c_tilde: np.ndarray
    da_pattern: CongestionPattern
    rt_pattern: CongestionPattern
    da_consistent: bool = False
    rt_consistency_prob: float = float("nan")
    expected_cost: float = float("nan")
    n_infeasible: int = 0
    payoffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    da_lmps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    expected_rt_lmps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    model_rt_lmps: np.ndarray = field(default_factory=lambda: np.zeros(0))


def check_da_consistency(candidate: EquilibriumCandidate, case: NetworkCase, participants: MarketParticipants,
                         max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE) -> bool:
    """Does the DA market cleared at ``c_tilde`` congest exactly the assumed lines?"""
    system = build_system(case, participants)
    try:
        res = solve_da_system(system, candidate.c_tilde, max_pattern_size)
    except (DispatchInfeasible, DispatchNotConverged) as exc:
        logger.info("DA dispatch failed at candidate %s: %s", candidate.da_pattern, exc)
        return False
    return res.pattern.same_as(candidate.da_pattern)


def _scenario_matrix(participants: MarketParticipants, n_scenarios: int, seed: int, scenarios) -> np.ndarray:
    if scenarios is not None:
        return np.atleast_2d(np.asarray(getattr(scenarios, "x", scenarios), dtype=float))
    return sample_realizations(participants.mu, participants.sigma, n_scenarios, seed)


def _rt_batch(system: System, c, X, max_pattern_size) -> tuple[np.ndarray, RtBatch]:
    q_da = solve_da_system(system, c, max_pattern_size).dispatch
    return q_da, solve_rt_batch(system, q_da, X, max_pattern_size)


def rt_consistency_probability(candidate: EquilibriumCandidate, case: NetworkCase, participants: MarketParticipants,
                               n_scenarios: int = DEFAULT_SCENARIOS, seed: int = 0, scenarios=None,
                               max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE) -> float:
    """Fraction of sampled realizations whose RT congestion matches the assumed RT pattern.

    Infeasible RT scenarios count as disagreement.
    """
    if n_scenarios < 1 and scenarios is None:
        raise ValueError("need at least one scenario")
    system = build_system(case, participants)
    X = _scenario_matrix(participants, n_scenarios, seed, scenarios)
    _, batch = _rt_batch(system, candidate.c_tilde, X, max_pattern_size)
    return float(np.mean(batch.pattern_matches(candidate.rt_pattern)))


def default_pattern_pairs(n_lines: int, max_size: int = DEFAULT_MAX_PATTERN_SIZE,
                          unequal: bool = False) -> list[tuple[CongestionPattern, CongestionPattern]]:
    """Pattern pairs to search: equal DA/RT patterns, or every combination."""
    pats = list(enumerate_patterns(n_lines, max_size))
    if not unequal:
        return [(p, p.as_stage("RT")) for p in pats]
    return [(p, q.as_stage("RT")) for p in pats for q in pats]


def candidate_from_patterns(system: System, da_pattern: CongestionPattern, rt_pattern: CongestionPattern):
    da_maps = build_da_maps(system, da_pattern)
    rt_maps = build_rt_maps(system, rt_pattern, da_maps)
    c = best_response_solve(da_maps, rt_maps, system)
    return c, da_maps, rt_maps


def evaluate_candidate(system: System, cand: EquilibriumCandidate, da_maps: DaAffineMaps, rt_maps: RtAffineMaps,
                       X: np.ndarray, max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE,
                       payoff_mode: str = "exact") -> EquilibriumCandidate:
    """Fill in consistency probability, expected cost and prices from scenario rows ``X``."""
    q_da, batch = _rt_batch(system, cand.c_tilde, X, max_pattern_size)
    ok = batch.feasible
    cand.rt_consistency_prob = float(np.mean(batch.pattern_matches(cand.rt_pattern)))
    cand.n_infeasible = int(np.sum(~ok))
    cand.expected_cost = float(system.da_cost(q_da) + np.mean(batch.cost[ok])) if ok.any() else float("nan")
    cand.payoffs = expected_payoffs(da_maps, rt_maps, system, cand.c_tilde, payoff_mode)
    cand.da_lmps = da_maps.lmps(cand.c_tilde)
    cand.expected_rt_lmps = batch.lmps[ok].mean(axis=0) if ok.any() else np.full(system.case.n_buses, np.nan)
    cand.model_rt_lmps = rt_maps.lmps(cand.c_tilde, system.mu)
    return cand


def find_pure_ne(case: NetworkCase, participants: MarketParticipants,
                 pattern_candidates: Iterable[tuple[CongestionPattern, CongestionPattern]],
                 n_scenarios: int = DEFAULT_SCENARIOS, seed: int = 0, scenarios=None,
                 max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE,
                 payoff_mode: str = "exact") -> list[EquilibriumCandidate]:
    """Search assumed (DA, RT) pattern pairs for pure NE.

    For each pair: build the affine price maps, solve the best-response
    system, keep the candidate if clearing the DA market at it reproduces the
    assumed DA pattern, and record how often RT clearing reproduces the
    assumed RT pattern over the sampled realizations.
    """
    system = build_system(case, participants)
    X = None
    found = []
    for da_pat, rt_pat in pattern_candidates:
        try:
            c, da_maps, rt_maps = candidate_from_patterns(system, da_pat, rt_pat)
        except (SingularPatternError, CandidateRejected) as exc:
            logger.debug("pattern pair (%s, %s) skipped: %s", da_pat, rt_pat, exc)
            continue
        cand = EquilibriumCandidate(c, da_pat.as_stage("DA"), rt_pat.as_stage("RT"))
        if not check_da_consistency(cand, case, participants, max_pattern_size):
            continue
        cand.da_consistent = True
        if X is None:
            X = _scenario_matrix(participants, n_scenarios, seed, scenarios)
        try:
            evaluate_candidate(system, cand, da_maps, rt_maps, X, max_pattern_size, payoff_mode)
        except (DispatchInfeasible, DispatchNotConverged) as exc:
            logger.info("candidate (%s, %s) could not be evaluated: %s", da_pat, rt_pat, exc)
            continue
        found.append(cand)
    return found


def payoff_at(system: System, rt_pattern: CongestionPattern, c, k: int, max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE,
              mode: str = "exact") -> float:
    """RPP ``k``'s expected payoff with the DA market actually cleared at ``c``.

    The DA pattern is whatever DA clearing produces at ``c``; RT prices follow
    the fixed assumed ``rt_pattern``.
    """
    res = solve_da_system(system, c, max_pattern_size)
    da_maps = build_da_maps(system, res.pattern)
    rt_maps = build_rt_maps(system, rt_pattern, da_maps)
    return float(expected_payoffs(da_maps, rt_maps, system, c, mode)[k])


def ne_first_order_check(candidate: EquilibriumCandidate, case: NetworkCase, participants: MarketParticipants,
                         grid_width: float = 10.0, n_points: int = 201, rel_tol: float = 1e-4,
                         max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE, mode: str = "exact") -> bool:
    """Grid search of unilateral deviations around ``c_tilde``.

    True iff no deviation of any single RPP within ``+-grid_width`` MW raises
    its payoff by more than ``rel_tol`` relative to the candidate payoff.
    """
    return max(ne_grid_improvements(candidate, case, participants, grid_width, n_points,
                                    max_pattern_size, mode), default=0.0) <= rel_tol


def ne_grid_improvements(candidate: EquilibriumCandidate, case: NetworkCase, participants: MarketParticipants,
                         grid_width: float = 10.0, n_points: int = 201,
                         max_pattern_size: int = DEFAULT_MAX_PATTERN_SIZE, mode: str = "exact") -> list[float]:
    """Best relative payoff gain per RPP over the deviation grid."""
    system = build_system(case, participants)
    c0 = np.asarray(candidate.c_tilde, dtype=float)
    gains = []
    for k in range(c0.size):
        base = payoff_at(system, candidate.rt_pattern, c0, k, max_pattern_size, mode)
        best = -np.inf
        for v in c0[k] + np.linspace(-grid_width, grid_width, n_points):
            c = c0.copy()
            c[k] = v
            try:
                best = max(best, payoff_at(system, candidate.rt_pattern, c, k, max_pattern_size, mode))
            except (DispatchInfeasible, DispatchNotConverged, SingularPatternError):
                continue
        gains.append((best - base) / max(abs(base), 1e-12))
    return gains


def same_candidates(a: Sequence[EquilibriumCandidate], b: Sequence[EquilibriumCandidate]) -> bool:
    return len(a) == len(b) and all(
        x.da_pattern.same_as(y.da_pattern) and x.rt_pattern.same_as(y.rt_pattern)
        and np.array_equal(x.c_tilde, y.c_tilde) and x.rt_consistency_prob == y.rt_consistency_prob
        for x, y in zip(a, b)
    )
