import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from conftest import random_case_doc, two_bus_doc
from rppmarket.closedform import CongestionPattern
from rppmarket.dispatch import (
    DispatchInfeasible,
    active_set_solve,
    enumerate_solve,
    lmp_finite_difference,
    solve_da,
    solve_rt,
    solve_rt_batch,
)
from rppmarket.market import build_system
from rppmarket.network import parse_case


def test_two_bus_da_by_hand(two_bus):
    case, parts = two_bus
    res = solve_da(case, parts, [2.0])
    assert np.allclose(res.dispatch, [5.0, 3.0])
    assert np.allclose(res.lmps, [1.5, 5.6])
    assert res.pattern.same_as(CongestionPattern(((0, 1),)))
    assert res.gamma[0] == pytest.approx(4.1)
    assert res.objective == pytest.approx(0.05 * 25 + 5 + 0.1 * 9 + 15)


def test_two_bus_uncongested():
    case, parts = parse_case(two_bus_doc(capacity=100.0))
    res = solve_da(case, parts, [2.0])
    # 0.1 q0 + 1 = 0.2 q1 + 5 with q0 + q1 = 8
    assert np.allclose(res.dispatch, [56 / 3 + 0, 8 - 56 / 3])
    assert np.allclose(res.lmps, res.lmps[0])
    assert len(res.pattern) == 0


def test_two_bus_rt_by_hand(two_bus):
    case, parts = two_bus
    q_da = np.array([5.0, 3.0])
    # one MW more than committed: r0 + r1 = -1, marginals 0.4 (r0 + 5) + 2 = 0.6 r1 + 3
    res = solve_rt(case, parts, [2.0], q_da, [3.0])
    assert np.allclose(res.dispatch, [-1.6, 0.6])
    assert np.allclose(res.lmps, [3.36, 3.36])
    assert len(res.pattern) == 0


def test_infeasible_dispatch_raises():
    doc = two_bus_doc(capacity=1.0)
    doc["da_generators"].pop(1)
    doc["rt_generators"] = [doc["rt_generators"][0]]
    case, parts = parse_case(doc)
    with pytest.raises(DispatchInfeasible):
        solve_da(case, parts, [2.0])


def test_finite_difference_matches_two_bus(two_bus):
    case, parts = two_bus
    for bus, price in enumerate([1.5, 5.6]):
        assert lmp_finite_difference(case, parts, [2.0], bus) == pytest.approx(price, abs=1e-4)


def _scipy_qp(h, g, M, f0, T, b):
    n = h.size
    cons = [{"type": "eq", "fun": lambda q: q.sum() - b, "jac": lambda q: np.ones(n)}]
    if M.shape[0]:
        cons.append({"type": "ineq", "fun": lambda q: T - (M @ q + f0), "jac": lambda q: -M})
        cons.append({"type": "ineq", "fun": lambda q: T + (M @ q + f0), "jac": lambda q: M})
    res = minimize(lambda q: 0.5 * h @ q**2 + g @ q, np.full(n, b / n), jac=lambda q: h * q + g,
                   constraints=cons, method="SLSQP", options={"ftol": 1e-13, "maxiter": 500})
    return res


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_active_set_solution_is_kkt_certified(seed):
    rng = np.random.default_rng(seed)
    case, parts = parse_case(random_case_doc(rng))
    s = build_system(case, parts)
    c = parts.mu
    h, g = s.alpha_da, s.beta_da
    M = s.ptdf @ s.inc.e_g_da
    f0 = s.ptdf @ (s.inc.e_r @ c - s.loads)
    b = s.loads.sum() - c.sum()
    try:
        sol = active_set_solve(h, g, M, f0, s.caps, b)
    except DispatchInfeasible:
        return
    flows = M @ sol.q + f0
    # primal feasibility, dual sign, complementarity, stationarity
    assert sol.q.sum() == pytest.approx(b, abs=1e-8)
    assert np.all(np.abs(flows) <= s.caps + 1e-7)
    assert np.all(sol.gamma >= -1e-9)
    slack = s.caps - sol.sign * flows
    assert np.all(np.abs(sol.gamma * np.where(sol.sign != 0, slack, 0.0)) <= 1e-7)
    grad = h * sol.q + g + M.T @ (sol.gamma * sol.sign) + sol.tau
    assert np.allclose(grad, 0.0, atol=1e-7)
    ref = _scipy_qp(h, g, M, f0, s.caps, b)
    if ref.success:
        obj = 0.5 * h @ sol.q**2 + g @ sol.q
        assert obj <= ref.fun + 1e-6 * max(1.0, abs(ref.fun))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_enumeration_agrees_with_active_set(seed):
    rng = np.random.default_rng(seed)
    case, parts = parse_case(random_case_doc(rng))
    s = build_system(case, parts)
    c = parts.mu
    M = s.ptdf @ s.inc.e_g_da
    f0 = s.ptdf @ (s.inc.e_r @ c - s.loads)
    b = s.loads.sum() - c.sum()
    try:
        sol = active_set_solve(s.alpha_da, s.beta_da, M, f0, s.caps, b, max_pattern_size=case.n_lines)
    except DispatchInfeasible:
        return
    ref = enumerate_solve(s.alpha_da, s.beta_da, M, f0, s.caps, b, case.n_lines)
    assert ref is not None
    assert np.allclose(sol.q, ref.q, atol=1e-8)


def test_batch_matches_single_solves(two_bus):
    case, parts = two_bus
    s = build_system(case, parts)
    q_da = np.array([5.0, 3.0])
    X = np.array([[1.0], [2.0], [3.0], [6.0]])
    batch = solve_rt_batch(s, q_da, X)
    for row, x in enumerate(X):
        single = solve_rt(case, parts, [2.0], q_da, x)
        assert np.allclose(batch.dispatch[row], single.dispatch)
        assert np.allclose(batch.lmps[row], single.lmps)
    assert batch.feasible.all()
