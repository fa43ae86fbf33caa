import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import one_bus_doc, triangle_doc, two_bus_doc
from rppmarket.dispatch import solve_da_system, solve_rt_system
from rppmarket.market import build_system
from rppmarket.network import parse_case
from rppmarket.socialopt import (
    ScenarioSet,
    generate_scenarios,
    sample_realizations,
    solve_social_optimum_system,
    split_realizations,
)


def combined_qp(system, x):
    """One-scenario planner problem without line limits, solved from its KKT system.

    Variables (q_D, q_R); cost DA(q_D) + RT(q_R + E q_D); one balance row.
    """
    E = system.inc.e_g_dr
    I, J = system.n_da, system.n_rt
    aR, bR = system.alpha_rt, system.beta_rt
    H = np.zeros((I + J, I + J))
    H[:I, :I] = np.diag(system.alpha_da) + E.T @ np.diag(aR) @ E
    H[:I, I:] = E.T @ np.diag(aR)
    H[I:, :I] = np.diag(aR) @ E
    H[I:, I:] = np.diag(aR)
    g = np.concatenate([system.beta_da + E.T @ bR, bR])
    K = np.zeros((I + J + 1, I + J + 1))
    K[:-1, :-1] = H
    K[:-1, -1] = K[-1, :-1] = 1.0
    sol = np.linalg.solve(K, np.concatenate([-g, [system.loads.sum() - np.sum(x)]]))
    return sol[:I], sol[I:I + J]


def test_scenario_set_validation():
    with pytest.raises(ValueError):
        ScenarioSet(np.zeros((2, 1)), np.array([0.3, 0.3]))
    with pytest.raises(ValueError):
        ScenarioSet(np.zeros((2, 1)), np.array([0.5, 0.5]), penalty=0.0)
    with pytest.raises(ValueError):
        ScenarioSet(np.zeros((2, 1)), np.array([1.0]))


def test_single_zero_std_scenario(two_bus):
    _, parts = two_bus
    scen = generate_scenarios(parts.with_std_ratio(0.0), n=1, seed=3)
    assert np.array_equal(scen.x, [parts.mu]) and scen.prob[0] == 1.0


def test_sampling_is_deterministic_and_centered():
    mu, sigma = np.array([70.0, 50.0]), np.array([10.5, 7.5])
    a = sample_realizations(mu, sigma, 500, 11)
    assert np.array_equal(a, sample_realizations(mu, sigma, 500, 11))
    assert np.all(np.abs(a.mean(axis=0) - mu) <= 3 * sigma / np.sqrt(500))


def test_truncation_only_above_ratio():
    mu, sigma = np.array([1.0, 10.0]), np.array([0.8, 2.0])
    x = sample_realizations(mu, sigma, 20000, 0)
    assert x[:, 0].min() >= 0.0
    z = np.random.default_rng(0).standard_normal((20000, 2))
    assert np.array_equal(x[:, 1], mu[1] + sigma[1] * z[:, 1])


def test_split_realizations_are_shares():
    x = np.array([[6.0, 9.0]])
    assert np.array_equal(split_realizations(x, 3), [[2.0, 2.0, 2.0, 3.0, 3.0, 3.0]])


@pytest.mark.parametrize("doc", [two_bus_doc(capacity=1e5), triangle_doc(capacity=1e5), one_bus_doc()])
def test_single_scenario_equals_combined_qp(doc):
    case, parts = parse_case(doc)
    s = build_system(case, parts)
    x = parts.mu
    so = solve_social_optimum_system(s, ScenarioSet(x[None, :], np.array([1.0])))
    q_d, q_r = combined_qp(s, x)
    ref = float(s.da_cost(q_d) + s.rt_cost(q_r, q_d))
    assert so.expected_cost == pytest.approx(ref, rel=1e-8)
    assert np.allclose(so.q_da, q_d, atol=1e-7)


def _unlinked(doc):
    for g in doc["rt_generators"]:
        g.pop("da_id", None)
    return doc


@pytest.mark.parametrize("doc", [_unlinked(two_bus_doc(capacity=1e5)), triangle_doc(capacity=1e5)])
def test_single_scenario_matches_sequential_dispatch(doc):
    """Sequential DA then RT clearing reaches the planner's cost when the DA
    market is cleared with the commitment the planner would have chosen.

    Holds only without DA-linked RT units; a linked unit couples the two
    stages' costs, which the DA market does not see.
    """
    case, parts = parse_case(doc)
    s = build_system(case, parts)
    x = parts.mu
    so = solve_social_optimum_system(s, ScenarioSet(x[None, :], np.array([1.0])))
    # the planner's RT redispatch is what the RPP did not deliver in DA
    c_star = x + so.q_rt.sum() * np.ones_like(x) / x.size
    da = solve_da_system(s, c_star)
    rt = solve_rt_system(s, c_star, da.dispatch, x)
    seq = da.objective + rt.objective
    assert seq == pytest.approx(so.expected_cost, rel=1e-8)


def test_psi_insensitive_when_uncongested():
    case, parts = parse_case(triangle_doc(capacity=1e4))
    s = build_system(case, parts)
    scen = generate_scenarios(parts, n=50, seed=1)
    a = solve_social_optimum_system(s, scen)
    b = solve_social_optimum_system(s, scen.with_penalty(5e6))
    assert a.u_plus.max() == 0.0 and a.u_minus.max() == 0.0
    assert np.allclose(a.q_da, b.q_da, rtol=1e-6)
    assert a.expected_cost == pytest.approx(b.expected_cost, rel=1e-6)


def test_two_symmetric_scenarios_by_hand():
    """One bus, L = 50, x = 10 +- 2: q_D sits at the certainty-equivalent point
    and RT corrects by -+2."""
    case, parts = parse_case(one_bus_doc())
    s = build_system(case, parts)
    so = solve_social_optimum_system(s, ScenarioSet(np.array([[8.0], [12.0]]), np.array([0.5, 0.5])))
    # expected marginal RT cost is 0.3 * E[q_R] + 4 with E[q_R] = 40 - q_D;
    # 0.1 q_D + 2 = 0.3 (40 - q_D) + 4 gives q_D = 35
    assert so.q_da[0] == pytest.approx(35.0)
    assert np.allclose(so.q_rt[:, 0], [7.0, 3.0])


def test_slack_complementarity_and_signs():
    case, parts = parse_case(two_bus_doc(capacity=3.0))
    s = build_system(case, parts)
    so = solve_social_optimum_system(s, generate_scenarios(parts.with_std_ratio(0.5), n=100, seed=2))
    assert np.all(so.u_plus >= -1e-8) and np.all(so.u_minus >= -1e-8)
    assert np.all(np.minimum(so.u_plus, so.u_minus) <= 1e-6)
    assert so.penalty_cost >= 0.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 8.0))
def test_lower_bound_against_sequential_dispatch(c):
    """Without active slack, no commitment beats the planner on the same scenarios."""
    case, parts = parse_case(triangle_doc(capacity=1e4))
    s = build_system(case, parts)
    scen = generate_scenarios(parts, n=40, seed=5)
    so = solve_social_optimum_system(s, scen)
    da = solve_da_system(s, [c])
    rt_costs = [solve_rt_system(s, [c], da.dispatch, x).objective for x in scen.x]
    assert so.expected_cost <= da.objective + np.mean(rt_costs) + 1e-8
