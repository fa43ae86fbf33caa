import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_case_doc, two_bus_doc
from rppmarket.closedform import (
    CongestionPattern,
    SingularPatternError,
    build_da_maps,
    build_rt_maps,
    enumerate_patterns,
)
from rppmarket.dispatch import DispatchInfeasible, DispatchNotConverged, solve_da_system, solve_rt_system
from rppmarket.market import build_system
from rppmarket.network import parse_case


def test_pattern_normalizes_and_labels():
    p = CongestionPattern(((3, -1), (1, 1)))
    assert p.entries == ((1, 1), (3, -1))
    assert p.label() == "1+;3-"
    assert CongestionPattern.parse("3-;1+") == p
    assert CongestionPattern.parse("none").label() == "none"
    assert p.same_as(p.as_stage("RT"))


@pytest.mark.parametrize("entries", [((1, 1), (1, -1)), ((0, 2),)])
def test_pattern_rejects_bad_entries(entries):
    with pytest.raises(ValueError):
        CongestionPattern(entries)


def test_enumeration_count_for_14_bus():
    # 1 empty + 20 lines * 2 directions + C(20, 2) * 4
    pats = list(enumerate_patterns(20, 2))
    assert len(pats) == 1 + 40 + 190 * 4
    assert len(set(pats)) == len(pats)
    assert pats[0].entries == () and pats[1].entries == ((0, 1),) and pats[2].entries == ((0, -1),)


def test_two_bus_da_maps_by_hand(two_bus):
    case, parts = two_bus
    s = build_system(case, parts)
    maps = build_da_maps(s, CongestionPattern(((0, 1),)))
    # with the line binding, unit 0 is pinned at 5 and unit 1 covers 10 - 5 - c
    assert np.allclose(maps.g1, [[0.0], [-1.0]])
    assert np.allclose(maps.g2, [5.0, 5.0])
    assert np.allclose(maps.lmps([2.0]), [1.5, 5.6])
    gamma, tau = maps.duals([2.0])
    assert gamma[0] == pytest.approx(4.1) and tau == pytest.approx(-1.5)


def test_singular_pattern_detected():
    # one DA unit cannot meet balance with a pinned line: KKT matrix is singular
    doc = two_bus_doc()
    doc["da_generators"].pop(1)
    case, parts = parse_case(doc)
    with pytest.raises(SingularPatternError):
        build_da_maps(build_system(case, parts), CongestionPattern(((0, 1),)))


def _compare(rng, tol=1e-6):
    case, parts = parse_case(random_case_doc(rng))
    s = build_system(case, parts)
    c = parts.mu * rng.uniform(0.5, 1.5, parts.n_rpps)
    x = np.maximum(parts.mu + parts.sigma * rng.normal(size=parts.n_rpps), 0.0)
    try:
        da = solve_da_system(s, c, max_pattern_size=case.n_lines)
        rt = solve_rt_system(s, c, da.dispatch, x, max_pattern_size=case.n_lines)
        da_maps = build_da_maps(s, da.pattern)
        rt_maps = build_rt_maps(s, rt.pattern.as_stage("RT"), da_maps)
    except (DispatchInfeasible, DispatchNotConverged, SingularPatternError):
        return False
    assert np.allclose(da_maps.dispatch(c), da.dispatch, atol=tol, rtol=0)
    assert np.allclose(da_maps.lmps(c), da.lmps, atol=tol, rtol=0)
    assert np.allclose(rt_maps.dispatch(c, x), rt.dispatch, atol=tol, rtol=0)
    assert np.allclose(rt_maps.lmps(c, x), rt.lmps, atol=tol, rtol=0)
    return True


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_maps_reproduce_oracle_when_pattern_matches(seed):
    _compare(np.random.default_rng(seed))


def test_affine_maps_are_linear_in_commitments(two_bus):
    case, parts = two_bus
    s = build_system(case, parts)
    da = build_da_maps(s, CongestionPattern(((0, 1),)))
    rt = build_rt_maps(s, CongestionPattern((), "RT"), da)
    c1, c2, x = np.array([1.0]), np.array([3.0]), np.array([2.5])
    mid = 0.5 * (c1 + c2)
    assert np.allclose(rt.lmps(mid, x), 0.5 * (rt.lmps(c1, x) + rt.lmps(c2, x)))
    assert np.allclose(rt.dispatch(mid, x), 0.5 * (rt.dispatch(c1, x) + rt.dispatch(c2, x)))
