"""Two-settlement electricity market with strategic renewable producers on a DC network."""

from .closedform import CongestionPattern, build_da_maps, build_rt_maps
from .dispatch import DispatchInfeasible, lmp_finite_difference, solve_da, solve_rt
from .equilibrium import (
    EquilibriumCandidate,
    check_da_consistency,
    default_pattern_pairs,
    expected_payoffs,
    find_pure_ne,
    ne_first_order_check,
    rt_consistency_probability,
)
from .market import ConvGenerator, MarketParticipants, RppProfile
from .network import CaseError, NetworkCase, bundled_case_path, load_case, parse_case
from .socialopt import ScenarioSet, generate_scenarios, solve_social_optimum

__version__ = "0.1.0"

__all__ = [
    "CaseError", "CongestionPattern", "ConvGenerator", "DispatchInfeasible", "EquilibriumCandidate",
    "MarketParticipants", "NetworkCase", "RppProfile", "ScenarioSet", "build_da_maps", "build_rt_maps",
    "bundled_case_path", "check_da_consistency", "default_pattern_pairs", "expected_payoffs", "find_pure_ne",
    "generate_scenarios", "lmp_finite_difference", "load_case", "ne_first_order_check", "parse_case",
    "rt_consistency_probability", "solve_da", "solve_rt", "solve_social_optimum",
]
