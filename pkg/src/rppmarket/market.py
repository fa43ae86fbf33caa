"""Market participants, quadratic cost functions and bus incidence maps."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:
    from .network import NetworkCase


@dataclass(frozen=True)
class ConvGenerator:
    """Conventional generator with cost ``0.5 * alpha * q**2 + beta * q``.

    ``da_link`` is set on an RT generator that is the same unit as a DA
    generator; its RT cost is then charged on the combined DA + RT output.
    """

    id: int
    bus: int
    alpha: float
    beta: float
    stage: str = "DA"
    da_link: Optional[int] = None


@dataclass(frozen=True)
class RppProfile:
    id: int
    bus: int
    mean: float
    std: float = 0.0


@dataclass(frozen=True)
class MarketParticipants:
    da_generators: tuple[ConvGenerator, ...]
    rt_generators: tuple[ConvGenerator, ...]
    rpps: tuple[RppProfile, ...]

    @property
    def n_rpps(self) -> int:
        return len(self.rpps)

    @property
    def mu(self) -> np.ndarray:
        return np.array([p.mean for p in self.rpps], dtype=float)

    @property
    def sigma(self) -> np.ndarray:
        return np.array([p.std for p in self.rpps], dtype=float)

    def with_std_ratio(self, ratio: float) -> "MarketParticipants":
        """Copy with every RPP's std set to ``ratio * mean``."""
        rpps = tuple(replace(p, std=abs(ratio * p.mean)) for p in self.rpps)
        return replace(self, rpps=rpps)

    def split_rpps(self, parts: int) -> "MarketParticipants":
        """Break every RPP into ``parts`` equal-sized participants at the same bus.

        Part ``k * parts + j`` is the ``j``-th share of original RPP ``k``;
        mean and std both scale by ``1 / parts``.
        """
        if parts < 1:
            raise ValueError("parts must be >= 1")
        rpps = []
        for p in self.rpps:
            for _ in range(parts):
                rpps.append(RppProfile(len(rpps), p.bus, p.mean / parts, p.std / parts))
        return replace(self, rpps=tuple(rpps))


@dataclass(frozen=True)
class IncidenceMaps:
    e_g_da: np.ndarray  # N x I
    e_g_rt: np.ndarray  # N x J
    e_r: np.ndarray  # N x K
    e_g_dr: np.ndarray  # J x I


def _bus_map(n_buses: int, buses) -> np.ndarray:
    E = np.zeros((n_buses, len(buses)))
    for col, bus in enumerate(buses):
        E[bus, col] = 1.0
    return E


def build_incidence(case: "NetworkCase", participants: MarketParticipants) -> IncidenceMaps:
    n = case.n_buses
    da = participants.da_generators
    col_of = {g.id: i for i, g in enumerate(da)}
    e_g_dr = np.zeros((len(participants.rt_generators), len(da)))
    for j, g in enumerate(participants.rt_generators):
        if g.da_link is not None:
            e_g_dr[j, col_of[g.da_link]] = 1.0
    return IncidenceMaps(
        e_g_da=_bus_map(n, [g.bus for g in da]),
        e_g_rt=_bus_map(n, [g.bus for g in participants.rt_generators]),
        e_r=_bus_map(n, [p.bus for p in participants.rpps]),
        e_g_dr=e_g_dr,
    )


def total_cost(dispatch, generators) -> float:
    q = np.asarray(dispatch, dtype=float)
    if q.shape != (len(generators),):
        raise ValueError("dispatch length must match the number of generators")
    alpha = np.array([g.alpha for g in generators], dtype=float)
    beta = np.array([g.beta for g in generators], dtype=float)
    return float(np.sum(0.5 * alpha * q**2 + beta * q))


@dataclass(frozen=True, eq=False)
class System:
    """Dense arrays shared by the dispatch, closed-form and equilibrium code."""

    case: "NetworkCase"
    participants: MarketParticipants
    ptdf: np.ndarray
    inc: IncidenceMaps
    alpha_da: np.ndarray
    beta_da: np.ndarray
    alpha_rt: np.ndarray
    beta_rt: np.ndarray
    loads: np.ndarray
    caps: np.ndarray

    @property
    def n_da(self) -> int:
        return self.alpha_da.size

    @property
    def n_rt(self) -> int:
        return self.alpha_rt.size

    @property
    def n_rpps(self) -> int:
        return self.inc.e_r.shape[1]

    @property
    def mu(self) -> np.ndarray:
        return self.participants.mu

    @property
    def sigma(self) -> np.ndarray:
        return self.participants.sigma

    def rt_cost(self, q_rt: np.ndarray, q_da: np.ndarray) -> np.ndarray:
        """RT cost on combined output; accepts stacked scenario rows."""
        q_hat = q_rt + q_da @ self.inc.e_g_dr.T
        return np.sum(0.5 * self.alpha_rt * q_hat**2 + self.beta_rt * q_hat, axis=-1)

    def da_cost(self, q_da: np.ndarray) -> np.ndarray:
        return np.sum(0.5 * self.alpha_da * q_da**2 + self.beta_da * q_da, axis=-1)


@lru_cache(maxsize=128)
def build_system(case: "NetworkCase", participants: MarketParticipants) -> System:
    def coeffs(gens):
        return (np.array([g.alpha for g in gens], dtype=float),
                np.array([g.beta for g in gens], dtype=float))

    a_da, b_da = coeffs(participants.da_generators)
    a_rt, b_rt = coeffs(participants.rt_generators)
    return System(
        case=case, participants=participants, ptdf=case.ptdf,
        inc=build_incidence(case, participants),
        alpha_da=a_da, beta_da=b_da, alpha_rt=a_rt, beta_rt=b_rt,
        loads=case.loads, caps=case.capacities,
    )
