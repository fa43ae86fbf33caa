"""DC transmission network: case data, case-file loading and PTDF sensitivities."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .market import ConvGenerator, MarketParticipants, RppProfile

# MW; balance checks on injection vectors
BALANCE_TOL = 1e-6


class CaseError(ValueError):
    """Raised when a case document fails validation.

    All problems found in one pass are collected in ``errors``.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ImbalanceError(ValueError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    load_da: float = 0.0


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    susceptance: float
    capacity: float


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    slack_bus: int = 0
    name: str = ""

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @cached_property
    def loads(self) -> np.ndarray:
        return np.array([b.load_da for b in self.buses], dtype=float)

    @cached_property
    def capacities(self) -> np.ndarray:
        return np.array([ln.capacity for ln in self.lines], dtype=float)

    @cached_property
    def ptdf(self) -> np.ndarray:
        return compute_ptdf(self)

    def with_capacities(self, capacities) -> "NetworkCase":
        caps = np.asarray(capacities, dtype=float)
        lines = tuple(
            Line(ln.id, ln.from_bus, ln.to_bus, ln.susceptance, float(c))
            for ln, c in zip(self.lines, caps)
        )
        return NetworkCase(self.buses, lines, self.slack_bus, self.name)


def _is_connected(n_buses: int, edges: list[tuple[int, int]]) -> bool:
    if n_buses == 0:
        return False
    adj: list[list[int]] = [[] for _ in range(n_buses)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    todo = deque([0])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return len(seen) == n_buses


def branch_incidence(case: NetworkCase) -> np.ndarray:
    """Line-by-bus incidence: +1 at the from bus, -1 at the to bus."""
    A = np.zeros((case.n_lines, case.n_buses))
    for k, ln in enumerate(case.lines):
        A[k, ln.from_bus] = 1.0
        A[k, ln.to_bus] = -1.0
    return A


def compute_ptdf(case: NetworkCase) -> np.ndarray:
    """Injection shift factors with respect to the slack bus.

    Entry ``(l, u)`` is the flow on line ``l`` (positive from its ``from_bus``
    to its ``to_bus``) caused by injecting 1 MW at bus ``u`` and withdrawing
    it at the slack. The slack column is exactly zero.
    """
    n = case.n_buses
    if case.n_lines == 0:
        return np.zeros((0, n))
    A = branch_incidence(case)
    b = np.array([ln.susceptance for ln in case.lines])
    Bbus = A.T @ (b[:, None] * A)
    keep = np.array([u for u in range(n) if u != case.slack_bus], dtype=int)
    Bred = Bbus[np.ix_(keep, keep)]
    if keep.size and np.linalg.cond(Bred) > 1e12:
        raise CaseError(["singular reduced susceptance matrix (disconnected network)"])
    ptdf = np.zeros((case.n_lines, n))
    if keep.size:
        X = np.linalg.inv(Bred)
        ptdf[:, keep] = (b[:, None] * A[:, keep]) @ X
    return ptdf


def line_flows(ptdf: np.ndarray, injections, tol: float = BALANCE_TOL) -> np.ndarray:
    inj = np.asarray(injections, dtype=float)
    if abs(inj.sum()) > tol:
        raise ImbalanceError(f"injections do not balance: net {inj.sum():.3g} MW")
    return ptdf @ inj


def _get(d: Mapping[str, Any], key: str, where: str, errors: list[str], default=None):
    if key in d:
        return d[key]
    if default is not None:
        return default
    errors.append(f"{where}: missing field '{key}'")
    return None


def parse_case(doc: Mapping[str, Any]) -> tuple[NetworkCase, MarketParticipants]:
    """Build and validate a case from an already-decoded JSON document."""
    errors: list[str] = []

    raw_buses = doc.get("buses", [])
    bus_ids = [b.get("id") for b in raw_buses]
    if len(set(bus_ids)) != len(bus_ids):
        errors.append("duplicate bus ids")
    n = len(raw_buses)
    if sorted(i for i in bus_ids if isinstance(i, int)) != list(range(n)):
        errors.append("bus ids must be the contiguous integers 0..N-1")
    buses = []
    for b in sorted(raw_buses, key=lambda r: r.get("id", -1)):
        load = float(b.get("load_da", 0.0))
        if load < 0:
            errors.append(f"bus {b.get('id')}: negative load")
        buses.append(Bus(int(b.get("id", -1)), load))

    def check_bus(ref, where):
        if not isinstance(ref, int) or not 0 <= ref < n:
            errors.append(f"{where}: unknown bus reference {ref}")
            return False
        return True

    lines = []
    line_ids = set()
    for r in doc.get("lines", []):
        where = f"line {r.get('id')}"
        if r.get("id") in line_ids:
            errors.append(f"duplicate line id {r.get('id')}")
        line_ids.add(r.get("id"))
        fb, tb = r.get("from"), r.get("to")
        ok = check_bus(fb, where) & check_bus(tb, where)
        if ok and fb == tb:
            errors.append(f"{where}: from and to bus are the same")
        b = float(_get(r, "susceptance", where, errors, 0.0))
        cap = float(_get(r, "capacity", where, errors, 0.0))
        if b <= 0:
            errors.append(f"{where}: nonpositive susceptance")
        if cap <= 0:
            errors.append(f"{where}: nonpositive capacity")
        lines.append(Line(int(r.get("id", -1)), fb, tb, b, cap))
    lines.sort(key=lambda ln: ln.id)
    if sorted(line_ids) != list(range(len(lines))):
        errors.append("line ids must be the contiguous integers 0..L-1")

    slack = doc.get("slack_bus", 0)
    check_bus(slack, "slack_bus")

    if not errors and not _is_connected(n, [(ln.from_bus, ln.to_bus) for ln in lines]):
        errors.append("disconnected network")

    def gens(key, stage):
        out = []
        seen = set()
        for r in doc.get(key, []):
            where = f"{key} {r.get('id')}"
            if r.get("id") in seen:
                errors.append(f"duplicate id in {key}: {r.get('id')}")
            seen.add(r.get("id"))
            check_bus(r.get("bus"), where)
            alpha = float(_get(r, "alpha", where, errors, 0.0))
            if alpha <= 0:
                errors.append(f"{where}: alpha must be positive")
            out.append(ConvGenerator(
                id=r.get("id"), bus=r.get("bus"), alpha=alpha,
                beta=float(r.get("beta", 0.0)), stage=stage, da_link=r.get("da_id"),
            ))
        return tuple(out)

    da = gens("da_generators", "DA")
    rt = gens("rt_generators", "RT")
    da_ids = {g.id for g in da}
    for g in rt:
        if g.da_link is not None and g.da_link not in da_ids:
            errors.append(f"rt_generators {g.id}: da_id {g.da_link} names no DA generator")

    rpps = []
    for r in doc.get("rpps", []):
        where = f"rpps {r.get('id')}"
        check_bus(r.get("bus"), where)
        std = float(r.get("std", 0.0))
        if std < 0:
            errors.append(f"{where}: negative std")
        rpps.append(RppProfile(r.get("id"), r.get("bus"), float(_get(r, "mean", where, errors, 0.0)), std))
    if len({p.id for p in rpps}) != len(rpps):
        errors.append("duplicate rpp ids")

    if errors:
        raise CaseError(errors)
    case = NetworkCase(tuple(buses), tuple(lines), int(slack), str(doc.get("name", "")))
    return case, MarketParticipants(da, rt, tuple(rpps))


def load_case(source) -> tuple[NetworkCase, MarketParticipants]:
    """Load a case from a path, a JSON string or a decoded mapping."""
    if isinstance(source, Mapping):
        return parse_case(source)
    if isinstance(source, (str, Path)) and not str(source).lstrip().startswith("{"):
        with open(source) as fh:
            return parse_case(json.load(fh))
    return parse_case(json.loads(source))


def bundled_case_path(name: str = "ieee14") -> Path:
    return Path(__file__).parent / "data" / f"{name}.json"


def case_to_dict(case: NetworkCase, participants: MarketParticipants) -> dict:
    def gen(g: ConvGenerator):
        d = {"id": g.id, "bus": g.bus, "alpha": g.alpha, "beta": g.beta}
        if g.da_link is not None:
            d["da_id"] = g.da_link
        return d

    return {
        "name": case.name,
        "slack_bus": case.slack_bus,
        "buses": [{"id": b.id, "load_da": b.load_da} for b in case.buses],
        "lines": [
            {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus,
             "susceptance": ln.susceptance, "capacity": ln.capacity}
            for ln in case.lines
        ],
        "da_generators": [gen(g) for g in participants.da_generators],
        "rt_generators": [gen(g) for g in participants.rt_generators],
        "rpps": [{"id": p.id, "bus": p.bus, "mean": p.mean, "std": p.std} for p in participants.rpps],
    }
