"""Dispatch and LMPs as affine functions of commitments, given a congestion pattern.

With the set of binding lines fixed, the KKT conditions of the DA and RT
dispatch problems are a square linear system

    [ diag(alpha)  A_G'  1 ] [ q     ]   [ stationarity rhs ]
    [ A_G          0     0 ] [ gamma ] = [ A L + T - ...    ]
    [ 1'           0     0 ] [ tau   ]   [ balance rhs      ]

whose right-hand side is affine in the RPP commitments ``c`` (and, in RT, the
realizations ``x``). Solving it once per pattern gives dispatch, line duals
and LMPs as affine maps.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ._kernels import RCOND_MIN
from .market import System

FORWARD = 1
REVERSE = -1


class SingularPatternError(np.linalg.LinAlgError):
    """The KKT matrix of an assumed pattern is singular; discard the pattern."""


@dataclass(frozen=True)
class CongestionPattern:
    """Binding lines with direction (+1 = from->to, -1 = to->from), sorted by line id."""

    entries: tuple[tuple[int, int], ...] = ()
    stage: str = "DA"

    def __post_init__(self):
        entries = tuple(sorted((int(l), int(s)) for l, s in self.entries))
        lines = [l for l, _ in entries]
        if len(set(lines)) != len(lines):
            raise ValueError("a line may appear only once in a congestion pattern")
        if any(s not in (FORWARD, REVERSE) for _, s in entries):
            raise ValueError("direction must be +1 (forward) or -1 (reverse)")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def lines(self) -> tuple[int, ...]:
        return tuple(l for l, _ in self.entries)

    def same_as(self, other: "CongestionPattern") -> bool:
        """Same lines in the same directions, regardless of stage."""
        return self.entries == other.entries

    def as_stage(self, stage: str) -> "CongestionPattern":
        return CongestionPattern(self.entries, stage)

    def label(self) -> str:
        if not self.entries:
            return "none"
        return ";".join(f"{l}{'+' if s > 0 else '-'}" for l, s in self.entries)

    @classmethod
    def parse(cls, text: str, stage: str = "DA") -> "CongestionPattern":
        text = text.strip()
        if text in ("", "none"):
            return cls((), stage)
        entries = []
        for tok in text.split(";"):
            tok = tok.strip()
            sign = REVERSE if tok.endswith("-") else FORWARD
            entries.append((int(tok.rstrip("+-")), sign))
        return cls(tuple(entries), stage)

    def __str__(self) -> str:
        return self.label()


def enumerate_patterns(n_lines: int, max_size: int, stage: str = "DA") -> Iterator[CongestionPattern]:
    """All patterns with at most ``max_size`` lines, smallest first.

    Within a size, line ids ascend lexicographically and forward precedes
    reverse.
    """
    for size in range(0, min(max_size, n_lines) + 1):
        for lines in itertools.combinations(range(n_lines), size):
            for signs in itertools.product((FORWARD, REVERSE), repeat=size):
                yield CongestionPattern(tuple(zip(lines, signs)), stage)


def pattern_rows(ptdf: np.ndarray, pattern: CongestionPattern) -> tuple[np.ndarray, np.ndarray]:
    """Signed PTDF rows ``A`` and line indices for the binding set."""
    idx = np.array(pattern.lines, dtype=int)
    signs = np.array([s for _, s in pattern.entries], dtype=float)
    return signs[:, None] * ptdf[idx], idx


@dataclass(frozen=True)
class KktSystem:
    """``Z @ [q; gamma; tau] = rhs0 + rhs_c @ c + rhs_x @ x``."""

    Z: np.ndarray
    rhs0: np.ndarray
    rhs_c: np.ndarray
    rhs_x: np.ndarray
    A: np.ndarray  # signed PTDF rows of the binding lines
    n_gen: int


def _kkt_matrix(alpha: np.ndarray, A_G: np.ndarray) -> np.ndarray:
    n = alpha.size
    nt = A_G.shape[0]
    Z = np.zeros((n + nt + 1, n + nt + 1))
    Z[:n, :n] = np.diag(alpha)
    Z[:n, n:n + nt] = A_G.T
    Z[n:n + nt, :n] = A_G
    Z[:n, -1] = 1.0
    Z[-1, :n] = 1.0
    return Z


def _inverse(Z: np.ndarray) -> np.ndarray:
    sv = np.linalg.svd(Z, compute_uv=False)
    if sv.size == 0 or sv[-1] <= RCOND_MIN * sv[0]:
        raise SingularPatternError("KKT matrix is singular for this congestion pattern")
    return np.linalg.inv(Z)


def assemble_da_kkt(system: System, pattern: CongestionPattern) -> KktSystem:
    A, _ = pattern_rows(system.ptdf, pattern)
    T = system.caps[list(pattern.lines)]
    inc = system.inc
    K = system.n_rpps
    I = system.n_da
    nt = len(pattern)
    Z = _kkt_matrix(system.alpha_da, A @ inc.e_g_da)
    rhs0 = np.concatenate([-system.beta_da, A @ system.loads + T, [system.loads.sum()]])
    rhs_c = np.vstack([np.zeros((I, K)), -A @ inc.e_r, -np.ones((1, K))])
    return KktSystem(Z, rhs0, rhs_c, np.zeros((I + nt + 1, K)), A, I)


@dataclass(frozen=True)
class DaAffineMaps:
    """q_D = g1 c + g2 and lambda_D = h1 c + h2 for one DA pattern."""

    pattern: CongestionPattern
    g1: np.ndarray
    g2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    w: np.ndarray  # first I rows of Z^{-1}
    dual1: np.ndarray  # [gamma; tau] = dual1 c + dual2
    dual2: np.ndarray

    def dispatch(self, c) -> np.ndarray:
        return self.g1 @ np.asarray(c, float) + self.g2

    def lmps(self, c) -> np.ndarray:
        return self.h1 @ np.asarray(c, float) + self.h2

    def duals(self, c) -> tuple[np.ndarray, float]:
        d = self.dual1 @ np.asarray(c, float) + self.dual2
        return d[:-1], float(d[-1])


def _price_projector(A: np.ndarray, W: np.ndarray, n_buses: int) -> np.ndarray:
    # [0 | A' | 1] W'  : maps marginal costs of the units to bus prices
    n_gen = W.shape[0]
    sel = np.hstack([np.zeros((n_buses, n_gen)), A.T, np.ones((n_buses, 1))])
    return sel @ W.T


def build_da_maps(system: System, pattern: CongestionPattern) -> DaAffineMaps:
    kkt = assemble_da_kkt(system, pattern)
    Zinv = _inverse(kkt.Z)
    I = kkt.n_gen
    W = Zinv[:I]
    g1 = W @ kkt.rhs_c
    g2 = W @ kkt.rhs0
    P = _price_projector(kkt.A, W, system.case.n_buses)
    ups = system.alpha_da
    h1 = P @ (ups[:, None] * g1)
    h2 = P @ (ups * g2 + system.beta_da)
    return DaAffineMaps(
        pattern=pattern.as_stage("DA"), g1=g1, g2=g2, h1=h1, h2=h2, w=W,
        dual1=Zinv[I:] @ kkt.rhs_c, dual2=Zinv[I:] @ kkt.rhs0,
    )


def assemble_rt_kkt(system: System, pattern: CongestionPattern, da_maps: DaAffineMaps) -> KktSystem:
    """RT KKT system with the DA dispatch substituted from ``da_maps``.

    A RT unit that is also a DA unit pays its RT cost on the combined output,
    so its stationarity row carries ``alpha_R * q_D`` of the linked DA unit.
    The fictitious RT load vector is zero and drops out.
    """
    A, _ = pattern_rows(system.ptdf, pattern)
    T = system.caps[list(pattern.lines)]
    inc = system.inc
    K = system.n_rpps
    J = system.n_rt
    coup = system.alpha_rt[:, None] * inc.e_g_dr  # J x I
    AgD = A @ inc.e_g_da
    Z = _kkt_matrix(system.alpha_rt, A @ inc.e_g_rt)
    g1, g2 = da_maps.g1, da_maps.g2
    rhs0 = np.concatenate([
        -system.beta_rt - coup @ g2,
        A @ system.loads - AgD @ g2 + T,
        [system.loads.sum() - g2.sum()],
    ])
    rhs_c = np.vstack([-coup @ g1, -AgD @ g1, -g1.sum(axis=0, keepdims=True)])
    rhs_x = np.vstack([np.zeros((J, K)), -A @ inc.e_r, -np.ones((1, K))])
    return KktSystem(Z, rhs0, rhs_c, rhs_x, A, J)


@dataclass(frozen=True)
class RtAffineMaps:
    """q_R = g1 c + g2 x + g3 and lambda_R = h1 c + h2 x + h3 for one RT pattern."""

    pattern: CongestionPattern
    da_pattern: CongestionPattern
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray
    w: np.ndarray
    dual1: np.ndarray  # [gamma; tau] = dual1 c + dualx x + dual3
    dualx: np.ndarray
    dual3: np.ndarray

    def dispatch(self, c, x) -> np.ndarray:
        return self.g1 @ np.asarray(c, float) + self.g2 @ np.asarray(x, float) + self.g3

    def lmps(self, c, x) -> np.ndarray:
        return self.h1 @ np.asarray(c, float) + self.h2 @ np.asarray(x, float) + self.h3

    def duals(self, c, x) -> tuple[np.ndarray, float]:
        d = self.dual1 @ np.asarray(c, float) + self.dualx @ np.asarray(x, float) + self.dual3
        return d[:-1], float(d[-1])


def build_rt_maps(system: System, pattern: CongestionPattern, da_maps: DaAffineMaps) -> RtAffineMaps:
    kkt = assemble_rt_kkt(system, pattern, da_maps)
    Zinv = _inverse(kkt.Z)
    J = kkt.n_gen
    W = Zinv[:J]
    g1 = W @ kkt.rhs_c
    g2 = W @ kkt.rhs_x
    g3 = W @ kkt.rhs0
    P = _price_projector(kkt.A, W, system.case.n_buses)
    ups = system.alpha_rt
    coup = ups[:, None] * system.inc.e_g_dr
    h1 = P @ (ups[:, None] * g1 + coup @ da_maps.g1)
    h2 = P @ (ups[:, None] * g2)
    h3 = P @ (ups * g3 + coup @ da_maps.g2 + system.beta_rt)
    rest = Zinv[J:]
    return RtAffineMaps(
        pattern=pattern.as_stage("RT"), da_pattern=da_maps.pattern,
        g1=g1, g2=g2, g3=g3, h1=h1, h2=h2, h3=h3, w=W,
        dual1=rest @ kkt.rhs_c, dualx=rest @ kkt.rhs_x, dual3=rest @ kkt.rhs0,
    )
