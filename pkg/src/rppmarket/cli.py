"""Command-line driver: dispatch, NE search, social optimum and the experiment sweeps.

Every command writes CSV files into ``--out`` (a directory); column layouts
are documented in docs/csv.md. Exit codes: 0 success, 1 configuration
error, 2 infeasible dispatch or no result.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .closedform import CongestionPattern
from .dispatch import DEFAULT_MAX_PATTERN_SIZE, DispatchInfeasible, DispatchNotConverged, solve_da, solve_rt
from .equilibrium import PAYOFF_MODES, EquilibriumCandidate, default_pattern_pairs, find_pure_ne
from .market import MarketParticipants, build_system
from .network import CaseError, NetworkCase, bundled_case_path, load_case
from .socialopt import (
    DEFAULT_PSI,
    DEFAULT_SCENARIOS,
    ScenarioSet,
    sample_realizations,
    solve_social_optimum,
    split_realizations,
)

logger = logging.getLogger("rppmarket")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_RESULT = 2

DEFAULT_STD_GRID = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25)
DEFAULT_K_GRID = (2, 6, 10, 20, 30)


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    """Stable text for a CSV cell; NaN and None become empty."""
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else format(float(x), ".12g")
    if isinstance(x, (list, tuple, np.ndarray)):
        return ";".join(fmt(v) for v in x)
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def parse_floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()], dtype=float)
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of numbers") from None


def parse_ints(text: str, what: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of integers") from None


@dataclass(frozen=True)
class RunConfig:
    case: NetworkCase
    participants: MarketParticipants
    seed: int
    scenarios: int
    max_pattern_size: int
    psi: float
    out: Path


def load_config(args) -> RunConfig:
    src = Path(args.case) if args.case else bundled_case_path()
    if not src.is_file():
        raise ConfigError(f"case file not found: {src}")
    case, participants = load_case(src)
    if args.scenarios < 1:
        raise ConfigError("--scenarios must be at least 1")
    if args.max_pattern_size < 0:
        raise ConfigError("--max-pattern-size must be non-negative")
    if not args.psi > 0:
        raise ConfigError("--psi must be positive")
    return RunConfig(case, participants, args.seed, args.scenarios, args.max_pattern_size, args.psi, Path(args.out))


def _vector_arg(text, n: int, default, what: str) -> np.ndarray:
    if text is None:
        return np.asarray(default, dtype=float)
    v = parse_floats(text, what)
    if v.size != n:
        raise ConfigError(f"{what} needs {n} values, got {v.size}")
    return v


def cmd_dispatch(cfg: RunConfig, args) -> int:
    case, parts = cfg.case, cfg.participants
    c = _vector_arg(args.commitments, parts.n_rpps, parts.mu, "--commitments")
    stages = [("DA", solve_da(case, parts, c, cfg.max_pattern_size))]
    if args.rt or args.realizations is not None:
        x = _vector_arg(args.realizations, parts.n_rpps, parts.mu, "--realizations")
        stages.append(("RT", solve_rt(case, parts, c, stages[0][1].dispatch, x, cfg.max_pattern_size)))
    rows = []
    gens = {"DA": parts.da_generators, "RT": parts.rt_generators}
    for stage, res in stages:
        print(f"{stage} dispatch  objective {res.objective:.6f} $  congested: {res.pattern.label()}")
        for g, q in zip(gens[stage], res.dispatch):
            print(f"  gen {g.id:3d} @ bus {g.bus:3d}: {q:12.6f} MW")
            rows.append((stage, "dispatch", g.id, g.bus, q, ""))
        for u, lmp in enumerate(res.lmps):
            print(f"  bus {u:3d}: LMP {lmp:12.6f} $/MWh")
            rows.append((stage, "lmp", u, u, lmp, ""))
        for ln, f in zip(case.lines, res.flows):
            rows.append((stage, "flow", ln.id, ln.from_bus, f, f"{ln.from_bus}->{ln.to_bus}"))
        rows.append((stage, "objective", "", "", res.objective, res.pattern.label()))
    write_csv(cfg.out / "dispatch.csv", ["stage", "record", "id", "bus", "value", "label"], rows)
    return EXIT_OK


def _pattern_list(args, n_lines: int, max_size: int):
    if args.patterns is None:
        return default_pattern_pairs(n_lines, max_size, unequal=args.unequal)
    pairs = []
    for tok in args.patterns.split(","):
        tok = tok.strip()
        if not tok:
            continue
        da, _, rt = tok.partition("/")
        try:
            p_da = CongestionPattern.parse(da, "DA")
            p_rt = CongestionPattern.parse(rt if rt else da, "RT")
        except ValueError as exc:
            raise ConfigError(f"bad pattern {tok!r}: {exc}") from None
        if any(l >= n_lines for l in p_da.lines + p_rt.lines):
            raise ConfigError(f"pattern {tok!r} refers to an unknown line")
        pairs.append((p_da, p_rt))
    return pairs


def _participants(cfg: RunConfig, std_ratio) -> MarketParticipants:
    p = cfg.participants
    return p if std_ratio is None else p.with_std_ratio(std_ratio)


def cmd_find_ne(cfg: RunConfig, args) -> int:
    parts = _participants(cfg, args.std_ratio)
    pairs = _pattern_list(args, cfg.case.n_lines, cfg.max_pattern_size)
    found = find_pure_ne(cfg.case, parts, pairs, n_scenarios=cfg.scenarios, seed=cfg.seed,
                         max_pattern_size=cfg.max_pattern_size, payoff_mode=args.payoff_mode) if pairs else []
    rows = []
    for i, cand in enumerate(found):
        print(f"candidate {i}: DA {cand.da_pattern.label()}  RT {cand.rt_pattern.label()}  "
              f"P(consistent) = {cand.rt_consistency_prob:.4f}  E[cost] = {cand.expected_cost:.4f} $")
        for k, rpp in enumerate(parts.rpps):
            print(f"  RPP {rpp.id} @ bus {rpp.bus}: c = {cand.c_tilde[k]:.6f} MW  payoff {cand.payoffs[k]:.4f} $")
            rows.append((i, rpp.id, rpp.bus, cand.c_tilde[k], cand.payoffs[k], cand.da_pattern.label(),
                         cand.rt_pattern.label(), cand.rt_consistency_prob, cand.expected_cost, cand.n_infeasible))
    write_csv(cfg.out / "find_ne.csv",
              ["candidate", "rpp", "bus", "c_tilde", "payoff", "da_pattern", "rt_pattern",
               "rt_consistency_prob", "expected_cost", "n_infeasible"], rows)
    if pairs and not found:
        print("no pure NE among the searched congestion patterns", file=sys.stderr)
        return EXIT_NO_RESULT
    return EXIT_OK


def cmd_social_opt(cfg: RunConfig, args) -> int:
    parts = _participants(cfg, args.std_ratio)
    x = sample_realizations(parts.mu, parts.sigma, cfg.scenarios, cfg.seed)
    scen = ScenarioSet(x, np.full(cfg.scenarios, 1.0 / cfg.scenarios), cfg.psi)
    so = solve_social_optimum(cfg.case, parts, scen)
    system = build_system(cfg.case, parts)
    rt_cost = system.rt_cost(so.q_rt, so.q_da)
    excess = np.maximum(so.u_plus, so.u_minus).max(axis=1, initial=0.0)
    print(f"expected cost {so.expected_cost:.6f} $ (with penalty {so.expected_cost_with_penalty:.6f} $)")
    print("DA dispatch:", " ".join(f"{q:.6f}" for q in so.q_da))
    print(f"RT cost per scenario: min {rt_cost.min():.4f}  mean {rt_cost.mean():.4f}  max {rt_cost.max():.4f} $")
    print(f"scenarios with excess flow: {int(np.sum(excess > 1e-6))} of {len(scen)}")
    write_csv(cfg.out / "social_opt.csv",
              ["scenarios", "seed", "psi", "expected_cost", "expected_cost_with_penalty", "penalty_cost",
               "iterations", "q_da"],
              [(len(scen), cfg.seed, cfg.psi, so.expected_cost, so.expected_cost_with_penalty,
                so.penalty_cost, so.iterations, so.q_da)])
    write_csv(cfg.out / "social_opt_scenarios.csv", ["scenario", "rt_cost", "rt_total", "max_excess"],
              [(s, rt_cost[s], so.q_rt[s].sum(), excess[s]) for s in range(len(scen))])
    return EXIT_OK


# sweeps: each grid point is an independent task so they can run in a process pool

def _pick(found: list[EquilibriumCandidate]) -> EquilibriumCandidate | None:
    """Most likely candidate; ties keep search order."""
    best = None
    for cand in found:
        if best is None or cand.rt_consistency_prob > best.rt_consistency_prob:
            best = cand
    return best


def _sweep_a_point(cfg: RunConfig, ratio: float):
    parts = cfg.participants.with_std_ratio(ratio)
    pairs = default_pattern_pairs(cfg.case.n_lines, cfg.max_pattern_size)
    found = find_pure_ne(cfg.case, parts, pairs, n_scenarios=cfg.scenarios, seed=cfg.seed,
                         max_pattern_size=cfg.max_pattern_size)
    if not found:
        return [(ratio, 0, "", "", "", float("nan"), "", "")]
    return [(ratio, len(found), i, c.da_pattern.label(), c.rt_pattern.label(), c.rt_consistency_prob,
             c.n_infeasible, c.c_tilde) for i, c in enumerate(found)]


def _sweep_k_point(cfg: RunConfig, k: int):
    base = cfg.participants
    parts_per = k // base.n_rpps
    parts = base.split_rpps(parts_per)
    x = split_realizations(sample_realizations(base.mu, base.sigma, cfg.scenarios, cfg.seed), parts_per)
    pairs = default_pattern_pairs(cfg.case.n_lines, cfg.max_pattern_size)
    found = find_pure_ne(cfg.case, parts, pairs, scenarios=x, max_pattern_size=cfg.max_pattern_size)
    scen = ScenarioSet(x, np.full(len(x), 1.0 / len(x)), cfg.psi)
    so = solve_social_optimum(cfg.case, parts, scen)
    cand = _pick(found)
    n_buses = cfg.case.n_buses
    if cand is None:
        row_b = (k, parts_per, 0, "", float("nan"), float("nan"), "", so.expected_cost,
                 so.expected_cost_with_penalty, float("nan"), float("nan"))
        return row_b, [(k, u, float("nan"), float("nan"), float("nan"), float("nan")) for u in range(n_buses)]
    gap = (cand.expected_cost - so.expected_cost) / so.expected_cost
    row_b = (k, parts_per, len(found), cand.da_pattern.label(), cand.c_tilde.sum(), cand.expected_cost,
             cand.n_infeasible, so.expected_cost, so.expected_cost_with_penalty, gap, cand.rt_consistency_prob)
    rows_c = [(k, u, cand.da_lmps[u], cand.expected_rt_lmps[u],
               abs(cand.da_lmps[u] - cand.expected_rt_lmps[u]), abs(cand.da_lmps[u] - cand.model_rt_lmps[u]))
              for u in range(n_buses)]
    return row_b, rows_c


def _run(func, cfg, grid, jobs: int):
    if jobs <= 1:
        return [func(cfg, g) for g in grid]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, [cfg] * len(grid), grid))


SWEEP_A_HEADER = ["std_ratio", "n_candidates", "candidate", "da_pattern", "rt_pattern", "rt_consistency_prob",
                  "n_infeasible", "c_tilde"]
SWEEP_B_HEADER = ["k", "parts_per_rpp", "n_candidates", "da_pattern", "c_total", "ne_expected_cost",
                  "n_infeasible", "so_expected_cost", "so_expected_cost_with_penalty", "relative_gap",
                  "rt_consistency_prob"]
SWEEP_C_HEADER = ["k", "bus", "lmp_da", "lmp_rt_mean", "lmp_gap", "lmp_gap_model"]


def cmd_sweep(cfg: RunConfig, args) -> int:
    which = set(args.which.replace(",", "").lower())
    if not which <= set("abc") or not which:
        raise ConfigError("--which takes any of a, b, c")
    written = []
    if "a" in which:
        grid = [float(r) for r in parse_floats(args.std_grid, "--std-grid")]
        if any(r < 0 for r in grid):
            raise ConfigError("--std-grid values must be non-negative")
        rows = [r for pt in _run(_sweep_a_point, cfg, grid, args.jobs) for r in pt]
        written.append(write_csv(cfg.out / "sweep_a.csv", SWEEP_A_HEADER, rows))
    if which & {"b", "c"}:
        ks = parse_ints(args.k_grid, "--k-grid")
        k0 = cfg.participants.n_rpps
        if k0 == 0 or any(k < k0 or k % k0 for k in ks):
            raise ConfigError(f"--k-grid values must be positive multiples of the case's {k0} RPPs")
        results = _run(_sweep_k_point, cfg, ks, args.jobs)
        if "b" in which:
            written.append(write_csv(cfg.out / "sweep_b.csv", SWEEP_B_HEADER, [b for b, _ in results]))
        if "c" in which:
            written.append(write_csv(cfg.out / "sweep_c.csv", SWEEP_C_HEADER, [r for _, rc in results for r in rc]))
    for p in written:
        print("wrote", p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", help="case JSON (default: bundled ieee14)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--scenarios", type=int, default=DEFAULT_SCENARIOS)
    common.add_argument("--max-pattern-size", type=int, default=DEFAULT_MAX_PATTERN_SIZE)
    common.add_argument("--psi", type=float, default=DEFAULT_PSI, help="line-excess penalty, $/MW^2")
    common.add_argument("--out", default=".", help="output directory for CSV files")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="rppmarket", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dispatch", parents=[common], help="DA (and optionally RT) dispatch and LMPs")
    p.add_argument("--commitments", help="comma-separated RPP commitments, MW (default: means)")
    p.add_argument("--rt", action="store_true", help="also clear the RT market")
    p.add_argument("--realizations", help="comma-separated RPP outputs for RT, MW (default: means)")
    p.set_defaults(func=cmd_dispatch)

    p = sub.add_parser("find-ne", parents=[common], help="search congestion patterns for pure NE")
    p.add_argument("--patterns", help="comma-separated DA[/RT] patterns, e.g. 'none,19+,3-;7+/3-'")
    p.add_argument("--unequal", action="store_true", help="also search pairs with different DA and RT patterns")
    p.add_argument("--std-ratio", type=float, help="override every RPP's std as this fraction of its mean")
    p.add_argument("--payoff-mode", choices=PAYOFF_MODES, default="exact")
    p.set_defaults(func=cmd_find_ne)

    p = sub.add_parser("social-opt", parents=[common], help="scenario-based social optimum")
    p.add_argument("--std-ratio", type=float, help="override every RPP's std as this fraction of its mean")
    p.set_defaults(func=cmd_social_opt)

    p = sub.add_parser("sweep", parents=[common], help="experiment sweeps A (uncertainty), B (cost vs K), C (LMP gap vs K)")
    p.add_argument("--which", default="abc")
    p.add_argument("--std-grid", default=",".join(str(r) for r in DEFAULT_STD_GRID))
    p.add_argument("--k-grid", default=",".join(str(k) for k in DEFAULT_K_GRID))
    p.add_argument("--jobs", type=int, default=1, help="worker processes for grid points")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return args.func(cfg, args)
    except (ConfigError, CaseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DispatchInfeasible, DispatchNotConverged) as exc:
        print(f"no result: {exc}", file=sys.stderr)
        return EXIT_NO_RESULT


if __name__ == "__main__":
    sys.exit(main())
