"""Regenerate src/rppmarket/data/ieee14.json.

Loads, generators and RPPs are the published 14-bus market data. Branch
reactances are the standard IEEE 14-bus values. Line capacities are not
published, so they are chosen here:

1. With unconstrained lines, find the equilibrium commitments for every
   split level used by the sweeps and record the largest |flow| on each line
   over DA dispatch and RT scenarios with std/mean up to 0.30.
2. Every line except the target gets ``HEADROOM`` times that flow.
3. The target line gets ``fraction`` times its DA flow at the K = 2
   uncongested equilibrium. The case is accepted if the same-pattern search
   (at most two lines) returns exactly one equilibrium and it congests only
   the target line.

The default fraction 0.60 was picked by scanning every line and fraction;
see the project notes for why no choice puts the 15% consistency
probability near the reported level.

Run: python scripts/calibrate_ieee14.py [--fraction F] [--target L] [--write]
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from rppmarket.closedform import CongestionPattern
from rppmarket.dispatch import solve_da_system, solve_rt_batch
from rppmarket.equilibrium import default_pattern_pairs, find_pure_ne
from rppmarket.market import build_system
from rppmarket.network import bundled_case_path, parse_case
from rppmarket.socialopt import sample_realizations, split_realizations

# 0-indexed (from, to, reactance p.u.) in the standard branch order
BRANCHES = [
    (0, 1, 0.05917), (0, 4, 0.22304), (1, 2, 0.19797), (1, 3, 0.17632),
    (1, 4, 0.17388), (2, 3, 0.17103), (3, 4, 0.04211), (3, 6, 0.20912),
    (3, 8, 0.55618), (4, 5, 0.25202), (5, 10, 0.19890), (5, 11, 0.25581),
    (5, 12, 0.13027), (6, 7, 0.17615), (6, 8, 0.11001), (8, 9, 0.08450),
    (8, 13, 0.27038), (9, 10, 0.19207), (11, 12, 0.19988), (12, 13, 0.34802),
]
LOADS = [0, 43.4, 64.8, 41.6, 15.2, 22.4, 20, 50, 59, 18, 27, 32.2, 27.6, 29.8]
DA_GENS = [(7, 0.06, 3.51), (8, 0.09, 3.89), (11, 0.08, 2.15)]
RT_GENS = [(4, 0.24, 9.35), (12, 0.26, 11.51)]
RPPS = [(4, 70.0, 10.5), (11, 50.0, 7.5)]

TARGET_LINE = 19
FRACTION = 0.60
HEADROOM = 1.3
SPLITS = (1, 3, 5, 10, 15)
STD_RATIOS = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
N_SCEN = 500
SEED = 0


def base_doc(capacities) -> dict:
    return {
        "name": "ieee14",
        "slack_bus": 0,
        "buses": [{"id": i, "load_da": float(l)} for i, l in enumerate(LOADS)],
        "lines": [
            {"id": i, "from": f, "to": t, "susceptance": round(1.0 / x, 6), "capacity": float(capacities[i])}
            for i, (f, t, x) in enumerate(BRANCHES)
        ],
        "da_generators": [{"id": i, "bus": b, "alpha": a, "beta": be} for i, (b, a, be) in enumerate(DA_GENS)],
        "rt_generators": [{"id": i, "bus": b, "alpha": a, "beta": be} for i, (b, a, be) in enumerate(RT_GENS)],
        "rpps": [{"id": i, "bus": b, "mean": m, "std": s} for i, (b, m, s) in enumerate(RPPS)],
    }


def uncongested_flows(case, participants):
    """Largest |flow| per line at the uncongested NE over splits and std levels."""
    none = [(CongestionPattern(), CongestionPattern((), "RT"))]
    peak = np.zeros(case.n_lines)
    da_flow_k2 = None
    for parts in SPLITS:
        for ratio in STD_RATIOS:
            base = participants.with_std_ratio(ratio)
            p = base.split_rpps(parts)
            X = split_realizations(sample_realizations(base.mu, base.sigma, N_SCEN, SEED), parts)
            ne = find_pure_ne(case, p, none, scenarios=X)[0]
            system = build_system(case, p)
            da = solve_da_system(system, ne.c_tilde)
            rt = solve_rt_batch(system, da.dispatch, X)
            net = (system.inc.e_g_da @ da.dispatch - system.loads)[None, :] + X @ system.inc.e_r.T \
                + rt.dispatch @ system.inc.e_g_rt.T
            peak = np.maximum(peak, np.abs(net @ system.ptdf.T).max(axis=0))
            peak = np.maximum(peak, np.abs(da.flows))
            if parts == 1 and ratio == 0.15:
                da_flow_k2 = da.flows
    return peak, da_flow_k2


def evaluate(doc, verbose=True):
    case, participants = parse_case(doc)
    pairs = default_pattern_pairs(case.n_lines, 2)
    found = find_pure_ne(case, participants, pairs, n_scenarios=N_SCEN, seed=SEED)
    out = [(str(c.da_pattern), c.c_tilde.round(3).tolist(), c.rt_consistency_prob) for c in found]
    if verbose:
        print("  candidates:", out)
    return found


def calibrate(frac=FRACTION, target=TARGET_LINE):
    case, participants = parse_case(base_doc([1e4] * len(BRANCHES)))
    peak, da_flow = uncongested_flows(case, participants)
    print("uncongested K=2 DA flows:", np.round(da_flow, 2).tolist())
    caps = np.round(HEADROOM * peak + 1.0, 1)
    caps[target] = round(frac * abs(da_flow[target]), 2)
    doc = base_doc(caps)
    print(f"fraction {frac:.3f}: capacity {caps[target]}")
    found = evaluate(doc)
    if len(found) == 1 and found[0].da_pattern.lines == (target,):
        return doc
    return None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--write", action="store_true", help="write the bundled case file")
    ap.add_argument("--target", type=int, default=TARGET_LINE)
    ap.add_argument("--fraction", type=float, default=FRACTION)
    args = ap.parse_args()
    frac = args.fraction
    doc = calibrate(frac, args.target)
    if doc is None:
        raise SystemExit("the case does not have a unique equilibrium on the target line")
    doc["notes"] = (
        "Loads, generators and RPPs: published 14-bus market data. Susceptances: 1/x from standard "
        f"IEEE 14-bus branch reactances. Capacities: {HEADROOM}x the peak uncongested equilibrium flow "
        f"(+1 MW) on every line except line {args.target}, which is set to {frac:.2f} of its K=2 "
        "uncongested DA flow. Produced by scripts/calibrate_ieee14.py."
    )
    if args.write:
        path = bundled_case_path()
        path.write_text(json.dumps(doc, indent=2) + "\n")
        print("wrote", path)


if __name__ == "__main__":
    main()
