"""Time the numba and pure-numpy kernel backends on the bundled case.

Each backend runs in its own interpreter because the choice is fixed at import.
Run: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = """
import json, time
from rppmarket import _kernels
from rppmarket.dispatch import solve_da_system, solve_rt_batch
from rppmarket.market import build_system
from rppmarket.network import bundled_case_path, load_case
from rppmarket.socialopt import generate_scenarios, solve_social_optimum_system

case, parts = load_case(bundled_case_path())
s = build_system(case, parts)
scen = generate_scenarios(parts, n=500, seed=0)
q_da = solve_da_system(s, parts.mu).dispatch
# warm-up, includes JIT compilation on the numba path
solve_rt_batch(s, q_da, scen.x[:5])
solve_social_optimum_system(s, generate_scenarios(parts, n=5, seed=0))
out = {"backend": _kernels.BACKEND}
for name, fn in [("rt_batch_500", lambda: solve_rt_batch(s, q_da, scen.x)),
                 ("social_opt_500", lambda: solve_social_optimum_system(s, scen))]:
    times = []
    for _ in range(REPEAT):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    out[name] = min(times)
print(json.dumps(out))
"""


def run(flag: str, repeat: int) -> dict:
    env = dict(os.environ, RPPMARKET_NUMBA=flag)
    code = WORKLOAD.replace("REPEAT", str(repeat))
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast, ref = run("1", args.repeat), run("0", args.repeat)
    print(f"{'workload':<16}{fast['backend']:>12}{ref['backend']:>12}{'speedup':>10}")
    for key in ("rt_batch_500", "social_opt_500"):
        print(f"{key:<16}{fast[key]:>11.4f}s{ref[key]:>11.4f}s{ref[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
