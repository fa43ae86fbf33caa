"""Plot sweep_a/b/c.csv from `rppmarket sweep`. Needs matplotlib (not a package dependency).

Run: python scripts/plot_sweeps.py DIR  ->  DIR/sweeps.png
"""

import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def main(out: Path):
    fig, ax = plt.subplots(1, 3, figsize=(14, 4))
    a = rows(out / "sweep_a.csv")
    ax[0].plot([float(r["std_ratio"]) for r in a], [float(r["rt_consistency_prob"] or "nan") for r in a], "o-")
    ax[0].set(xlabel="std / mean", ylabel="RT consistency probability")
    b = rows(out / "sweep_b.csv")
    ks = [int(r["k"]) for r in b]
    ax[1].plot(ks, [float(r["ne_expected_cost"] or "nan") for r in b], "o-", label="NE")
    ax[1].plot(ks, [float(r["so_expected_cost"]) for r in b], "--", label="social optimum")
    ax[1].set(xlabel="number of RPPs K", ylabel="expected cost ($)")
    ax[1].legend()
    gaps = defaultdict(list)
    for r in rows(out / "sweep_c.csv"):
        gaps[int(r["k"])].append(float(r["lmp_gap"] or "nan"))
    for k, g in gaps.items():
        ax[2].plot(range(len(g)), g, "o-", label=f"K={k}")
    ax[2].set(xlabel="bus", ylabel="|DA LMP - E[RT LMP]| ($/MWh)")
    ax[2].legend()
    fig.tight_layout()
    fig.savefig(out / "sweeps.png", dpi=120)
    print("wrote", out / "sweeps.png")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "."))
