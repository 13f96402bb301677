#!/usr/bin/env python3
"""Plot per-range total cost around a batcher outage from the exp3 .dat files.

Needs matplotlib (``pip install -e ".[plot]"``). Without it, prints the
series as a text table instead.
"""

import argparse
from pathlib import Path


def read_dat(path):
    pts = []
    for line in Path(path).read_text().splitlines():
        i, v = line.split(",")
        pts.append((int(i), int(v)))
    return pts


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--results", default="results", help="directory holding exp3_*.dat")
    p.add_argument("--out", default=None, help="image path (default: <results>/exp3.png)")
    args = p.parse_args()

    series = {name: read_dat(Path(args.results) / f"exp3_{name}.dat") for name in ("baseline", "optimized")}
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("range\tbaseline\toptimized")
        for (i, b), (_, o) in zip(series["baseline"], series["optimized"]):
            print(f"{i}\t{b}\t{o}")
        return

    fig, ax = plt.subplots(figsize=(7, 3.5))
    for name, pts in series.items():
        ax.plot([i for i, _ in pts], [v for _, v in pts], marker="o", ms=3, label=name)
    ax.set_xlabel("range index")
    ax.set_ylabel("total cost (weighted units)")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    out = args.out or str(Path(args.results) / "exp3.png")
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
