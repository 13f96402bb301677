#!/usr/bin/env python3
"""Regenerate every experiment table and run the attack and equivalence sweeps."""

import argparse
import sys

from derivlab.cli import main


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results")
    p.add_argument("--seeds", type=int, default=100, help="seeds per attack")
    p.add_argument("--scenarios", type=int, default=1000, help="equivalence scenarios")
    return p.parse_args()


if __name__ == "__main__":
    args = parse_args()
    jobs = [
        ["exp1", "--out", args.out],
        ["exp2", "--out", args.out],
        ["exp3", "--out", args.out],
        ["attacks", "--seeds", str(args.seeds)],
        ["equiv", "--scenarios", str(args.scenarios)],
    ]
    status = 0
    for job in jobs:
        print(f"# derivlab {' '.join(job)}", flush=True)
        status |= main(job)
    sys.exit(status)
