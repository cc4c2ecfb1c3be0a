#!/usr/bin/env python3
"""Exact-posterior sanity run on the enumerable toy space.

Enumerates every reachable tree of the one-variable toy problem, computes
the normalized marginal posterior at fixed noise variance, runs the
continuous-time and reversible-jump samplers, and prints the per-tree
comparison with total-variation distances.
"""

import argparse

from ctcart.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default=None)
    args = ap.parse_args()
    argv = ["oracle", "--steps", str(args.steps), "--seed", str(args.seed)]
    if args.out_dir:
        argv += ["--out-dir", args.out_dir]
    return cli_main(argv)


if __name__ == "__main__":
    raise SystemExit(main())
