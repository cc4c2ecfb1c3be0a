"""Command-line harness: generate data, run sampler variants, post-process.

Subcommands: ``simulate`` (write synthetic train/test CSVs), ``run`` (run one
or all variants over replications, emitting chain and summary files),
``oracle`` (exact-posterior check on an enumerable toy space), ``summarize``
(recompute summaries from stored chains).  Exit code 0 means every requested
run completed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io, oracle, runner
from .estimation import summarize_chain
from .priors import PriorConfig
from .simdata import SimConfig, generate_pair, true_mean


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algorithm", default="CT-A", help="RJ-A..CT-C or 'all'")
    p.add_argument("--iters", type=int, default=20_000)
    p.add_argument("--burnin", type=int, default=1_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha-mix", type=float, default=0.5)
    p.add_argument("--rotate-scheme", choices=("exact", "mixture"), default="exact")
    p.add_argument("--min-node-size", type=int, default=5)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--threads", default="1", help="candidate-evaluation threads or 'auto'")
    p.add_argument("--workers", type=int, default=1, help="replication worker processes")
    p.add_argument("--config", help="JSON file mirroring the run configuration; flags override")


def _build_run_config(args: argparse.Namespace) -> io.RunConfig:
    base = io.read_config(args.config).to_dict() if args.config else {}
    threads: int | str = args.threads if args.threads == "auto" else int(args.threads)
    overrides = {
        "iterations": args.iters,
        "burnin": args.burnin,
        "seed": args.seed,
        "alpha_mix": args.alpha_mix,
        "rotate_scheme": args.rotate_scheme,
        "min_node_size": args.min_node_size,
        "replications": args.replications,
        "threads": threads,
    }
    if args.algorithm != "all":
        overrides["algorithm"] = args.algorithm
    base.update(overrides)
    return io.RunConfig.from_dict(base)


def cmd_simulate(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = SimConfig(
        n=args.n, sigma2=args.sigma2, seed=args.seed, grid_size=args.grid_size
    )
    train, test = generate_pair(sim)
    io.write_dataset(train, out / "train.csv")
    io.write_dataset(test, out / "test.csv")
    truth = true_mean(test.features)
    with open(out / "test_truth.csv", "w") as fh:
        fh.write("y_true\n")
        fh.writelines(f"{float(v)!r}\n" for v in truth)
    print(f"wrote {out / 'train.csv'}, {out / 'test.csv'}, {out / 'test_truth.csv'}")
    return 0


def _load_truth(path: str) -> np.ndarray:
    vals = []
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != "y_true":
            raise ValueError(f"{path}: expected a single 'y_true' column")
        vals = [float(line) for line in fh if line.strip()]
    return np.array(vals)


def cmd_run(args: argparse.Namespace) -> int:
    run = _build_run_config(args)
    algorithms = list(io.ALGORITHMS) if args.algorithm == "all" else [args.algorithm]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets = None
    if args.train:
        if not args.test:
            raise ValueError("--train requires --test")
        train = io.load_dataset(
            args.train, response=args.response, grid_size=args.grid_size,
            min_node_size=run.min_node_size,
        )
        test = io.load_dataset(
            args.test, response=args.response, grid_size=args.grid_size,
            min_node_size=run.min_node_size,
        )
        datasets = (train, test)
    summaries = runner.run_benchmark(
        run,
        algorithms=algorithms,
        sigma2=args.sigma2,
        n=args.n,
        data_seed=args.data_seed,
        grid_size=args.grid_size,
        datasets=datasets,
        workers=args.workers,
        chain_dir=out / "chains",
    )
    summary_path = out / f"summary.{args.format}"
    io.write_summary(summaries, summary_path, format=args.format)
    for s in summaries:
        print(
            f"{s.algorithm} rep={s.replication} mse={s.mse:.4g} "
            f"unique_trees={s.unique_trees} wall={s.wall_time_seconds:.2f}s"
        )
    print(f"wrote {summary_path}")
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    data = oracle.toy_problem(
        n=args.n,
        min_node_size=args.min_node_size,
        seed=args.data_seed,
    )
    cfg = oracle.toy_prior(data)
    report = oracle.oracle_report(
        data,
        cfg,
        sigma2=args.sigma2,
        max_depth=args.depth,
        steps=args.steps,
        seed=args.seed,
        burnin=args.burnin,
        max_trees=args.max_trees,
    )
    print(f"{'tree':40s} {'exact':>10s} {'CT (RB)':>10s} {'RJ':>10s}")
    for row in report["rows"]:
        print(
            f"{row['tree']:40s} {row['exact']:10.4f} "
            f"{row['ct_estimate']:10.4f} {row['rj_estimate']:10.4f}"
        )
    print(f"total variation: CT {report['tv_ct']:.4f}, RJ {report['tv_rj']:.4f}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "oracle.json", "w") as fh:
            json.dump(report, fh, indent=2)
        print(f"wrote {out / 'oracle.json'}")
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    train = io.load_dataset(args.train, response=args.response, grid_size=args.grid_size)
    test = io.load_dataset(args.test, response=args.response, grid_size=args.grid_size)
    truth = _load_truth(args.truth) if args.truth else None
    cfg = PriorConfig.from_data(train.response)
    summaries = []
    for i, path in enumerate(args.chains):
        chain = io.read_chain(path)
        summaries.append(
            summarize_chain(
                chain,
                args.burnin,
                train,
                test.features,
                test.response,
                cfg,
                algorithm=Path(path).stem,
                replication=i,
                test_truth=truth,
            )
        )
    io.write_summary(summaries, args.out, format=args.format)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctcart",
        description="Posterior sampling for Bayesian regression trees "
        "(continuous-time birth-death and reversible-jump samplers)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic train/test CSVs")
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run sampler variants and summarize")
    _add_run_flags(p)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--data-seed", type=int, default=1234)
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--train", help="training CSV (default: synthetic data)")
    p.add_argument("--test", help="test CSV")
    p.add_argument("--response", default="y")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="exact-posterior check on a toy space")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--steps", type=int, default=50_000)
    p.add_argument("--burnin", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=7)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--min-node-size", type=int, default=5)
    p.add_argument("--max-trees", type=int, default=1_000_000)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("summarize", help="recompute summaries from stored chains")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--truth")
    p.add_argument("--response", default="y")
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--burnin", type=int, default=1_000)
    p.add_argument("--chains", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_summarize)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, oracle.OracleSpaceError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
