"""Command-line entry point ``glmmnet-bench``.

Subcommands::

    run --config PATH --out DIR [--reps R] [--models a,b] [--experiments 1-6] [--jobs N] [--save-models]
    summarize --in DIR [--reference MODEL]
    encode --in data.csv --out encoded.csv [--folds 5] [--family F] [--link L] [--seed S]
    posterior --model CHECKPOINT --out re.csv [--sort]
    simulate --experiment ID --out PREFIX [--seed S]

Exit codes: 0 success, 1 configuration or input error, 2 partial failure.
"""

import argparse
import sys

import numpy as np

from . import bench
from .baselines import glmm_encode, write_encoded_csv
from .checkpoint import load_checkpoint
from .config import RunPlan, builtin_experiments, load_config, parse_id_list, parse_name_list
from .data import read_csv_dataset
from .errors import ConfigError
from .simulation import generate

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="glmmnet-bench", description="GLMMNet benchmark driver")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a model x experiment x repetition grid")
    r.add_argument("--config", help="INI configuration file")
    r.add_argument("--out", required=True)
    r.add_argument("--reps", type=int)
    r.add_argument("--models")
    r.add_argument("--experiments")
    r.add_argument("--jobs", type=int)
    r.add_argument("--seed", type=int, help="override the base seed")
    r.add_argument("--save-models", action="store_true", help="write checkpoints of the mixed models")

    s = sub.add_parser("summarize", help="quantile, Wilcoxon and recovery tables")
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--reference", default="GLMMNet")

    e = sub.add_parser("encode", help="cross-validated GLMM encoding of a CSV dataset")
    e.add_argument("--in", dest="in_path", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--folds", type=int, default=5)
    e.add_argument("--family", default="gaussian")
    e.add_argument("--link")
    e.add_argument("--seed", type=int, default=0)

    q = sub.add_parser("posterior", help="random-effects table of a GLMMNet checkpoint")
    q.add_argument("--model", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--block", type=int, default=0)
    q.add_argument("--sort", action="store_true", help="order rows by decreasing z-score")

    g = sub.add_parser("simulate", help="write one simulated environment to CSV")
    g.add_argument("--experiment", default="1")
    g.add_argument("--out", required=True, help="file prefix")
    g.add_argument("--seed", type=int, default=0)
    return p


def _cmd_run(args):
    if args.config:
        plan = load_config(args.config)
    else:
        plan = RunPlan(experiments=["1"], models=["GLMMNet"], experiment_configs=builtin_experiments())
    if args.reps is not None:
        plan.reps = args.reps
    if args.models:
        plan.models = parse_name_list(args.models)
    if args.experiments:
        plan.experiments = parse_id_list(args.experiments)
    if args.jobs is not None:
        plan.jobs = args.jobs
    if args.seed is not None:
        plan.base_seed = args.seed
    plan.__post_init__()
    bench.validate_plan(plan)
    code = bench.run(plan, args.out, save_models=args.save_models)
    if code:
        print("some cells failed; see the status column of results.csv", file=sys.stderr)
    return code


def _cmd_summarize(args):
    tables = bench.summarize(args.in_dir, args.reference)
    print(f"{len(tables['summary'])} summary rows, {len(tables['wilcoxon'])} tests, "
          f"{len(tables['recovery'])} recovery rows written to {args.in_dir}")
    return EXIT_OK


def _cmd_encode(args):
    try:
        data, names = read_csv_dataset(args.in_path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {args.in_path!r}: {exc}") from None
    enc = glmm_encode(data, args.folds, args.family, args.link, np.random.default_rng(args.seed))
    write_encoded_csv(data, enc.encoding, args.out, names)
    return EXIT_OK


def _cmd_posterior(args):
    try:
        model = load_checkpoint(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load checkpoint {args.model!r}: {exc}") from None
    summary = model.posterior_summary(args.block)
    if args.sort:
        summary = summary.sorted_by_z()
    summary.to_csv(args.out)
    return EXIT_OK


def _cmd_simulate(args):
    exps = builtin_experiments()
    if args.experiment not in exps:
        raise ConfigError(f"unknown experiment {args.experiment!r}")
    cfg = exps[args.experiment].with_seed(args.seed)
    generate(cfg).export(args.out)
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "summarize": _cmd_summarize, "encode": _cmd_encode, "posterior": _cmd_posterior,
            "simulate": _cmd_simulate}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
