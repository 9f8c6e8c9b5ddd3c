"""Command line entry points.

Subcommands:
  gen            write a synthetic transactions file
  run            run a benchmark config, write results.csv / summary.csv
  select-params  tabulate pipeline-selected (m, s, g) for a config's dataset
  audit          exact privacy audits (default battery or a single protocol)

Exit codes: 0 success, 1 audit violation found, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .audit import audit, default_battery
from .bench import (
    ConfigError,
    load_dataset,
    param_study,
    parse_config,
    run_experiment,
    summarize,
    write_results,
)
from .core import derive_generator, generate_synthetic, save_transactions
from .criad import ParamTriple


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ricount",
        description="Subset-count estimation benchmarks for randomized-index "
        "local privacy protocols.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic transactions file")
    gen.add_argument("--out", required=True, help="output transactions path")
    gen.add_argument("--n", type=int, default=100_000, help="number of users")
    gen.add_argument("--domain-size", type=int, default=2000)
    gen.add_argument("--mean-set-size", type=float, default=1.3)
    gen.add_argument("--shape", choices=("zipf", "uniform"), default="zipf")
    gen.add_argument("--zipf-a", type=float, default=1.2)
    gen.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="run a benchmark configuration")
    run.add_argument("--config", required=True, help="flat key = value config file")
    run.add_argument("--seed", type=int, default=None, help="override config seed")
    run.add_argument("--out", default=None, help="override output directory")
    run.add_argument("--threads", type=int, default=None, help="override worker count")

    sel = sub.add_parser(
        "select-params", help="show pipeline-selected (m, s, g) for a config"
    )
    sel.add_argument("--config", required=True)
    sel.add_argument("--epsilon", type=float, required=True)
    sel.add_argument("--repeats", type=int, default=1)
    sel.add_argument("--seed", type=int, default=None, help="override config seed")

    aud = sub.add_parser("audit", help="run exact privacy audits")
    aud.add_argument(
        "--protocol",
        choices=("CRIAD", "CRI", "RR-index"),
        default=None,
        help="audit a single protocol instead of the default battery",
    )
    aud.add_argument("--d", type=int, default=None, help="encoding length")
    aud.add_argument("--epsilon", type=float, default=None, help="privacy budget")
    aud.add_argument("--m", type=int, default=None, help="dummy count (CRIAD)")
    aud.add_argument("--s", type=int, default=None, help="sampled positions (CRIAD)")
    aud.add_argument("--g", type=int, default=None, help="block count (CRIAD)")
    return parser


def _cmd_gen(args: argparse.Namespace) -> int:
    dataset = generate_synthetic(
        args.n,
        args.domain_size,
        args.mean_set_size,
        shape=args.shape,
        zipf_a=args.zipf_a,
        rng=derive_generator(args.seed, 101),
    )
    save_transactions(dataset, args.out)
    sizes = dataset.indptr[1:] - dataset.indptr[:-1]
    print(
        f"wrote {dataset.n} users, {dataset.items.size} items "
        f"(mean set size {sizes.mean():.3f}) to {args.out}"
    )
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    cfg.validate()
    records = run_experiment(cfg)
    results_path, summary_path = write_results(records, cfg.out)
    print(f"wrote {results_path} and {summary_path}")
    print(f"{'method':<8} {'epsilon':>8} {'mre':>12} {'std':>12}")
    for row in summarize(records):
        print(f"{row.method:<8} {row.epsilon:>8.4g} {row.mre:>12.6g} {row.std:>12.6g}")
    return 0


def _cmd_select_params(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.repeats < 1:
        raise ConfigError("--repeats must be >= 1")
    if not args.epsilon > 0:
        raise ConfigError("--epsilon must be positive")
    dataset = load_dataset(cfg)
    counts = param_study(dataset, cfg.category, args.epsilon, args.repeats, cfg.seed)
    print(f"{'m':>6} {'s':>6} {'g':>6} {'picked':>8}")
    for triple, cnt in sorted(counts.items(), key=lambda kv: -kv[1]):
        print(f"{triple.m:>6} {triple.s:>6} {triple.g:>6} {cnt:>8}")
    return 0


def _cmd_audit(args: argparse.Namespace) -> int:
    if args.protocol is None:
        verdicts = default_battery()
    else:
        try:
            if args.protocol == "CRIAD":
                if None in (args.d, args.m, args.s, args.g):
                    raise ConfigError("CRIAD audit needs --d --m --s --g")
                verdicts = [
                    audit("CRIAD", d=args.d, triple=ParamTriple(args.m, args.s, args.g))
                ]
            else:
                if None in (args.d, args.epsilon):
                    raise ConfigError(f"{args.protocol} audit needs --d --epsilon")
                verdicts = [audit(args.protocol, d=args.d, epsilon=args.epsilon)]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    for verdict in verdicts:
        print(verdict.describe())
    return 0 if all(v.passed for v in verdicts) else 1


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen": _cmd_gen,
        "run": _cmd_run,
        "select-params": _cmd_select_params,
        "audit": _cmd_audit,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
