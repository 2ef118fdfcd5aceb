"""Command line entry point: ``tankfleet run`` and ``tankfleet plot-data``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time

from .config import STRATEGIES, ConfigError, ExperimentConfig, load_config

log = logging.getLogger("tankfleet")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tankfleet", description="Fleet hot-water reheat control experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate strategies and write summary/daily CSVs")
    run.add_argument("--config", help="key = value config file; flags below override it")
    run.add_argument("--strategy", default=None, help=f"one of {', '.join(STRATEGIES)} or 'all'")
    run.add_argument("--seed", type=_u64, default=None, help="master seed (u64)")
    run.add_argument("--days", type=_positive, default=None)
    run.add_argument("--households", type=_positive, default=None)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--transitions", action="store_true",
                     help="also write per-household transition logs")

    plot = sub.add_parser("plot-data", help="re-emit per-figure CSVs and PNGs from a run directory")
    plot.add_argument("--in", dest="in_dir", required=True)
    plot.add_argument("--no-png", action="store_true", help="CSV only")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.strategy is not None:
        if args.strategy.lower() == "all":
            overrides["strategies"] = STRATEGIES
        elif args.strategy in STRATEGIES:
            overrides["strategies"] = (args.strategy,)
        else:
            raise ConfigError(f"unknown strategy {args.strategy!r}; choose from {', '.join(STRATEGIES)} or all")
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.days is not None:
        overrides["n_days"] = args.days
    if args.households is not None:
        overrides["n_households"] = args.households
    try:
        return dataclasses.replace(cfg, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_run(args) -> int:
    from .harness import run_strategy, write_report, MetricsReport

    cfg = resolve_config(args)
    results = {}
    for name in cfg.strategies:
        t0 = time.perf_counter()
        results[name] = run_strategy(cfg, name, keep_transitions=args.transitions)
        r = results[name]
        log.info("%s: %.1f kWh, %d violations, coverage %.3f (%.1fs)", name, r.cumulative_energy,
                 r.total_violations, r.final_coverage, time.perf_counter() - t0)
    paths = write_report(MetricsReport(cfg, results), args.out, transitions=args.transitions)
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def _cmd_plot(args) -> int:
    from .plotting import emit_figures

    paths = emit_figures(args.in_dir, png=not args.no_png)
    print(f"wrote {len(paths)} files to {args.in_dir}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_plot(args)
    except ConfigError as exc:
        print(f"tankfleet: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"tankfleet: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
