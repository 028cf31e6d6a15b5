"""Command-line entry point: ``datingsim {run,sweep,analyze,report}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import pandas as pd

from . import analysis
from .core import ConfigurationError
from .experiment import (
    enumerate_scenarios,
    format_value,
    load_sweep,
    result_row,
    run_sweep,
    write_results,
)
from .metrics import compute_metrics
from .platform import simulate
from .scenario import desk_scale, load_scenario

OUT_ENV = "DATINGSIM_OUT"
logger = logging.getLogger("datingsim")


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "results")


def _parse_seeds(text: str) -> list[int]:
    try:
        if "," in text:
            seeds = [int(t) for t in text.split(",") if t.strip()]
        else:
            seeds = list(range(int(text)))
    except ValueError:
        raise ConfigurationError(f"--seeds: expected a count or a comma list, got {text!r}") from None
    if not seeds:
        raise ConfigurationError("--seeds: no seeds given")
    return seeds


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def write_frame(df: pd.DataFrame, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(df.columns)
        for row in df.itertuples(index=False):
            writer.writerow([format_value(v) for v in row])


# -- subcommands ----------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.config)
    if args.desk_scale:
        scenario = desk_scale(scenario)
    out = _out_dir(args.out)
    stem = f"run-{scenario.scenario_id}-seed{args.seed}"
    logger.info("running scenario %s with seed %d", scenario.scenario_id, args.seed)
    log = simulate(scenario, args.seed)
    metrics = compute_metrics(log, scenario.scenario_id, args.seed)
    with open(out / f"{stem}.csv", "w", encoding="utf-8", newline="") as fh:
        write_results([result_row(scenario, args.seed, metrics)], fh)
    if args.events:
        with open(out / f"{stem}.events.jsonl", "w", encoding="utf-8") as fh:
            log.write_jsonl(fh)
    logger.info("wrote %s", out / f"{stem}.csv")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_sweep(args.config)
    seeds = _parse_seeds(args.seeds) if args.seeds else list(config.seeds)
    scenarios = enumerate_scenarios(config, desk=args.desk_scale)
    out = _out_dir(args.out)
    logger.info("%d scenarios x %d seeds = %d runs", len(scenarios), len(seeds), len(scenarios) * len(seeds))
    rows = run_sweep(scenarios, seeds, args.parallelism, checkpoint=out / "checkpoint.jsonl")
    with open(out / "results.csv", "w", encoding="utf-8", newline="") as fh:
        write_results(rows, fh)
    failed = sum(1 for r in rows if r["error"])
    if failed:
        logger.warning("%d runs failed; see the error column", failed)
    logger.info("wrote %s", out / "results.csv")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    df = analysis.load_results(args.results)
    out = _out_dir(args.out)
    design = analysis.build_design_matrix(
        df, include_interactions=not args.no_interactions,
        filter_encoding=args.filter_encoding, outcome=args.outcome,
    )
    fit = analysis.ols_fit(design.X, design.y, design.names)
    write_frame(fit.to_frame(), out / "coefficients.csv")
    summary = pd.DataFrame([{
        "outcome": args.outcome,
        "r_squared": fit.r_squared,
        "n_obs": fit.n_obs,
        "n_terms": fit.n_terms,
        "dropped_rows": design.dropped_rows,
    }])
    write_frame(summary, out / "summary.csv")
    write_frame(analysis.condition_summary(df), out / "plot_conditions.csv")
    write_frame(analysis.society_summary(df), out / "plot_society.csv")
    logger.info("R^2 = %.4f over %d runs, %d terms", fit.r_squared, fit.n_obs, fit.n_terms)
    coefs = fit.coefficients
    for name in analysis.top_effects(fit, args.top):
        c = coefs[name]
        logger.info("  %-40s %+9.3f  (%.3f, %.3f)", name, c.estimate, c.ci_low, c.ci_high)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    """Plain-text table of outcome means per intervention condition, on stdout."""
    df = analysis.load_results(args.results)
    table = analysis.condition_summary(df)
    wide = table.pivot_table(
        index=list(analysis.CONDITION_KEYS), columns="metric", values="mean", sort=True
    )
    counts = df.groupby(list(analysis.CONDITION_KEYS)).size().rename("runs")
    wide = wide.join(counts)
    with pd.option_context("display.max_rows", None, "display.width", 200,
                           "display.float_format", "{:.2f}".format):
        sys.stdout.write(wide.to_string() + "\n")
    errors = int((df["error"].fillna("") != "").sum()) if "error" in df.columns else 0
    missing = int(df["heterogamy_pct"].isna().sum())
    sys.stdout.write(f"runs: {len(df)}  failed: {errors}  without long-term relationships: {missing}\n")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="datingsim", description=__doc__)
    parser.add_argument("--quiet", action="store_true", help="only report warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./results)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    p = sub.add_parser("run", parents=[common], help="one scenario, one seed")
    p.add_argument("--config", required=True, help="scenario TOML file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--desk-scale", action="store_true", help="150 initial agents, 2 inflow, 1000 iterations")
    p.add_argument("--events", action="store_true", help="also write the exit/long-term event log")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="scenario grid times seeds, resumable")
    p.add_argument("--config", required=True, help="sweep TOML file")
    p.add_argument("--seeds", default=None, help="seed count or comma list; overrides the config")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--desk-scale", action="store_true", help="150 initial agents, 2 inflow, 1000 iterations")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", parents=[common], help="regression and plot-data tables")
    p.add_argument("results", help="results CSV written by sweep")
    p.add_argument("--no-interactions", action="store_true", help="first-order terms only")
    p.add_argument("--filter-encoding", choices=("onehot", "factorial"), default="onehot")
    p.add_argument("--outcome", default="heterogamy_pct", choices=analysis.METRIC_COLUMNS)
    p.add_argument("--top", type=int, default=10, help="number of strongest effects to log")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", parents=[common], help="condition means as a text table")
    p.add_argument("results", help="results CSV written by sweep")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.out is None:
        args.out = _default_out()
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    if getattr(args, "parallelism", 1) < 1:
        print("error: --parallelism must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
