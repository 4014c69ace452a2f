"""Command-line front door.

    matchlab run --config experiment.cfg [--set key=value ...] [--jobs N]
    matchlab rank --inputs results_a.csv results_b.csv --out ranked/
    matchlab defaults

Exit codes: 0 success, 1 configuration error, 2 runtime failure (a diverged
run is recorded and the rest of the suite still executes).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import default_config_text, load_config
from .metrics import MissingCellError
from .reporting import (emit_reports, rank_table_from_rows, read_results_csv,
                        write_ranks_csv)
from .runner import run_suite, summary_lines
from .trainer import ConfigError


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.set or [])
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        results, failures = run_suite(cfg, jobs=args.jobs)
    except (ConfigError, ValueError) as exc:
        # invalid combinations that only surface when a run is assembled,
        # e.g. a split too small for the requested counts
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    for failure in failures:
        print(f"run failed: {failure.run_id}: {failure.message}", file=sys.stderr)
    if not results:
        print("no run completed; nothing to report", file=sys.stderr)
        return 2
    emit_reports(results, cfg.output_dir, charts=cfg.emit_charts,
                 gamma_trace=cfg.emit_gamma_trace)
    print(f"wrote reports to {cfg.output_dir}")
    for line in summary_lines(results):
        print(line)
    return 2 if failures else 0


def _cmd_rank(args) -> int:
    rows = []
    try:
        for path in args.inputs:
            rows.extend(read_results_csv(path))
        table = rank_table_from_rows(rows)
    except (OSError, ValueError, MissingCellError) as exc:
        print(f"rank error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_ranks_csv(table, out_dir / "ranks.csv")
    print(f"wrote {out_dir / 'ranks.csv'}")
    for a, algorithm in enumerate(table.algorithms):
        print(f"{algorithm:<24} friedman={table.friedman[a]:.3f} "
              f"mean_error={table.mean_error[a]:.4f} rank={int(table.final_rank[a])}")
    return 0


def _cmd_defaults(_args) -> int:
    print(default_config_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matchlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an (algorithm x seed) experiment suite")
    p_run.add_argument("--config", required=True, help="flat key=value config file")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="concurrent runs (default 1, fully deterministic order)")
    p_run.set_defaults(func=_cmd_run)

    p_rank = sub.add_parser("rank", help="merge results.csv files into a rank table")
    p_rank.add_argument("--inputs", nargs="+", required=True)
    p_rank.add_argument("--out", required=True)
    p_rank.set_defaults(func=_cmd_rank)

    p_defaults = sub.add_parser("defaults", help="print the documented default config")
    p_defaults.set_defaults(func=_cmd_defaults)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
