"""CSV and SVG report emission for completed runs.

Files written by emit_reports:
  per_epoch.csv  one row per (run, epoch)
  results.csv    one row per run with its final test error
  ranks.csv      per-algorithm mean error and rank aggregates
  maskrate_<setup>.svg / impurity_<setup>.svg   per-epoch curves, one line
                 per algorithm (mean over seeds)

Floats are written with shortest round-trip formatting, so re-parsing a CSV
reproduces the in-memory values exactly.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from .metrics import RankTable, friedman_ranks
from .svgchart import line_chart
from .trainer import RunResult

PER_EPOCH_HEADER = ["run_id", "seed", "algorithm", "setup", "epoch", "loss_sup",
                    "loss_unsup", "mask_rate", "impurity", "val_error", "test_error"]
RESULTS_HEADER = ["algorithm", "setup", "seed", "final_test_error"]
RANKS_HEADER = ["algorithm", "friedman_rank", "mean_error", "final_rank"]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_per_epoch_csv(results: list[RunResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PER_EPOCH_HEADER)
        for r in results:
            for m in r.epoch_metrics:
                writer.writerow([
                    r.run_id, r.seed, r.algorithm, r.setup, m.epoch,
                    _fmt(m.loss_sup), _fmt(m.loss_unsup), _fmt(m.mask_rate),
                    _fmt(m.impurity), _fmt(m.val_error), _fmt(m.test_error),
                ])


def write_results_csv(results: list[RunResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in results:
            writer.writerow([r.algorithm, r.setup, r.seed, _fmt(r.final_test_error)])


def read_results_csv(path) -> list[tuple[str, str, int, float]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected results header {header}")
        for row in reader:
            rows.append((row[0], row[1], int(row[2]), float(row[3])))
    return rows


def rank_table_from_rows(rows: list[tuple[str, str, int, float]]) -> RankTable:
    """Mean final error per (algorithm, setup), then ranks across setups.
    Every algorithm must appear in every setup."""
    cells: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for algorithm, setup, _seed, error in rows:
        cells[algorithm][setup].append(error)
    means = {
        algorithm: {setup: float(np.mean(v)) for setup, v in per_setup.items()}
        for algorithm, per_setup in cells.items()
    }
    return friedman_ranks(means)


def write_ranks_csv(table: RankTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RANKS_HEADER)
        for a, algorithm in enumerate(table.algorithms):
            writer.writerow([algorithm, _fmt(table.friedman[a]),
                             _fmt(table.mean_error[a]), int(table.final_rank[a])])


def write_charts(results: list[RunResult], out_dir: Path) -> list[Path]:
    """Mask-rate and impurity curves per setup; one line per algorithm,
    averaged over seeds."""
    written = []
    by_setup: dict[str, list[RunResult]] = defaultdict(list)
    for r in results:
        by_setup[r.setup].append(r)
    for setup, runs in sorted(by_setup.items()):
        for metric, fname in (("mask_rate", "maskrate"), ("impurity", "impurity")):
            series = []
            by_algo: dict[str, list[RunResult]] = defaultdict(list)
            for r in runs:
                by_algo[r.algorithm].append(r)
            for algorithm, algo_runs in sorted(by_algo.items()):
                epochs = [m.epoch for m in algo_runs[0].epoch_metrics]
                values = np.mean(
                    [[getattr(m, metric) for m in r.epoch_metrics] for r in algo_runs],
                    axis=0)
                series.append((algorithm, [float(e) for e in epochs],
                               [float(v) for v in values]))
            if not series:
                continue
            svg = line_chart(f"{metric.replace('_', ' ')} ({setup})", "epoch",
                             metric.replace("_", " "), series)
            path = out_dir / f"{fname}_{setup}.svg"
            path.write_text(svg)
            written.append(path)
    return written


def write_gamma_trace(results: list[RunResult], out_dir: Path) -> list[Path]:
    """Per-epoch margin cutoffs: one `epoch,head,class,gamma` row per cell."""
    written = []
    for r in results:
        if not any(m.gamma_thresholds for m in r.epoch_metrics):
            continue
        path = out_dir / f"gamma_trace_{r.run_id}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "head", "class", "gamma"])
            for m in r.epoch_metrics:
                if m.gamma_thresholds is None:
                    continue
                for h, row in enumerate(m.gamma_thresholds):
                    for c, g in enumerate(row):
                        writer.writerow([m.epoch, h, c, _fmt(g)])
        written.append(path)
    return written


def emit_reports(results: list[RunResult], out_dir, charts: bool = True,
                 gamma_trace: bool = False) -> list[Path]:
    if not results:
        raise ValueError("no completed runs to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    per_epoch = out / "per_epoch.csv"
    write_per_epoch_csv(results, per_epoch)
    written.append(per_epoch)
    results_csv = out / "results.csv"
    write_results_csv(results, results_csv)
    written.append(results_csv)
    table = rank_table_from_rows(
        [(r.algorithm, r.setup, r.seed, r.final_test_error) for r in results])
    ranks_csv = out / "ranks.csv"
    write_ranks_csv(table, ranks_csv)
    written.append(ranks_csv)
    if charts:
        written.extend(write_charts(results, out))
    if gamma_trace:
        written.extend(write_gamma_trace(results, out))
    return written
