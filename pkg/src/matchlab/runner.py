"""Execute the (algorithm x seed) grid described by an ExperimentConfig."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numkit
from .config import ExperimentConfig, resolved_strong_sigma
from .data import (Augmentor, GaussianTask, LongTailSpec, SplitSpec, Splits,
                   long_tail_counts, make_split)
from .model import DivergenceError, ModelConfig, OptimizerConfig
from .trainer import RunResult, TrainConfig, Trainer


@dataclass
class RunFailure:
    run_id: str
    algorithm: str
    seed: int
    message: str


def build_splits(cfg: ExperimentConfig, seed: int) -> Splits:
    rng = numkit.make_rng(seed, numkit.CH_DATA)
    task = GaussianTask.create(cfg.classes, cfg.input_dim, cfg.class_separation)
    if cfg.split == "balanced":
        spec = SplitSpec(
            labeled_per_class=(cfg.labels_per_class,) * cfg.classes,
            unlabeled_per_class=(cfg.unlabeled_per_class,) * cfg.classes,
            val_total=cfg.val_size,
            test_total=cfg.test_size,
        )
    else:
        lt = LongTailSpec(cfg.classes, cfg.longtail_n1, cfg.longtail_gamma,
                          cfg.longtail_unlabeled_multiplier)
        labeled, unlabeled = long_tail_counts(lt)
        spec = SplitSpec(labeled, unlabeled, cfg.val_size, cfg.test_size)
    return make_split(task, spec, rng)


def build_trainer(cfg: ExperimentConfig, algorithm: str, seed: int) -> Trainer:
    splits = build_splits(cfg, seed)
    augmentor = Augmentor(
        weak=cfg.augment_weak,
        weak_sigma=cfg.augment_weak_sigma,
        strong=cfg.augment_strong,
        strong_sigma=resolved_strong_sigma(cfg),
        dropout_p=cfg.augment_dropout_p,
    )
    model_config = ModelConfig(
        input_dim=cfg.input_dim,
        hidden_dims=cfg.model_hidden_dims,
        num_classes=cfg.classes,
        num_heads=cfg.model_num_heads,
        activation=cfg.model_activation,
        weight_init_scale=cfg.model_init_scale,
    )
    opt_config = OptimizerConfig(
        learning_rate=cfg.opt_lr,
        weight_decay=cfg.opt_weight_decay,
        momentum=cfg.opt_momentum,
    )
    train_config = TrainConfig(
        algorithm=algorithm,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        mu=cfg.mu,
        w_u=cfg.w_u,
        seed=seed,
        fixed_tau=cfg.fixmatch_tau,
        lambda_f=cfg.free_lambda_f,
        lambda_m=cfg.apm_lambda_m,
        w_d=cfg.plwm_w_d,
        apm_percentile=cfg.apm_percentile,
        gamma_min=cfg.apm_gamma_min,
        abc_enabled=cfg.abc_enabled,
        abc_loss_weight=cfg.abc_loss_weight,
        lr_schedule=cfg.opt_lr_schedule,
    )
    return Trainer(model_config, opt_config, train_config, splits, augmentor)


def run_id_for(cfg: ExperimentConfig, algorithm: str, seed: int) -> str:
    return f"{algorithm}_{cfg.setup}_s{seed}"


def execute_run(cfg: ExperimentConfig, algorithm: str, seed: int) -> RunResult:
    trainer = build_trainer(cfg, algorithm, seed)
    run_id = run_id_for(cfg, algorithm, seed)
    if cfg.emit_decision_trace:
        trainer.decision_trace = []
    out_dir = Path(cfg.output_dir)
    if cfg.checkpoint_every > 0:
        out_dir.mkdir(parents=True, exist_ok=True)
        result_metrics = []
        while trainer.epoch < cfg.epochs:
            target = min(trainer.epoch + cfg.checkpoint_every, cfg.epochs)
            partial = trainer.run(run_id=run_id, setup=cfg.setup, until_epoch=target)
            result_metrics.extend(partial.epoch_metrics)
            trainer.save_checkpoint(out_dir / f"checkpoint_{run_id}_epoch{trainer.epoch}.npz")
        result = RunResult(run_id=run_id, algorithm=algorithm, setup=cfg.setup,
                           seed=seed, epoch_metrics=result_metrics)
    else:
        result = trainer.run(run_id=run_id, setup=cfg.setup)
    if cfg.emit_decision_trace and trainer.decision_trace is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / f"decision_trace_{run_id}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "head", "sample_id", "category", "weight",
                             "pseudo_label", "true_label"])
            writer.writerows(trainer.decision_trace)
    return result


def _execute_entry(args) -> RunResult:
    cfg, algorithm, seed = args
    return execute_run(cfg, algorithm, seed)


def run_suite(cfg: ExperimentConfig, jobs: int = 1):
    """All (algorithm, seed) runs; failures are recorded and the suite
    continues. Returns (results, failures) with results in grid order."""
    grid = [(algorithm, seed) for algorithm in cfg.algorithms for seed in cfg.seeds]
    results: list[RunResult] = []
    failures: list[RunFailure] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_execute_entry, (cfg, a, s)) for a, s in grid]
            for (algorithm, seed), future in zip(grid, futures):
                try:
                    results.append(future.result())
                except DivergenceError as exc:
                    failures.append(RunFailure(run_id_for(cfg, algorithm, seed),
                                               algorithm, seed, str(exc)))
        return results, failures
    for algorithm, seed in grid:
        try:
            results.append(execute_run(cfg, algorithm, seed))
        except DivergenceError as exc:
            failures.append(RunFailure(run_id_for(cfg, algorithm, seed),
                                       algorithm, seed, str(exc)))
    return results, failures


def summary_lines(results: list[RunResult]) -> list[str]:
    """Mean +/- std final test error per algorithm plus its rank aggregate."""
    from .reporting import rank_table_from_rows

    if not results:
        return ["no completed runs"]
    table = rank_table_from_rows(
        [(r.algorithm, r.setup, r.seed, r.final_test_error) for r in results])
    by_algo: dict[str, list[float]] = {}
    for r in results:
        by_algo.setdefault(r.algorithm, []).append(r.final_test_error)
    lines = [f"{'algorithm':<24} {'mean_err':>9} {'std':>8} {'friedman':>9} {'rank':>5}"]
    for a, algorithm in enumerate(table.algorithms):
        errs = np.array(by_algo[algorithm])
        lines.append(
            f"{algorithm:<24} {errs.mean():>9.4f} {errs.std():>8.4f} "
            f"{table.friedman[a]:>9.2f} {int(table.final_rank[a]):>5}")
    return lines
