"""Pseudo-label quality metrics and cross-setup rank aggregation.

Mask rate is the fraction of pseudo-label decisions excluded from training in
an epoch (weight 0). Impurity is the fraction of *included* decisions whose
pseudo-label disagrees with the hidden true label; with nothing included it
is reported as 0 and flagged undefined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EpochMetrics:
    epoch: int
    loss_sup: float
    loss_unsup: float
    mask_rate: float
    impurity: float
    impurity_defined: bool
    category_counts: dict[str, int]
    val_error: float
    test_error: float
    # per-head, per-class margin cutoffs as of the epoch boundary
    gamma_thresholds: list[list[float]] | None = None

    def gamma_means(self) -> list[float] | None:
        if self.gamma_thresholds is None:
            return None
        return [float(np.mean(row)) for row in self.gamma_thresholds]


class DecisionAccumulator:
    """Streams per-head decision batches into epoch-level tallies."""

    def __init__(self):
        self.total = 0
        self.masked = 0
        self.included = 0
        self.impure = 0
        self._categories = {"not_useful": 0, "useful_easy": 0, "useful_difficult": 0}

    def add(self, weights: np.ndarray, pseudo_labels: np.ndarray,
            true_labels: np.ndarray, categories: np.ndarray | None = None) -> None:
        w = np.asarray(weights)
        passed = w > 0
        self.total += int(w.shape[0])
        self.masked += int(np.sum(~passed))
        self.included += int(np.sum(passed))
        self.impure += int(np.sum(passed & (np.asarray(pseudo_labels) != np.asarray(true_labels))))
        if categories is not None:
            c = np.asarray(categories)
            self._categories["not_useful"] += int(np.sum(c == 0))
            self._categories["useful_easy"] += int(np.sum(c == 1))
            self._categories["useful_difficult"] += int(np.sum(c == 2))

    @property
    def mask_rate(self) -> float:
        return self.masked / self.total if self.total else 0.0

    @property
    def impurity(self) -> float:
        return self.impure / self.included if self.included else 0.0

    @property
    def impurity_defined(self) -> bool:
        return self.included > 0

    def category_counts(self) -> dict[str, int]:
        return dict(self._categories)


def average_ranks(values) -> np.ndarray:
    """Ascending ranks 1..n with ties receiving the mean of their positions."""
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[0]
    order = np.argsort(v, kind="stable")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass
class RankTable:
    algorithms: list[str]
    setups: list[str]
    errors: np.ndarray            # (A, S)
    per_setup_ranks: np.ndarray   # (A, S)
    friedman: np.ndarray          # (A,) mean rank over setups
    mean_error: np.ndarray        # (A,)
    final_rank: np.ndarray        # (A,) int, competition ("min") ranking of friedman


class MissingCellError(ValueError):
    """The error table has an (algorithm, setup) hole."""


def friedman_ranks(errors_by_algorithm: dict[str, dict[str, float]]) -> RankTable:
    """Per-setup ascending-error ranks (average-rank ties) and their mean per
    algorithm. Every algorithm must cover every setup."""
    algorithms = sorted(errors_by_algorithm)
    setups = sorted({s for row in errors_by_algorithm.values() for s in row})
    table = np.empty((len(algorithms), len(setups)))
    for a, alg in enumerate(algorithms):
        for s, setup in enumerate(setups):
            if setup not in errors_by_algorithm[alg]:
                raise MissingCellError(f"no error for algorithm {alg!r} in setup {setup!r}")
            table[a, s] = errors_by_algorithm[alg][setup]
    per_setup = np.column_stack([average_ranks(table[:, s]) for s in range(len(setups))])
    friedman = per_setup.mean(axis=1)
    # competition ranking of the friedman means: ties share the lowest position
    final = np.empty(len(algorithms), dtype=np.int64)
    for a in range(len(algorithms)):
        final[a] = 1 + int(np.sum(friedman < friedman[a]))
    return RankTable(
        algorithms=algorithms,
        setups=setups,
        errors=table,
        per_setup_ranks=per_setup,
        friedman=friedman,
        mean_error=table.mean(axis=1),
        final_rank=final,
    )
