"""Pseudo-label weighting: select a label for each target head from the other
two heads, sort the sample into not-useful / useful-easy / useful-difficult,
and emit the loss weight.

For target head h with generators i and j:
  * both generators margin-confident and agreeing -> weight 1, agreed label;
  * exactly one margin-confident -> weight w_d, the confident head's label;
  * both unconfident, or confident but disagreeing -> weight 0, no label;
  * everything is additionally gated by the current-confidence filter
    (either generator passing its own adaptive threshold).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import kernels
from .margins import ApmLedger, GammaState
from .numkit import softmax
from .thresholds import ThresholdState


class Category(IntEnum):
    NOT_USEFUL = kernels.CAT_NOT_USEFUL
    USEFUL_EASY = kernels.CAT_USEFUL_EASY
    USEFUL_DIFFICULT = kernels.CAT_USEFUL_DIFFICULT


@dataclass(frozen=True)
class PlwmConfig:
    w_d: float = 3.0
    num_heads: int = 3

    def __post_init__(self):
        if self.w_d <= 0:
            raise ValueError("w_d must be positive")
        if self.num_heads != 3:
            raise ValueError(
                "the agreement/xor taxonomy is defined for exactly two generating "
                "heads, so num_heads must be 3")


@dataclass(frozen=True)
class PlwmDecision:
    head: int
    sample_id: int
    pseudo_label: int | None
    category: Category
    weight: float
    agree: bool
    multi_i: bool
    multi_j: bool
    free_multi: bool


@dataclass
class DecisionArrays:
    """Vectorised decisions for one target head over a batch."""

    head: int
    sample_ids: np.ndarray
    weights: np.ndarray      # (n,) float, values in {0, 1, w_d}
    pseudo_labels: np.ndarray  # (n,) int64, -1 where weight 0
    categories: np.ndarray   # (n,) int64 Category codes
    agree: np.ndarray
    multi_i: np.ndarray
    multi_j: np.ndarray
    free_multi: np.ndarray

    def tallies(self) -> dict[str, int]:
        return {
            "not_useful": int(np.sum(self.categories == Category.NOT_USEFUL)),
            "useful_easy": int(np.sum(self.categories == Category.USEFUL_EASY)),
            "useful_difficult": int(np.sum(self.categories == Category.USEFUL_DIFFICULT)),
        }


def generator_heads(h: int, num_heads: int = 3) -> tuple[int, int]:
    i, j = (k for k in range(num_heads) if k != h)
    return i, j


def decide(h: int, sample_id: int, weak_logits: np.ndarray, ledger: ApmLedger,
           gamma_state: GammaState, threshold_states: list[ThresholdState],
           config: PlwmConfig) -> PlwmDecision:
    """Decision for a single sample; weak_logits has shape (H, C).

    Scalar reference implementation, mirrored exactly by decide_batch. Never
    reads head h's own prediction.
    """
    z = np.asarray(weak_logits, dtype=np.float64)
    if z.shape[0] != config.num_heads:
        raise ValueError("logit head count mismatch")
    i, j = generator_heads(h, config.num_heads)
    label_i = int(np.argmax(z[i]))
    label_j = int(np.argmax(z[j]))
    multi_i = bool(ledger.apm[i, sample_id, label_i] > gamma_state.gamma[i, label_i])
    multi_j = bool(ledger.apm[j, sample_id, label_j] > gamma_state.gamma[j, label_j])
    free_multi = bool(
        threshold_states[i].passes_filter(softmax(z[i]))
        or threshold_states[j].passes_filter(softmax(z[j]))
    )
    agree = label_i == label_j
    easy = multi_i and multi_j and agree
    hard = multi_i != multi_j
    weight = (1.0 * easy + config.w_d * hard) * free_multi
    if weight > 0.0 and easy:
        category, label = Category.USEFUL_EASY, label_i
    elif weight > 0.0:
        category, label = Category.USEFUL_DIFFICULT, (label_i if multi_i else label_j)
    else:
        category, label = Category.NOT_USEFUL, None
    return PlwmDecision(
        head=h, sample_id=sample_id, pseudo_label=label, category=category,
        weight=float(weight), agree=agree, multi_i=multi_i, multi_j=multi_j,
        free_multi=free_multi,
    )


def decide_arrays(h: int, sample_ids: np.ndarray, head_labels: np.ndarray,
                  head_probs: np.ndarray, ledger: ApmLedger, gamma_state: GammaState,
                  threshold_states: list[ThresholdState], config: PlwmConfig) -> DecisionArrays:
    """Batch decisions for target head h.

    head_labels is (H, n) argmax labels and head_probs (H, n, C) probabilities
    of the weak views; the ledger supplies pre-update margins.
    """
    i, j = generator_heads(h, config.num_heads)
    ids = np.ascontiguousarray(sample_ids, dtype=np.int64)
    label_i = np.ascontiguousarray(head_labels[i], dtype=np.int64)
    label_j = np.ascontiguousarray(head_labels[j], dtype=np.int64)
    multi_i = ledger.select(i, ids, label_i) > gamma_state.gamma[i, label_i]
    multi_j = ledger.select(j, ids, label_j) > gamma_state.gamma[j, label_j]
    free_i = threshold_states[i].passes_filter_batch(head_probs[i], label_i)
    free_j = threshold_states[j].passes_filter_batch(head_probs[j], label_j)
    free_any = free_i | free_j
    weights, plabels, cats = kernels.plwm_weights(
        label_i, label_j,
        np.ascontiguousarray(multi_i), np.ascontiguousarray(multi_j),
        np.ascontiguousarray(free_any), config.w_d)
    return DecisionArrays(
        head=h, sample_ids=ids, weights=weights, pseudo_labels=plabels,
        categories=cats, agree=label_i == label_j, multi_i=multi_i,
        multi_j=multi_j, free_multi=free_any,
    )


def decide_batch(h: int, sample_ids: np.ndarray, weak_logits: np.ndarray,
                 ledger: ApmLedger, gamma_state: GammaState,
                 threshold_states: list[ThresholdState],
                 config: PlwmConfig) -> tuple[list[PlwmDecision], dict[str, int]]:
    """Element-wise decisions for a batch of (H, n, C) weak logits, plus
    per-category tallies."""
    z = np.asarray(weak_logits, dtype=np.float64)
    labels = np.argmax(z, axis=-1)
    probs = softmax(z, axis=-1)
    arrays = decide_arrays(h, sample_ids, labels, probs, ledger, gamma_state,
                           threshold_states, config)
    decisions = []
    for b in range(z.shape[1]):
        label = int(arrays.pseudo_labels[b])
        decisions.append(PlwmDecision(
            head=h,
            sample_id=int(arrays.sample_ids[b]),
            pseudo_label=None if label < 0 else label,
            category=Category(int(arrays.categories[b])),
            weight=float(arrays.weights[b]),
            agree=bool(arrays.agree[b]),
            multi_i=bool(arrays.multi_i[b]),
            multi_j=bool(arrays.multi_j[b]),
            free_multi=bool(arrays.free_multi[b]),
        ))
    return decisions, arrays.tallies()
