"""Pseudo-margin bookkeeping.

The margin of class c on a logit vector is the logit of c minus the largest
other logit: positive only for a strict argmax. Each (head, unlabeled sample,
class) cell keeps an average margin updated as an EMA whose mixing weight
lam / (1 + t) decays with the sample's own visit counter, so late visits are
favoured but never dominate.

Per-class confidence cutoffs (one per head) come from the margin values of
samples on which the *other* heads agreed: at each epoch boundary the cutoff
becomes the f-th nearest-rank percentile of the epoch's agreement reservoir,
floored at gamma_min (use -inf to disable the floor).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .numkit import EmptyCollectionError, percentile_lower


def pseudo_margin(logits, c: int) -> float:
    """Margin of class c: z_c - max_{i != c} z_i."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ValueError("need a logit vector with at least two classes")
    if not 0 <= c < z.shape[0]:
        raise ValueError(f"class {c} out of range")
    others = np.delete(z, c)
    return float(z[c] - others.max())


def pseudo_margins_all(logits: np.ndarray) -> np.ndarray:
    """Margins for every class of every row, shape (n, C)."""
    z = np.ascontiguousarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValueError("need (n, C) logits with C >= 2")
    return kernels.pseudo_margins(z)


class ApmLedger:
    """Average pseudo-margins per (head, sample, class) with per-sample visit
    counters. Samples start at margin 0 and counter 0."""

    def __init__(self, num_heads: int, num_samples: int, num_classes: int, decay: float):
        if decay < 0.0 or decay > 1.0:
            raise ValueError("margin EMA decay must lie in [0, 1]")
        self.num_heads = num_heads
        self.num_samples = num_samples
        self.num_classes = num_classes
        self.decay = float(decay)
        self.apm = np.zeros((num_heads, num_samples, num_classes))
        self.counts = np.zeros((num_heads, num_samples), dtype=np.int64)

    def update(self, head: int, sample_ids: np.ndarray, logits: np.ndarray) -> None:
        """Fold one batch of weak-view logits into the ledger. sample_ids must
        be unique within the call (batches partition each epoch)."""
        ids = np.ascontiguousarray(sample_ids, dtype=np.int64)
        pm = pseudo_margins_all(logits)
        if ids.shape[0] != pm.shape[0]:
            raise ValueError("sample id / logit row mismatch")
        kernels.apm_scatter_update(self.apm[head], self.counts[head], ids, pm, self.decay)

    def value(self, head: int, sample_id: int, c: int) -> float:
        return float(self.apm[head, sample_id, c])

    def select(self, head: int, sample_ids: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """apm[head, id_b, label_b] for a batch."""
        return self.apm[head, sample_ids, labels]

    def state_dict(self) -> dict:
        return {"apm": self.apm.copy(), "counts": self.counts.copy()}

    def load_state_dict(self, state: dict) -> None:
        self.apm[...] = state["apm"]
        self.counts[...] = state["counts"]


class GammaState:
    """Per-(head, class) margin cutoffs plus the per-epoch agreement
    reservoirs that feed their recomputation."""

    def __init__(self, num_heads: int, num_classes: int, percentile: float,
                 gamma_min: float):
        self.num_heads = num_heads
        self.num_classes = num_classes
        self.percentile = float(percentile)
        self.gamma_min = float(gamma_min)
        self.gamma = np.full((num_heads, num_classes), self.gamma_min)
        self.reservoirs: list[list[list[float]]] = [
            [[] for _ in range(num_classes)] for _ in range(num_heads)
        ]

    def record(self, head: int, c: int, apm_value: float) -> None:
        """One agreement contribution: a non-target head's margin for the
        agreed class. Duplicates are kept (multiset semantics)."""
        self.reservoirs[head][c].append(float(apm_value))

    def record_batch(self, head: int, classes: np.ndarray, apm_values: np.ndarray) -> None:
        for c, v in zip(classes.tolist(), apm_values.tolist()):
            self.reservoirs[head][c].append(v)

    def recompute(self) -> None:
        """Epoch-boundary refresh: each non-empty reservoir becomes the
        percentile cutoff (floored at gamma_min); empty reservoirs leave the
        old cutoff in place. All reservoirs are cleared."""
        for h in range(self.num_heads):
            for c in range(self.num_classes):
                values = self.reservoirs[h][c]
                if values:
                    try:
                        cut = percentile_lower(values, self.percentile)
                    except EmptyCollectionError:  # pragma: no cover - guarded above
                        continue
                    self.gamma[h, c] = max(self.gamma_min, cut)
                self.reservoirs[h][c] = []

    def state_dict(self) -> dict:
        return {
            "gamma": self.gamma.copy(),
            "reservoirs": [[list(r) for r in per_head] for per_head in self.reservoirs],
        }

    def load_state_dict(self, state: dict) -> None:
        self.gamma[...] = state["gamma"]
        self.reservoirs = [[list(r) for r in per_head] for per_head in state["reservoirs"]]


def apm_high_confidence(ledger: ApmLedger, gamma_state: GammaState, head: int,
                        sample_id: int, c: int) -> bool:
    """True iff the stored margin strictly exceeds the head's class cutoff."""
    return bool(ledger.apm[head, sample_id, c] > gamma_state.gamma[head, c])
