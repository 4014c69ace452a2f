"""Self-adaptive confidence thresholds.

One state per head: a global EMA of the batch-mean top confidence and a
per-class EMA of the batch-mean probability mass. Their product (after
normalising the local part by its max) gives the per-class cutoffs; a sample
passes only if its top confidence strictly exceeds the cutoff of its own
predicted class.
"""

from __future__ import annotations

import warnings

import numpy as np


class ThresholdState:
    def __init__(self, num_classes: int, decay: float):
        # decay 1 freezes the state at its initial value (useful for ablations)
        if not 0.0 <= decay <= 1.0:
            raise ValueError("EMA decay must lie in [0, 1]")
        if num_classes < 2:
            raise ValueError("need at least two classes")
        self.num_classes = num_classes
        self.decay = float(decay)
        self.tau = 1.0 / num_classes
        self.p_local = np.full(num_classes, 1.0 / num_classes)
        self.step = 0

    def update(self, weak_probs: np.ndarray) -> None:
        """One EMA step from a batch of weak-view probability rows."""
        q = np.asarray(weak_probs, dtype=np.float64)
        if q.size == 0:
            warnings.warn("threshold update skipped: empty batch", stacklevel=2)
            return
        lam = self.decay
        self.tau = lam * self.tau + (1.0 - lam) * float(q.max(axis=1).mean())
        self.p_local = lam * self.p_local + (1.0 - lam) * q.mean(axis=0)
        self.step += 1

    def class_thresholds(self) -> np.ndarray:
        """tau(c) = p_local(c) / max_c' p_local(c') * tau."""
        return self.p_local / self.p_local.max() * self.tau

    def passes_filter(self, probs_one_sample: np.ndarray) -> bool:
        q = np.asarray(probs_one_sample, dtype=np.float64)
        label = int(np.argmax(q))
        return bool(q[label] > self.class_thresholds()[label])

    def passes_filter_batch(self, probs: np.ndarray, labels: np.ndarray | None = None) -> np.ndarray:
        q = np.asarray(probs, dtype=np.float64)
        if labels is None:
            labels = np.argmax(q, axis=1)
        thr = self.class_thresholds()
        return q.max(axis=1) > thr[labels]

    # -- checkpoint plumbing ---------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "tau": self.tau,
            "p_local": self.p_local.copy(),
            "step": self.step,
        }

    def load_state_dict(self, state: dict) -> None:
        self.tau = float(state["tau"])
        self.p_local = np.asarray(state["p_local"], dtype=np.float64).copy()
        self.step = int(state["step"])
