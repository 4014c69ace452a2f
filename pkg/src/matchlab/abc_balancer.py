"""Auxiliary balanced classifier.

One extra affine layer on the shared backbone output, trained with Bernoulli
keep-masks whose per-class probability is inversely proportional to the
labeled class size (the rarest class always kept). The masked cross-entropy
is added on top of whatever base objective is running; at inference the
auxiliary layer replaces the ensemble when enabled.
"""

from __future__ import annotations

import numpy as np

from .model import _init_affine
from .numkit import PROB_FLOOR, check_finite


def abc_mask_prob(class_counts) -> np.ndarray:
    """beta_c = min(counts) / counts[c]; scale-invariant, rarest class 1."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.size == 0 or np.any(counts < 1):
        raise ValueError("class counts must all be >= 1")
    return counts.min() / counts


class AbcState:
    def __init__(self, feature_dim: int, num_classes: int, beta: np.ndarray,
                 rng: np.random.Generator, init_scale: float = 1.0,
                 loss_weight: float = 1.0):
        self.beta = np.asarray(beta, dtype=np.float64)
        if self.beta.shape != (num_classes,):
            raise ValueError("beta must have one entry per class")
        self.loss_weight = float(loss_weight)
        self.weight, self.bias = _init_affine(rng, feature_dim, num_classes, init_scale)

    def param_arrays(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weight + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(check_finite(features, "features")), axis=-1)

    def loss_and_grads(self, features: np.ndarray, targets: np.ndarray,
                       rng: np.random.Generator):
        """Masked cross-entropy averaged over kept samples.

        Every call draws one uniform per sample (mask draws consume the rng
        stream deterministically even when beta is degenerate). Returns
        (loss, [dW, db], dfeatures); all zeros when nothing is kept.
        """
        x = np.asarray(features, dtype=np.float64)
        t = np.asarray(targets, dtype=np.int64)
        draws = rng.random(t.shape[0])
        keep = draws < self.beta[t]
        dfeat = np.zeros_like(x)
        if not np.any(keep):
            return 0.0, [np.zeros_like(self.weight), np.zeros_like(self.bias)], dfeat
        xk = x[keep]
        tk = t[keep]
        z = xk @ self.weight + self.bias
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        m = xk.shape[0]
        rows = np.arange(m)
        loss = float(np.mean(-np.log(np.maximum(p[rows, tk], PROB_FLOOR))))
        dlogits = p.copy()
        dlogits[rows, tk] -= 1.0
        dlogits /= m
        dw = xk.T @ dlogits
        db = dlogits.sum(axis=0)
        dfeat[keep] = dlogits @ self.weight.T
        return loss, [dw, db], dfeat

    def state_dict(self) -> dict:
        return {"weight": self.weight.copy(), "bias": self.bias.copy(), "beta": self.beta.copy()}

    def load_state_dict(self, state: dict) -> None:
        self.weight[...] = state["weight"]
        self.bias[...] = state["bias"]
        self.beta[...] = state["beta"]
