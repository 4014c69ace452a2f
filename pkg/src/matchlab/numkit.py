"""Shared deterministic numerics: stable softmax, floored cross-entropy,
tie-broken argmax, nearest-rank-lower percentiles, and seeded RNG streams.

Everything operates on float64 numpy arrays. Public entry points reject
non-finite input instead of letting NaN/Inf propagate into the training
bookkeeping.
"""

from __future__ import annotations

import math

import numpy as np

PROB_FLOOR = 1e-12


class EmptyCollectionError(ValueError):
    """An operation that needs at least one value received none."""


def check_finite(x, name: str = "input") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Probabilities from logits, max-subtracted so huge logits cannot overflow.

    Works on a single vector or batched along ``axis``.
    """
    z = check_finite(logits, "logits")
    if z.size == 0:
        raise ValueError("softmax of an empty vector")
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(target_class: int, probs) -> float:
    """-ln p[target], with p floored at PROB_FLOOR so a saturated softmax
    stays finite."""
    p = check_finite(probs, "probs")
    if p.ndim != 1:
        raise ValueError("probs must be a vector")
    if not 0 <= target_class < p.shape[0]:
        raise ValueError(f"target class {target_class} out of range for {p.shape[0]} classes")
    return float(-math.log(max(float(p[target_class]), PROB_FLOOR)))


def argmax_tiebreak(values) -> int:
    """Index of the maximum; ties resolve to the lowest index so runs are
    reproducible."""
    v = np.asarray(values)
    if v.size == 0:
        raise ValueError("argmax of an empty vector")
    return int(np.argmax(v))


def argmax_tiebreak_rows(values) -> np.ndarray:
    v = np.asarray(values)
    if v.size == 0:
        raise ValueError("argmax of an empty array")
    return np.argmax(v, axis=-1)


def percentile_lower(values, f: float) -> float:
    """Nearest-rank-lower percentile: sort ascending and return the element at
    index ceil(f/100 * n) - 1, clamped into range.

    Always returns a member of ``values``; an empty collection raises
    EmptyCollectionError so the caller can pick its own fallback.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyCollectionError("percentile of an empty collection")
    if not 0.0 < f < 100.0:
        raise ValueError(f"percentile fraction must lie in (0, 100), got {f}")
    srt = np.sort(v)
    idx = math.ceil(f * v.size / 100.0) - 1
    idx = min(max(idx, 0), v.size - 1)
    return float(srt[idx])


# Independent substreams of one experiment seed. Each consumer owns a channel
# so that e.g. an algorithm that never touches unlabeled data draws exactly
# the same labeled batches as one that does.
CH_DATA = 0
CH_MODEL = 1
CH_LABELED_ORDER = 2
CH_UNLABELED_ORDER = 3
CH_LABELED_AUG = 4
CH_UNLABELED_AUG = 5
CH_ABC = 6
CH_ABC_INIT = 7


def make_rng(seed: int, channel: int | None = None) -> np.random.Generator:
    """PCG64 generator; same (seed, channel) gives the same draw sequence on
    every platform."""
    if channel is None:
        entropy = int(seed)
    else:
        entropy = (int(seed), int(channel))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
