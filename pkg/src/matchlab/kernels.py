"""Hot inner-loop kernels with two interchangeable backends.

The training loop spends its time in four places: per-class pseudo-margins,
the per-sample margin EMA scatter update, the three-way weighting decision,
and weighted softmax cross-entropy with its gradient. Each has a vectorised
pure-numpy implementation and a numba ``@njit`` twin compiled from the same
scalar loops.

Backend selection happens once at import from the ``MATCHLAB_BACKEND``
environment variable: ``numba`` (default when numba imports), ``numpy`` to
force the fallback, or ``auto``. ``benchmarks/bench_kernels.py`` compares the
two paths.
"""

from __future__ import annotations

import math
import os

import numpy as np

BACKEND_ENV = "MATCHLAB_BACKEND"

# Decision categories shared with the weighting module.
CAT_NOT_USEFUL = 0
CAT_USEFUL_EASY = 1
CAT_USEFUL_DIFFICULT = 2

_PROB_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# pure-numpy implementations

def _pseudo_margins_numpy(logits: np.ndarray) -> np.ndarray:
    """Per-row, per-class margin: logit of the class minus the largest other
    logit. Rows are samples, columns classes (C >= 2)."""
    z = np.ascontiguousarray(logits, dtype=np.float64)
    n, c = z.shape
    rows = np.arange(n)
    top = np.argmax(z, axis=1)
    m1 = z[rows, top]
    masked = z.copy()
    masked[rows, top] = -np.inf
    m2 = masked.max(axis=1)
    pm = z - m1[:, None]
    pm[rows, top] = m1 - m2
    return pm


def _apm_scatter_update_numpy(apm, counts, ids, pm, lam) -> None:
    """EMA update apm <- pm * w + apm * (1 - w) with w = lam / (1 + t), where
    t is each sample's own visit counter. ids must be unique within the call.
    In-place on apm (N, C) and counts (N,)."""
    t = counts[ids].astype(np.float64)
    w = lam / (1.0 + t)
    apm[ids] = pm * w[:, None] + apm[ids] * (1.0 - w[:, None])
    counts[ids] += 1


def _plwm_weights_numpy(label_i, label_j, multi_i, multi_j, free_any, w_d):
    """Three-way usefulness decision for one target head.

    Inputs are the two generating heads' hard labels, their margin-confidence
    indicators, and the combined current-confidence indicator. Returns
    (weights, pseudo_labels, categories); pseudo_label is -1 where weight 0.
    """
    agree = label_i == label_j
    easy = multi_i & multi_j & agree
    hard = multi_i ^ multi_j
    weights = (easy * 1.0 + hard * w_d) * free_any
    plabels = np.where(multi_i, label_i, label_j)
    plabels = np.where(easy, label_i, plabels)
    chosen = (easy | hard) & free_any
    plabels = np.where(chosen, plabels, -1).astype(np.int64)
    cats = np.zeros(label_i.shape[0], dtype=np.int64)
    cats[easy & free_any] = CAT_USEFUL_EASY
    cats[hard & free_any] = CAT_USEFUL_DIFFICULT
    return weights, plabels, cats


def _weighted_ce_grad_numpy(logits, targets, weights, denom):
    """Weighted mean softmax cross-entropy and its logit gradient.

    loss = sum_b weights[b] * CE(targets[b], softmax(logits[b])) / denom.
    Rows with weight 0 contribute nothing and may carry target -1.
    """
    z = np.asarray(logits, dtype=np.float64)
    n, c = z.shape
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    active = weights > 0.0
    rows = np.nonzero(active)[0]
    loss = 0.0
    grad = np.zeros_like(z)
    if rows.size:
        t = targets[rows]
        pt = np.maximum(p[rows, t], _PROB_FLOOR)
        loss = float(np.sum(weights[rows] * (-np.log(pt))) / denom)
        grad[rows] = p[rows] * (weights[rows] / denom)[:, None]
        grad[rows, t] -= weights[rows] / denom
    return loss, grad


# ---------------------------------------------------------------------------
# scalar-loop implementations (source for the numba twins)

def _pseudo_margins_loop(logits):
    n, c = logits.shape
    pm = np.empty((n, c), dtype=np.float64)
    for b in range(n):
        best = -np.inf
        second = -np.inf
        arg = 0
        for k in range(c):
            v = logits[b, k]
            if v > best:
                second = best
                best = v
                arg = k
            elif v > second:
                second = v
        for k in range(c):
            if k == arg:
                pm[b, k] = best - second
            else:
                pm[b, k] = logits[b, k] - best
    return pm


def _apm_scatter_update_loop(apm, counts, ids, pm, lam):
    n, c = pm.shape
    for b in range(n):
        s = ids[b]
        w = lam / (1.0 + counts[s])
        for k in range(c):
            apm[s, k] = pm[b, k] * w + apm[s, k] * (1.0 - w)
        counts[s] += 1


def _plwm_weights_loop(label_i, label_j, multi_i, multi_j, free_any, w_d):
    n = label_i.shape[0]
    weights = np.zeros(n, dtype=np.float64)
    plabels = np.full(n, -1, dtype=np.int64)
    cats = np.zeros(n, dtype=np.int64)
    for b in range(n):
        agree = label_i[b] == label_j[b]
        easy = multi_i[b] and multi_j[b] and agree
        hard = multi_i[b] != multi_j[b]
        if not free_any[b]:
            continue
        if easy:
            weights[b] = 1.0
            plabels[b] = label_i[b]
            cats[b] = CAT_USEFUL_EASY
        elif hard:
            weights[b] = w_d
            plabels[b] = label_i[b] if multi_i[b] else label_j[b]
            cats[b] = CAT_USEFUL_DIFFICULT
    return weights, plabels, cats


def _weighted_ce_grad_loop(logits, targets, weights, denom):
    n, c = logits.shape
    grad = np.zeros((n, c), dtype=np.float64)
    loss = 0.0
    for b in range(n):
        w = weights[b]
        if w <= 0.0:
            continue
        m = logits[b, 0]
        for k in range(1, c):
            if logits[b, k] > m:
                m = logits[b, k]
        s = 0.0
        for k in range(c):
            s += math.exp(logits[b, k] - m)
        t = targets[b]
        pt = math.exp(logits[b, t] - m) / s
        if pt < _PROB_FLOOR:
            pt = _PROB_FLOOR
        loss += w * (-math.log(pt))
        scale = w / denom
        for k in range(c):
            grad[b, k] = scale * (math.exp(logits[b, k] - m) / s)
        grad[b, t] -= scale
    return loss / denom, grad


# ---------------------------------------------------------------------------
# backend selection

def _resolve_backend() -> str:
    choice = os.environ.get(BACKEND_ENV, "").lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be auto, numba, or numpy; got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _resolve_backend()

if BACKEND == "numba":
    from numba import njit

    _pseudo_margins_numba = njit(cache=True)(_pseudo_margins_loop)
    _apm_scatter_update_numba = njit(cache=True)(_apm_scatter_update_loop)
    _plwm_weights_numba = njit(cache=True)(_plwm_weights_loop)
    _weighted_ce_grad_numba = njit(cache=True)(_weighted_ce_grad_loop)

    pseudo_margins = _pseudo_margins_numba
    apm_scatter_update = _apm_scatter_update_numba
    plwm_weights = _plwm_weights_numba
    weighted_ce_grad = _weighted_ce_grad_numba
else:
    pseudo_margins = _pseudo_margins_numpy
    apm_scatter_update = _apm_scatter_update_numpy
    plwm_weights = _plwm_weights_numpy
    weighted_ce_grad = _weighted_ce_grad_numpy


def implementations(name: str) -> dict:
    """Both backends of one kernel, for equivalence tests and benchmarks."""
    table = {
        "pseudo_margins": {"numpy": _pseudo_margins_numpy, "loop": _pseudo_margins_loop},
        "apm_scatter_update": {"numpy": _apm_scatter_update_numpy, "loop": _apm_scatter_update_loop},
        "plwm_weights": {"numpy": _plwm_weights_numpy, "loop": _plwm_weights_loop},
        "weighted_ce_grad": {"numpy": _weighted_ce_grad_numpy, "loop": _weighted_ce_grad_loop},
    }[name]
    if BACKEND == "numba":
        table["numba"] = globals()[f"_{name}_numba"]
    return table
