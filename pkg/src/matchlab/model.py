"""Shared-backbone multihead classifier.

A small feed-forward backbone (affine + relu/tanh per hidden layer) feeds H
independent linear heads. Forward caches enough to run exact analytic
backprop; the backbone gradient is the sum of every head's contribution.
Training uses momentum SGD with decoupled weight decay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numkit import check_finite, softmax

CHECKPOINT_FORMAT = 1

ACTIVATIONS = ("relu", "tanh")


class StaleCacheError(RuntimeError):
    """backward() received a cache from before the last parameter update."""


class DivergenceError(RuntimeError):
    """Training produced non-finite losses, gradients or parameters."""


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (32,)
    num_classes: int = 4
    num_heads: int = 3
    activation: str = "relu"
    weight_init_scale: float = 1.0

    def __post_init__(self):
        if self.num_heads < 1:
            raise ValueError("need at least one head")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")

    @property
    def backbone_out_dim(self) -> int:
        return self.hidden_dims[-1] if self.hidden_dims else self.input_dim

    def to_json(self) -> str:
        return json.dumps(
            {
                "input_dim": self.input_dim,
                "hidden_dims": list(self.hidden_dims),
                "num_classes": self.num_classes,
                "num_heads": self.num_heads,
                "activation": self.activation,
                "weight_init_scale": self.weight_init_scale,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(**d)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    weight_decay: float = 0.0
    momentum: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class HeadPredictions:
    """Per-head logits for one batch, shape (H, n, C)."""

    logits: np.ndarray

    @property
    def num_heads(self) -> int:
        return self.logits.shape[0]

    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=-1)

    def labels(self) -> np.ndarray:
        return np.argmax(self.logits, axis=-1)

    def ensemble_logits(self) -> np.ndarray:
        return self.logits.mean(axis=0)


@dataclass
class ForwardCache:
    activations: list  # [input, hidden_1, ..., backbone_out]
    version: int


def _init_affine(rng: np.random.Generator, fan_in: int, fan_out: int, scale: float):
    s = scale / np.sqrt(fan_in)
    w = rng.uniform(-s, s, size=(fan_in, fan_out))
    b = np.zeros(fan_out)
    return w, b


class MultiheadModel:
    """Parameters live in ``self.params``: backbone affine pairs first, then
    one affine pair per head. The version counter invalidates stale caches."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        dims = [config.input_dim, *config.hidden_dims]
        self.backbone = [
            _init_affine(rng, dims[i], dims[i + 1], config.weight_init_scale)
            for i in range(len(config.hidden_dims))
        ]
        self.heads = [
            _init_affine(rng, config.backbone_out_dim, config.num_classes, config.weight_init_scale)
            for _ in range(config.num_heads)
        ]
        self.version = 0

    # -- parameter plumbing -------------------------------------------------

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in self.backbone:
            out.extend((w, b))
        for w, b in self.heads:
            out.extend((w, b))
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.param_arrays())

    def zero_grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.param_arrays()]

    # -- forward / backward --------------------------------------------------

    def _activate(self, z: np.ndarray) -> np.ndarray:
        if self.config.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _activation_grad(self, a: np.ndarray) -> np.ndarray:
        # derivative expressed through the cached post-activation value
        if self.config.activation == "relu":
            return (a > 0.0).astype(np.float64)
        return 1.0 - a * a

    def forward(self, features: np.ndarray, want_cache: bool = True):
        x = check_finite(features, "features")
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ValueError(
                f"features must be (n, {self.config.input_dim}), got {x.shape}"
            )
        acts = [x]
        a = x
        for w, b in self.backbone:
            a = self._activate(a @ w + b)
            acts.append(a)
        logits = np.stack([a @ w + b for w, b in self.heads])
        preds = HeadPredictions(logits=logits)
        cache = ForwardCache(activations=acts, version=self.version) if want_cache else None
        return preds, cache

    def backward(self, cache: ForwardCache, head_logit_grads: np.ndarray,
                 feature_grad: np.ndarray | None = None) -> list[np.ndarray]:
        """Exact gradients for every parameter, same layout as param_arrays().

        head_logit_grads has shape (H, n, C); feature_grad, when given, is an
        extra gradient on the backbone output (n, backbone_out_dim), used by
        auxiliary consumers of the shared features.
        """
        if cache.version != self.version:
            raise StaleCacheError("forward cache predates a parameter update")
        g = np.asarray(head_logit_grads, dtype=np.float64)
        h = self.config.num_heads
        if g.shape[0] != h:
            raise ValueError("head gradient count mismatch")
        a_last = cache.activations[-1]
        head_grads = []
        da = np.zeros_like(a_last)
        if feature_grad is not None:
            da = da + feature_grad
        for k, (w, b) in enumerate(self.heads):
            gk = g[k]
            head_grads.append((a_last.T @ gk, gk.sum(axis=0)))
            da += gk @ w.T
        backbone_grads: list[tuple[np.ndarray, np.ndarray]] = []
        for idx in range(len(self.backbone) - 1, -1, -1):
            w, b = self.backbone[idx]
            a_out = cache.activations[idx + 1]
            a_in = cache.activations[idx]
            dz = da * self._activation_grad(a_out)
            backbone_grads.append((a_in.T @ dz, dz.sum(axis=0)))
            da = dz @ w.T
        backbone_grads.reverse()
        flat = []
        for dw, db in backbone_grads:
            flat.extend((dw, db))
        for dw, db in head_grads:
            flat.extend((dw, db))
        return flat

    # -- inference helpers ----------------------------------------------------

    def ensemble_logits(self, features: np.ndarray) -> np.ndarray:
        preds, _ = self.forward(features, want_cache=False)
        return preds.ensemble_logits()

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.ensemble_logits(features), axis=-1)

    # -- checkpointing ----------------------------------------------------------

    def save(self, path) -> None:
        arrays = {f"p{i}": p for i, p in enumerate(self.param_arrays())}
        config_blob = np.frombuffer(self.config.to_json().encode(), dtype=np.uint8)
        np.savez(path, format=np.int64(CHECKPOINT_FORMAT), config=config_blob, **arrays)

    @classmethod
    def load(cls, path) -> "MultiheadModel":
        with np.load(path) as data:
            fmt = int(data["format"])
            if fmt != CHECKPOINT_FORMAT:
                raise ValueError(f"unsupported checkpoint format {fmt}")
            config = ModelConfig.from_json(bytes(data["config"]).decode())
            model = cls(config, np.random.default_rng(0))
            for i, p in enumerate(model.param_arrays()):
                p[...] = data[f"p{i}"]
        return model


def add_grads(a: list[np.ndarray], b: list[np.ndarray]) -> list[np.ndarray]:
    return [x + y for x, y in zip(a, b, strict=True)]


def scale_grads(grads: list[np.ndarray], factor: float) -> list[np.ndarray]:
    return [g * factor for g in grads]


class SgdOptimizer:
    """Momentum SGD with decoupled weight decay over a flat parameter list.

    v <- momentum * v + g;  p <- p - lr * v - lr * weight_decay * p
    """

    def __init__(self, config: OptimizerConfig, params: list[np.ndarray]):
        self.config = config
        self.params = params
        self.velocities = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], lr_scale: float = 1.0) -> None:
        lr = self.config.learning_rate * lr_scale
        m = self.config.momentum
        wd = self.config.weight_decay
        for p, v, g in zip(self.params, self.velocities, grads, strict=True):
            if not np.all(np.isfinite(g)):
                raise DivergenceError("non-finite gradient")
            v *= m
            v += g
            p -= lr * v + lr * wd * p
