"""Synthetic classification tasks, weak/strong augmentations, and
balanced / long-tail / reversed-long-tail labeled-unlabeled splits.

Unlabeled samples keep their true labels (never shown to training) so the
pseudo-label impurity metrics can audit decisions, and carry dense stable
ids 0..N-1 that index the margin ledger.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

SPLIT_NAMES = ("labeled", "unlabeled", "val", "test")


@dataclass(frozen=True)
class Sample:
    id: int
    features: np.ndarray
    true_label: int


@dataclass
class Dataset:
    ids: np.ndarray        # (n,) int64, dense 0..n-1 within the split
    features: np.ndarray   # (n, d) float64
    labels: np.ndarray     # (n,) int64

    def __len__(self) -> int:
        return self.ids.shape[0]

    @classmethod
    def from_samples(cls, samples: list[Sample]) -> "Dataset":
        if not samples:
            return cls(np.zeros(0, np.int64), np.zeros((0, 0)), np.zeros(0, np.int64))
        return cls(
            ids=np.array([s.id for s in samples], dtype=np.int64),
            features=np.stack([s.features for s in samples]).astype(np.float64),
            labels=np.array([s.true_label for s in samples], dtype=np.int64),
        )

    def class_counts(self, num_classes: int) -> np.ndarray:
        return np.bincount(self.labels, minlength=num_classes)


@dataclass
class Splits:
    labeled: Dataset
    unlabeled: Dataset
    val: Dataset
    test: Dataset


@dataclass(frozen=True)
class SplitSpec:
    labeled_per_class: tuple[int, ...]
    unlabeled_per_class: tuple[int, ...]
    val_total: int
    test_total: int

    def __post_init__(self):
        if len(self.labeled_per_class) != len(self.unlabeled_per_class):
            raise ValueError("labeled/unlabeled class count length mismatch")
        if any(n < 0 for n in self.labeled_per_class + self.unlabeled_per_class):
            raise ValueError("split counts must be non-negative")
        if any(n < 1 for n in self.unlabeled_per_class):
            raise ValueError("SSL runs need at least one unlabeled sample per class")


@dataclass(frozen=True)
class LongTailSpec:
    """Exponentially decaying class counts; gamma is the ratio between the
    largest and the smallest class. A negative gamma keeps the labeled tail
    but reverses the unlabeled one."""

    num_classes: int
    n1: int
    gamma: float
    unlabeled_multiplier: int = 10

    def __post_init__(self):
        if abs(self.gamma) <= 1.0:
            raise ValueError("|gamma| must exceed 1")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.n1 < 1:
            raise ValueError("largest class size must be positive")
        if self.unlabeled_multiplier < 1:
            raise ValueError("unlabeled multiplier must be positive")


def long_tail_counts(spec: LongTailSpec) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Per-class labeled and unlabeled counts under the long-tail schedule
    n_c = n1 * |gamma| ** (-(c-1)/(C-1)), rounded half-up and clamped to >= 1.

    Unlabeled counts are the labeled counts times the multiplier; reversed in
    class order when gamma is negative.
    """
    c = spec.num_classes
    g = abs(spec.gamma)
    labeled = []
    clamped = 0
    for k in range(c):
        raw = spec.n1 * g ** (-k / (c - 1))
        n = int(math.floor(raw + 0.5))
        if n < 1:
            n = 1
            clamped += 1
        labeled.append(n)
    if clamped > c / 2:
        warnings.warn(
            f"long-tail schedule clamped {clamped} of {c} classes to 1 sample; "
            "the spec is degenerate", stacklevel=2)
    unlabeled = [spec.unlabeled_multiplier * n for n in labeled]
    if spec.gamma < 0:
        unlabeled = unlabeled[::-1]
    return tuple(labeled), tuple(unlabeled)


@dataclass(frozen=True)
class Augmentor:
    """Weak and strong perturbation specs. The strong side must perturb
    strictly more than the weak side."""

    weak: str = "identity"              # identity | gaussian_noise
    weak_sigma: float = 0.0
    strong: str = "both"                # gaussian_noise | feature_dropout | both
    strong_sigma: float = 0.5
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.weak not in ("identity", "gaussian_noise"):
            raise ValueError(f"unknown weak augmentation {self.weak!r}")
        if self.strong not in ("gaussian_noise", "feature_dropout", "both"):
            raise ValueError(f"unknown strong augmentation {self.strong!r}")
        weak_sigma = self.weak_sigma if self.weak == "gaussian_noise" else 0.0
        strong_sigma = self.strong_sigma if self.strong != "feature_dropout" else 0.0
        has_dropout = self.strong in ("feature_dropout", "both") and self.dropout_p > 0.0
        if not (strong_sigma > weak_sigma or (has_dropout and strong_sigma >= weak_sigma)):
            raise ValueError("strong augmentation must perturb strictly more than weak")


def augment(features: np.ndarray, augmentor: Augmentor, which: str,
            rng: np.random.Generator) -> np.ndarray:
    """Perturbed copy of ``features`` (single vector or batch). Noise and
    dropout draws always consume the generator in the same order: noise
    first, then dropout."""
    x = np.asarray(features, dtype=np.float64)
    if which == "weak":
        if augmentor.weak == "identity":
            return x.copy()
        return x + rng.normal(0.0, augmentor.weak_sigma, size=x.shape)
    if which != "strong":
        raise ValueError("which must be 'weak' or 'strong'")
    out = x
    if augmentor.strong in ("gaussian_noise", "both"):
        out = out + rng.normal(0.0, augmentor.strong_sigma, size=x.shape)
    if augmentor.strong in ("feature_dropout", "both"):
        keep = rng.random(size=x.shape) >= augmentor.dropout_p
        out = out * keep
    if out is x:
        out = x.copy()
    return out


@dataclass(frozen=True)
class GaussianTask:
    """Isotropic unit-variance Gaussian blobs with class means placed at
    pairwise distance exactly class_separation (scaled basis vectors)."""

    num_classes: int
    input_dim: int
    class_separation: float
    means: np.ndarray = field(compare=False)

    @classmethod
    def create(cls, num_classes: int, input_dim: int, class_separation: float) -> "GaussianTask":
        if num_classes < 2:
            raise ValueError("need at least two classes")
        if class_separation < 0:
            raise ValueError("class separation must be non-negative")
        if input_dim < num_classes:
            raise ValueError("mean construction needs input_dim >= num_classes")
        means = np.zeros((num_classes, input_dim))
        scale = class_separation / math.sqrt(2.0)
        for c in range(num_classes):
            means[c, c] = scale
        return cls(num_classes, input_dim, class_separation, means)

    def draw(self, label: int, rng: np.random.Generator) -> np.ndarray:
        return self.means[label] + rng.standard_normal(self.input_dim)


def make_gaussian_task(num_classes: int, input_dim: int, class_separation: float,
                       rng: np.random.Generator):
    """Infinite stream of Samples with labels balanced by construction
    (cycling 0..C-1). ids are provisional; make_split reassigns them."""
    task = GaussianTask.create(num_classes, input_dim, class_separation)
    i = 0
    while True:
        label = i % num_classes
        yield Sample(id=i, features=task.draw(label, rng), true_label=label)
        i += 1


def make_split(task: GaussianTask, spec: SplitSpec, rng: np.random.Generator) -> Splits:
    """Disjoint labeled/unlabeled/val/test sets with exact per-class counts.

    Consumes the task's balanced sample stream, bucketing each draw into the
    first unfilled quota for its class. Unlabeled ids are reassigned densely
    in draw order; validation and test stay balanced regardless of the
    labeled/unlabeled imbalance.
    """
    c = task.num_classes
    if spec.val_total % c or spec.test_total % c:
        raise ValueError("val/test sizes must be divisible by the class count for balance")
    if len(spec.labeled_per_class) != c:
        raise ValueError("split spec class count does not match the task")
    quotas = {
        "labeled": list(spec.labeled_per_class),
        "unlabeled": list(spec.unlabeled_per_class),
        "val": [spec.val_total // c] * c,
        "test": [spec.test_total // c] * c,
    }
    buckets: dict[str, list[Sample]] = {name: [] for name in SPLIT_NAMES}
    remaining = sum(sum(v) for v in quotas.values())
    stream = make_gaussian_task(task.num_classes, task.input_dim, task.class_separation, rng)
    for sample in stream:
        if remaining == 0:
            break
        label = sample.true_label
        for name in SPLIT_NAMES:
            if quotas[name][label] > 0:
                quotas[name][label] -= 1
                remaining -= 1
                buckets[name].append(sample)
                break
    datasets = {}
    for name in SPLIT_NAMES:
        ds = Dataset.from_samples(buckets[name])
        ds.ids = np.arange(len(ds), dtype=np.int64)
        datasets[name] = ds
    return Splits(**datasets)


def save_csv(splits: Splits, path) -> None:
    """Dump all four splits as `id,split,true_label,f0..f{d-1}`; floats use
    shortest round-trip formatting so a reload is exact."""
    dim = splits.labeled.features.shape[1] if len(splits.labeled) else splits.unlabeled.features.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "split", "true_label"] + [f"f{i}" for i in range(dim)])
        for name in SPLIT_NAMES:
            ds: Dataset = getattr(splits, name)
            for i in range(len(ds)):
                writer.writerow(
                    [int(ds.ids[i]), name, int(ds.labels[i])]
                    + [repr(float(v)) for v in ds.features[i]]
                )


def load_csv(path) -> Splits:
    rows: dict[str, list[tuple[int, int, list[float]]]] = {name: [] for name in SPLIT_NAMES}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 3
        for row in reader:
            rows[row[1]].append((int(row[0]), int(row[2]), [float(v) for v in row[3:]]))
    datasets = {}
    for name in SPLIT_NAMES:
        entries = rows[name]
        datasets[name] = Dataset(
            ids=np.array([e[0] for e in entries], dtype=np.int64),
            features=np.array([e[2] for e in entries], dtype=np.float64).reshape(len(entries), dim),
            labels=np.array([e[1] for e in entries], dtype=np.int64),
        )
    return Splits(**datasets)
