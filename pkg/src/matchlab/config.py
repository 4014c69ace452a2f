"""Flat key=value experiment configuration.

One `key = value` pair per line, `#` starts a comment, unknown keys are
rejected with the offending line number. Every key has a documented default;
the algorithm-specific defaults (heads, difficult-sample weight, cutoff
percentile and floor, unsupervised weight, unlabeled ratio) are the published
ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .trainer import ALGORITHMS, ConfigError


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_float(text: str) -> float:
    return float(text)


def _parse_int(text: str) -> int:
    return int(text)


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_int_list(text: str) -> tuple[int, ...]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("expected at least one integer")
    return tuple(int(t) for t in items)


def _parse_str_list(text: str) -> tuple[str, ...]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("expected at least one item")
    return tuple(items)


def _parse_sigma(text: str) -> float | str:
    t = text.strip().lower()
    if t == "auto":
        return "auto"
    return float(t)


@dataclass
class ExperimentConfig:
    # data
    task: str = "gaussian"
    classes: int = 4
    input_dim: int = 12
    class_separation: float = 3.5
    split: str = "balanced"                  # balanced | longtail
    labels_per_class: int = 10
    unlabeled_per_class: int = 500
    val_size: int = 400
    test_size: int = 1000
    longtail_n1: int = 1000
    longtail_gamma: float = 100.0
    longtail_unlabeled_multiplier: int = 10
    # augmentation
    augment_weak: str = "identity"
    augment_weak_sigma: float = 0.0
    augment_strong: str = "both"
    augment_strong_sigma: float | str = "auto"
    augment_dropout_p: float = 0.1
    # model
    model_hidden_dims: tuple[int, ...] = (32,)
    model_activation: str = "relu"
    model_num_heads: int = 3
    model_init_scale: float = 2.0
    # optimizer
    opt_lr: float = 0.03
    opt_momentum: float = 0.9
    opt_weight_decay: float = 1e-4
    opt_lr_schedule: str = "constant"
    # training
    algorithms: tuple[str, ...] = ("multimatch",)
    seeds: tuple[int, ...] = (0,)
    epochs: int = 30
    batch_size: int = 32
    mu: int = 1
    w_u: float = 1.0
    fixmatch_tau: float = 0.95
    free_lambda_f: float = 0.999
    apm_lambda_m: float = 0.999
    apm_percentile: float = 5.0
    apm_gamma_min: float = 0.0
    plwm_w_d: float = 3.0
    abc_enabled: bool = False
    abc_loss_weight: float = 1.0
    # reporting
    setup: str = "default"
    output_dir: str = "matchlab-out"
    emit_charts: bool = True
    emit_gamma_trace: bool = False
    emit_decision_trace: bool = False
    checkpoint_every: int = 0


# config key -> (dataclass field, parser, help)
KEY_TABLE: dict[str, tuple[str, object, str]] = {
    "task": ("task", _parse_str, "dataset family; only 'gaussian' is implemented"),
    "classes": ("classes", _parse_int, "number of classes C"),
    "input_dim": ("input_dim", _parse_int, "feature dimensionality (>= classes)"),
    "class_separation": ("class_separation", _parse_float,
                         "pairwise distance between class means, in noise sigmas"),
    "split": ("split", _parse_str, "balanced | longtail"),
    "labels_per_class": ("labels_per_class", _parse_int, "labeled samples per class (balanced split)"),
    "unlabeled_per_class": ("unlabeled_per_class", _parse_int,
                            "unlabeled samples per class (balanced split)"),
    "val_size": ("val_size", _parse_int, "validation set size (balanced, divisible by C)"),
    "test_size": ("test_size", _parse_int, "test set size (balanced, divisible by C)"),
    "longtail.n1": ("longtail_n1", _parse_int, "largest labeled class size"),
    "longtail.gamma": ("longtail_gamma", _parse_float,
                       "imbalance factor; negative reverses the unlabeled tail"),
    "longtail.unlabeled_multiplier": ("longtail_unlabeled_multiplier", _parse_int,
                                      "unlabeled = multiplier * labeled per class"),
    "augment.weak": ("augment_weak", _parse_str, "identity | gaussian_noise"),
    "augment.weak_sigma": ("augment_weak_sigma", _parse_float, "weak noise scale"),
    "augment.strong": ("augment_strong", _parse_str, "gaussian_noise | feature_dropout | both"),
    "augment.strong_sigma": ("augment_strong_sigma", _parse_sigma,
                             "strong noise scale; auto = 0.5*separation/sqrt(dim)"),
    "augment.dropout_p": ("augment_dropout_p", _parse_float, "strong feature-dropout probability"),
    "model.hidden_dims": ("model_hidden_dims", _parse_int_list,
                          "comma-separated backbone hidden-layer widths"),
    "model.activation": ("model_activation", _parse_str, "relu | tanh"),
    "model.num_heads": ("model_num_heads", _parse_int, "classification heads H"),
    "model.init_scale": ("model_init_scale", _parse_float, "uniform init scale / sqrt(fan_in)"),
    "opt.lr": ("opt_lr", _parse_float, "learning rate"),
    "opt.momentum": ("opt_momentum", _parse_float, "SGD momentum in [0,1)"),
    "opt.weight_decay": ("opt_weight_decay", _parse_float, "decoupled weight decay"),
    "opt.lr_schedule": ("opt_lr_schedule", _parse_str, "constant | linear"),
    "algorithms": ("algorithms", _parse_str_list, "comma-separated algorithms to run"),
    "seeds": ("seeds", _parse_int_list, "comma-separated seeds"),
    "epochs": ("epochs", _parse_int, "training epochs (epoch = one pass over unlabeled)"),
    "batch_size": ("batch_size", _parse_int, "labeled batch size B"),
    "mu": ("mu", _parse_int, "unlabeled batch = mu * B"),
    "w_u": ("w_u", _parse_float, "unsupervised loss weight"),
    "fixmatch.tau": ("fixmatch_tau", _parse_float, "fixed confidence cutoff (fixmatch only)"),
    "free.lambda_f": ("free_lambda_f", _parse_float, "adaptive-threshold EMA decay"),
    "apm.lambda_m": ("apm_lambda_m", _parse_float, "margin EMA decay"),
    "apm.percentile": ("apm_percentile", _parse_float, "cutoff percentile f"),
    "apm.gamma_min": ("apm_gamma_min", _parse_float, "cutoff floor; -inf disables"),
    "plwm.w_d": ("plwm_w_d", _parse_float, "loss weight for useful-difficult samples"),
    "abc.enabled": ("abc_enabled", _parse_bool, "attach the auxiliary balanced classifier"),
    "abc.loss_weight": ("abc_loss_weight", _parse_float, "weight of the balanced loss term"),
    "setup": ("setup", _parse_str, "setup name used in reports and rank tables"),
    "output_dir": ("output_dir", _parse_str, "directory for report files"),
    "emit.charts": ("emit_charts", _parse_bool, "write SVG mask-rate/impurity charts"),
    "emit.gamma_trace": ("emit_gamma_trace", _parse_bool, "write per-epoch cutoff trace CSVs"),
    "emit.decision_trace": ("emit_decision_trace", _parse_bool,
                            "write per-step decision trace CSVs (debugging aid)"),
    "checkpoint.every": ("checkpoint_every", _parse_int,
                         "save a resumable checkpoint every N epochs (0 = off)"),
}


def _apply(cfg: ExperimentConfig, key: str, raw: str, where: str) -> None:
    if key not in KEY_TABLE:
        raise ConfigError(f"{where}: unknown key {key!r}")
    field_name, parser, _ = KEY_TABLE[key]
    try:
        value = parser(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: invalid value for {key!r}: {exc}") from exc
    setattr(cfg, field_name, value)


def parse_config_text(text: str, overrides: list[str] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line.strip()!r}")
        key, raw = stripped.split("=", 1)
        _apply(cfg, key.strip(), raw.strip(), f"line {lineno}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        _apply(cfg, key.strip(), raw.strip(), f"--set {key.strip()}")
    validate(cfg)
    return cfg


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), overrides)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.task != "gaussian":
        raise ConfigError(f"unknown task {cfg.task!r}")
    if cfg.split not in ("balanced", "longtail"):
        raise ConfigError(f"unknown split {cfg.split!r}")
    for algorithm in cfg.algorithms:
        if algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algorithm!r} (choose from {ALGORITHMS})")
    if cfg.classes < 2:
        raise ConfigError("classes must be >= 2")
    if cfg.input_dim < cfg.classes:
        raise ConfigError("input_dim must be >= classes for the mean construction")
    if cfg.val_size % cfg.classes or cfg.test_size % cfg.classes:
        raise ConfigError("val_size and test_size must be divisible by classes")
    if not cfg.model_hidden_dims or any(d < 1 for d in cfg.model_hidden_dims):
        raise ConfigError("model.hidden_dims needs positive widths")
    if cfg.model_activation not in ("relu", "tanh"):
        raise ConfigError(f"unknown activation {cfg.model_activation!r}")
    if cfg.augment_weak not in ("identity", "gaussian_noise"):
        raise ConfigError(f"unknown weak augmentation {cfg.augment_weak!r}")
    if cfg.augment_strong not in ("gaussian_noise", "feature_dropout", "both"):
        raise ConfigError(f"unknown strong augmentation {cfg.augment_strong!r}")
    if cfg.opt_lr_schedule not in ("constant", "linear"):
        raise ConfigError(f"unknown lr schedule {cfg.opt_lr_schedule!r}")
    if cfg.epochs < 1 or cfg.batch_size < 1 or cfg.mu < 1:
        raise ConfigError("epochs, batch_size, and mu must all be >= 1")
    if cfg.opt_lr <= 0:
        raise ConfigError("opt.lr must be positive")


def resolved_strong_sigma(cfg: ExperimentConfig) -> float:
    if cfg.augment_strong_sigma == "auto":
        return 0.5 * cfg.class_separation / math.sqrt(cfg.input_dim)
    return float(cfg.augment_strong_sigma)


def default_config_text() -> str:
    """Documented defaults, suitable as a starting config file."""
    lines = ["# matchlab experiment configuration (defaults)"]
    defaults = ExperimentConfig()
    for key, (field_name, _, help_text) in KEY_TABLE.items():
        value = getattr(defaults, field_name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}  # {help_text}")
    return "\n".join(lines) + "\n"
