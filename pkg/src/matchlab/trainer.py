"""End-to-end training loop.

Every algorithm is a configuration of the same machinery: per-head supervised
cross-entropy on weak views of the labeled batch, per-head weighted
cross-entropy on strong views of the unlabeled batch against pseudo-labels
selected from weak views, one optimizer step on the summed gradients, then
the bookkeeping updates (margin ledger, adaptive thresholds, agreement
reservoirs). Decisions always read the state as it was *before* the current
step's updates; margin cutoffs refresh at epoch boundaries.

One run is strictly sequential and fully determined by its seed: every
consumer draws from its own channel of the seed, so e.g. a run that ignores
unlabeled data still sees the same labeled batches as one that uses them.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels, numkit, plwm
from .abc_balancer import AbcState, abc_mask_prob
from .data import Augmentor, Dataset, Splits, augment
from .margins import ApmLedger, GammaState
from .metrics import DecisionAccumulator, EpochMetrics
from .model import (DivergenceError, ModelConfig, MultiheadModel,
                    OptimizerConfig, SgdOptimizer, add_grads)
from .numkit import percentile_lower, softmax
from .thresholds import ThresholdState

ALGORITHMS = (
    "supervised_only",
    "fixmatch",
    "freematch",
    "multihead_cotrain",
    "marginmatch_simplified",
    "multimatch",
)

SINGLE_HEAD_ALGOS = ("fixmatch", "freematch", "marginmatch_simplified")
TRIPLE_HEAD_ALGOS = ("multihead_cotrain", "multimatch")

CHECKPOINT_FORMAT = 1


class ConfigError(ValueError):
    """Invalid experiment or training configuration."""


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str
    epochs: int = 30
    batch_size: int = 16           # labeled batch size B
    mu: int = 1                    # unlabeled batch = mu * B
    w_u: float = 1.0
    seed: int = 0
    fixed_tau: float = 0.95        # fixmatch confidence cutoff
    lambda_f: float = 0.999        # adaptive-threshold EMA decay
    lambda_m: float = 0.999        # margin EMA decay
    w_d: float = 3.0               # useful-difficult weight
    apm_percentile: float = 5.0    # margin cutoff percentile f
    gamma_min: float = 0.0         # cutoff floor; -inf disables it
    abc_enabled: bool = False
    abc_loss_weight: float = 1.0
    lr_schedule: str = "constant"  # constant | linear

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.mu * self.batch_size < 1:
            raise ConfigError("mu * batch_size must be at least 1")
        if self.w_u < 0:
            raise ConfigError("w_u must be non-negative")
        if self.epochs < 1:
            raise ConfigError("need at least one epoch")
        if self.lr_schedule not in ("constant", "linear"):
            raise ConfigError("lr_schedule must be constant or linear")
        if not 0.0 < self.apm_percentile < 100.0:
            raise ConfigError("apm_percentile must lie in (0, 100)")


def effective_num_heads(algorithm: str, configured: int) -> int:
    if algorithm in SINGLE_HEAD_ALGOS:
        return 1
    if algorithm in TRIPLE_HEAD_ALGOS:
        if configured != 3:
            raise ConfigError(f"{algorithm} requires exactly 3 heads, got {configured}")
        return 3
    return configured


@dataclass
class StepReport:
    step: int
    sup_losses: np.ndarray         # (H,)
    unsup_losses: np.ndarray       # (H,)
    abc_loss: float
    total: float
    category_counts: dict[str, int]          # summed over heads
    per_head_tallies: list[dict[str, int]]   # one dict per deciding head
    num_decisions: int


@dataclass
class _LossBundle:
    sup_losses: np.ndarray
    unsup_losses: np.ndarray
    abc_loss: float
    total: float
    model_grads: list[np.ndarray]
    abc_param_grads: list[np.ndarray] | None
    decisions: list
    weak_logits: np.ndarray | None
    weak_probs: np.ndarray | None
    weak_labels: np.ndarray | None


@dataclass
class RunResult:
    run_id: str
    algorithm: str
    setup: str
    seed: int
    epoch_metrics: list[EpochMetrics]
    step_reports: list[StepReport] = field(default_factory=list)

    @property
    def final_test_error(self) -> float:
        return self.epoch_metrics[-1].test_error

    @property
    def final_val_error(self) -> float:
        return self.epoch_metrics[-1].val_error


class _CyclingBatcher:
    """Endless batches of exactly ``batch_size`` indices, reshuffling each
    time the permutation is exhausted."""

    def __init__(self, size: int, batch_size: int, rng: np.random.Generator):
        if size < 1:
            raise ValueError("cannot batch an empty set")
        self.size = size
        self.batch_size = batch_size
        self.rng = rng
        self.perm = rng.permutation(size)
        self.pos = 0

    def next(self) -> np.ndarray:
        out = []
        need = self.batch_size
        while need > 0:
            take = min(need, self.size - self.pos)
            out.append(self.perm[self.pos:self.pos + take])
            self.pos += take
            need -= take
            if self.pos == self.size:
                self.perm = self.rng.permutation(self.size)
                self.pos = 0
        return np.concatenate(out)

    def state_dict(self) -> dict:
        return {"perm": self.perm.copy(), "pos": self.pos}

    def load_state_dict(self, state: dict) -> None:
        self.perm = np.asarray(state["perm"], dtype=np.int64).copy()
        self.pos = int(state["pos"])


class Trainer:
    def __init__(self, model_config: ModelConfig, opt_config: OptimizerConfig,
                 train_config: TrainConfig, splits: Splits, augmentor: Augmentor):
        tc = train_config
        heads = effective_num_heads(tc.algorithm, model_config.num_heads)
        if heads != model_config.num_heads:
            model_config = dataclasses.replace(model_config, num_heads=heads)
        self.model_config = model_config
        self.opt_config = opt_config
        self.config = tc
        self.splits = splits
        self.augmentor = augmentor

        seed = tc.seed
        self.rng_labeled_order = numkit.make_rng(seed, numkit.CH_LABELED_ORDER)
        self.rng_unlabeled_order = numkit.make_rng(seed, numkit.CH_UNLABELED_ORDER)
        self.rng_labeled_aug = numkit.make_rng(seed, numkit.CH_LABELED_AUG)
        self.rng_unlabeled_aug = numkit.make_rng(seed, numkit.CH_UNLABELED_AUG)
        self.rng_abc = numkit.make_rng(seed, numkit.CH_ABC)

        self.model = MultiheadModel(model_config, numkit.make_rng(seed, numkit.CH_MODEL))
        self.optimizer = SgdOptimizer(opt_config, self.model.param_arrays())

        algo = tc.algorithm
        n_unlabeled = len(splits.unlabeled)
        c = model_config.num_classes
        self.uses_unlabeled = algo != "supervised_only"
        self.thresholds: list[ThresholdState] | None = None
        self.ledger: ApmLedger | None = None
        self.gamma: GammaState | None = None
        self.plwm_config: plwm.PlwmConfig | None = None
        self.mm_gamma = -np.inf           # marginmatch_simplified global cutoff
        self.mm_reservoir: list[float] = []
        if algo in ("freematch", "multimatch"):
            self.thresholds = [ThresholdState(c, tc.lambda_f) for _ in range(heads)]
        if algo in ("marginmatch_simplified", "multimatch"):
            self.ledger = ApmLedger(heads, n_unlabeled, c, tc.lambda_m)
        if algo == "multimatch":
            self.gamma = GammaState(heads, c, tc.apm_percentile, tc.gamma_min)
            self.plwm_config = plwm.PlwmConfig(w_d=tc.w_d, num_heads=heads)

        self.abc: AbcState | None = None
        if tc.abc_enabled:
            counts = splits.labeled.class_counts(c)
            beta = abc_mask_prob(counts)
            self.abc = AbcState(model_config.backbone_out_dim, c, beta,
                                numkit.make_rng(seed, numkit.CH_ABC_INIT),
                                init_scale=model_config.weight_init_scale,
                                loss_weight=tc.abc_loss_weight)
            self.abc_optimizer = SgdOptimizer(opt_config, self.abc.param_arrays())

        self.labeled_batcher = _CyclingBatcher(len(splits.labeled), tc.batch_size,
                                               self.rng_labeled_order)
        self.steps_per_epoch = max(1, -(-n_unlabeled // (tc.mu * tc.batch_size)))
        self.total_steps = self.steps_per_epoch * tc.epochs
        self.epoch = 0
        self.global_step = 0
        # optional debugging sink: rows of
        # (step, head, sample_id, category, weight, pseudo_label, true_label)
        self.decision_trace: list[tuple] | None = None

    # -- loss pieces -----------------------------------------------------------

    def _supervised(self, feats: np.ndarray, labels: np.ndarray):
        xw = augment(feats, self.augmentor, "weak", self.rng_labeled_aug)
        preds, cache = self.model.forward(xw)
        b = feats.shape[0]
        ones = np.ones(b)
        losses = np.empty(self.model_config.num_heads)
        dlogits = np.empty_like(preds.logits)
        for h in range(self.model_config.num_heads):
            losses[h], dlogits[h] = kernels.weighted_ce_grad(
                preds.logits[h], labels, ones, float(b))
        return losses, dlogits, cache

    def _decide(self, ids: np.ndarray, labels: np.ndarray, probs: np.ndarray,
                maxconf: np.ndarray) -> list[plwm.DecisionArrays]:
        """Per-head decision arrays from weak-view statistics; reads only
        pre-update ledger/threshold/cutoff state."""
        algo = self.config.algorithm
        if algo == "fixmatch":
            w = (maxconf[0] > self.config.fixed_tau).astype(np.float64)
            return [self._plain_arrays(0, ids, labels[0], w)]
        if algo == "freematch":
            w = self.thresholds[0].passes_filter_batch(probs[0], labels[0]).astype(np.float64)
            return [self._plain_arrays(0, ids, labels[0], w)]
        if algo == "marginmatch_simplified":
            w = (self.ledger.select(0, ids, labels[0]) > self.mm_gamma).astype(np.float64)
            return [self._plain_arrays(0, ids, labels[0], w)]
        if algo == "multihead_cotrain":
            out = []
            for h in range(3):
                i, j = plwm.generator_heads(h)
                agree = labels[i] == labels[j]
                w = agree.astype(np.float64)
                out.append(self._plain_arrays(h, ids, labels[i], w))
            return out
        if algo == "multimatch":
            return [
                plwm.decide_arrays(h, ids, labels, probs, self.ledger, self.gamma,
                                   self.thresholds, self.plwm_config)
                for h in range(3)
            ]
        raise ConfigError(f"algorithm {algo!r} does not produce decisions")

    @staticmethod
    def _plain_arrays(head: int, ids: np.ndarray, labels: np.ndarray,
                      weights: np.ndarray) -> plwm.DecisionArrays:
        passed = weights > 0
        plabels = np.where(passed, labels, -1).astype(np.int64)
        cats = np.where(passed, int(plwm.Category.USEFUL_EASY),
                        int(plwm.Category.NOT_USEFUL)).astype(np.int64)
        return plwm.DecisionArrays(
            head=head, sample_ids=ids, weights=weights, pseudo_labels=plabels,
            categories=cats, agree=passed, multi_i=passed, multi_j=passed,
            free_multi=passed,
        )

    # -- one optimisation step ---------------------------------------------------

    def _forward_losses(self, labeled_idx: np.ndarray, unlabeled_idx: np.ndarray) -> _LossBundle:
        """Losses, decisions, and gradients for one step. Consumes only the
        augmentation and mask rng channels; touches no other trainer state, so
        it is safe to call repeatedly for gradient verification."""
        tc = self.config
        heads = self.model_config.num_heads
        lab = self.splits.labeled
        sup_losses, sup_dlogits, cache_l = self._supervised(
            lab.features[labeled_idx], lab.labels[labeled_idx])

        unsup_losses = np.zeros(heads)
        decisions: list[plwm.DecisionArrays] = []
        cache_s = None
        unsup_dlogits = None
        weak_logits = None
        weak_probs = None
        weak_labels = None
        if self.uses_unlabeled:
            unl = self.splits.unlabeled
            ids = unl.ids[unlabeled_idx]
            feats = unl.features[unlabeled_idx]
            uw = augment(feats, self.augmentor, "weak", self.rng_unlabeled_aug)
            us = augment(feats, self.augmentor, "strong", self.rng_unlabeled_aug)
            preds_w, _ = self.model.forward(uw, want_cache=False)
            preds_s, cache_s = self.model.forward(us)
            weak_logits = preds_w.logits
            if not np.all(np.isfinite(weak_logits)) or not np.all(np.isfinite(preds_s.logits)):
                raise DivergenceError(f"non-finite logits at step {self.global_step}")
            weak_probs = softmax(weak_logits, axis=-1)
            weak_labels = np.argmax(weak_logits, axis=-1)
            maxconf = weak_probs.max(axis=-1)
            decisions = self._decide(ids, weak_labels, weak_probs, maxconf)
            denom = float(tc.mu * tc.batch_size)
            unsup_dlogits = np.zeros_like(preds_s.logits)
            for d in decisions:
                unsup_losses[d.head], unsup_dlogits[d.head] = kernels.weighted_ce_grad(
                    preds_s.logits[d.head], d.pseudo_labels, d.weights, denom)

        abc_loss = 0.0
        abc_param_grads = None
        abc_dfeat_l = None
        abc_dfeat_s = None
        if self.abc is not None:
            abc_loss, abc_param_grads, abc_dfeat_l, abc_dfeat_s = self._abc_losses(
                cache_l, cache_s, lab.labels[labeled_idx], decisions)

        total = float(np.sum(sup_losses) + tc.w_u * np.sum(unsup_losses)
                      + (self.abc.loss_weight * abc_loss if self.abc is not None else 0.0))

        grads = self.model.backward(cache_l, sup_dlogits, feature_grad=abc_dfeat_l)
        if cache_s is not None:
            grads = add_grads(grads, self.model.backward(
                cache_s, unsup_dlogits * tc.w_u, feature_grad=abc_dfeat_s))
        return _LossBundle(
            sup_losses=sup_losses, unsup_losses=unsup_losses, abc_loss=abc_loss,
            total=total, model_grads=grads, abc_param_grads=abc_param_grads,
            decisions=decisions, weak_logits=weak_logits, weak_probs=weak_probs,
            weak_labels=weak_labels)

    def train_step(self, labeled_idx: np.ndarray, unlabeled_idx: np.ndarray,
                   accumulator: DecisionAccumulator | None = None) -> StepReport:
        tc = self.config
        heads = self.model_config.num_heads
        bundle = self._forward_losses(labeled_idx, unlabeled_idx)
        if not np.isfinite(bundle.total):
            raise DivergenceError(
                f"non-finite loss at step {self.global_step} "
                f"(sup={bundle.sup_losses}, unsup={bundle.unsup_losses})")

        lr_scale = 1.0
        if tc.lr_schedule == "linear":
            lr_scale = 1.0 - self.global_step / max(1, self.total_steps)
        self.optimizer.step(bundle.model_grads, lr_scale)
        if self.abc is not None and bundle.abc_param_grads is not None:
            self.abc_optimizer.step(
                [g * self.abc.loss_weight for g in bundle.abc_param_grads], lr_scale)
        self.model.version += 1

        decisions = bundle.decisions
        weak_logits = bundle.weak_logits
        if self.uses_unlabeled:
            true_labels = self.splits.unlabeled.labels[unlabeled_idx]
            if accumulator is not None:
                for d in decisions:
                    accumulator.add(d.weights, d.pseudo_labels, true_labels, d.categories)
            if self.decision_trace is not None:
                for d in decisions:
                    for b in range(d.weights.shape[0]):
                        self.decision_trace.append((
                            self.global_step, d.head, int(d.sample_ids[b]),
                            plwm.Category(int(d.categories[b])).name.lower(),
                            float(d.weights[b]),
                            int(d.pseudo_labels[b]), int(true_labels[b])))

        # bookkeeping updates come after the parameter step: decisions at step
        # t+1 read margins and thresholds from steps <= t
        if self.uses_unlabeled and weak_logits is not None:
            ids = self.splits.unlabeled.ids[unlabeled_idx]
            if self.ledger is not None:
                for h in range(heads):
                    self.ledger.update(h, ids, weak_logits[h])
            if self.thresholds is not None:
                for h in range(heads):
                    self.thresholds[h].update(bundle.weak_probs[h])
            if tc.algorithm == "multimatch":
                self._record_agreement(ids, bundle.weak_labels)
            elif tc.algorithm == "marginmatch_simplified":
                sel = self.ledger.select(0, ids, bundle.weak_labels[0])
                self.mm_reservoir.extend(sel.tolist())

        counts = {"not_useful": 0, "useful_easy": 0, "useful_difficult": 0}
        per_head = []
        n_dec = 0
        for d in decisions:
            tallies = d.tallies()
            per_head.append(tallies)
            for k, v in tallies.items():
                counts[k] += v
            n_dec += d.weights.shape[0]
        report = StepReport(
            step=self.global_step, sup_losses=bundle.sup_losses,
            unsup_losses=bundle.unsup_losses, abc_loss=bundle.abc_loss,
            total=bundle.total, category_counts=counts, per_head_tallies=per_head,
            num_decisions=n_dec)
        self.global_step += 1
        return report

    def _abc_losses(self, cache_l, cache_s, true_labels, decisions):
        """Balanced-classifier loss over labeled features (true labels) plus
        the reference head's accepted pseudo-labels on strong-view features.
        Feature gradients are pre-scaled by the loss weight; parameter
        gradients are returned unscaled."""
        feats_l = cache_l.activations[-1]
        targets = [true_labels]
        feats = [feats_l]
        kept_rows = None
        if decisions:
            ref = decisions[0]
            kept_rows = np.nonzero(ref.weights > 0)[0]
            if kept_rows.size:
                feats.append(cache_s.activations[-1][kept_rows])
                targets.append(ref.pseudo_labels[kept_rows])
        all_feats = np.concatenate(feats, axis=0)
        all_targets = np.concatenate(targets, axis=0)
        loss, param_grads, dfeat = self.abc.loss_and_grads(all_feats, all_targets, self.rng_abc)
        w = self.abc.loss_weight
        n_l = feats_l.shape[0]
        dfeat_l = dfeat[:n_l] * w
        dfeat_s = None
        if kept_rows is not None and kept_rows.size:
            dfeat_s = np.zeros_like(cache_s.activations[-1])
            dfeat_s[kept_rows] = dfeat[n_l:] * w
        return loss, param_grads, dfeat_l, dfeat_s

    def _record_agreement(self, ids: np.ndarray, labels_w: np.ndarray) -> None:
        """Post-update margins of agreeing generator heads feed the target
        head's cutoff reservoir: two contributions per agreement sample."""
        for h in range(3):
            i, j = plwm.generator_heads(h)
            agree = labels_w[i] == labels_w[j]
            if not np.any(agree):
                continue
            ids_a = ids[agree]
            c_a = labels_w[i][agree]
            self.gamma.record_batch(h, c_a, self.ledger.apm[i, ids_a, c_a])
            self.gamma.record_batch(h, c_a, self.ledger.apm[j, ids_a, c_a])

    # -- epoch driver ---------------------------------------------------------

    def train_epoch(self, collect_steps: bool = False):
        tc = self.config
        n_unl = len(self.splits.unlabeled)
        order = self.rng_unlabeled_order.permutation(n_unl)
        chunk = tc.mu * tc.batch_size
        accumulator = DecisionAccumulator()
        reports = []
        for s in range(self.steps_per_epoch):
            unl_idx = order[s * chunk:(s + 1) * chunk]
            lab_idx = self.labeled_batcher.next()
            report = self.train_step(lab_idx, unl_idx, accumulator)
            if collect_steps:
                reports.append(report)
            else:
                reports.append((report.sup_losses.sum(), report.unsup_losses.sum()))
        if self.gamma is not None:
            self.gamma.recompute()
        if tc.algorithm == "marginmatch_simplified" and self.mm_reservoir:
            self.mm_gamma = percentile_lower(self.mm_reservoir, tc.apm_percentile)
            self.mm_reservoir = []
        self.epoch += 1
        return reports, accumulator

    def evaluate(self, dataset: Dataset) -> float:
        """Error rate via mean-of-head logits, or the balanced auxiliary
        classifier when it is enabled."""
        if len(dataset) == 0:
            raise ValueError("cannot evaluate on an empty dataset")
        preds, cache = self.model.forward(dataset.features)
        if self.abc is not None:
            labels = self.abc.predict(cache.activations[-1])
        else:
            labels = np.argmax(preds.ensemble_logits(), axis=-1)
        return float(np.mean(labels != dataset.labels))

    def run(self, run_id: str = "run", setup: str = "default",
            collect_steps: bool = False, until_epoch: int | None = None) -> RunResult:
        stop = self.config.epochs if until_epoch is None else min(until_epoch, self.config.epochs)
        metrics = []
        all_reports = []
        for _ in range(self.epoch, stop):
            reports, acc = self.train_epoch(collect_steps)
            if collect_steps:
                all_reports.extend(reports)
                loss_sup = float(np.mean([r.sup_losses.sum() for r in reports]))
                loss_unsup = float(np.mean([r.unsup_losses.sum() for r in reports]))
            else:
                loss_sup = float(np.mean([r[0] for r in reports]))
                loss_unsup = float(np.mean([r[1] for r in reports]))
            gamma_thresholds = None
            if self.gamma is not None:
                gamma_thresholds = [[float(g) for g in row] for row in self.gamma.gamma]
            metrics.append(EpochMetrics(
                epoch=self.epoch - 1,
                loss_sup=loss_sup,
                loss_unsup=loss_unsup,
                mask_rate=acc.mask_rate,
                impurity=acc.impurity,
                impurity_defined=acc.impurity_defined,
                category_counts=acc.category_counts(),
                val_error=self.evaluate(self.splits.val),
                test_error=self.evaluate(self.splits.test),
                gamma_thresholds=gamma_thresholds,
            ))
        return RunResult(run_id=run_id, algorithm=self.config.algorithm,
                         setup=setup, seed=self.config.seed, epoch_metrics=metrics,
                         step_reports=all_reports)

    # -- checkpointing -----------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        state = {
            "format": CHECKPOINT_FORMAT,
            "epoch": self.epoch,
            "global_step": self.global_step,
            "model_config": self.model_config.to_json(),
            "mm_gamma": self.mm_gamma,
            "mm_reservoir": list(self.mm_reservoir),
            "rng": {
                "labeled_order": self.rng_labeled_order.bit_generator.state,
                "unlabeled_order": self.rng_unlabeled_order.bit_generator.state,
                "labeled_aug": self.rng_labeled_aug.bit_generator.state,
                "unlabeled_aug": self.rng_unlabeled_aug.bit_generator.state,
                "abc": self.rng_abc.bit_generator.state,
            },
            "batcher": {"pos": self.labeled_batcher.pos},
        }
        arrays = {f"param{i}": p for i, p in enumerate(self.model.param_arrays())}
        arrays.update({f"vel{i}": v for i, v in enumerate(self.optimizer.velocities)})
        arrays["batcher_perm"] = self.labeled_batcher.perm
        if self.thresholds is not None:
            for h, st in enumerate(self.thresholds):
                arrays[f"thr{h}_p_local"] = st.p_local
                state[f"thr{h}_tau"] = st.tau
                state[f"thr{h}_step"] = st.step
        if self.ledger is not None:
            arrays["ledger_apm"] = self.ledger.apm
            arrays["ledger_counts"] = self.ledger.counts
        if self.gamma is not None:
            arrays["gamma"] = self.gamma.gamma
            state["gamma_reservoirs"] = [
                [list(r) for r in per_head] for per_head in self.gamma.reservoirs]
        if self.abc is not None:
            arrays["abc_weight"] = self.abc.weight
            arrays["abc_bias"] = self.abc.bias
            arrays.update({f"abc_vel{i}": v for i, v in enumerate(self.abc_optimizer.velocities)})
        blob = np.frombuffer(json.dumps(state).encode(), dtype=np.uint8)
        np.savez(path, state=blob, **arrays)

    def restore_checkpoint(self, path) -> None:
        """Restore in place; the trainer must have been constructed with the
        same configs and splits that produced the checkpoint."""
        with np.load(path, allow_pickle=False) as data:
            state = json.loads(bytes(data["state"]).decode())
            if state["format"] != CHECKPOINT_FORMAT:
                raise ValueError(f"unsupported checkpoint format {state['format']}")
            if state["model_config"] != self.model_config.to_json():
                raise ValueError("checkpoint was produced by a different model configuration")
            self.epoch = int(state["epoch"])
            self.global_step = int(state["global_step"])
            self.mm_gamma = float(state["mm_gamma"])
            self.mm_reservoir = [float(v) for v in state["mm_reservoir"]]
            for i, p in enumerate(self.model.param_arrays()):
                p[...] = data[f"param{i}"]
            for i, v in enumerate(self.optimizer.velocities):
                v[...] = data[f"vel{i}"]
            self.model.version += 1
            self.labeled_batcher.load_state_dict(
                {"perm": data["batcher_perm"], "pos": state["batcher"]["pos"]})
            rng_states = state["rng"]
            self.rng_labeled_order.bit_generator.state = rng_states["labeled_order"]
            self.rng_unlabeled_order.bit_generator.state = rng_states["unlabeled_order"]
            self.rng_labeled_aug.bit_generator.state = rng_states["labeled_aug"]
            self.rng_unlabeled_aug.bit_generator.state = rng_states["unlabeled_aug"]
            self.rng_abc.bit_generator.state = rng_states["abc"]
            if self.thresholds is not None:
                for h, st in enumerate(self.thresholds):
                    st.p_local[...] = data[f"thr{h}_p_local"]
                    st.tau = float(state[f"thr{h}_tau"])
                    st.step = int(state[f"thr{h}_step"])
            if self.ledger is not None:
                self.ledger.apm[...] = data["ledger_apm"]
                self.ledger.counts[...] = data["ledger_counts"]
            if self.gamma is not None:
                self.gamma.gamma[...] = data["gamma"]
                self.gamma.load_state_dict(
                    {"gamma": data["gamma"], "reservoirs": state["gamma_reservoirs"]})
            if self.abc is not None:
                self.abc.weight[...] = data["abc_weight"]
                self.abc.bias[...] = data["abc_bias"]
                for i, v in enumerate(self.abc_optimizer.velocities):
                    v[...] = data[f"abc_vel{i}"]
