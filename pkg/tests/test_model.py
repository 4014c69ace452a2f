import numpy as np
import pytest

from matchlab import kernels
from matchlab.model import (ModelConfig, MultiheadModel, OptimizerConfig,
                            SgdOptimizer, StaleCacheError, add_grads)
from matchlab.numkit import make_rng


def head_ce_loss_and_grads(model, feats, targets_per_head, head_weights):
    """Scalar loss: sum over heads of head_weight * mean CE. Returns the
    analytic gradient list via backward."""
    preds, cache = model.forward(feats)
    n = feats.shape[0]
    h = model.config.num_heads
    total = 0.0
    dlogits = np.zeros_like(preds.logits)
    for k in range(h):
        w = head_weights[k]
        if w == 0.0:
            continue
        loss, grad = kernels.weighted_ce_grad(
            preds.logits[k], targets_per_head[k], np.ones(n), float(n))
        total += w * loss
        dlogits[k] = grad * w
    return total, model.backward(cache, dlogits)


def loss_value(model, feats, targets_per_head, head_weights):
    preds, _ = model.forward(feats, want_cache=False)
    n = feats.shape[0]
    total = 0.0
    for k in range(model.config.num_heads):
        w = head_weights[k]
        if w == 0.0:
            continue
        loss, _ = kernels.weighted_ce_grad(
            preds.logits[k], targets_per_head[k], np.ones(n), float(n))
        total += w * loss
    return total


def finite_difference_grads(model, feats, targets_per_head, head_weights, eps=1e-5):
    grads = []
    for p in model.param_arrays():
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            fp = loss_value(model, feats, targets_per_head, head_weights)
            flat[idx] = orig - eps
            fm = loss_value(model, feats, targets_per_head, head_weights)
            flat[idx] = orig
            gflat[idx] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


class TestForward:
    def test_zero_weights_give_uniform(self):
        config = ModelConfig(input_dim=3, hidden_dims=(4,), num_classes=3, num_heads=2)
        model = MultiheadModel(config, make_rng(0))
        for p in model.param_arrays():
            p[...] = 0.0
        preds, _ = model.forward(np.ones((2, 3)))
        assert np.all(preds.logits == 0.0)
        np.testing.assert_allclose(preds.probs(), 1.0 / 3.0, atol=1e-15)

    def test_identity_linear_model(self):
        config = ModelConfig(input_dim=3, hidden_dims=(), num_classes=3, num_heads=1)
        model = MultiheadModel(config, make_rng(0))
        w, b = model.heads[0]
        w[...] = np.eye(3)
        b[...] = 0.0
        x = np.array([[0.3, -0.7, 2.0]])
        preds, _ = model.forward(x)
        np.testing.assert_array_equal(preds.logits[0], x)

    def test_deterministic_given_seed(self):
        config = ModelConfig(input_dim=5, hidden_dims=(7,), num_classes=4, num_heads=3)
        x = make_rng(99).normal(size=(6, 5))
        a = MultiheadModel(config, make_rng(7)).forward(x)[0].logits
        b = MultiheadModel(config, make_rng(7)).forward(x)[0].logits
        np.testing.assert_array_equal(a, b)

    def test_dimension_mismatch(self):
        model = MultiheadModel(ModelConfig(input_dim=4), make_rng(0))
        with pytest.raises(ValueError):
            model.forward(np.zeros((2, 5)))

    def test_param_count_formula(self):
        config = ModelConfig(input_dim=6, hidden_dims=(9, 5), num_classes=4, num_heads=3)
        model = MultiheadModel(config, make_rng(0))
        backbone = 6 * 9 + 9 + 9 * 5 + 5
        heads = 3 * (5 + 1) * 4
        assert model.param_count() == backbone + heads


class TestBackward:
    def test_zero_upstream_zero_grads(self):
        config = ModelConfig(input_dim=4, hidden_dims=(5,), num_classes=3, num_heads=2)
        model = MultiheadModel(config, make_rng(1))
        x = make_rng(2).normal(size=(3, 4))
        _, cache = model.forward(x)
        grads = model.backward(cache, np.zeros((2, 3, 3)))
        assert all(np.all(g == 0.0) for g in grads)

    def test_head_isolation(self):
        config = ModelConfig(input_dim=4, hidden_dims=(5,), num_classes=3, num_heads=3)
        model = MultiheadModel(config, make_rng(3))
        x = make_rng(4).normal(size=(3, 4))
        targets = np.zeros((3, 3), dtype=np.int64)
        weights = [1.0, 0.0, 0.0]
        _, grads = head_ce_loss_and_grads(model, x, targets, weights)
        n_backbone = 2 * len(model.backbone)
        head_grads = grads[n_backbone:]
        # head 0 trained, heads 1 and 2 untouched
        assert np.any(head_grads[0] != 0.0)
        for g in head_grads[2:]:
            assert np.all(g == 0.0)

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    @pytest.mark.parametrize("hidden", [(), (8,), (8, 6)])
    def test_gradient_check(self, activation, hidden):
        config = ModelConfig(input_dim=5, hidden_dims=hidden, num_classes=3,
                             num_heads=3, activation=activation)
        model = MultiheadModel(config, make_rng(20))
        rng = make_rng(21)
        x = rng.normal(size=(4, 5))
        targets = rng.integers(0, 3, size=(3, 4))
        weights = [1.0, 0.5, 2.0]
        _, analytic = head_ce_loss_and_grads(model, x, targets, weights)
        numeric = finite_difference_grads(model, x, targets, weights)
        assert max_rel_error(analytic, numeric) < 1e-4

    def test_backbone_gradient_is_sum_over_heads(self):
        config = ModelConfig(input_dim=4, hidden_dims=(6,), num_classes=3, num_heads=3,
                             activation="tanh")
        model = MultiheadModel(config, make_rng(5))
        x = make_rng(6).normal(size=(5, 4))
        targets = make_rng(7).integers(0, 3, size=(3, 5))
        combined = head_ce_loss_and_grads(model, x, targets, [1.0, 1.0, 1.0])[1]
        per_head = [head_ce_loss_and_grads(model, x, targets,
                                           [float(k == h) for k in range(3)])[1]
                    for h in range(3)]
        summed = per_head[0]
        for g in per_head[1:]:
            summed = add_grads(summed, g)
        for a, b in zip(combined, summed):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_stale_cache_rejected(self):
        config = ModelConfig(input_dim=3, hidden_dims=(4,), num_classes=2, num_heads=1)
        model = MultiheadModel(config, make_rng(8))
        _, cache = model.forward(np.zeros((1, 3)))
        model.version += 1  # simulates an optimizer step
        with pytest.raises(StaleCacheError):
            model.backward(cache, np.zeros((1, 1, 2)))


class TestOptimizer:
    def _scalar_model(self):
        config = ModelConfig(input_dim=1, hidden_dims=(), num_classes=2, num_heads=1)
        model = MultiheadModel(config, make_rng(0))
        return model

    def test_zero_grads_zero_decay_no_change(self):
        model = self._scalar_model()
        before = [p.copy() for p in model.param_arrays()]
        opt = SgdOptimizer(OptimizerConfig(learning_rate=0.5), model.param_arrays())
        opt.step(model.zero_grads())
        for p, b in zip(model.param_arrays(), before):
            np.testing.assert_array_equal(p, b)

    def test_plain_sgd_step(self):
        model = self._scalar_model()
        w, _ = model.heads[0]
        w[...] = 1.0
        opt = SgdOptimizer(OptimizerConfig(learning_rate=0.1), model.param_arrays())
        grads = model.zero_grads()
        grads[0][...] = 1.0
        opt.step(grads)
        np.testing.assert_allclose(w, 0.9, atol=1e-15)

    def test_decoupled_weight_decay(self):
        model = self._scalar_model()
        w, _ = model.heads[0]
        w[...] = 1.0
        opt = SgdOptimizer(OptimizerConfig(learning_rate=0.1, weight_decay=0.1),
                           model.param_arrays())
        opt.step(model.zero_grads())
        np.testing.assert_allclose(w, 0.99, atol=1e-15)

    def test_momentum_accumulates(self):
        model = self._scalar_model()
        w, _ = model.heads[0]
        w[...] = 0.0
        opt = SgdOptimizer(OptimizerConfig(learning_rate=1.0, momentum=0.5),
                           model.param_arrays())
        grads = model.zero_grads()
        grads[0][...] = 1.0
        opt.step(grads)   # v=1, w=-1
        opt.step(grads)   # v=1.5, w=-2.5
        np.testing.assert_allclose(w, -2.5, atol=1e-15)


class TestEnsembleAndCheckpoint:
    def test_ensemble_mean(self):
        preds_logits = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        from matchlab.model import HeadPredictions
        hp = HeadPredictions(logits=preds_logits)
        np.testing.assert_allclose(hp.ensemble_logits(), [[0.5, 0.5]], atol=1e-15)

    def test_single_head_identity(self):
        from matchlab.model import HeadPredictions
        logits = make_rng(9).normal(size=(1, 4, 3))
        hp = HeadPredictions(logits=logits)
        np.testing.assert_array_equal(hp.ensemble_logits(), logits[0])

    def test_identical_heads_equal_single_head(self):
        config = ModelConfig(input_dim=4, hidden_dims=(5,), num_classes=3, num_heads=3)
        model = MultiheadModel(config, make_rng(10))
        w0, b0 = model.heads[0]
        for w, b in model.heads[1:]:
            w[...] = w0
            b[...] = b0
        x = make_rng(11).normal(size=(6, 4))
        preds, _ = model.forward(x)
        # averaging three identical rows can round in the last ulp; the
        # prediction itself must be identical
        np.testing.assert_allclose(preds.ensemble_logits(), preds.logits[0],
                                   rtol=1e-15, atol=1e-15)
        np.testing.assert_array_equal(
            np.argmax(preds.ensemble_logits(), axis=-1),
            np.argmax(preds.logits[0], axis=-1))

    def test_checkpoint_round_trip_exact(self, tmp_path):
        config = ModelConfig(input_dim=5, hidden_dims=(7, 3), num_classes=4,
                             num_heads=3, activation="tanh", weight_init_scale=0.7)
        model = MultiheadModel(config, make_rng(12))
        path = tmp_path / "model.npz"
        model.save(path)
        loaded = MultiheadModel.load(path)
        assert loaded.config == config
        for a, b in zip(model.param_arrays(), loaded.param_arrays()):
            np.testing.assert_array_equal(a, b)
        x = make_rng(13).normal(size=(3, 5))
        np.testing.assert_array_equal(
            model.forward(x)[0].logits, loaded.forward(x)[0].logits)
