import numpy as np
import pytest

from matchlab.numkit import make_rng, softmax
from matchlab.thresholds import ThresholdState


def unrolled_threshold_oracle(num_classes, decay, batches):
    """Independent re-derivation of the EMA state in extended precision:
    tau_t = lam*tau_{t-1} + (1-lam)*mean_b max(q_b), analogous per class,
    starting from 1/C."""
    lam = np.longdouble(decay)
    tau = np.longdouble(1.0) / num_classes
    p_local = np.full(num_classes, 1.0 / num_classes, dtype=np.longdouble)
    for q in batches:
        q = q.astype(np.longdouble)
        tau = lam * tau + (1 - lam) * q.max(axis=1).mean()
        p_local = lam * p_local + (1 - lam) * q.mean(axis=0)
    return float(tau), p_local.astype(np.float64)


def random_prob_batches(rng, num_classes, num_batches, batch_size):
    out = []
    for _ in range(num_batches):
        logits = rng.normal(size=(batch_size, num_classes)) * rng.uniform(0.5, 3.0)
        out.append(softmax(logits, axis=-1))
    return out


class TestUpdate:
    def test_initial_state(self):
        st = ThresholdState(4, 0.999)
        assert st.tau == 0.25
        np.testing.assert_array_equal(st.p_local, [0.25] * 4)

    def test_frozen_at_decay_one(self):
        st = ThresholdState(3, 1.0)
        st.update(softmax(make_rng(0).normal(size=(8, 3)), axis=-1))
        assert st.tau == 1.0 / 3.0
        np.testing.assert_array_equal(st.p_local, [1.0 / 3.0] * 3)

    def test_hand_evaluated_ema_step(self):
        # lam=0.9, tau=0.25, batch mean max-confidence 0.65 -> 0.29
        st = ThresholdState(4, 0.9)
        q = np.array([[0.7, 0.1, 0.1, 0.1],
                      [0.6, 0.2, 0.1, 0.1]])  # max mean = 0.65
        st.update(q)
        assert st.tau == pytest.approx(0.29, abs=1e-12)

    def test_uniform_fixed_point(self):
        st = ThresholdState(5, 0.99)
        uniform = np.full((6, 5), 0.2)
        for _ in range(50):
            st.update(uniform)
        assert st.tau == pytest.approx(0.2, abs=1e-12)
        np.testing.assert_allclose(st.p_local, 0.2, atol=1e-12)

    def test_empty_batch_warns_and_noops(self):
        st = ThresholdState(3, 0.9)
        with pytest.warns(UserWarning):
            st.update(np.zeros((0, 3)))
        assert st.tau == 1.0 / 3.0
        assert st.step == 0

    def test_matches_unrolled_oracle(self):
        rng = make_rng(1)
        for trial in range(50):
            c = int(rng.integers(2, 7))
            decay = float(rng.choice([0.9, 0.99, 0.999]))
            batches = random_prob_batches(rng, c, int(rng.integers(1, 60)), 8)
            st = ThresholdState(c, decay)
            for q in batches:
                st.update(q)
            tau_ref, p_ref = unrolled_threshold_oracle(c, decay, batches)
            assert abs(st.tau - tau_ref) < 1e-12
            assert np.max(np.abs(st.p_local - p_ref)) < 1e-12


class TestClassThresholds:
    def test_normalisation_example(self):
        st = ThresholdState(3, 0.9)
        st.p_local = np.array([0.2, 0.4, 0.4])
        st.tau = 0.5
        np.testing.assert_allclose(st.class_thresholds(), [0.25, 0.5, 0.5], atol=1e-12)

    def test_uniform_local_gives_global(self):
        st = ThresholdState(4, 0.9)
        st.tau = 0.61
        np.testing.assert_allclose(st.class_thresholds(), 0.61, atol=1e-15)

    def test_argmax_class_hits_global_exactly(self):
        rng = make_rng(2)
        for _ in range(30):
            st = ThresholdState(5, 0.99)
            for q in random_prob_batches(rng, 5, 5, 6):
                st.update(q)
            thr = st.class_thresholds()
            top = int(np.argmax(st.p_local))
            assert thr[top] == pytest.approx(st.tau, abs=1e-15)
            assert np.all(thr <= st.tau + 1e-15)


class TestPassesFilter:
    def test_confident_sample_passes(self):
        st = ThresholdState(2, 0.9)
        st.tau = 0.8
        assert st.passes_filter(np.array([0.99, 0.01]))

    def test_equality_fails_strictly(self):
        st = ThresholdState(2, 0.9)
        st.tau = 0.8
        st.p_local = np.array([0.5, 0.5])
        assert not st.passes_filter(np.array([0.8, 0.2]))

    def test_uniform_at_start_fails(self):
        st = ThresholdState(4, 0.999)
        assert not st.passes_filter(np.full(4, 0.25))

    def test_batch_matches_scalar(self):
        rng = make_rng(3)
        st = ThresholdState(4, 0.99)
        for q in random_prob_batches(rng, 4, 10, 8):
            st.update(q)
        probs = random_prob_batches(rng, 4, 1, 32)[0]
        batch = st.passes_filter_batch(probs)
        for b in range(32):
            assert batch[b] == st.passes_filter(probs[b])

    def test_rescaling_preserves_argmax_class(self):
        # scaling a probability row and renormalising cannot move its argmax,
        # so the filter always consults the same class threshold
        rng = make_rng(4)
        for _ in range(50):
            q = softmax(rng.normal(size=6))
            scaled = q * 3.7
            scaled /= scaled.sum()
            assert int(np.argmax(q)) == int(np.argmax(scaled))
