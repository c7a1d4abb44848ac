import math

import numpy as np
import pytest

from netflow_ood import nn_core
from netflow_ood.errors import ConfigurationError

from conftest import fd_gradient, projection_model, rel_err, zero_model


def test_zero_model_uniform_softmax():
    model = zero_model(n_classes=4)
    x = np.random.default_rng(0).normal(size=20)
    trace = nn_core.forward(model, x)
    assert np.all(trace.logits == 0.0)
    assert np.allclose(nn_core.softmax(trace.logits), 0.25)


def test_projection_copies_coordinate_zero():
    model = projection_model()
    x = np.zeros(20)
    x[0] = 1.0
    trace = nn_core.forward(model, x)
    assert trace.embedding[0, 0] == 1.0
    assert trace.embedding[0, 1] == 0.0


def test_forward_matches_manual_reevaluation():
    # independent oracle: re-evaluate layer by layer with explicit loops
    model = nn_core.init_model(3, seed=42)
    x = np.random.default_rng(7).normal(size=20)
    trace = nn_core.forward(model, x)

    a = x.copy()
    for layer in model.encoder:
        z = np.array([layer.weights[r] @ a + layer.bias[r] for r in range(layer.out_dim)])
        a = np.array([v if v >= 0 else model.leaky_slope * v for v in z])
    logits = np.array(
        [model.classifier.weights[r] @ a + model.classifier.bias[r] for r in range(3)]
    )
    assert np.allclose(trace.embedding[0], a, atol=1e-12)
    assert np.allclose(trace.logits[0], logits, atol=1e-12)


def test_forward_rejects_bad_width():
    model = nn_core.init_model(2, seed=0)
    with pytest.raises(ConfigurationError):
        nn_core.forward(model, np.zeros(19))


class TestSoftmax:
    def test_symmetric(self):
        assert np.allclose(nn_core.softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_temperature_twenty(self):
        # logits (2, 0) at T=20 reduce to a logistic at 0.1
        expected = 1.0 / (1.0 + math.exp(-0.1))
        probs = nn_core.softmax(np.array([2.0, 0.0]), temperature=20.0)
        assert abs(probs[0] - expected) < 1e-12
        assert abs(probs[0] - 0.52497918747894) < 1e-9

    def test_max_probability_decays_with_temperature(self):
        logits = np.array([3.0, 1.0, -2.0, 0.5])
        last = 1.0
        for t in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 200.0]:
            top = nn_core.softmax(logits, t).max()
            assert top < last
            assert top > 1.0 / logits.size
            last = top

    def test_sums_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            logits = rng.normal(scale=30.0, size=6)
            p = nn_core.softmax(logits)
            assert abs(p.sum() - 1.0) <= 1e-12
            assert np.allclose(p, nn_core.softmax(logits + 123.456), atol=1e-12)

    def test_rejects_nonpositive_temperature(self):
        with pytest.raises(ConfigurationError):
            nn_core.softmax(np.array([1.0, 0.0]), temperature=0.0)


class TestParamGradients:
    def test_zero_model_output_bias_gradient(self):
        # at uniform softmax the output bias gradient is p - onehot
        model = zero_model(n_classes=4)
        x = np.random.default_rng(1).normal(size=(1, 20))
        grads, parts = nn_core.param_gradients(model, x, np.array([2]))
        expected = np.full(4, 0.25)
        expected[2] -= 1.0
        assert np.allclose(grads.classifier[1], expected, atol=1e-12)
        assert abs(parts["ce"] - math.log(4)) < 1e-12

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2024)
        model = nn_core.init_model(3, seed=9)
        x = rng.normal(size=(4, 20))
        labels = rng.integers(0, 3, size=4)
        grads, _ = nn_core.param_gradients(model, x, labels)

        def ce_loss(m):
            t = nn_core.forward(m, x)
            p = nn_core.softmax(t.logits)
            return -np.mean(np.log(p[np.arange(4), labels]))

        pairs = grads.pairs()
        for li, layer in enumerate(model.layers()):
            for k in rng.choice(layer.weights.size, size=5, replace=False):
                def at(v, idx=k, layer_idx=li):
                    m = model.copy()
                    m.layers()[layer_idx].weights.ravel()[idx] = v
                    return ce_loss(m)
                base = layer.weights.ravel()[k]
                fd = (at(base + 1e-5) - at(base - 1e-5)) / 2e-5
                assert rel_err(pairs[li][0].ravel()[k], fd) < 1e-4

    def test_center_term_with_zero_weight_is_pure_ce(self):
        model = nn_core.init_model(3, seed=5)
        x = np.random.default_rng(4).normal(size=(6, 20))
        labels = np.array([0, 1, 2, 0, 1, 2])
        centers = np.random.default_rng(5).normal(size=(3, 2))
        plain, _ = nn_core.param_gradients(model, x, labels)
        mixed, _ = nn_core.param_gradients(
            model, x, labels, centers=centers, cl_mask=np.ones(6, bool), cl_weight=0.0
        )
        for (w1, b1), (w2, b2) in zip(plain.pairs(), mixed.pairs()):
            assert np.array_equal(w1, w2)
            assert np.array_equal(b1, b2)

    def test_combined_loss_matches_finite_differences(self):
        rng = np.random.default_rng(77)
        model = nn_core.init_model(3, seed=13)
        x = rng.normal(size=(5, 20))
        labels = rng.integers(0, 3, size=5)
        centers = rng.normal(size=(3, 2))
        mask = np.array([True, False, True, True, False])
        lam = 0.7
        grads, _ = nn_core.param_gradients(
            model, x, labels, centers=centers, cl_mask=mask, cl_weight=lam
        )

        def loss(m):
            t = nn_core.forward(m, x)
            p = nn_core.softmax(t.logits)
            ce = -np.mean(np.log(p[np.arange(5), labels]))
            diff = (t.embedding - centers[labels]) * mask[:, None]
            return ce + lam * 0.5 * np.sum(diff * diff) / 5

        pairs = grads.pairs()
        for li, layer in enumerate(model.layers()):
            for k in rng.choice(layer.weights.size, size=4, replace=False):
                def at(v, idx=k, layer_idx=li):
                    m = model.copy()
                    m.layers()[layer_idx].weights.ravel()[idx] = v
                    return loss(m)
                base = layer.weights.ravel()[k]
                fd = (at(base + 1e-5) - at(base - 1e-5)) / 2e-5
                assert rel_err(pairs[li][0].ravel()[k], fd) < 1e-4


class TestInputGradients:
    def test_constant_logits_give_zero_gradient(self):
        model = zero_model(n_classes=3)
        x = np.random.default_rng(0).normal(size=(2, 20))
        g = nn_core.input_gradient_confidence(model, x, temperature=20.0)
        assert np.all(g == 0.0)

    def test_confidence_gradient_matches_fd(self):
        model = nn_core.init_model(4, seed=21)
        x = np.random.default_rng(8).normal(size=20)
        analytic = nn_core.input_gradient_confidence(model, x, temperature=20.0)[0]

        def objective(xx):
            t = nn_core.forward(model, xx)
            return float(nn_core.softmax(t.logits, 20.0).max())

        fd = fd_gradient(objective, x)
        assert rel_err(analytic, fd) < 1e-4

    def test_distance_gradient_matches_fd(self):
        model = nn_core.init_model(3, seed=33)
        rng = np.random.default_rng(9)
        x = rng.normal(size=20)
        means = rng.normal(size=(3, 2))
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        precision = np.linalg.inv(cov)
        analytic = nn_core.input_gradient_class_distance(model, x, means, precision)[0]

        def objective(xx):
            e = nn_core.forward(model, xx).embedding[0]
            d = [(e - mu) @ precision @ (e - mu) for mu in means]
            return float(min(d))

        fd = fd_gradient(objective, x)
        assert rel_err(analytic, fd) < 1e-4

    def test_projection_model_hand_chain_rule(self):
        # coordinate-projection encoder with identity covariance: the gradient
        # of the nearest-class quadratic is 2*(e - mu) routed to coords 0 and 1
        model = projection_model()
        means = np.array([[0.0, 0.0], [10.0, 10.0]])
        precision = np.eye(2)
        x = np.zeros(20)
        x[0], x[1] = 3.0, 4.0
        g = nn_core.input_gradient_class_distance(model, x, means, precision)[0]
        expected = np.zeros(20)
        expected[0], expected[1] = 2.0 * 3.0, 2.0 * 4.0
        assert np.allclose(g, expected, atol=1e-12)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = np.array([1.0, -2.0, 3.0])
        state = nn_core.AdamState.for_tensors([p])
        nn_core.adam_step(state, [p], [np.zeros(3)], lr=0.1)
        assert np.array_equal(p, [1.0, -2.0, 3.0])
        assert state.t == 1

    def test_first_step_is_signed_lr(self):
        for g in (0.5, -3.0, 1e-3):
            p = np.array([0.0])
            state = nn_core.AdamState.for_tensors([p])
            nn_core.adam_step(state, [p], [np.array([g])], lr=0.01)
            assert abs(p[0] - (-0.01 * np.sign(g))) < 1e-6

    def test_two_steps_reduce_quadratic(self):
        p = np.array([5.0])
        state = nn_core.AdamState.for_tensors([p])
        loss = lambda: 0.5 * p[0] ** 2
        before = loss()
        for _ in range(2):
            nn_core.adam_step(state, [p], [np.array([p[0]])], lr=0.05)
        assert loss() < before


class TestDeterminism:
    def test_deterministic_forward_is_pure(self):
        model = nn_core.init_model(3, seed=1)
        x = np.random.default_rng(2).normal(size=(5, 20))
        t1 = nn_core.forward(model, x)
        t2 = nn_core.forward(model, x)
        assert np.array_equal(t1.logits, t2.logits)
        assert np.array_equal(t1.embedding, t2.embedding)
        assert all(np.all(m == 1.0) for m in t1.dropout_masks)

    def test_seeded_stochastic_forward_reproducible(self):
        model = nn_core.init_model(3, seed=1)
        x = np.random.default_rng(2).normal(size=(5, 20))
        t1 = nn_core.forward(model, x, rng=np.random.default_rng(99))
        t2 = nn_core.forward(model, x, rng=np.random.default_rng(99))
        assert np.array_equal(t1.logits, t2.logits)
        assert any(np.any(m != 1.0) for m in t1.dropout_masks)
        # dropout only after the first three layers
        assert np.all(t1.dropout_masks[3] == 1.0)

    def test_zero_dropout_equals_deterministic(self):
        model = nn_core.init_model(3, seed=1)
        x = np.random.default_rng(2).normal(size=(5, 20))
        det = nn_core.forward(model, x)
        stoch = nn_core.forward(model, x, rng=np.random.default_rng(0), dropout_p=0.0)
        assert np.array_equal(det.logits, stoch.logits)

    def test_inverted_scaling_expectation(self):
        # the scaled mask is unbiased: post-dropout activations of the first
        # layer (whose pre-dropout value is deterministic) average back to the
        # deterministic activations
        model = nn_core.init_model(3, seed=6)
        x = np.random.default_rng(11).normal(size=(1, 20))
        det = nn_core.forward(model, x).activations[0]
        rng = np.random.default_rng(123)
        acc = np.zeros_like(det)
        passes = 4000
        for _ in range(passes):
            acc += nn_core.forward(model, x, rng=rng).activations[0]
        assert np.allclose(acc / passes, det, atol=0.05)


def test_gradient_sweep_hundred_draws():
    # parameter and input gradients vs central differences on sampled coords
    rng = np.random.default_rng(20240501)
    worst = 0.0
    for draw in range(100):
        model = nn_core.init_model(int(rng.integers(2, 5)), seed=int(rng.integers(1 << 30)))
        n = int(rng.integers(1, 5))
        x = rng.normal(size=(n, 20))
        labels = rng.integers(0, model.n_classes, size=n)
        grads, _ = nn_core.param_gradients(model, x, labels)

        def ce_loss(m):
            t = nn_core.forward(m, x)
            p = nn_core.softmax(t.logits)
            return -np.mean(np.log(p[np.arange(n), labels]))

        pairs = grads.pairs()
        for li, layer in enumerate(model.layers()):
            k = int(rng.integers(layer.weights.size))
            m_hi, m_lo = model.copy(), model.copy()
            m_hi.layers()[li].weights.ravel()[k] += 1e-5
            m_lo.layers()[li].weights.ravel()[k] -= 1e-5
            fd = (ce_loss(m_hi) - ce_loss(m_lo)) / 2e-5
            worst = max(worst, rel_err(pairs[li][0].ravel()[k], fd))

        g = nn_core.input_gradient_confidence(model, x[:1], temperature=20.0)[0]
        def conf(xx):
            t = nn_core.forward(model, np.concatenate([xx[None, :], x[1:]], axis=0))
            return float(nn_core.softmax(t.logits, 20.0)[0].max())
        fd = fd_gradient(conf, x[0])
        worst = max(worst, rel_err(g, fd))
    assert worst < 1e-4
