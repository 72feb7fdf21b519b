import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dropmat.errors import InvalidConfigError, InvalidInputError
from dropmat.mlp import (
    N_CLASSES,
    ConfusionMatrix,
    TrainConfig,
    evaluate,
    forward,
    init_model,
    log_softmax,
    loss_and_backward,
    predict,
    softmax,
    train,
)
from oracles import finite_difference_grads, straight_line_forward


def small_model(seed=0, activation="relu", hidden=(8,)):
    rng = np.random.default_rng(seed + 100)
    model = init_model(
        TrainConfig(seed=seed, hidden_dims=hidden, activation=activation),
        rng.normal(0, 1, 25),
        rng.uniform(0.5, 2.0, 25),
    )
    for b in model.biases:
        b[:] = rng.normal(0, 0.3, b.shape)
    return model


def toy_problem(n_per_class, seed):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, 6, size=(N_CLASSES, 25))
    y = np.repeat(np.arange(N_CLASSES), n_per_class)
    x = centers[y] + rng.normal(0, 1, size=(y.size, 25))
    order = rng.permutation(y.size)
    return x[order], y[order]


class TestInit:
    def test_shapes(self):
        m = init_model(TrainConfig())
        assert [w.shape for w in m.weights] == [(64, 25), (32, 64), (5, 32)]
        assert all(np.all(b == 0) for b in m.biases)

    def test_deterministic(self):
        a = init_model(TrainConfig(seed=3))
        b = init_model(TrainConfig(seed=3))
        c = init_model(TrainConfig(seed=4))
        assert all(np.array_equal(u, v) for u, v in zip(a.weights, b.weights))
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_scale_follows_fan_in(self):
        m = init_model(TrainConfig(seed=0, hidden_dims=(256, 128)))
        for w in m.weights:
            assert np.std(w) == pytest.approx(1 / math.sqrt(w.shape[1]), rel=0.2)

    @pytest.mark.parametrize(
        "kwargs",
        [{"epochs": 0}, {"learning_rate": 0.0}, {"batch_size": 0}, {"activation": "sigmoid"}],
    )
    def test_bad_config(self, kwargs):
        with pytest.raises(InvalidConfigError):
            TrainConfig(**kwargs)

    def test_no_hidden_layer(self):
        with pytest.raises(InvalidConfigError):
            init_model(TrainConfig(hidden_dims=()))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(5)), np.full(5, 0.2), rtol=1e-15)

    def test_large_logits_stay_finite(self):
        p = softmax(np.array([1000.0, 999.0, -1000.0, 0.0, 1.0]))
        assert np.all(np.isfinite(p))
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert p[0] == pytest.approx(1 / (1 + math.exp(-1)), rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-50, 50), min_size=5, max_size=5),
        st.floats(-500, 500),
    )
    def test_shift_invariance(self, logits, c):
        z = np.array(logits)
        np.testing.assert_allclose(softmax(z + c), softmax(z), rtol=1e-9, atol=1e-15)
        np.testing.assert_allclose(np.exp(log_softmax(z)), softmax(z), rtol=1e-12, atol=1e-300)


class TestForward:
    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_straight_line_code(self, seed, activation):
        model = small_model(seed, activation, hidden=(16, 8))
        x = np.random.default_rng(seed).normal(0, 3, 25)
        probs, layers = forward(model, x)
        ref = straight_line_forward(
            [w.tolist() for w in model.weights],
            [b.tolist() for b in model.biases],
            model.norm_mean.tolist(),
            model.norm_std.tolist(),
            x.tolist(),
            activation,
        )
        np.testing.assert_allclose(probs, ref, rtol=1e-12, atol=1e-15)
        assert [a.shape for a in layers] == [(25,), (16,), (8,), (5,)]

    def test_batch_equals_single(self):
        model = small_model(1)
        x = np.random.default_rng(2).normal(0, 1, (7, 25))
        batch, _ = forward(model, x)
        for i in range(7):
            np.testing.assert_allclose(forward(model, x[i])[0], batch[i], rtol=1e-13)

    def test_wrong_width(self):
        with pytest.raises(InvalidInputError):
            forward(small_model(), np.zeros(24))

    def test_non_finite_input(self):
        x = np.zeros(25)
        x[3] = np.nan
        with pytest.raises(InvalidInputError):
            forward(small_model(), x)


class TestBackward:
    def test_uniform_prediction_loss(self):
        model = small_model()
        for w, b in zip(model.weights[-1:], model.biases[-1:]):
            w[:] = 0.0
            b[:] = 0.0
        loss, _, _ = loss_and_backward(model, np.ones((3, 25)), [0, 2, 4])
        assert loss == pytest.approx(math.log(5), rel=1e-14)

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    @pytest.mark.parametrize("seed", range(4))
    def test_gradients_match_finite_differences(self, seed, activation):
        model = small_model(seed, activation)
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 1, (4, 25))
        y = rng.integers(0, 5, 4)
        _, gw, gb = loss_and_backward(model, x, y)
        params = [*model.weights, *model.biases]
        fd = finite_difference_grads(lambda: loss_and_backward(model, x, y)[0], params)
        for analytic, numeric in zip([*gw, *gb], fd):
            rel = np.linalg.norm(analytic - numeric) / max(
                np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12
            )
            assert rel < 1e-4

    def test_empty_batch(self):
        with pytest.raises(InvalidInputError):
            loss_and_backward(small_model(), np.empty((0, 25)), [])

    @pytest.mark.parametrize("labels", [[5], [-1], [0.5]])
    def test_bad_labels(self, labels):
        with pytest.raises(InvalidInputError):
            loss_and_backward(small_model(), np.zeros((1, 25)), labels)


class TestTrain:
    def test_separable_problem_is_learned(self):
        x, y = toy_problem(40, seed=0)
        model, report = train((x[:150], y[:150]), (x[150:], y[150:]), TrainConfig(epochs=50, seed=1))
        assert report.val_accuracy[-1] == 1.0
        assert len(report.val_loss) == report.epochs == 50
        assert report.val_loss[-1] < report.val_loss[0]

    def test_deterministic(self):
        x, y = toy_problem(20, seed=5)
        cfg = TrainConfig(epochs=5, seed=9)
        a, ra = train((x[:80], y[:80]), (x[80:], y[80:]), cfg)
        b, rb = train((x[:80], y[:80]), (x[80:], y[80:]), cfg)
        assert ra.val_loss == rb.val_loss
        assert all(np.array_equal(u, v) for u, v in zip(a.weights, b.weights))

    def test_normalization_uses_training_rows_only(self):
        x, y = toy_problem(10, seed=2)
        val_x = x[:10] + 1e6
        model, _ = train((x, y), (val_x, y[:10]), TrainConfig(epochs=1))
        np.testing.assert_allclose(model.norm_mean, x.mean(axis=0))

    def test_constant_feature_gets_unit_std(self):
        x, y = toy_problem(10, seed=2)
        x[:, 4] = 3.0
        model, _ = train((x, y), (x, y), TrainConfig(epochs=1))
        assert model.norm_std[4] == 1.0

    def test_empty_training_set(self):
        with pytest.raises(InvalidInputError):
            train((np.empty((0, 25)), []), (np.zeros((1, 25)), [0]), TrainConfig(epochs=1))


class TestPredict:
    def test_uniform_ties_go_to_first_class(self):
        model = small_model()
        model.weights[-1][:] = 0.0
        model.biases[-1][:] = 0.0
        label, probs = predict(model, np.zeros(25))
        assert label == 0
        np.testing.assert_allclose(probs, 0.2)

    def test_dominant_logit(self):
        model = small_model()
        model.weights[-1][:] = 0.0
        model.biases[-1][:] = [0.1, 0.2, 0.3, 0.2, 5.0]
        label, probs = predict(model, np.zeros(25))
        assert label == 4
        assert probs.sum() == pytest.approx(1.0)

    def test_agrees_with_forward(self):
        model = small_model(3, hidden=(16,))
        x = np.random.default_rng(0).normal(0, 2, (1000, 25))
        labels, _ = predict(model, x)
        probs, _ = forward(model, x)
        assert np.array_equal(labels, np.argmax(probs, axis=1))


class TestEvaluate:
    def test_perfect_model_gives_diagonal(self):
        x, y = toy_problem(30, seed=0)
        model, _ = train((x, y), (x, y), TrainConfig(epochs=50, seed=1))
        cm = evaluate(model, (x, y))
        assert np.array_equal(cm.counts, np.diag(np.bincount(y, minlength=5)))
        assert cm.overall_accuracy == 1.0
        assert cm.inference_seconds >= 0

    def test_row_accuracy(self):
        counts = np.zeros((5, 5), dtype=np.int64)
        counts[0] = [155, 3, 0, 1, 1]
        counts[1, 1] = 160
        cm = ConfusionMatrix(counts)
        assert cm.per_class_accuracy[0] == 0.96875
        assert cm.per_class_accuracy[1] == 1.0
        assert np.isnan(cm.per_class_accuracy[2])
        assert cm.total == 320

    def test_random_labels_near_chance(self):
        rng = np.random.default_rng(11)
        x = rng.normal(0, 1, (2000, 25))
        y = rng.integers(0, 5, 2000)
        cm = evaluate(small_model(), (x, y))
        assert cm.total == 2000
        assert abs(cm.overall_accuracy - 0.2) < 0.05
