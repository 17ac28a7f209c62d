import math

import numpy as np
import pytest

from oracles import fd_gradients, max_rel_error, min_abs_preactivation

from ddosdet import nnet
from ddosdet.errors import (
    CorruptFileError,
    InvalidConfigError,
    ShapeMismatchError,
    StaleCacheError,
    VersionMismatchError,
)
from ddosdet.nnet import (
    Network,
    NetworkConfig,
    TrainConfig,
    backward,
    build_network,
    cce_loss,
    forward,
    load_model,
    parameter_count,
    predict,
    predict_batch,
    rmsprop_step,
    save_model,
    train,
)


def zero_network(cfg):
    net = build_network(cfg)
    net.weights = [np.zeros_like(w) for w in net.weights]
    net.biases = [np.zeros_like(b) for b in net.biases]
    return net


class TestBuildNetwork:
    def test_default_parameter_count(self):
        net = build_network(NetworkConfig())
        assert parameter_count(net) == 9730

    def test_alternative_reading_parameter_count(self):
        # 84*64+64 + 64*64+64 + 64*2+2 == 9730 as well
        net = build_network(NetworkConfig(input_dim=84, hidden_dims=(64, 64)))
        assert parameter_count(net) == 9730

    def test_tiny_network_count_by_hand(self):
        net = build_network(NetworkConfig(input_dim=2, hidden_dims=(2,), output_dim=2))
        assert parameter_count(net) == 2 * 2 + 2 + 2 * 2 + 2

    def test_default_count_recomputed_term_by_term(self):
        assert 64 * 19 + 64 + 2 * (64 * 64 + 64) + 64 * 2 + 2 == 9730

    def test_deterministic_given_seed(self):
        a = build_network(NetworkConfig(seed=7))
        b = build_network(NetworkConfig(seed=7))
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_glorot_bounds_and_zero_biases(self):
        net = build_network(NetworkConfig(seed=3))
        dims = net.config.dims
        for w, b, fan_in, fan_out in zip(net.weights, net.biases, dims[:-1], dims[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            assert np.abs(w).max() <= bound
            assert np.all(b == 0.0)

    def test_invalid_configs_rejected(self):
        with pytest.raises(InvalidConfigError):
            NetworkConfig(input_dim=0)
        with pytest.raises(InvalidConfigError):
            NetworkConfig(output_dim=1)
        with pytest.raises(InvalidConfigError):
            NetworkConfig(dropout_rate=1.0)


class TestForward:
    def test_zero_weights_give_uniform_probabilities(self):
        net = zero_network(NetworkConfig(input_dim=3, hidden_dims=(4,), output_dim=2))
        probs, _ = forward(net, np.random.default_rng(0).normal(size=(5, 3)))
        assert np.allclose(probs, 0.5)

    def test_dropout_zero_train_equals_infer(self):
        cfg = NetworkConfig(input_dim=4, hidden_dims=(6, 5), dropout_rate=0.0, seed=2)
        net = build_network(cfg)
        x = np.random.default_rng(1).normal(size=(7, 4))
        infer, _ = forward(net, x)
        trained, cache = forward(net, x, train=True)
        assert np.array_equal(infer, trained)
        assert cache is not None

    def test_hand_built_two_layer_oracle(self):
        # z1 = [2.1, -0.2] -> relu [2.1, 0] -> identity output layer -> softmax
        cfg = NetworkConfig(input_dim=2, hidden_dims=(2,), output_dim=2, dropout_rate=0.0)
        net = build_network(cfg)
        net.weights = [np.array([[1.0, -1.0], [0.5, 0.5]]), np.eye(2)]
        net.biases = [np.array([0.1, -0.2]), np.zeros(2)]
        probs, _ = forward(net, np.array([[1.0, 2.0]]))
        denom = math.exp(2.1) + math.exp(0.0)
        assert probs[0, 0] == pytest.approx(math.exp(2.1) / denom, rel=1e-12)
        assert probs[0, 1] == pytest.approx(1.0 / denom, rel=1e-12)

    def test_rows_sum_to_one_and_bounded(self):
        net = build_network(NetworkConfig(seed=5))
        x = np.random.default_rng(2).normal(size=(64, 19)) * 10
        probs, _ = forward(net, x)
        assert np.all(probs >= 0.0) and np.all(probs <= 1.0)
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-9

    def test_inference_is_pure(self):
        net = build_network(NetworkConfig(seed=5))
        x = np.random.default_rng(3).normal(size=(8, 19))
        first, _ = forward(net, x)
        second, _ = forward(net, x)
        assert np.array_equal(first, second)

    def test_width_mismatch_rejected(self):
        net = build_network(NetworkConfig())
        with pytest.raises(ShapeMismatchError):
            forward(net, np.zeros((4, 7)))

    def test_dropout_preserves_expected_activation(self):
        # single hidden layer: E[mask * relu(z) / (1-p)] == relu(z) exactly,
        # so the 10k-trial mean must land within 2% of the inference pass
        cfg = NetworkConfig(input_dim=5, hidden_dims=(8,), dropout_rate=0.25, seed=1)
        net = build_network(cfg)
        x = np.random.default_rng(4).normal(size=(3, 5))
        reference = np.maximum(x @ net.weights[0] + net.biases[0], 0.0)
        rng = np.random.default_rng(99)
        total = np.zeros_like(reference)
        trials = 10_000
        for _ in range(trials):
            _, cache = forward(net, x, train=True, rng=rng)
            total += cache.activations[0]
        mean = total / trials
        significant = reference > 1e-6
        rel = np.abs(mean[significant] - reference[significant]) / reference[significant]
        assert rel.max() < 0.02
        assert np.all(mean[~significant] == 0.0)


class TestCceLoss:
    def test_perfect_prediction_zero_loss(self):
        assert cce_loss(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]])) == 0.0

    def test_uniform_prediction_is_ln2(self):
        loss = cce_loss(np.array([[0.5, 0.5]]), np.array([[0.0, 1.0]]))
        assert loss == pytest.approx(math.log(2.0), rel=1e-12)

    def test_hand_arithmetic_point_one(self):
        loss = cce_loss(np.array([[0.9, 0.1]]), np.array([[0.0, 1.0]]))
        assert loss == pytest.approx(-math.log(0.1), rel=1e-12)

    def test_clamp_prevents_infinity(self):
        loss = cce_loss(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
        assert loss == pytest.approx(-math.log(1e-12), rel=1e-12)

    def test_shape_and_onehot_validation(self):
        with pytest.raises(ShapeMismatchError):
            cce_loss(np.zeros((2, 2)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            cce_loss(np.full((1, 2), 0.5), np.array([[0.5, 0.5]]))


class TestBackward:
    def test_zero_gradients_when_probs_equal_targets(self):
        net = build_network(NetworkConfig(input_dim=3, hidden_dims=(4,), seed=8))
        x = np.random.default_rng(5).normal(size=(6, 3))
        y = np.zeros((6, 2))
        y[np.arange(6), np.random.default_rng(6).integers(0, 2, 6)] = 1.0
        _, cache = forward(net, x, train=True, rng=np.random.default_rng(0))
        cache.probs = y.copy()
        grads = backward(net, cache, y)
        for g in grads.weights + grads.biases:
            assert np.all(g == 0.0)

    def test_duplicated_batch_leaves_gradients_unchanged(self):
        cfg = NetworkConfig(input_dim=4, hidden_dims=(5,), dropout_rate=0.0, seed=3)
        net = build_network(cfg)
        x = np.random.default_rng(7).normal(size=(5, 4))
        y = np.zeros((5, 2))
        y[np.arange(5), np.random.default_rng(8).integers(0, 2, 5)] = 1.0
        _, cache = forward(net, x, train=True)
        single = backward(net, cache, y)
        _, cache2 = forward(net, np.vstack([x, x]), train=True)
        double = backward(net, cache2, np.vstack([y, y]))
        for a, b in zip(single.weights + single.biases, double.weights + double.biases):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_finite_difference_check_with_dropout(self):
        cfg = NetworkConfig(input_dim=4, hidden_dims=(3,), dropout_rate=0.25, seed=11)
        net = build_network(cfg)
        rng_data = np.random.default_rng(12)
        x = rng_data.uniform(-1, 1, size=(5, 4))
        y = np.zeros((5, 2))
        y[np.arange(5), rng_data.integers(0, 2, 5)] = 1.0
        _, cache = forward(net, x, train=True, rng=np.random.default_rng(13))
        analytic = backward(net, cache, y)
        fd_w, fd_b = fd_gradients(net.weights, net.biases, cache.masks, x, y)
        err = max_rel_error(analytic.weights + analytic.biases, fd_w + fd_b)
        assert err < 1e-6

    def test_stale_cache_rejected(self):
        net_a = build_network(NetworkConfig(input_dim=3, hidden_dims=(4,), seed=1))
        net_b = build_network(NetworkConfig(input_dim=3, hidden_dims=(4,), seed=2))
        x = np.zeros((2, 3))
        y = np.array([[1.0, 0.0], [0.0, 1.0]])
        _, cache = forward(net_a, x, train=True, rng=np.random.default_rng(0))
        with pytest.raises(StaleCacheError):
            backward(net_b, cache, y)
        with pytest.raises(StaleCacheError):
            backward(net_a, None, y)


class TestRmsprop:
    def cfg(self):
        return TrainConfig(learning_rate=0.001, rms_decay=0.9, rms_epsilon=1e-7)

    def test_zero_gradient_is_identity(self):
        params = [np.array([1.0, -2.0, 3.0])]
        state = [np.array([0.5, 0.5, 0.5])]
        new_params, new_state = rmsprop_step(params, [np.zeros(3)], state, self.cfg())
        assert np.array_equal(new_params[0], params[0])
        assert np.allclose(new_state[0], 0.9 * state[0])

    def test_hand_arithmetic_first_step(self):
        new_params, new_state = rmsprop_step(
            [np.array([0.0])], [np.array([1.0])], [np.array([0.0])], self.cfg()
        )
        assert new_state[0][0] == pytest.approx(0.1, rel=1e-15)
        expected = -0.001 / (math.sqrt(0.1) + 1e-7)
        assert new_params[0][0] == pytest.approx(expected, rel=1e-14)
        assert new_params[0][0] == pytest.approx(-0.00316227, abs=1e-8)

    def test_hand_arithmetic_second_step(self):
        params, state = rmsprop_step(
            [np.array([0.0])], [np.array([1.0])], [np.array([0.0])], self.cfg()
        )
        params, state = rmsprop_step(params, [np.array([1.0])], state, self.cfg())
        assert state[0][0] == pytest.approx(0.19, rel=1e-14)
        theta1 = -0.001 / (math.sqrt(0.1) + 1e-7)
        expected = theta1 - 0.001 / (math.sqrt(0.19) + 1e-7)
        assert params[0][0] == pytest.approx(expected, rel=1e-14)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            rmsprop_step([np.zeros(3)], [np.zeros(4)], [np.zeros(3)], self.cfg())

    def test_invalid_train_config_rejected(self):
        with pytest.raises(InvalidConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(InvalidConfigError):
            TrainConfig(rms_decay=1.0)
        with pytest.raises(InvalidConfigError):
            TrainConfig(rms_epsilon=0.0)


def separable_problem(n=400, seed=0):
    rng = np.random.default_rng(seed)
    benign = rng.normal(loc=-2.0, scale=0.5, size=(n // 2, 4))
    attack = rng.normal(loc=2.0, scale=0.5, size=(n // 2, 4))
    x = np.vstack([benign, attack])
    y = np.zeros((n, 2))
    y[: n // 2, 0] = 1.0
    y[n // 2 :, 1] = 1.0
    return x, y


class TestTrain:
    def test_bit_identical_histories_for_same_seeds(self):
        x, y = separable_problem(200, seed=1)
        histories = []
        for _ in range(2):
            net = build_network(NetworkConfig(input_dim=4, hidden_dims=(8,), seed=3))
            _, hist = train(net, x, y, x, y, TrainConfig(epochs=3, seed=4))
            histories.append(hist)
        assert histories[0].records == histories[1].records

    def test_learns_separable_problem(self):
        x, y = separable_problem(400, seed=2)
        net = build_network(NetworkConfig(input_dim=4, hidden_dims=(8, 8), seed=0))
        _, hist = train(net, x, y, x, y, TrainConfig(epochs=10, seed=0))
        assert hist.records[-1].val_acc >= 0.99
        assert hist.records[-1].train_loss < hist.records[0].train_loss

    def test_one_record_per_epoch(self):
        x, y = separable_problem(60, seed=3)
        net = build_network(NetworkConfig(input_dim=4, hidden_dims=(5,), seed=1))
        _, hist = train(net, x, y, x, y, TrainConfig(epochs=7, seed=1))
        assert len(hist) == 7
        assert [r.epoch for r in hist.records] == list(range(1, 8))


class TestPredict:
    def test_tie_goes_to_benign(self):
        net = zero_network(NetworkConfig(input_dim=3, hidden_dims=(4,)))
        label, prob = predict(net, np.array([1.0, 2.0, 3.0]))
        assert label == 0
        assert prob == 0.5

    def test_agrees_with_forward_argmax(self):
        net = build_network(NetworkConfig(input_dim=6, hidden_dims=(8,), seed=9))
        rng = np.random.default_rng(10)
        for _ in range(20):
            x = rng.normal(size=6)
            label, prob = predict(net, x)
            probs, _ = forward(net, x.reshape(1, -1))
            assert label == int(np.argmax(probs[0]))
            assert prob == probs[0, label]

    def test_batch_consistency(self):
        net = build_network(NetworkConfig(input_dim=5, hidden_dims=(6,), seed=2))
        x = np.random.default_rng(11).normal(size=(9, 5))
        labels, probs = predict_batch(net, x)
        for i in range(9):
            label, prob = predict(net, x[i])
            assert labels[i] == label and probs[i] == prob

    def test_width_mismatch_rejected(self):
        net = build_network(NetworkConfig())
        with pytest.raises(ShapeMismatchError):
            predict(net, np.zeros(5))


class TestPersistence:
    def test_round_trip_is_exact(self, tmp_path):
        net = build_network(NetworkConfig(seed=13))
        path = tmp_path / "model.txt"
        save_model(net, path)
        loaded = load_model(path)
        assert parameter_count(loaded) == 9730
        assert loaded.config == net.config
        for a, b in zip(net.weights + net.biases, loaded.weights + loaded.biases):
            assert np.array_equal(a, b)
        x = np.random.default_rng(1).normal(size=(5, 19))
        original, _ = forward(net, x)
        reloaded, _ = forward(loaded, x)
        assert np.array_equal(original, reloaded)

    def test_truncated_file_rejected(self, tmp_path):
        net = build_network(NetworkConfig(input_dim=3, hidden_dims=(4,), seed=0))
        path = tmp_path / "model.txt"
        save_model(net, path)
        lines = path.read_text().splitlines()
        (tmp_path / "cut.txt").write_text("\n".join(lines[: len(lines) // 2]) + "\n")
        with pytest.raises(CorruptFileError):
            load_model(tmp_path / "cut.txt")

    def test_unknown_version_rejected(self, tmp_path):
        net = build_network(NetworkConfig(input_dim=3, hidden_dims=(4,), seed=0))
        path = tmp_path / "model.txt"
        save_model(net, path)
        text = path.read_text().replace("ddosdet-model v1", "ddosdet-model v9", 1)
        (tmp_path / "v9.txt").write_text(text)
        with pytest.raises(VersionMismatchError):
            load_model(tmp_path / "v9.txt")

    def test_non_model_file_rejected(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("hello\nworld\n")
        with pytest.raises(CorruptFileError):
            load_model(path)
