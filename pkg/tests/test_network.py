"""Trainer tests on toy float networks plus device-tile integration.

The backprop path is validated entry-by-entry against central finite
differences of the loss; the float forward pass against a hand-rolled
matmul chain written out in the test.
"""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from xbartrain.dataset import Dataset
from xbartrain.device import DeviceVariation
from xbartrain.network import (
    DeviceConfig,
    EpochRecord,
    Network,
    TrainerConfig,
    activation,
    activation_deriv,
    learning_rate,
    make_network,
    softmax,
    train,
)
from xbartrain.tile import AnalogConfig, FloatTile, PulseUpdateConfig

TOY = TrainerConfig(layer_sizes=(6, 4, 3, 2), epochs=3, lr0=0.1, seed=1)


def float_net(cfg: TrainerConfig, seed: int = 0) -> Network:
    rng = np.random.default_rng(seed)
    tiles = []
    for k in range(3):
        rows = cfg.layer_sizes[k] + (1 if cfg.bias else 0)
        cols = cfg.layer_sizes[k + 1]
        w = rng.uniform(-0.7, 0.7, size=(rows, cols))
        tiles.append(FloatTile(rows, cols, init=w))
    return Network(tiles, activation_kind=cfg.activation, bias=cfg.bias)


def toy_dataset(n: int, pixels: int, classes: int, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, size=n).astype(np.int64)
    centers = rng.uniform(0.2, 0.8, size=(classes, pixels))
    images = np.clip(
        centers[labels] + 0.05 * rng.standard_normal((n, pixels)), 0, 1
    ).astype(np.float32)
    return Dataset(images, labels)


class TestActivations:
    def test_sigmoid_values(self):
        assert activation("sigmoid", 0.0) == 0.5
        assert_allclose(activation("sigmoid", np.log(3.0)), 0.75, rtol=1e-12)
        # No overflow at extreme inputs.
        assert activation("sigmoid", -1000.0) == 0.0
        assert activation("sigmoid", 1000.0) == 1.0

    def test_tanh_odd(self):
        x = np.linspace(-3, 3, 13)
        assert_allclose(
            activation("tanh", -x), -activation("tanh", x), rtol=0, atol=1e-15
        )

    def test_derivative_matches_finite_differences(self):
        h = 1e-6
        for kind in ("sigmoid", "tanh"):
            for x in (-2.0, 0.0, 2.0):
                fd = (activation(kind, x + h) - activation(kind, x - h)) / (2 * h)
                analytic = activation_deriv(kind, activation(kind, x))
                assert_allclose(analytic, fd, rtol=0, atol=1e-9)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            activation("relu", 0.0)
        with pytest.raises(ValueError):
            activation_deriv("relu", 0.0)


class TestSoftmax:
    def test_normalization(self):
        rng = np.random.default_rng(0)
        z = rng.uniform(-5, 5, size=(20, 10))
        p = softmax(z)
        assert_allclose(p.sum(axis=1), np.ones(20), rtol=0, atol=1e-12)
        assert np.all(p > 0)

    def test_shift_invariance_and_overflow(self):
        z = np.array([1000.0, 999.0, 0.0])
        p = softmax(z)
        assert np.all(np.isfinite(p))
        assert_allclose(p, softmax(z - 1000.0), rtol=1e-12)


class TestSchedule:
    def test_halving_every_10(self):
        cfg = TrainerConfig(layer_sizes=(4, 3, 3, 2), lr0=0.01)
        lrs = [learning_rate(cfg, e) for e in range(30)]
        assert lrs[:10] == [0.01] * 10
        assert_allclose(lrs[10:20], [0.005] * 10, rtol=1e-15)
        assert_allclose(lrs[20:30], [0.0025] * 10, rtol=1e-15)


class TestForward:
    def test_matches_hand_rolled_mlp(self):
        cfg = TOY
        net = float_net(cfg, seed=2)
        ws = [t.device_weights for t in net.tiles]
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 1, size=6)
        a = x
        for k, w in enumerate(ws):
            z = np.concatenate([a, [1.0]]) @ w
            a = 1.0 / (1.0 + np.exp(-z)) if k < 2 else z
        expected = np.exp(a - a.max())
        expected /= expected.sum()
        assert_allclose(net.forward_pass(x), expected, rtol=1e-12)

    def test_device_tile_ideal_mode_matches_float(self):
        cfg = TrainerConfig(layer_sizes=(6, 4, 3, 2), seed=4)
        dev = DeviceConfig(
            kind="softbound",
            dw0=0.01,
            w_max=4.0,
            variation=DeviceVariation.none(),
            analog=AnalogConfig.ideal(),
        )
        net_dev = make_network(cfg, dev)
        net_flt = make_network(cfg, DeviceConfig(kind="float"))
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 1, size=6)
        assert_allclose(net_dev.forward_pass(x), net_flt.forward_pass(x), rtol=1e-10)

    def test_zero_weights_give_uniform_probs(self):
        tiles = [FloatTile(7, 5), FloatTile(6, 4), FloatTile(5, 10)]
        net = Network(tiles)
        probs = net.forward_pass(np.ones(6))
        assert_allclose(probs, np.full(10, 0.1), rtol=0, atol=1e-15)
        assert_allclose(net.loss(np.ones(6), 3), np.log(10.0), rtol=1e-12)

    def test_predict_and_evaluate(self):
        tile = FloatTile(3, 2, init=np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
        net = Network([tile])
        data = Dataset(
            np.array([[0.9, 0.1], [0.2, 0.8]], dtype=np.float32),
            np.array([0, 1], dtype=np.int64),
        )
        assert net.predict(data.images).tolist() == [0, 1]
        assert net.evaluate(data) == 0.0
        flipped = Dataset(data.images, np.array([1, 0], dtype=np.int64))
        assert net.evaluate(flipped) == 100.0


class TestGradients:
    def grad_check(self, activation_kind: str, seed: int):
        cfg = TrainerConfig(layer_sizes=(6, 4, 3, 2), activation=activation_kind)
        net = float_net(cfg, seed=seed)
        rng = np.random.default_rng(seed + 100)
        x = rng.uniform(0, 1, size=6)
        label = int(rng.integers(0, 2))

        before = [t.device_weights.copy() for t in net.tiles]
        net.train_step(x, label, lr=1.0, rng=np.random.default_rng(0))
        grads = [b - t.device_weights for b, t in zip(before, net.tiles)]
        for t, b in zip(net.tiles, before):
            t.device_weights = b.copy()

        h = 1e-5
        worst = 0.0
        for k, tile in enumerate(net.tiles):
            w = tile.device_weights
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    orig = w[i, j]
                    w[i, j] = orig + h
                    lp = net.loss(x, label)
                    w[i, j] = orig - h
                    lm = net.loss(x, label)
                    w[i, j] = orig
                    fd = (lp - lm) / (2 * h)
                    ga = grads[k][i, j]
                    err = abs(ga - fd) / max(1e-6, abs(ga), abs(fd))
                    worst = max(worst, err)
        return worst

    def test_sigmoid_gradients(self):
        assert self.grad_check("sigmoid", seed=6) < 1e-4

    def test_tanh_gradients(self):
        assert self.grad_check("tanh", seed=7) < 1e-4

    def test_output_delta_is_probs_minus_onehot(self):
        cfg = TOY
        net = float_net(cfg, seed=8)
        x = np.random.default_rng(9).uniform(0, 1, size=6)
        label = 1
        probs = net.forward_pass(x)
        last_in = None
        a = x
        for k, t in enumerate(net.tiles[:-1]):
            z = np.concatenate([a, [1.0]]) @ t.device_weights
            a = activation("sigmoid", z)
        last_in = np.concatenate([a, [1.0]])
        before = net.tiles[-1].device_weights.copy()
        lr = 0.3
        net.train_step(x, label, lr, np.random.default_rng(10))
        onehot = np.eye(2)[label]
        expected = before - lr * np.outer(last_in, probs - onehot)
        assert_allclose(net.tiles[-1].device_weights, expected, rtol=1e-12)

    def test_repeated_step_drives_loss_down(self):
        net = float_net(TOY, seed=11)
        x = np.random.default_rng(12).uniform(0, 1, size=6)
        rng = np.random.default_rng(13)
        losses = [net.train_step(x, 0, 0.1, rng) for _ in range(50)]
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-12)
        assert losses[-1] < losses[0]


class TestTrainLoop:
    def test_records_and_eval_cadence(self):
        data = toy_dataset(24, 6, 2, seed=14)
        test = toy_dataset(12, 6, 2, seed=15)
        cfg = TrainerConfig(
            layer_sizes=(6, 4, 3, 2), epochs=3, lr0=0.1, seed=16,
            eval_every_epoch=False,
        )
        net = make_network(cfg, DeviceConfig(kind="float"))
        records = train(net, data, test, cfg)
        assert [r.epoch for r in records] == [0, 1, 2]
        assert np.isnan(records[0].test_error_pct)
        assert np.isnan(records[1].test_error_pct)
        assert np.isfinite(records[2].test_error_pct)
        assert all(np.isfinite(r.train_loss) for r in records)
        assert all(len(r.weights) == 3 for r in records)

    def test_training_deterministic(self):
        data = toy_dataset(20, 6, 2, seed=17)
        test = toy_dataset(10, 6, 2, seed=18)
        cfg = TrainerConfig(layer_sizes=(6, 4, 3, 2), epochs=2, lr0=0.05, seed=19)
        dev = DeviceConfig(kind="softbound", dw0=0.02, w_max=1.0)
        runs = []
        for _ in range(2):
            net = make_network(cfg, dev)
            records = train(net, data, test, cfg)
            runs.append(
                (
                    [r.test_error_pct for r in records],
                    [r.train_loss for r in records],
                    [t.read_weights().copy() for t in net.tiles],
                )
            )
        assert runs[0][0] == runs[1][0]
        assert runs[0][1] == runs[1][1]
        for wa, wb in zip(runs[0][2], runs[1][2]):
            assert np.array_equal(wa, wb)

    def test_float_toy_problem_learns(self):
        data = toy_dataset(60, 6, 2, seed=20)
        cfg = TrainerConfig(layer_sizes=(6, 4, 3, 2), epochs=20, lr0=0.5, seed=21)
        net = make_network(cfg, DeviceConfig(kind="float"))
        records = train(net, data, data, cfg)
        assert records[-1].test_error_pct < 10.0
        assert records[-1].train_loss < records[0].train_loss


class TestMakeNetwork:
    def test_tile_shapes_and_bias_row(self):
        cfg = TrainerConfig(layer_sizes=(6, 4, 3, 2), seed=22)
        net = make_network(cfg, DeviceConfig(kind="softbound"))
        assert [(t.rows, t.cols) for t in net.tiles] == [(7, 4), (5, 3), (4, 2)]
        no_bias = TrainerConfig(layer_sizes=(6, 4, 3, 2), seed=22, bias=False)
        net2 = make_network(no_bias, DeviceConfig(kind="softbound"))
        assert [(t.rows, t.cols) for t in net2.tiles] == [(6, 4), (4, 3), (3, 2)]

    def test_init_within_fan_in_limit(self):
        cfg = TrainerConfig(layer_sizes=(16, 8, 8, 4), seed=23)
        net = make_network(cfg, DeviceConfig(kind="float"))
        for t in net.tiles:
            lim = 1.0 / np.sqrt(t.rows)
            assert np.all(np.abs(t.read_weights()) <= lim)

    def test_zero_shift_programs_init_on_references(self):
        cfg = TrainerConfig(layer_sizes=(6, 4, 3, 2), seed=24)
        dev = DeviceConfig(
            kind="softbound", dw0=0.01, w_max=2.0, w_sym=0.5,
            zero_shift=True, calibration_pairs=2000,
            variation=DeviceVariation(0.3, 0.3, 0.0),
        )
        net = make_network(cfg, dev)
        plain = make_network(cfg, DeviceConfig(kind="float"))
        for t, f in zip(net.tiles, plain.tiles):
            # References hold the converged per-device symmetry states.
            resid = np.abs(t.reference_weights - t.symmetry_points())
            assert resid.max() < 3 * dev.dw0
            assert t.reference_weights.std() > 0
            # Initial effective weights match the float init (same seed).
            assert_allclose(t.read_weights(), f.read_weights(), atol=1e-10)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainerConfig(layer_sizes=(4, 3, 2))
        with pytest.raises(ValueError):
            TrainerConfig(layer_sizes=(4, 3, 3, 2), activation="relu")
        with pytest.raises(ValueError):
            TrainerConfig(layer_sizes=(4, 3, 3, 2), lr0=-1.0)
        with pytest.raises(ValueError):
            DeviceConfig(kind="quantum")
        with pytest.raises(ValueError):
            DeviceConfig(calibration_pairs=0)
        with pytest.raises(ValueError):
            EpochRecord(0, 150.0, 1.0, [])
        assert np.isnan(EpochRecord(0, float("nan"), 1.0, []).test_error_pct)
