"""Fully-connected classifier trained directly on crossbar tiles.

Three trainable layers, sigmoid or tanh hidden activations, softmax
cross-entropy loss, plain SGD with batch size 1.  Each layer is one tile;
biases are an extra always-1 input row per tile.  Forward, backward, and
the rank-1 weight updates all go through the tile interface, so the same
trainer runs on ideal float tiles or on simulated device tiles with full
analog non-idealities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import zero_shift_calibrate
from .dataset import Dataset, shuffled_indices
from .device import DeviceVariation, SoftBoundParams, params_from_imbalance
from .tile import AnalogConfig, CrossbarTile, FloatTile, PulseUpdateConfig, new_tile

__all__ = [
    "TrainerConfig",
    "DeviceConfig",
    "EpochRecord",
    "WeightSummary",
    "Network",
    "activation",
    "activation_deriv",
    "softmax",
    "learning_rate",
    "make_network",
    "train",
]


@dataclass(frozen=True)
class TrainerConfig:
    """Training protocol settings."""

    layer_sizes: tuple[int, ...] = (784, 256, 128, 10)
    activation: str = "sigmoid"
    epochs: int = 30
    lr0: float = 0.01
    lr_decay: float = 0.5
    lr_decay_every: int = 10
    seed: int = 0
    eval_every_epoch: bool = True
    bias: bool = True

    def __post_init__(self) -> None:
        if len(self.layer_sizes) != 4:
            raise ValueError(
                f"expected 4 layer sizes (3 trainable layers), got {self.layer_sizes}"
            )
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be >= 1, got {self.layer_sizes}")
        if self.activation not in ("sigmoid", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not (0 < self.lr_decay <= 1) or self.lr_decay_every < 1:
            raise ValueError("invalid learning-rate schedule")


@dataclass(frozen=True)
class DeviceConfig:
    """Device and analog settings for the tiles of one network."""

    kind: str = "softbound"  # "float" | "linear" | "softbound"
    dw0: float = 0.01        # mean step magnitude at w=0
    w_max: float = 2.0       # symmetric bounds +-w_max
    w_sym: float = 0.0       # target symmetry point, weight units
    zero_shift: bool = False
    calibration_pairs: int = 1000
    variation: DeviceVariation = field(default_factory=DeviceVariation)
    analog: AnalogConfig = field(default_factory=AnalogConfig)
    pulses: PulseUpdateConfig = field(default_factory=PulseUpdateConfig)

    def __post_init__(self) -> None:
        if self.kind not in ("float", "linear", "softbound"):
            raise ValueError(f"unknown device kind {self.kind!r}")
        if self.calibration_pairs < 1:
            raise ValueError("calibration_pairs must be >= 1")

    def nominal_params(self) -> SoftBoundParams:
        return params_from_imbalance(self.dw0, self.w_max, self.w_sym)


@dataclass
class WeightSummary:
    """Distribution summary of one layer's effective weights."""

    mean: float
    std: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray


@dataclass
class EpochRecord:
    """Per-epoch training metrics.

    ``test_error_pct`` is NaN for epochs where evaluation was skipped.
    """

    epoch: int
    test_error_pct: float
    train_loss: float
    weights: list[WeightSummary]

    def __post_init__(self) -> None:
        if np.isfinite(self.test_error_pct) and not (
            0.0 <= self.test_error_pct <= 100.0
        ):
            raise ValueError(f"test error {self.test_error_pct} outside [0, 100]")


def activation(kind: str, x):
    """Hidden-layer nonlinearity: logistic sigmoid or tanh."""
    x = np.asarray(x, dtype=float)
    if kind == "sigmoid":
        # Split by sign to avoid overflow in exp for large |x|.
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_deriv(kind: str, value):
    """Derivative expressed through the activation value itself."""
    value = np.asarray(value, dtype=float)
    if kind == "sigmoid":
        return value * (1.0 - value)
    if kind == "tanh":
        return 1.0 - value * value
    raise ValueError(f"unknown activation {kind!r}")


def softmax(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def learning_rate(cfg: TrainerConfig, epoch: int) -> float:
    """LR schedule: lr0 * decay^(epoch // every), epochs counted from 0."""
    return cfg.lr0 * cfg.lr_decay ** (epoch // cfg.lr_decay_every)


class Network:
    """A stack of tiles with activations between them."""

    def __init__(self, tiles, activation_kind: str = "sigmoid", bias: bool = True):
        if len(tiles) < 1:
            raise ValueError("network needs at least one tile")
        self.tiles = list(tiles)
        self.activation_kind = activation_kind
        self.bias = bias

    def _with_bias(self, a: np.ndarray) -> np.ndarray:
        if not self.bias:
            return a
        if a.ndim == 1:
            return np.concatenate([a, [1.0]])
        return np.concatenate([a, np.ones((a.shape[0], 1))], axis=1)

    def _forward_full(self, x):
        """All layer inputs and post-activation outputs for one sample."""
        inputs = []
        a = np.asarray(x, dtype=float)
        last = len(self.tiles) - 1
        for k, tile in enumerate(self.tiles):
            xin = self._with_bias(a)
            inputs.append(xin)
            z = tile.forward(xin)
            a = activation(self.activation_kind, z) if k < last else z
        return inputs, a

    def forward_pass(self, x) -> np.ndarray:
        """Class probabilities for one image (softmax over the scores)."""
        _, scores = self._forward_full(x)
        return softmax(scores)

    def loss(self, x, label: int) -> float:
        """Cross-entropy loss of one sample at the current weights."""
        probs = self.forward_pass(x)
        return float(-np.log(max(probs[int(label)], 1e-300)))

    def train_step(self, x, label: int, lr: float, rng: np.random.Generator) -> float:
        """One SGD step: forward, backprop through tile reads, rank-1 updates.

        The output delta is softmax probabilities minus the one-hot label;
        hidden deltas come from tile backward reads times the activation
        derivative.  All deltas are computed against the pre-update weights
        and only then applied, so the step is plain SGD.
        """
        inputs, scores = self._forward_full(x)
        probs = softmax(scores)
        loss = float(-np.log(max(probs[int(label)], 1e-300)))
        delta = probs.copy()
        delta[int(label)] -= 1.0
        deltas = [None] * len(self.tiles)
        deltas[-1] = delta
        for k in range(len(self.tiles) - 1, 0, -1):
            back = self.tiles[k].backward(deltas[k])
            if self.bias:
                back = back[:-1]  # bias row has no upstream neuron
            a_prev = inputs[k][:-1] if self.bias else inputs[k]
            deltas[k - 1] = back * activation_deriv(self.activation_kind, a_prev)
        for k, tile in enumerate(self.tiles):
            tile.update(inputs[k], -deltas[k], lr, rng)
        return loss

    def predict(self, images) -> np.ndarray:
        """Predicted labels for a batch of images."""
        a = np.asarray(images, dtype=float)
        last = len(self.tiles) - 1
        for k, tile in enumerate(self.tiles):
            z = tile.forward(self._with_bias(a))
            a = activation(self.activation_kind, z) if k < last else z
        return np.argmax(a, axis=-1)

    def evaluate(self, dataset: Dataset) -> float:
        """Test error in percent over a dataset."""
        pred = self.predict(dataset.images)
        return float(100.0 * np.mean(pred != dataset.labels))

    def weight_summaries(self, bins: int = 50) -> list[WeightSummary]:
        out = []
        for tile in self.tiles:
            w = tile.read_weights().ravel()
            counts, edges = np.histogram(w, bins=bins)
            out.append(
                WeightSummary(
                    mean=float(w.mean()),
                    std=float(w.std()),
                    hist_counts=counts,
                    hist_edges=edges,
                )
            )
        return out


def make_network(cfg: TrainerConfig, dev: DeviceConfig) -> Network:
    """Build tiles per the device config, calibrate, and initialize.

    Zero-shifting calibration (when enabled) runs before weight init; the
    initial weights are then programmed as effective values on top of the
    calibrated references, uniform in +-1/sqrt(fan_in) and clipped to
    device bounds.
    """
    n_layers = len(cfg.layer_sizes) - 1
    root = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0x10,))
    tile_seeds = root.generate_state(n_layers, dtype=np.uint64)
    init_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0x11,))
    )
    calib_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0x12,))
    )
    tiles = []
    for k in range(n_layers):
        rows = cfg.layer_sizes[k] + (1 if cfg.bias else 0)
        cols = cfg.layer_sizes[k + 1]
        lim = 1.0 / np.sqrt(rows)
        init = init_rng.uniform(-lim, lim, size=(rows, cols))
        if dev.kind == "float":
            tiles.append(FloatTile(rows, cols, init=init))
            continue
        tile = new_tile(
            rows,
            cols,
            dev.nominal_params(),
            dev.variation,
            dev.analog,
            dev.pulses,
            init_spec=None,
            seed=int(tile_seeds[k]),
            kind=dev.kind,
        )
        if dev.zero_shift:
            zero_shift_calibrate(
                tile, dev.calibration_pairs, calib_rng, diagnostics=False
            )
        tile.program_effective_weights(init)
        tiles.append(tile)
    return Network(tiles, activation_kind=cfg.activation, bias=cfg.bias)


def train(
    net: Network, train_data: Dataset, test_data: Dataset, cfg: TrainerConfig
) -> list[EpochRecord]:
    """Run the full SGD protocol and return one record per epoch.

    Every epoch shuffles the training set with a seeded permutation, feeds
    all samples one at a time, then evaluates on the test set (every epoch
    or only at the end, per config).
    """
    update_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0x13,))
    )
    records = []
    for epoch in range(cfg.epochs):
        lr = learning_rate(cfg, epoch)
        order = shuffled_indices(len(train_data.labels), epoch, cfg.seed)
        total = 0.0
        for idx in order:
            total += net.train_step(
                train_data.images[idx], int(train_data.labels[idx]), lr, update_rng
            )
        evaluate_now = cfg.eval_every_epoch or epoch == cfg.epochs - 1
        err = net.evaluate(test_data) if evaluate_now else float("nan")
        records.append(
            EpochRecord(
                epoch=epoch,
                test_error_pct=err,
                train_loss=total / len(order),
                weights=net.weight_summaries(),
            )
        )
    return records
