"""Crossbar tiles: device matrices with analog reads and pulse updates.

A tile models one weight matrix as a grid of simulated synapse devices
paired with a same-shaped reference matrix; the effective weight is
``device - reference`` elementwise.  The reference array is fixed during
training and reprogrammed only by calibration, which parks each device at
its symmetry point and copies the result so that logical zero coincides
with the physical symmetry point.

Reads (forward and backward) model the analog pipeline: a DAC quantizes
the input vector, the multiply happens in float on the effective weights,
Gaussian read noise is added per output, and an ADC quantizes the result
with saturation.  Updates are parallel rank-1 pulse updates: row and
column pulse trains fire stochastically with probabilities proportional to
|x| and |delta|, and a device receives a pulse exactly when its row and
column fire in the same slot.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .device import DeviceVariation, Direction, SoftBoundParams

__all__ = [
    "AnalogConfig",
    "PulseUpdateConfig",
    "CrossbarTile",
    "FloatTile",
    "new_tile",
    "uniform_midrise",
]


@dataclass(frozen=True)
class AnalogConfig:
    """Read-path non-idealities.

    Inputs are expected in [-1, 1] and quantized by a ``dac_bits`` uniform
    quantizer; outputs get additive Gaussian noise and a ``adc_bits``
    quantizer saturating at ``+-adc_full_scale``.  ``ideal_mode`` disables
    the whole pipeline and reads become exact float products.
    """

    dac_bits: int = 5
    adc_bits: int = 9
    adc_full_scale: float = 12.0
    read_noise_std: float = 0.06
    ideal_mode: bool = False

    def __post_init__(self) -> None:
        if self.dac_bits < 1 or self.adc_bits < 1:
            raise ValueError("converter resolutions must be >= 1 bit")
        if self.adc_full_scale <= 0:
            raise ValueError("adc_full_scale must be positive")
        if self.read_noise_std < 0:
            raise ValueError("read_noise_std must be >= 0")

    @classmethod
    def ideal(cls) -> "AnalogConfig":
        return cls(ideal_mode=True)


@dataclass(frozen=True)
class PulseUpdateConfig:
    """Rank-1 update settings: pulse-train length BL and pulsing scheme."""

    train_length: int = 10
    scheme: str = "stochastic"  # "stochastic" | "deterministic"

    def __post_init__(self) -> None:
        if self.train_length < 1:
            raise ValueError("train_length must be >= 1")
        if self.scheme not in ("stochastic", "deterministic"):
            raise ValueError(f"unknown update scheme {self.scheme!r}")


def uniform_midrise(x, bits: int, full_scale: float):
    """Uniform mid-rise quantizer over [-full_scale, full_scale].

    Step size is 2F/2^bits; output levels sit at half-integer multiples of
    the step, so zero input maps to +step/2 and the extreme levels are
    +-(F - step/2).  Quantizing an already-quantized value is the identity.
    """
    step = 2.0 * full_scale / (1 << bits)
    q = step * (np.floor(np.asarray(x, dtype=float) / step) + 0.5)
    top = full_scale - step / 2.0
    return np.clip(q, -top, top)


def _sample_param_grid(
    nominal: SoftBoundParams,
    var: DeviceVariation,
    rng: np.random.Generator,
    rows: int,
    cols: int,
):
    """Vectorized device-to-device sampling for a whole tile.

    Draw order matches per-device scalar sampling (four normals per device,
    row-major), so a grid equals a loop of single-device draws on the same
    generator.  Multipliers are clamped at 0.01 to preserve signs and step
    magnitudes are capped below their sampled bound.
    """
    draws = rng.standard_normal((rows, cols, 4))
    m = np.empty((rows, cols, 4))
    m[..., 0] = 1.0 + var.dtod_dw0_std * draws[..., 0]
    m[..., 1] = 1.0 + var.dtod_dw0_std * draws[..., 1]
    m[..., 2] = 1.0 + var.dtod_bound_std * draws[..., 2]
    m[..., 3] = 1.0 + var.dtod_bound_std * draws[..., 3]
    np.maximum(m, 0.01, out=m)
    w_max = nominal.w_max * m[..., 2]
    w_min = -abs(nominal.w_min) * m[..., 3]
    dw0_plus = np.minimum(nominal.dw0_plus * m[..., 0], 0.99 * w_max)
    dw0_minus = np.minimum(nominal.dw0_minus * m[..., 1], 0.99 * (-w_min))
    return dw0_plus, dw0_minus, w_max, w_min


class CrossbarTile:
    """One crossbar weight matrix of simulated devices plus its reference.

    Construct through :func:`new_tile`; the constructor takes explicit
    per-device parameter arrays (used by deserialization and tests).
    ``kind`` selects the update model: "softbound" or "linear" (constant
    step with hard bounds, using the same per-device parameter arrays).
    """

    def __init__(
        self,
        dw0_plus: np.ndarray,
        dw0_minus: np.ndarray,
        w_max: np.ndarray,
        w_min: np.ndarray,
        *,
        kind: str = "softbound",
        nominal: SoftBoundParams,
        variation: DeviceVariation,
        analog: AnalogConfig,
        pulses: PulseUpdateConfig,
        seed: int,
    ) -> None:
        if kind not in ("softbound", "linear"):
            raise ValueError(f"unknown device kind {kind!r}")
        shape = np.shape(dw0_plus)
        if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
            raise ValueError(f"tile needs a 2-D device grid, got shape {shape}")
        for name, arr in (
            ("dw0_minus", dw0_minus),
            ("w_max", w_max),
            ("w_min", w_min),
        ):
            if np.shape(arr) != shape:
                raise ValueError(f"{name} shape {np.shape(arr)} != {shape}")
        self.kind = kind
        self.rows, self.cols = shape
        self.dw0_plus = np.array(dw0_plus, dtype=float)
        self.dw0_minus = np.array(dw0_minus, dtype=float)
        self.w_max = np.array(w_max, dtype=float)
        self.w_min = np.array(w_min, dtype=float)
        self.nominal = nominal
        self.variation = variation
        self.analog = analog
        self.pulses = pulses
        self.seed = seed
        self.device_weights = np.zeros(shape)
        self.reference_weights = np.zeros(shape)
        # Read noise has its own stream so that update reproducibility does
        # not depend on how many evaluations happen in between.
        self._read_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(0xA0,))
        )

    # -- state access -------------------------------------------------

    @property
    def dw0_nominal(self) -> float:
        """Mean nominal step magnitude; sets the update probability scale."""
        return 0.5 * (self.nominal.dw0_plus + self.nominal.dw0_minus)

    def read_weights(self) -> np.ndarray:
        """Noise-free effective weights (device - reference)."""
        return self.device_weights - self.reference_weights

    def set_reference(self, values) -> None:
        """Overwrite the reference matrix (modeled as an exact write)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.rows, self.cols):
            raise ValueError(f"reference shape {values.shape} != {(self.rows, self.cols)}")
        if not np.all(np.isfinite(values)):
            raise ValueError("reference values must be finite")
        lo, hi = self.w_min.min(), self.w_max.max()
        if values.min() < lo or values.max() > hi:
            raise ValueError(f"reference values outside device range [{lo}, {hi}]")
        self.reference_weights = values.copy()

    def program_effective_weights(self, values) -> None:
        """Program devices so that effective weights approximate ``values``.

        Device conductances are set to reference + values, clipped to each
        device's own bounds (an ideal write, like ``set_reference``); the
        realized effective weight can deviate where clipping engages.
        """
        values = np.asarray(values, dtype=float)
        if values.shape != (self.rows, self.cols):
            raise ValueError(f"weight shape {values.shape} != {(self.rows, self.cols)}")
        self.device_weights = np.clip(
            self.reference_weights + values, self.w_min, self.w_max
        )

    def symmetry_points(self) -> np.ndarray:
        """Analytic per-device symmetry points (diagnostics only).

        Calibration must never use this; it exists for reports and tests.
        Linear devices have no convergence point, so the result is NaN.
        """
        if self.kind != "softbound":
            return np.full((self.rows, self.cols), np.nan)
        a = self.dw0_plus / self.w_max
        b = self.dw0_minus / (-self.w_min)
        return (a * self.w_max + b * self.w_min) / (a + b)

    # -- analog reads ---------------------------------------------------

    def forward(self, x, rng: np.random.Generator | None = None) -> np.ndarray:
        """Analog read y = W_eff^T x for one input vector or a batch.

        Accepts shape (rows,) or (n, rows).  In ideal mode this is the
        exact float product; otherwise the DAC/noise/ADC pipeline applies.
        """
        return self._read(x, transpose=False, rng=rng)

    def backward(self, d, rng: np.random.Generator | None = None) -> np.ndarray:
        """Transpose read y = W_eff d, same pipeline as forward."""
        return self._read(d, transpose=True, rng=rng)

    def _read(self, v, transpose: bool, rng: np.random.Generator | None) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        expect = self.cols if transpose else self.rows
        if v.shape[-1] != expect or v.ndim not in (1, 2):
            raise ValueError(f"input shape {v.shape} incompatible with {expect} lines")
        w = self.device_weights - self.reference_weights
        if self.analog.ideal_mode:
            return v @ w.T if transpose else v @ w
        vq = uniform_midrise(v, self.analog.dac_bits, 1.0)
        y = vq @ w.T if transpose else vq @ w
        if self.analog.read_noise_std > 0:
            gen = rng if rng is not None else self._read_rng
            y = y + self.analog.read_noise_std * gen.standard_normal(y.shape)
        return uniform_midrise(y, self.analog.adc_bits, self.analog.adc_full_scale)

    # -- pulse updates --------------------------------------------------

    def update(self, x, delta, lr: float, rng: np.random.Generator) -> None:
        """Rank-1 update dispatching on the configured pulsing scheme."""
        if self.pulses.scheme == "stochastic":
            self.stochastic_update(x, delta, lr, rng)
        else:
            self.deterministic_update(x, delta, lr, rng)

    def stochastic_update(
        self,
        x,
        delta,
        lr: float,
        rng: np.random.Generator,
        collect_pulses: bool = False,
    ):
        """Stochastic coincidence update, expectation ~ lr * outer(x, delta).

        For each of BL slots, row i fires with probability min(1, C|x_i|)
        and column j with min(1, C|delta_j|), C = sqrt(lr/(BL*dw0)); a
        coincidence delivers one pulse to device (i, j), up if
        x_i*delta_j > 0.  Cycle-to-cycle noise multiplies each pulse's step
        by max(0, 1 + sigma*N(0,1)).

        With ``collect_pulses`` the coincidence log (row indices, column
        indices, up mask) is returned for instrumentation.
        """
        x = np.asarray(x, dtype=float)
        delta = np.asarray(delta, dtype=float)
        if x.shape != (self.rows,) or delta.shape != (self.cols,):
            raise ValueError(
                f"expected shapes ({self.rows},) and ({self.cols},), "
                f"got {x.shape} and {delta.shape}"
            )
        if lr < 0:
            raise ValueError("lr must be >= 0")
        bl = self.pulses.train_length
        c = np.sqrt(lr / (bl * self.dw0_nominal))
        # Fixed-size draws keep the generator stream independent of data.
        rows_fire = rng.random((bl, self.rows)) < np.minimum(1.0, c * np.abs(x))
        cols_fire = rng.random((bl, self.cols)) < np.minimum(1.0, c * np.abs(delta))

        slot_r, idx_r = np.nonzero(rows_fire)
        slot_c, idx_c = np.nonzero(cols_fire)
        if len(idx_r) == 0 or len(idx_c) == 0:
            return (np.empty(0, int), np.empty(0, int), np.empty(0, bool)) if collect_pulses else None
        n_cols_in_slot = np.bincount(slot_c, minlength=bl)
        # Cartesian product of fired rows x fired cols within each slot.
        rep = n_cols_in_slot[slot_r]
        pi = np.repeat(idx_r, rep)
        col_block_start = np.concatenate(([0], np.cumsum(n_cols_in_slot)[:-1]))
        out_start = np.concatenate(([0], np.cumsum(rep)[:-1]))
        offset = np.arange(rep.sum()) - np.repeat(out_start, rep)
        pj = idx_c[np.repeat(col_block_start[slot_r], rep) + offset]
        if len(pi) == 0:
            return (np.empty(0, int), np.empty(0, int), np.empty(0, bool)) if collect_pulses else None

        up = x[pi] * delta[pj] > 0.0
        sigma = self.variation.ctoc_dw0_std
        if sigma > 0:
            mult = np.maximum(0.0, 1.0 + sigma * rng.standard_normal(len(pi)))
        else:
            mult = np.ones(len(pi))
        self._apply_pulse_group(pi[up], pj[up], mult[up], up=True)
        self._apply_pulse_group(pi[~up], pj[~up], mult[~up], up=False)
        if collect_pulses:
            return pi, pj, up
        return None

    def _apply_pulse_group(self, pi, pj, mult, up: bool) -> None:
        """Apply one pulse per (pi[k], pj[k]) entry, vectorized by device.

        For soft-bound devices each up pulse multiplies the residual to the
        bound by (1 - rate*mult), floored at zero; the per-device product
        over its pulses is order-independent, so grouping by device is
        exact.  Linear steps sum and clip once (monotone moves clip only at
        the end).
        """
        if len(pi) == 0:
            return
        flat = pi * self.cols + pj
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        mult = mult[order]
        devs, starts = np.unique(flat, return_index=True)
        w = self.device_weights.ravel()
        if up:
            bound = self.w_max.ravel()
            rate = (self.dw0_plus / self.w_max).ravel()
            step0 = self.dw0_plus.ravel()
        else:
            bound = self.w_min.ravel()
            rate = (self.dw0_minus / -self.w_min).ravel()
            step0 = self.dw0_minus.ravel()
        if self.kind == "softbound":
            factors = np.maximum(0.0, 1.0 - rate[flat] * mult)
            shrink = np.multiply.reduceat(factors, starts)
            w[devs] = bound[devs] - (bound[devs] - w[devs]) * shrink
        else:
            total = np.add.reduceat(step0[flat] * mult, starts)
            if up:
                w[devs] = np.minimum(w[devs] + total, bound[devs])
            else:
                w[devs] = np.maximum(w[devs] - total, bound[devs])
        # Rounding in the anchored reconstruction can stray one ulp past a
        # bound (e.g. a zero-multiplier pulse rebuilt through the opposite
        # anchor); clip only the touched devices.
        w[devs] = np.clip(w[devs], self.w_min.ravel()[devs], self.w_max.ravel()[devs])
        self.device_weights = w.reshape(self.rows, self.cols)

    def deterministic_update(self, x, delta, lr: float, rng: np.random.Generator) -> None:
        """Fully deterministic pulse counts: round(lr*x_i*delta_j / dw0).

        Cycle-to-cycle noise still applies per pulse when configured; with
        it off, the whole update reduces to closed-form expressions.
        """
        x = np.asarray(x, dtype=float)
        delta = np.asarray(delta, dtype=float)
        if x.shape != (self.rows,) or delta.shape != (self.cols,):
            raise ValueError(
                f"expected shapes ({self.rows},) and ({self.cols},), "
                f"got {x.shape} and {delta.shape}"
            )
        counts = np.rint(lr * np.outer(x, delta) / self.dw0_nominal).astype(np.int64)
        if not counts.any():
            return
        n_up = np.where(counts > 0, counts, 0)
        n_dn = np.where(counts < 0, -counts, 0)
        sigma = self.variation.ctoc_dw0_std
        w = self.device_weights
        if sigma == 0.0:
            if self.kind == "softbound":
                a = self.dw0_plus / self.w_max
                b = self.dw0_minus / -self.w_min
                # where() keeps unpulsed devices bit-identical; the anchored
                # closed form would otherwise nudge them by an ulp.
                w = np.where(
                    n_up > 0, self.w_max - (self.w_max - w) * (1.0 - a) ** n_up, w
                )
                w = np.where(
                    n_dn > 0, self.w_min + (w - self.w_min) * (1.0 - b) ** n_dn, w
                )
                w = np.clip(w, self.w_min, self.w_max)
            else:
                w = np.clip(
                    w + n_up * self.dw0_plus - n_dn * self.dw0_minus,
                    self.w_min,
                    self.w_max,
                )
            self.device_weights = w
            return
        kmax = int(np.abs(counts).max())
        for k in range(kmax):
            mult = np.maximum(0.0, 1.0 + sigma * rng.standard_normal(w.shape))
            up_mask = n_up > k
            dn_mask = n_dn > k
            if self.kind == "softbound":
                a = self.dw0_plus / self.w_max
                b = self.dw0_minus / -self.w_min
                w_up = self.w_max - (self.w_max - w) * np.maximum(0.0, 1.0 - a * mult)
                w_dn = self.w_min + (w - self.w_min) * np.maximum(0.0, 1.0 - b * mult)
            else:
                w_up = np.minimum(w + self.dw0_plus * mult, self.w_max)
                w_dn = np.maximum(w - self.dw0_minus * mult, self.w_min)
            w = np.where(up_mask, w_up, np.where(dn_mask, w_dn, w))
        self.device_weights = np.clip(w, self.w_min, self.w_max)

    def pulse_all(self, direction, rng: np.random.Generator) -> None:
        """Apply one pulse of the given direction to every device at once."""
        sigma = self.variation.ctoc_dw0_std
        if sigma > 0:
            mult = np.maximum(
                0.0, 1.0 + sigma * rng.standard_normal((self.rows, self.cols))
            )
        else:
            mult = 1.0
        w = self.device_weights
        if direction is Direction.UP:
            if self.kind == "softbound":
                a = self.dw0_plus / self.w_max
                w = self.w_max - (self.w_max - w) * np.maximum(0.0, 1.0 - a * mult)
            else:
                w = np.minimum(w + self.dw0_plus * mult, self.w_max)
        else:
            if self.kind == "softbound":
                b = self.dw0_minus / -self.w_min
                w = self.w_min + (w - self.w_min) * np.maximum(0.0, 1.0 - b * mult)
            else:
                w = np.maximum(w - self.dw0_minus * mult, self.w_min)
        self.device_weights = np.clip(w, self.w_min, self.w_max)

    # -- serialization ----------------------------------------------------

    def save(self, path) -> None:
        """Snapshot all device state and config to an .npz file."""
        header = {
            "kind": self.kind,
            "rows": self.rows,
            "cols": self.cols,
            "seed": self.seed,
            "nominal": asdict(self.nominal),
            "variation": asdict(self.variation),
            "analog": asdict(self.analog),
            "pulses": asdict(self.pulses),
        }
        np.savez(
            path,
            header=json.dumps(header),
            device_weights=self.device_weights,
            reference_weights=self.reference_weights,
            dw0_plus=self.dw0_plus,
            dw0_minus=self.dw0_minus,
            w_max=self.w_max,
            w_min=self.w_min,
        )

    @classmethod
    def load(cls, path) -> "CrossbarTile":
        """Restore a snapshot; arrays round-trip exactly.

        The read-noise stream restarts from the stored seed, so noisy reads
        after a load replay the fresh-tile sequence.
        """
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            tile = cls(
                data["dw0_plus"],
                data["dw0_minus"],
                data["w_max"],
                data["w_min"],
                kind=header["kind"],
                nominal=SoftBoundParams(**header["nominal"]),
                variation=DeviceVariation(**header["variation"]),
                analog=AnalogConfig(**header["analog"]),
                pulses=PulseUpdateConfig(**header["pulses"]),
                seed=header["seed"],
            )
            tile.device_weights = data["device_weights"].copy()
            tile.reference_weights = data["reference_weights"].copy()
        return tile


def new_tile(
    rows: int,
    cols: int,
    nominal: SoftBoundParams,
    var: DeviceVariation,
    analog_cfg: AnalogConfig | None = None,
    pulse_cfg: PulseUpdateConfig | None = None,
    init_spec=None,
    seed: int = 0,
    kind: str = "softbound",
) -> CrossbarTile:
    """Build a tile with freshly sampled devices.

    ``init_spec`` sets the initial device weights: None for zeros, a scalar
    for a constant, an array for exact values, or "fan_in_uniform" for
    uniform +-1/sqrt(rows); everything is clipped to per-device bounds.
    The reference matrix starts at zero.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"tile dimensions must be >= 1, got {rows}x{cols}")
    analog_cfg = analog_cfg if analog_cfg is not None else AnalogConfig()
    pulse_cfg = pulse_cfg if pulse_cfg is not None else PulseUpdateConfig()
    param_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(0xE0,))
    )
    dw0_plus, dw0_minus, w_max, w_min = _sample_param_grid(
        nominal, var, param_rng, rows, cols
    )
    tile = CrossbarTile(
        dw0_plus,
        dw0_minus,
        w_max,
        w_min,
        kind=kind,
        nominal=nominal,
        variation=var,
        analog=analog_cfg,
        pulses=pulse_cfg,
        seed=seed,
    )
    if init_spec is None:
        init = np.zeros((rows, cols))
    elif isinstance(init_spec, str):
        if init_spec != "fan_in_uniform":
            raise ValueError(f"unknown init_spec {init_spec!r}")
        init_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(0xE1,))
        )
        lim = 1.0 / np.sqrt(rows)
        init = init_rng.uniform(-lim, lim, size=(rows, cols))
    elif np.isscalar(init_spec):
        init = np.full((rows, cols), float(init_spec))
    else:
        init = np.asarray(init_spec, dtype=float)
        if init.shape != (rows, cols):
            raise ValueError(f"init shape {init.shape} != {(rows, cols)}")
    tile.device_weights = np.clip(init, tile.w_min, tile.w_max)
    return tile


class FloatTile:
    """Ideal floating-point tile: exact reads, exact rank-1 updates.

    Shares the CrossbarTile read/update interface so the trainer can use
    either; there are no bounds, no quantization, and no noise.
    """

    kind = "float"

    def __init__(self, rows: int, cols: int, init=None) -> None:
        if rows < 1 or cols < 1:
            raise ValueError(f"tile dimensions must be >= 1, got {rows}x{cols}")
        self.rows = rows
        self.cols = cols
        self.device_weights = (
            np.zeros((rows, cols)) if init is None else np.array(init, dtype=float)
        )
        if self.device_weights.shape != (rows, cols):
            raise ValueError("init shape mismatch")
        self.reference_weights = np.zeros((rows, cols))

    def read_weights(self) -> np.ndarray:
        return self.device_weights - self.reference_weights

    def set_reference(self, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.rows, self.cols):
            raise ValueError("reference shape mismatch")
        self.reference_weights = values.copy()

    def program_effective_weights(self, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.rows, self.cols):
            raise ValueError("weight shape mismatch")
        self.device_weights = self.reference_weights + values

    def forward(self, x, rng=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ (self.device_weights - self.reference_weights)

    def backward(self, d, rng=None) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        return d @ (self.device_weights - self.reference_weights).T

    def update(self, x, delta, lr: float, rng=None) -> None:
        x = np.asarray(x, dtype=float)
        delta = np.asarray(delta, dtype=float)
        self.device_weights = self.device_weights + lr * np.outer(x, delta)
