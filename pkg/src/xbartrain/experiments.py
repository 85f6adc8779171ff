"""Batch experiment runner: parameter sweeps over training runs.

Each sweep trains one network per grid cell per seed and collects the
per-cell test errors into a flat results table.  Three sweep families are
provided: the (dw0, w_max) contour for balanced devices, the symmetry-point
sweep with and without zero-shifting calibration, and the sigmoid/tanh
activation comparison over signed symmetry points.

Cells are fully independent: every cell derives its own seed from the
master seed and its physical coordinates, so results are identical whether
cells run serially or across worker processes, and a cell that differs
only in the zero-shift flag or activation trains from identical device
draws, initial weights, data order, and update randomness (paired
comparisons).
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .device import DeviceVariation
from .network import DeviceConfig, TrainerConfig, make_network, train
from .reporting import write_epochs_csv
from .tile import AnalogConfig, PulseUpdateConfig

__all__ = [
    "SweepSpec",
    "CellSpec",
    "CellResult",
    "SweepResult",
    "cell_seed",
    "run_contour",
    "run_wsym_sweep",
    "activation_comparison",
    "min_error_curve",
    "states_scatter",
    "asymmetry_metric",
    "write_results_csv",
    "load_results_csv",
]


def _log_grid(lo: float, hi: float, n: int) -> tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(lo, hi, n))


@dataclass(frozen=True)
class SweepSpec:
    """Sweep configuration.

    ``wsym_fractions`` are in units of w_max (a fraction of 0.5 means the
    symmetry point sits at half the upper bound).  ``zero_shift`` is
    "off", "on", or "both"; "both" duplicates every cell with calibration
    disabled and enabled.  ``train_limit``/``test_limit`` truncate the
    datasets for quick tiers.
    """

    mode: str = "contour"  # "contour" | "wsym" | "activation"
    dw0_grid: tuple[float, ...] = field(default_factory=lambda: _log_grid(0.004, 0.3, 5))
    w_max_grid: tuple[float, ...] = field(default_factory=lambda: _log_grid(0.5, 20.0, 5))
    wsym_fractions: tuple[float, ...] = (-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75)
    zero_shift: str = "off"
    activation: str = "sigmoid"
    epochs: int = 10
    seeds: tuple[int, ...] = (1,)
    master_seed: int = 0
    kind: str = "softbound"
    layer_sizes: tuple[int, ...] = (784, 256, 128, 10)
    lr0: float = 0.01
    lr_decay: float = 0.5
    lr_decay_every: int = 10
    bias: bool = True
    variation: DeviceVariation = field(default_factory=DeviceVariation)
    analog: AnalogConfig = field(default_factory=AnalogConfig)
    pulses: PulseUpdateConfig = field(default_factory=PulseUpdateConfig)
    calibration_pairs: int = 1000
    train_limit: int | None = None
    test_limit: int | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("contour", "wsym", "activation"):
            raise ValueError(f"unknown sweep mode {self.mode!r}")
        if not self.dw0_grid or not self.w_max_grid:
            raise ValueError("parameter grids must be non-empty")
        if any(d <= 0 for d in self.dw0_grid):
            raise ValueError("all dw0 grid values must be positive")
        if any(w <= 0 for w in self.w_max_grid):
            raise ValueError("all w_max grid values must be positive")
        if any(abs(f) >= 1 for f in self.wsym_fractions):
            raise ValueError("wsym fractions must lie in (-1, 1)")
        if self.zero_shift not in ("off", "on", "both"):
            raise ValueError(f"zero_shift must be off/on/both, got {self.zero_shift!r}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_dict(self) -> dict:
        from dataclasses import asdict

        d = asdict(self)
        for key in ("dw0_grid", "w_max_grid", "wsym_fractions", "seeds", "layer_sizes"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep spec keys: {sorted(unknown)}")
        for key in ("dw0_grid", "w_max_grid", "wsym_fractions", "seeds", "layer_sizes"):
            if key in d:
                d[key] = tuple(d[key])
        if isinstance(d.get("variation"), dict):
            d["variation"] = DeviceVariation(**d["variation"])
        if isinstance(d.get("analog"), dict):
            d["analog"] = AnalogConfig(**d["analog"])
        if isinstance(d.get("pulses"), dict):
            d["pulses"] = PulseUpdateConfig(**d["pulses"])
        return cls(**d)


@dataclass(frozen=True)
class CellSpec:
    """One training run's physical coordinates within a sweep."""

    dw0: float
    w_max: float
    wsym_frac: float
    zero_shift: bool
    activation: str
    seed: int  # replicate index from SweepSpec.seeds

    @property
    def w_sym(self) -> float:
        return self.wsym_frac * self.w_max

    def slug(self) -> str:
        shift = "zs" if self.zero_shift else "raw"
        return (
            f"dw0{self.dw0:.6g}_wm{self.w_max:.6g}_ws{self.wsym_frac:+.3g}"
            f"_{shift}_{self.activation}_s{self.seed}"
        )


@dataclass
class CellResult:
    """Flat per-cell outcome row; NaN metrics when the cell failed."""

    mode: str
    dw0: float
    w_max: float
    wsym_frac: float
    w_sym: float
    zero_shift: bool
    activation: str
    seed: int
    status: str  # "ok" | "error"
    final_test_error_pct: float
    min_test_error_pct: float
    final_train_loss: float
    nominal_states: float
    epochs_csv: str
    error: str


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list[CellResult]

    def ok_records(self) -> list[CellResult]:
        return [r for r in self.records if r.status == "ok"]


def cell_seed(master_seed: int, cell: CellSpec) -> int:
    """Derive the trainer seed for one cell.

    Hash of the master seed and the cell's physical coordinates plus the
    replicate index, deliberately excluding zero_shift and activation, so
    runs differing only in those train from identical randomness.
    """
    key = (
        f"{master_seed}|{cell.dw0!r}|{cell.w_max!r}|{cell.wsym_frac!r}|{cell.seed}"
    )
    digest = hashlib.sha256(key.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def _trainer_config(spec: SweepSpec, cell: CellSpec) -> TrainerConfig:
    return TrainerConfig(
        layer_sizes=spec.layer_sizes,
        activation=cell.activation,
        epochs=spec.epochs,
        lr0=spec.lr0,
        lr_decay=spec.lr_decay,
        lr_decay_every=spec.lr_decay_every,
        seed=cell_seed(spec.master_seed, cell),
        eval_every_epoch=True,
        bias=spec.bias,
    )


def _device_config(spec: SweepSpec, cell: CellSpec) -> DeviceConfig:
    return DeviceConfig(
        kind=spec.kind,
        dw0=cell.dw0,
        w_max=cell.w_max,
        w_sym=cell.w_sym,
        zero_shift=cell.zero_shift,
        calibration_pairs=spec.calibration_pairs,
        variation=spec.variation,
        analog=spec.analog,
        pulses=spec.pulses,
    )


# Worker context for process pools; populated in the parent before fork so
# children inherit the datasets without re-pickling them per cell.
_WORKER_CTX: dict | None = None


def _execute_cell(args) -> CellResult:
    spec, cell, train_data, test_data, out_dir = args
    states = (
        float("nan") if spec.kind == "float" else 2.0 * cell.w_max / cell.dw0
    )
    epochs_rel = ""
    try:
        tcfg = _trainer_config(spec, cell)
        net = make_network(tcfg, _device_config(spec, cell))
        records = train(net, train_data, test_data, tcfg)
        if out_dir is not None:
            epochs_rel = os.path.join("cells", cell.slug(), "epochs.csv")
            full = os.path.join(out_dir, epochs_rel)
            os.makedirs(os.path.dirname(full), exist_ok=True)
            write_epochs_csv(records, full)
        errs = np.array([r.test_error_pct for r in records])
        return CellResult(
            mode=spec.mode,
            dw0=cell.dw0,
            w_max=cell.w_max,
            wsym_frac=cell.wsym_frac,
            w_sym=cell.w_sym,
            zero_shift=cell.zero_shift,
            activation=cell.activation,
            seed=cell.seed,
            status="ok",
            final_test_error_pct=float(records[-1].test_error_pct),
            min_test_error_pct=float(np.nanmin(errs)),
            final_train_loss=float(records[-1].train_loss),
            nominal_states=states,
            epochs_csv=epochs_rel,
            error="",
        )
    except Exception as exc:  # per-cell failures must not kill the sweep
        return CellResult(
            mode=spec.mode,
            dw0=cell.dw0,
            w_max=cell.w_max,
            wsym_frac=cell.wsym_frac,
            w_sym=cell.w_sym,
            zero_shift=cell.zero_shift,
            activation=cell.activation,
            seed=cell.seed,
            status="error",
            final_test_error_pct=float("nan"),
            min_test_error_pct=float("nan"),
            final_train_loss=float("nan"),
            nominal_states=states,
            epochs_csv="",
            error=f"{type(exc).__name__}: {exc}",
        )


def _worker_entry(cell: CellSpec) -> CellResult:
    ctx = _WORKER_CTX
    return _execute_cell((ctx["spec"], cell, ctx["train"], ctx["test"], ctx["out_dir"]))


def _run_cells(
    spec: SweepSpec,
    cells: list[CellSpec],
    train_data: Dataset,
    test_data: Dataset,
    out_dir,
) -> SweepResult:
    if spec.train_limit is not None:
        train_data = train_data.subset(spec.train_limit)
    if spec.test_limit is not None:
        test_data = test_data.subset(spec.test_limit)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        out_dir = str(out_dir)
    if spec.workers == 1 or len(cells) <= 1:
        records = [
            _execute_cell((spec, cell, train_data, test_data, out_dir))
            for cell in cells
        ]
    else:
        global _WORKER_CTX
        _WORKER_CTX = {
            "spec": spec,
            "train": train_data,
            "test": test_data,
            "out_dir": out_dir,
        }
        try:
            with ProcessPoolExecutor(max_workers=spec.workers) as pool:
                records = list(pool.map(_worker_entry, cells))
        finally:
            _WORKER_CTX = None
    result = SweepResult(spec=spec, records=records)
    if out_dir is not None:
        write_results_csv(result, os.path.join(out_dir, "results.csv"))
    return result


def run_contour(
    spec: SweepSpec, train_data: Dataset, test_data: Dataset, out_dir=None
) -> SweepResult:
    """Balanced-device sweep over the (dw0, w_max) grid.

    Cells along a constant w_max/dw0 ratio share a nominal state count and
    correspond to the same physical device at different weight scalings.
    """
    spec = replace(spec, mode="contour")
    cells = [
        CellSpec(dw0, w_max, 0.0, False, spec.activation, s)
        for dw0 in spec.dw0_grid
        for w_max in spec.w_max_grid
        for s in spec.seeds
    ]
    return _run_cells(spec, cells, train_data, test_data, out_dir)


def run_wsym_sweep(
    spec: SweepSpec, train_data: Dataset, test_data: Dataset, out_dir=None
) -> SweepResult:
    """Symmetry-point sweep, optionally with zero-shifting calibration."""
    spec = replace(spec, mode="wsym")
    shift_states = {"off": (False,), "on": (True,), "both": (False, True)}[
        spec.zero_shift
    ]
    cells = [
        CellSpec(dw0, w_max, frac, shift, spec.activation, s)
        for frac in spec.wsym_fractions
        for shift in shift_states
        for dw0 in spec.dw0_grid
        for w_max in spec.w_max_grid
        for s in spec.seeds
    ]
    return _run_cells(spec, cells, train_data, test_data, out_dir)


def activation_comparison(
    spec: SweepSpec, train_data: Dataset, test_data: Dataset, out_dir=None
) -> SweepResult:
    """Sigmoid vs tanh over signed symmetry points, no compensation."""
    spec = replace(spec, mode="activation")
    cells = [
        CellSpec(dw0, w_max, frac, False, act, s)
        for act in ("sigmoid", "tanh")
        for frac in spec.wsym_fractions
        for dw0 in spec.dw0_grid
        for w_max in spec.w_max_grid
        for s in spec.seeds
    ]
    return _run_cells(spec, cells, train_data, test_data, out_dir)


# ---------------------------------------------------------------------------
# reductions


def min_error_curve(result: SweepResult) -> list[tuple[float, bool, float]]:
    """Minimum final test error per (wsym_fraction, zero_shift) slice.

    The reduction runs over all grid cells and seeds of a slice; a slice
    with no successful cells raises.
    """
    groups: dict[tuple[float, bool], list[float]] = {}
    for r in result.records:
        groups.setdefault((r.wsym_frac, r.zero_shift), [])
        if r.status == "ok" and math.isfinite(r.final_test_error_pct):
            groups[(r.wsym_frac, r.zero_shift)].append(r.final_test_error_pct)
    out = []
    for (frac, shift) in sorted(groups, key=lambda k: (k[0], k[1])):
        errs = groups[(frac, shift)]
        if not errs:
            raise ValueError(
                f"no successful cells for wsym_frac={frac}, zero_shift={shift}"
            )
        out.append((frac, shift, min(errs)))
    return out


def states_scatter(result: SweepResult) -> list[tuple[float, float]]:
    """(nominal number of states, final test error) per successful cell."""
    return [
        (r.nominal_states, r.final_test_error_pct)
        for r in result.ok_records()
        if math.isfinite(r.final_test_error_pct)
    ]


def asymmetry_metric(result: SweepResult, frac: float) -> dict[str, float]:
    """|min err(+frac) - min err(-frac)| per activation.

    ``frac`` must be a value from the sweep's wsym_fractions (matched
    exactly); minima run over the grid and seeds.
    """
    if frac <= 0:
        raise ValueError(f"frac must be positive, got {frac}")
    out = {}
    for act in sorted({r.activation for r in result.records}):
        plus = [
            r.final_test_error_pct
            for r in result.ok_records()
            if r.activation == act and r.wsym_frac == frac
            and math.isfinite(r.final_test_error_pct)
        ]
        minus = [
            r.final_test_error_pct
            for r in result.ok_records()
            if r.activation == act and r.wsym_frac == -frac
            and math.isfinite(r.final_test_error_pct)
        ]
        if not plus or not minus:
            raise ValueError(f"missing +-{frac} slices for activation {act!r}")
        out[act] = abs(min(plus) - min(minus))
    return out


# ---------------------------------------------------------------------------
# results table

RESULTS_COLUMNS = (
    "mode",
    "dw0",
    "w_max",
    "wsym_frac",
    "w_sym",
    "zero_shift",
    "activation",
    "seed",
    "status",
    "final_test_error_pct",
    "min_test_error_pct",
    "final_train_loss",
    "nominal_states",
    "epochs_csv",
    "error",
)


def write_results_csv(result: SweepResult, path) -> None:
    """One row per cell per seed; floats written with full repr precision
    so every parameter round-trips exactly."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RESULTS_COLUMNS)
        for r in result.records:
            writer.writerow(
                [
                    r.mode,
                    repr(r.dw0),
                    repr(r.w_max),
                    repr(r.wsym_frac),
                    repr(r.w_sym),
                    "on" if r.zero_shift else "off",
                    r.activation,
                    r.seed,
                    r.status,
                    repr(r.final_test_error_pct),
                    repr(r.min_test_error_pct),
                    repr(r.final_train_loss),
                    repr(r.nominal_states),
                    r.epochs_csv,
                    r.error,
                ]
            )


def load_results_csv(path) -> list[CellResult]:
    """Read back a results table written by :func:`write_results_csv`."""
    records = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != RESULTS_COLUMNS:
            raise ValueError(f"{path}: unexpected results.csv header {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(RESULTS_COLUMNS):
                raise ValueError(f"{path}: row has {len(row)} columns")
            records.append(
                CellResult(
                    mode=row[0],
                    dw0=float(row[1]),
                    w_max=float(row[2]),
                    wsym_frac=float(row[3]),
                    w_sym=float(row[4]),
                    zero_shift=row[5] == "on",
                    activation=row[6],
                    seed=int(row[7]),
                    status=row[8],
                    final_test_error_pct=float(row[9]),
                    min_test_error_pct=float(row[10]),
                    final_train_loss=float(row[11]),
                    nominal_states=float(row[12]),
                    epochs_csv=row[13],
                    error=row[14],
                )
            )
    return records
