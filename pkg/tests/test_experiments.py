"""Sweep runner tests: spec round trips, seed derivation, cell mechanics.

Training cells run on a tiny synthetic classification set so a full sweep
finishes in well under a second per cell.
"""

import dataclasses
import math
import os

import numpy as np
import pytest

from xbartrain.dataset import Dataset
from xbartrain.device import DeviceVariation
from xbartrain.experiments import (
    RESULTS_COLUMNS,
    CellResult,
    CellSpec,
    SweepResult,
    SweepSpec,
    activation_comparison,
    asymmetry_metric,
    cell_seed,
    load_results_csv,
    min_error_curve,
    run_contour,
    run_wsym_sweep,
    states_scatter,
    write_results_csv,
)
from xbartrain.network import DeviceConfig, TrainerConfig, make_network, train
from xbartrain.tile import AnalogConfig, PulseUpdateConfig

N_PIXELS = 12
N_CLASSES = 4
TOY_LAYERS = (N_PIXELS, 8, 6, N_CLASSES)


@pytest.fixture(scope="module")
def toy_data():
    """Four noisy class prototypes, 48 train / 16 test samples."""
    rng = np.random.default_rng(515)
    centers = rng.uniform(0.1, 0.9, size=(N_CLASSES, N_PIXELS))

    def make(n, split):
        labels = np.arange(n, dtype=np.int64) % N_CLASSES
        images = centers[labels] + rng.normal(0.0, 0.05, size=(n, N_PIXELS))
        return Dataset(
            images=np.clip(images, 0.0, 1.0).astype(np.float32),
            labels=labels,
            split=split,
        )

    return make(48, "train"), make(16, "test")


def tiny_spec(**overrides) -> SweepSpec:
    base = dict(
        mode="contour",
        dw0_grid=(0.05,),
        w_max_grid=(1.0,),
        wsym_fractions=(0.0,),
        zero_shift="off",
        epochs=2,
        seeds=(1,),
        master_seed=9,
        kind="softbound",
        layer_sizes=TOY_LAYERS,
        lr0=0.1,
        variation=DeviceVariation.none(),
        calibration_pairs=50,
    )
    base.update(overrides)
    return SweepSpec(**base)


def assert_records_equal(got, expected):
    assert len(got) == len(expected)
    for ra, rb in zip(got, expected):
        for f in dataclasses.fields(CellResult):
            va, vb = getattr(ra, f.name), getattr(rb, f.name)
            if isinstance(vb, float) and math.isnan(vb):
                assert math.isnan(va), f.name
            else:
                assert va == vb, f.name


class TestSweepSpec:
    def test_dict_round_trip(self):
        spec = tiny_spec(
            mode="wsym",
            dw0_grid=(0.01, 0.02),
            wsym_fractions=(-0.5, 0.0, 0.5),
            zero_shift="both",
            seeds=(1, 2, 3),
            workers=2,
            train_limit=100,
        )
        d = spec.to_dict()
        for key in ("dw0_grid", "w_max_grid", "wsym_fractions", "seeds", "layer_sizes"):
            assert isinstance(d[key], list)
        assert SweepSpec.from_dict(d) == spec

    def test_from_dict_rebuilds_nested_configs(self):
        d = tiny_spec().to_dict()
        assert isinstance(d["variation"], dict)
        back = SweepSpec.from_dict(d)
        assert back.variation == DeviceVariation.none()
        assert back.analog == AnalogConfig()
        assert back.pulses == PulseUpdateConfig()

    def test_from_dict_rejects_unknown_keys(self):
        d = tiny_spec().to_dict()
        d["dw0grid"] = [0.01]
        with pytest.raises(ValueError, match="unknown sweep spec keys.*dw0grid"):
            SweepSpec.from_dict(d)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"mode": "scan"},
            {"dw0_grid": ()},
            {"dw0_grid": (-0.01,)},
            {"w_max_grid": (0.0,)},
            {"wsym_fractions": (1.0,)},
            {"wsym_fractions": (-1.5,)},
            {"zero_shift": "maybe"},
            {"seeds": ()},
            {"workers": 0},
        ],
    )
    def test_rejects_invalid_fields(self, overrides):
        with pytest.raises(ValueError):
            tiny_spec(**overrides)


class TestCellSeed:
    def test_deterministic(self):
        cell = CellSpec(0.01, 2.0, 0.25, False, "sigmoid", 1)
        assert cell_seed(7, cell) == cell_seed(7, cell)

    def test_ignores_zero_shift_and_activation(self):
        base = CellSpec(0.01, 2.0, 0.25, False, "sigmoid", 1)
        for shift in (False, True):
            for act in ("sigmoid", "tanh"):
                other = CellSpec(0.01, 2.0, 0.25, shift, act, 1)
                assert cell_seed(7, other) == cell_seed(7, base)

    def test_sensitive_to_physical_coordinates(self):
        cells = [
            (7, CellSpec(0.01, 2.0, 0.25, False, "sigmoid", 1)),
            (7, CellSpec(0.02, 2.0, 0.25, False, "sigmoid", 1)),
            (7, CellSpec(0.01, 4.0, 0.25, False, "sigmoid", 1)),
            (7, CellSpec(0.01, 2.0, -0.25, False, "sigmoid", 1)),
            (7, CellSpec(0.01, 2.0, 0.25, False, "sigmoid", 2)),
            (8, CellSpec(0.01, 2.0, 0.25, False, "sigmoid", 1)),
        ]
        seeds = {cell_seed(m, c) for m, c in cells}
        assert len(seeds) == len(cells)


class TestCellSpec:
    def test_w_sym_is_fraction_of_bound(self):
        cell = CellSpec(0.01, 4.0, 0.25, False, "sigmoid", 1)
        assert cell.w_sym == 1.0

    def test_slug_distinguishes_shift_and_activation(self):
        a = CellSpec(0.01, 4.0, 0.25, False, "sigmoid", 1)
        b = CellSpec(0.01, 4.0, 0.25, True, "tanh", 1)
        assert a.slug() != b.slug()
        assert "raw" in a.slug() and "zs" in b.slug()


@pytest.fixture(scope="module")
def contour(toy_data, tmp_path_factory):
    train_data, test_data = toy_data
    out = tmp_path_factory.mktemp("contour")
    spec = tiny_spec(dw0_grid=(0.04, 0.08), w_max_grid=(1.0,), seeds=(1, 2))
    return spec, run_contour(spec, train_data, test_data, out_dir=out), out


class TestRunContour:
    def test_one_record_per_cell_per_seed(self, contour):
        spec, result, _ = contour
        assert len(result.records) == len(spec.dw0_grid) * len(spec.seeds)
        assert all(r.status == "ok" for r in result.records)
        assert all(r.mode == "contour" for r in result.records)
        assert all(r.wsym_frac == 0.0 and not r.zero_shift for r in result.records)

    def test_errors_are_valid_percentages(self, contour):
        _, result, _ = contour
        for r in result.records:
            assert 0.0 <= r.final_test_error_pct <= 100.0
            assert r.min_test_error_pct <= r.final_test_error_pct
            assert math.isfinite(r.final_train_loss)

    def test_nominal_states_is_range_over_step(self, contour):
        _, result, _ = contour
        for r in result.records:
            assert r.nominal_states == pytest.approx(2.0 * r.w_max / r.dw0)

    def test_per_cell_epoch_logs_written(self, contour):
        spec, result, out = contour
        for r in result.records:
            assert r.epochs_csv
            path = os.path.join(out, r.epochs_csv)
            assert os.path.exists(path)
            with open(path) as f:
                lines = [ln for ln in f.read().splitlines() if ln]
            assert len(lines) == spec.epochs + 1  # header + one row per epoch

    def test_results_csv_round_trips(self, contour):
        _, result, out = contour
        loaded = load_results_csv(os.path.join(out, "results.csv"))
        assert_records_equal(loaded, result.records)

    def test_rerun_reproduces_errors_exactly(self, contour, toy_data):
        spec, result, _ = contour
        train_data, test_data = toy_data
        again = run_contour(spec, train_data, test_data)
        assert [r.final_test_error_pct for r in again.records] == [
            r.final_test_error_pct for r in result.records
        ]


class TestComposition:
    def test_sweep_cell_equals_direct_training(self, toy_data):
        train_data, test_data = toy_data
        spec = tiny_spec(
            dw0_grid=(0.03,),
            w_max_grid=(2.0,),
            wsym_fractions=(0.25,),
            zero_shift="off",
            seeds=(3,),
        )
        result = run_wsym_sweep(spec, train_data, test_data)
        assert len(result.records) == 1
        sweep_err = result.records[0].final_test_error_pct

        cell = CellSpec(0.03, 2.0, 0.25, False, "sigmoid", 3)
        tcfg = TrainerConfig(
            layer_sizes=TOY_LAYERS,
            activation="sigmoid",
            epochs=spec.epochs,
            lr0=spec.lr0,
            lr_decay=spec.lr_decay,
            lr_decay_every=spec.lr_decay_every,
            seed=cell_seed(spec.master_seed, cell),
            eval_every_epoch=True,
            bias=True,
        )
        dcfg = DeviceConfig(
            kind="softbound",
            dw0=0.03,
            w_max=2.0,
            w_sym=0.5,
            zero_shift=False,
            calibration_pairs=spec.calibration_pairs,
            variation=spec.variation,
            analog=spec.analog,
            pulses=spec.pulses,
        )
        net = make_network(tcfg, dcfg)
        records = train(net, train_data, test_data, tcfg)
        assert records[-1].test_error_pct == sweep_err

    def test_train_limit_truncates_dataset(self, toy_data):
        train_data, test_data = toy_data
        spec = tiny_spec(epochs=1, train_limit=8, test_limit=8)
        full = tiny_spec(epochs=1)
        limited = run_contour(spec, train_data, test_data)
        unlimited = run_contour(full, train_data, test_data)
        assert limited.records[0].status == "ok"
        # 8-sample epochs and 48-sample epochs must not coincide
        assert (
            limited.records[0].final_train_loss
            != unlimited.records[0].final_train_loss
        )


@pytest.fixture(scope="module")
def mixed(toy_data):
    train_data, test_data = toy_data
    # frac 0.5 at dw0 = 0.7*w_max needs an up rate above 1: infeasible
    spec = tiny_spec(
        dw0_grid=(0.7,),
        w_max_grid=(1.0,),
        wsym_fractions=(0.0, 0.5),
        epochs=1,
    )
    return run_wsym_sweep(spec, train_data, test_data)


class TestFailureHandling:
    def test_failed_cell_recorded_not_raised(self, mixed):
        by_frac = {r.wsym_frac: r for r in mixed.records}
        assert by_frac[0.0].status == "ok"
        bad = by_frac[0.5]
        assert bad.status == "error"
        assert bad.error != ""
        assert math.isnan(bad.final_test_error_pct)
        assert math.isnan(bad.min_test_error_pct)
        assert math.isnan(bad.final_train_loss)
        assert bad.epochs_csv == ""

    def test_failed_cell_keeps_coordinates(self, mixed):
        bad = next(r for r in mixed.records if r.status == "error")
        assert bad.dw0 == 0.7 and bad.w_max == 1.0
        assert bad.nominal_states == pytest.approx(2.0 / 0.7)

    def test_ok_records_filters_failures(self, mixed):
        assert len(mixed.ok_records()) == 1

    def test_min_error_curve_raises_on_dead_slice(self, mixed):
        with pytest.raises(ValueError, match="no successful cells"):
            min_error_curve(mixed)

    def test_states_scatter_skips_failures(self, mixed):
        pts = states_scatter(mixed)
        assert len(pts) == 1
        assert all(math.isfinite(v) for v in pts[0])


class TestParallelExecution:
    def test_worker_pool_matches_serial_output(self, toy_data, tmp_path):
        train_data, test_data = toy_data
        base = dict(dw0_grid=(0.04, 0.08), w_max_grid=(1.0,), seeds=(1, 2), epochs=1)
        serial = tiny_spec(workers=1, **base)
        forked = tiny_spec(workers=2, **base)
        run_contour(serial, train_data, test_data, out_dir=tmp_path / "serial")
        run_contour(forked, train_data, test_data, out_dir=tmp_path / "forked")
        with open(tmp_path / "serial" / "results.csv", "rb") as f:
            serial_bytes = f.read()
        with open(tmp_path / "forked" / "results.csv", "rb") as f:
            forked_bytes = f.read()
        # identical modulo the spec's own workers column is absent from rows
        assert serial_bytes == forked_bytes


class TestActivationComparison:
    def test_runs_both_activations_per_cell(self, toy_data):
        train_data, test_data = toy_data
        spec = tiny_spec(wsym_fractions=(-0.25, 0.25), epochs=1)
        result = activation_comparison(spec, train_data, test_data)
        assert len(result.records) == 4
        assert {r.activation for r in result.records} == {"sigmoid", "tanh"}
        assert all(r.mode == "activation" for r in result.records)
        assert all(not r.zero_shift for r in result.records)
        metric = asymmetry_metric(result, 0.25)
        assert set(metric) == {"sigmoid", "tanh"}
        assert all(math.isfinite(v) and v >= 0 for v in metric.values())


def _row(
    frac=0.0,
    shift=False,
    err=5.0,
    act="sigmoid",
    status="ok",
    states=100.0,
    seed=1,
):
    failed = status != "ok"
    return CellResult(
        mode="wsym",
        dw0=0.01,
        w_max=1.0,
        wsym_frac=frac,
        w_sym=frac,
        zero_shift=shift,
        activation=act,
        seed=seed,
        status=status,
        final_test_error_pct=float("nan") if failed else err,
        min_test_error_pct=float("nan") if failed else err,
        final_train_loss=float("nan") if failed else 0.1,
        nominal_states=states,
        epochs_csv="" if failed else "cells/x/epochs.csv",
        error="ValueError: boom" if failed else "",
    )


class TestReductions:
    def test_min_error_curve_takes_slice_minimum(self):
        result = SweepResult(
            spec=tiny_spec(),
            records=[
                _row(frac=0.0, err=8.0, seed=1),
                _row(frac=0.0, err=6.0, seed=2),
                _row(frac=0.5, err=30.0),
                _row(frac=0.5, shift=True, err=7.0),
                _row(frac=0.5, shift=True, err=9.0, seed=2),
            ],
        )
        assert min_error_curve(result) == [
            (0.0, False, 6.0),
            (0.5, False, 30.0),
            (0.5, True, 7.0),
        ]

    def test_min_error_curve_ignores_failed_rows_within_live_slice(self):
        result = SweepResult(
            spec=tiny_spec(),
            records=[_row(err=4.0), _row(status="error", seed=2)],
        )
        assert min_error_curve(result) == [(0.0, False, 4.0)]

    def test_states_scatter_pairs(self):
        result = SweepResult(
            spec=tiny_spec(),
            records=[_row(err=12.0, states=50.0), _row(status="error", states=20.0)],
        )
        assert states_scatter(result) == [(50.0, 12.0)]

    def test_asymmetry_metric_per_activation(self):
        result = SweepResult(
            spec=tiny_spec(),
            records=[
                _row(frac=0.5, err=10.0, act="sigmoid"),
                _row(frac=0.5, err=12.0, act="sigmoid", seed=2),
                _row(frac=-0.5, err=4.0, act="sigmoid"),
                _row(frac=0.5, err=7.0, act="tanh"),
                _row(frac=-0.5, err=7.0, act="tanh"),
            ],
        )
        assert asymmetry_metric(result, 0.5) == {"sigmoid": 6.0, "tanh": 0.0}

    def test_asymmetry_metric_rejects_nonpositive_frac(self):
        result = SweepResult(spec=tiny_spec(), records=[_row()])
        with pytest.raises(ValueError, match="positive"):
            asymmetry_metric(result, -0.5)

    def test_asymmetry_metric_requires_both_signs(self):
        result = SweepResult(
            spec=tiny_spec(), records=[_row(frac=0.5, err=10.0)]
        )
        with pytest.raises(ValueError, match="missing"):
            asymmetry_metric(result, 0.5)


class TestResultsTable:
    def test_round_trip_with_nan_and_quoting(self, tmp_path):
        records = [
            _row(frac=0.25, err=3.5),
            _row(frac=-0.25, status="error"),
        ]
        records[1].error = "ValueError: bad, very bad"
        path = tmp_path / "results.csv"
        write_results_csv(SweepResult(spec=tiny_spec(), records=records), path)
        assert_records_equal(load_results_csv(path), records)

    def test_rejects_unexpected_header(self, tmp_path):
        path = tmp_path / "results.csv"
        path.write_text("alpha,beta\n1,2\n")
        with pytest.raises(ValueError, match="unexpected results.csv header"):
            load_results_csv(path)

    def test_rejects_short_rows(self, tmp_path):
        path = tmp_path / "results.csv"
        path.write_text(",".join(RESULTS_COLUMNS) + "\ncontour,0.01\n")
        with pytest.raises(ValueError, match="columns"):
            load_results_csv(path)
