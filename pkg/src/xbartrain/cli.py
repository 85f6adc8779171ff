"""Command-line entry point: train, sweep, calibrate, fit, gen-trace.

One binary with a subcommand per workflow.  Every run writes its outputs
into ``--out`` together with a ``manifest.json`` recording the resolved
configuration, seed, package version, and wall time, so any output
directory can be reproduced from its manifest alone.  Settings come from
an optional JSON config file; command-line flags win over config values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .calibration import zero_shift_calibrate
from .dataset import Dataset, IdxFormatError, load_idx
from .device import (
    Direction,
    DeviceVariation,
    FitError,
    PulseTrace,
    SoftBoundParams,
    fit_soft_bound,
    make_trace,
    params_from_imbalance,
    read_trace_csv,
    symmetry_point,
    write_trace_csv,
)
from .experiments import (
    SweepSpec,
    activation_comparison,
    asymmetry_metric,
    min_error_curve,
    run_contour,
    run_wsym_sweep,
    states_scatter,
)
from .network import DeviceConfig, TrainerConfig, make_network, train
from .tile import AnalogConfig, PulseUpdateConfig, new_tile
from . import reporting

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xbartrain",
        description="Crossbar-array training simulator with soft-bound devices",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one classifier and record per-epoch metrics")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="training seed (default 0)")
    p.add_argument("--epochs", type=int, help="number of epochs (default 30)")
    p.add_argument("--activation", choices=["sigmoid", "tanh"], help="hidden activation")
    p.add_argument(
        "--device",
        choices=["float", "linear", "softbound"],
        help="weight implementation (default softbound)",
    )
    p.add_argument("--dw0", type=float, help="mean step magnitude at w=0 (default 0.01)")
    p.add_argument("--wmax", type=float, help="weight bound, symmetric +-wmax (default 2.0)")
    p.add_argument("--wsym", type=float, help="device symmetry point in weight units (default 0)")
    p.add_argument(
        "--zero-shift",
        choices=["on", "off"],
        help="run zero-shifting calibration before training (default off)",
    )
    p.add_argument("--train-images", help="training images IDX file")
    p.add_argument("--train-labels", help="training labels IDX file")
    p.add_argument("--test-images", help="test images IDX file")
    p.add_argument("--test-labels", help="test labels IDX file")
    p.add_argument("--limit-train", type=int, help="truncate the training set")
    p.add_argument("--limit-test", type=int, help="truncate the test set")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="run a parameter sweep of training cells")
    p.add_argument("--spec", help="JSON sweep spec file (defaults apply otherwise)")
    p.add_argument(
        "--mode",
        choices=["contour", "wsym", "activation"],
        help="sweep family, overrides the spec file",
    )
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument(
        "--full",
        action="store_true",
        help="full tier: 30 epochs and dense 9x9 grids instead of the CI tier",
    )
    p.add_argument("--train-images", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--test-images", required=True)
    p.add_argument("--test-labels", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("calibrate", help="zero-shifting demo on a standalone tile")
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--dw0", type=float, default=0.01)
    p.add_argument("--wmax", type=float, default=1.0)
    p.add_argument("--wsym", type=float, default=0.3, help="target symmetry point")
    p.add_argument("--n-pairs", type=int, default=1000)
    p.add_argument("--ctoc", type=float, default=0.0, help="cycle-to-cycle std")
    p.add_argument("--dtod-dw0", type=float, default=0.0, help="device-to-device step std")
    p.add_argument("--dtod-bound", type=float, default=0.0, help="device-to-device bound std")
    p.add_argument("--trace-row", type=int, default=0, help="row of the traced device")
    p.add_argument("--trace-col", type=int, default=0, help="column of the traced device")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", help="fit the soft-bound model to a pulse trace CSV")
    p.add_argument("--trace", required=True, help="trace CSV (pulse_index,direction,weight)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen-trace", help="generate a synthetic pulse-response trace")
    p.add_argument("--dw0-plus", type=float, default=0.1)
    p.add_argument("--dw0-minus", type=float, default=0.1)
    p.add_argument("--wmax", type=float, default=1.0)
    p.add_argument("--wmin", type=float, default=-1.0)
    p.add_argument("--w0", type=float, default=0.0, help="initial weight")
    p.add_argument(
        "--pattern",
        default="U:400,D:400",
        help="pulse runs, e.g. 'U:400,D:400,U:100'",
    )
    p.add_argument("--kind", choices=["softbound", "linear"], default="softbound")
    p.add_argument("--ctoc", type=float, default=0.0, help="cycle-to-cycle std")
    p.add_argument("--read-noise", type=float, default=0.0, help="reading noise std")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _write_manifest(out_dir, command: str, seed, config: dict, t0: float, outputs) -> None:
    manifest = {
        "artifact": "xbartrain",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "wall_time_s": round(time.time() - t0, 3),
        "outputs": sorted(outputs),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        config = json.load(f)
    if not isinstance(config, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return config


def _resolve(args: argparse.Namespace, config: dict, key: str, default):
    """Flag value if given, else config file value, else default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return config.get(key, default)


def _load_datasets(args, config) -> tuple[Dataset, Dataset]:
    paths = {}
    for key in ("train_images", "train_labels", "test_images", "test_labels"):
        paths[key] = _resolve(args, config, key, None)
        if paths[key] is None:
            raise ValueError(f"missing dataset path: {key.replace('_', '-')}")
    train_data = load_idx(paths["train_images"], paths["train_labels"], split="train")
    test_data = load_idx(paths["test_images"], paths["test_labels"], split="test")
    limit_train = _resolve(args, config, "limit_train", None)
    limit_test = _resolve(args, config, "limit_test", None)
    if limit_train is not None:
        train_data = train_data.subset(int(limit_train))
    if limit_test is not None:
        test_data = test_data.subset(int(limit_test))
    return train_data, test_data


def _cmd_train(args: argparse.Namespace) -> int:
    t0 = time.time()
    config = _load_config(args.config)
    seed = int(_resolve(args, config, "seed", 0))
    zero_shift = _resolve(args, config, "zero_shift", "off")
    tcfg = TrainerConfig(
        layer_sizes=tuple(config.get("layer_sizes", (784, 256, 128, 10))),
        activation=_resolve(args, config, "activation", "sigmoid"),
        epochs=int(_resolve(args, config, "epochs", 30)),
        lr0=float(config.get("lr0", 0.01)),
        lr_decay=float(config.get("lr_decay", 0.5)),
        lr_decay_every=int(config.get("lr_decay_every", 10)),
        seed=seed,
        eval_every_epoch=bool(config.get("eval_every_epoch", True)),
        bias=bool(config.get("bias", True)),
    )
    analog_cfg = config.get("analog", {})
    pulse_cfg = config.get("pulses", {})
    variation_cfg = config.get("variation", {})
    dev = DeviceConfig(
        kind=_resolve(args, config, "device", "softbound"),
        dw0=float(_resolve(args, config, "dw0", 0.01)),
        w_max=float(_resolve(args, config, "wmax", 2.0)),
        w_sym=float(_resolve(args, config, "wsym", 0.0)),
        zero_shift={"on": True, "off": False}[zero_shift],
        calibration_pairs=int(config.get("calibration_pairs", 1000)),
        variation=DeviceVariation(**variation_cfg),
        analog=AnalogConfig(**analog_cfg),
        pulses=PulseUpdateConfig(**pulse_cfg),
    )
    train_data, test_data = _load_datasets(args, config)
    os.makedirs(args.out, exist_ok=True)

    net = make_network(tcfg, dev)
    records = train(net, train_data, test_data, tcfg)

    outputs = ["epochs.csv", "error_curve.png", "weights_hist.png"]
    reporting.write_epochs_csv(records, os.path.join(args.out, "epochs.csv"))
    reporting.plot_error_curves(records, os.path.join(args.out, "error_curve.png"))
    summaries = records[-1].weights
    for k, summary in enumerate(summaries, start=1):
        name = f"weights_hist_layer{k}.csv"
        reporting.write_weights_hist_csv(summary, os.path.join(args.out, name))
        outputs.append(name)
    reporting.plot_weight_hists(summaries, os.path.join(args.out, "weights_hist.png"))

    resolved = {
        "trainer": {
            "layer_sizes": list(tcfg.layer_sizes),
            "activation": tcfg.activation,
            "epochs": tcfg.epochs,
            "lr0": tcfg.lr0,
            "lr_decay": tcfg.lr_decay,
            "lr_decay_every": tcfg.lr_decay_every,
            "eval_every_epoch": tcfg.eval_every_epoch,
            "bias": tcfg.bias,
        },
        "device": {
            "kind": dev.kind,
            "dw0": dev.dw0,
            "w_max": dev.w_max,
            "w_sym": dev.w_sym,
            "zero_shift": "on" if dev.zero_shift else "off",
            "calibration_pairs": dev.calibration_pairs,
            "variation": vars(dev.variation).copy(),
            "analog": vars(dev.analog).copy(),
            "pulses": vars(dev.pulses).copy(),
        },
        "data": {
            "train_images": _resolve(args, config, "train_images", None),
            "train_labels": _resolve(args, config, "train_labels", None),
            "test_images": _resolve(args, config, "test_images", None),
            "test_labels": _resolve(args, config, "test_labels", None),
            "limit_train": _resolve(args, config, "limit_train", None),
            "limit_test": _resolve(args, config, "limit_test", None),
        },
    }
    _write_manifest(args.out, "train", seed, resolved, t0, outputs)
    final = records[-1]
    print(f"final test error: {final.test_error_pct:.2f}%  (epochs: {len(records)})")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    t0 = time.time()
    spec_dict = _load_config(args.spec)
    spec = SweepSpec.from_dict(spec_dict)
    if args.mode is not None:
        spec = SweepSpec.from_dict({**spec.to_dict(), "mode": args.mode})
    if args.workers is not None:
        spec = SweepSpec.from_dict({**spec.to_dict(), "workers": args.workers})
    if args.full:
        overrides = {
            **spec.to_dict(),
            "epochs": 30,
            "dw0_grid": list(np.geomspace(0.004, 0.3, 9)),
            "w_max_grid": list(np.geomspace(0.5, 20.0, 9)),
        }
        spec = SweepSpec.from_dict(overrides)
    train_data = load_idx(args.train_images, args.train_labels, split="train")
    test_data = load_idx(args.test_images, args.test_labels, split="test")
    os.makedirs(args.out, exist_ok=True)

    runner = {
        "contour": run_contour,
        "wsym": run_wsym_sweep,
        "activation": activation_comparison,
    }[spec.mode]
    result = runner(spec, train_data, test_data, out_dir=args.out)
    outputs = ["results.csv"]
    n_err = sum(1 for r in result.records if r.status != "ok")

    if spec.mode == "contour":
        reporting.plot_contour(result, os.path.join(args.out, "contour.png"))
        reporting.plot_states_scatter(
            states_scatter(result), os.path.join(args.out, "states_scatter.png")
        )
        outputs += ["contour.png", "states_scatter.png"]
    elif spec.mode == "wsym":
        curve = min_error_curve(result)
        reporting.write_min_error_csv(curve, os.path.join(args.out, "min_error_curve.csv"))
        reporting.plot_wsym_curves(curve, os.path.join(args.out, "wsym_curves.png"))
        outputs += ["min_error_curve.csv", "wsym_curves.png"]
    else:
        rows = []
        for frac in sorted({f for f in spec.wsym_fractions if f > 0}):
            try:
                metrics = asymmetry_metric(result, frac)
            except ValueError:
                continue
            for act, value in sorted(metrics.items()):
                rows.append((frac, act, value))
        with open(os.path.join(args.out, "asymmetry.csv"), "w", newline="") as f:
            f.write("wsym_frac,activation,asymmetry_pct\n")
            for frac, act, value in rows:
                f.write(f"{frac!r},{act},{value!r}\n")
        outputs.append("asymmetry.csv")

    _write_manifest(args.out, "sweep", spec.master_seed, spec.to_dict(), t0, outputs)
    print(
        f"sweep complete: {len(result.records)} cells, {n_err} failed, "
        f"results in {os.path.join(args.out, 'results.csv')}"
    )
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    t0 = time.time()
    nominal = params_from_imbalance(args.dw0, args.wmax, args.wsym)
    var = DeviceVariation(
        dtod_dw0_std=args.dtod_dw0,
        dtod_bound_std=args.dtod_bound,
        ctoc_dw0_std=args.ctoc,
    )
    init_rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(0xC0,)))
    init = init_rng.uniform(-args.wmax / 2, args.wmax / 2, size=(args.rows, args.cols))
    tile = new_tile(
        args.rows,
        args.cols,
        nominal,
        var,
        AnalogConfig.ideal(),
        PulseUpdateConfig(),
        init_spec=init,
        seed=args.seed,
    )
    rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(0xC1,)))
    report = zero_shift_calibrate(
        tile,
        args.n_pairs,
        rng,
        diagnostics=True,
        trace_device=(args.trace_row, args.trace_col),
    )
    os.makedirs(args.out, exist_ok=True)
    reporting.write_calibration_csv(report, os.path.join(args.out, "calibration.csv"))
    trace = PulseTrace(
        directions=np.tile(["U", "D"], args.n_pairs),
        readings=report.device_trace,
    )
    write_trace_csv(trace, os.path.join(args.out, "device_trace.csv"))
    reporting.plot_calibration_trace(
        report, os.path.join(args.out, "calibration_trace.png")
    )
    config = {
        "rows": args.rows,
        "cols": args.cols,
        "dw0": args.dw0,
        "wmax": args.wmax,
        "wsym": args.wsym,
        "n_pairs": args.n_pairs,
        "ctoc": args.ctoc,
        "dtod_dw0": args.dtod_dw0,
        "dtod_bound": args.dtod_bound,
        "trace_device": [args.trace_row, args.trace_col],
    }
    _write_manifest(
        args.out,
        "calibrate",
        args.seed,
        config,
        t0,
        ["calibration.csv", "device_trace.csv", "calibration_trace.png"],
    )
    print(
        f"calibrated {args.rows}x{args.cols} tile: max residual "
        f"{report.max_residual:.4g}, mean {report.mean_residual:.4g}"
    )
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    t0 = time.time()
    trace = read_trace_csv(args.trace)
    fit = fit_soft_bound(trace)
    os.makedirs(args.out, exist_ok=True)
    payload = {
        "dw0_plus": fit.params.dw0_plus,
        "dw0_minus": fit.params.dw0_minus,
        "w_max": fit.params.w_max,
        "w_min": fit.params.w_min,
        "w_sym": symmetry_point(fit.params),
        "rms": fit.rms,
        "linear_rms": fit.linear_rms,
    }
    with open(os.path.join(args.out, "fit.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    reporting.plot_fit(trace, fit, os.path.join(args.out, "fit.png"))
    _write_manifest(
        args.out,
        "fit",
        None,
        {"trace": args.trace},
        t0,
        ["fit.json", "fit.png"],
    )
    print(
        f"fit: dw0+={fit.params.dw0_plus:.4g} dw0-={fit.params.dw0_minus:.4g} "
        f"w_max={fit.params.w_max:.4g} w_min={fit.params.w_min:.4g} "
        f"rms={fit.rms:.4g} (linear {fit.linear_rms:.4g})"
    )
    return 0


def _parse_pattern(text: str) -> list[tuple[Direction, int]]:
    pattern = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            d, n = part.split(":")
            direction = {"U": Direction.UP, "D": Direction.DOWN}[d.strip()]
            count = int(n)
        except (ValueError, KeyError) as exc:
            raise ValueError(f"bad pattern element {part!r}, expected 'U:400'") from exc
        pattern.append((direction, count))
    if not pattern:
        raise ValueError("empty pulse pattern")
    return pattern


def _cmd_gen_trace(args: argparse.Namespace) -> int:
    t0 = time.time()
    params = SoftBoundParams(
        dw0_plus=args.dw0_plus,
        dw0_minus=args.dw0_minus,
        w_max=args.wmax,
        w_min=args.wmin,
    )
    pattern = _parse_pattern(args.pattern)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(0xD0,)))
    trace = make_trace(
        params,
        args.w0,
        pattern,
        kind=args.kind,
        ctoc_std=args.ctoc,
        read_noise_std=args.read_noise,
        rng=rng,
    )
    os.makedirs(args.out, exist_ok=True)
    write_trace_csv(trace, os.path.join(args.out, "trace.csv"))
    config = {
        "dw0_plus": args.dw0_plus,
        "dw0_minus": args.dw0_minus,
        "wmax": args.wmax,
        "wmin": args.wmin,
        "w0": args.w0,
        "pattern": args.pattern,
        "kind": args.kind,
        "ctoc": args.ctoc,
        "read_noise": args.read_noise,
    }
    _write_manifest(args.out, "gen-trace", args.seed, config, t0, ["trace.csv"])
    print(f"wrote {len(trace)} pulses to {os.path.join(args.out, 'trace.csv')}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "calibrate": _cmd_calibrate,
    "fit": _cmd_fit,
    "gen-trace": _cmd_gen_trace,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, FitError, IdxFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
