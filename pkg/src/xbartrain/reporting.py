"""Delimited outputs and rendered figures for every workflow.

CSV writers put the numbers on disk; each figure function renders one PNG
next to them.  Figures use the Agg backend only (no display server), and
pyplot is imported on first use so that CSV-only paths, including sweep
worker processes, never pay the matplotlib import.
"""

from __future__ import annotations

import csv

import numpy as np

__all__ = [
    "write_epochs_csv",
    "write_weights_hist_csv",
    "write_calibration_csv",
    "write_min_error_csv",
    "plot_error_curves",
    "plot_weight_hists",
    "plot_contour",
    "plot_wsym_curves",
    "plot_states_scatter",
    "plot_calibration_trace",
    "plot_fit",
]


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


# ---------------------------------------------------------------------------
# CSV writers


def write_epochs_csv(records, path) -> None:
    """epoch,test_error_pct,train_loss, one row per epoch."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "test_error_pct", "train_loss"])
        for r in records:
            writer.writerow([r.epoch, repr(r.test_error_pct), repr(r.train_loss)])


def write_weights_hist_csv(summary, path) -> None:
    """bin_lo,bin_hi,count for one layer; mean/std in a comment header."""
    with open(path, "w", newline="") as f:
        f.write(f"# mean={summary.mean!r} std={summary.std!r}\n")
        writer = csv.writer(f)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(
            summary.hist_edges[:-1], summary.hist_edges[1:], summary.hist_counts
        ):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def write_calibration_csv(report, path) -> None:
    """device_index,analytic_wsym,final_weight,residual (row-major devices)."""
    if report.analytic_wsym is None:
        raise ValueError("calibration CSV needs a diagnostics report")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["device_index", "analytic_wsym", "final_weight", "residual"])
        wsym = report.analytic_wsym.ravel()
        final = report.final_weights.ravel()
        resid = report.residuals.ravel()
        for k in range(len(wsym)):
            writer.writerow(
                [k, repr(float(wsym[k])), repr(float(final[k])), repr(float(resid[k]))]
            )


def write_min_error_csv(curve, path) -> None:
    """wsym_frac,zero_shift,min_test_error_pct rows from a min-error curve."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["wsym_frac", "zero_shift", "min_test_error_pct"])
        for frac, shift, err in curve:
            writer.writerow([repr(frac), "on" if shift else "off", repr(err)])


# ---------------------------------------------------------------------------
# figures


def plot_error_curves(records, path, title: str = "Test error vs epoch") -> None:
    plt = _plt()
    epochs = [r.epoch for r in records]
    errs = [r.test_error_pct for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, errs, marker="o", lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("test error [%]")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_weight_hists(summaries, path) -> None:
    """One panel per layer of the final effective-weight distribution."""
    plt = _plt()
    n = len(summaries)
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 3.2))
    if n == 1:
        axes = [axes]
    for k, (ax, s) in enumerate(zip(axes, summaries)):
        centers = 0.5 * (s.hist_edges[:-1] + s.hist_edges[1:])
        widths = np.diff(s.hist_edges)
        ax.bar(centers, s.hist_counts, width=widths, align="center")
        ax.axvline(0.0, color="k", lw=0.8, ls="--")
        ax.set_title(f"layer {k + 1} (mean {s.mean:.3g})")
        ax.set_xlabel("effective weight")
    axes[0].set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_contour(result, path) -> None:
    """Heatmap of final test error over the (dw0, w_max) grid, log axes.

    Multiple seeds per cell reduce to their minimum; failed cells render
    as gaps.
    """
    plt = _plt()
    from matplotlib.colors import LogNorm

    dw0s = sorted({r.dw0 for r in result.records})
    wmaxs = sorted({r.w_max for r in result.records})
    grid = np.full((len(wmaxs), len(dw0s)), np.nan)
    for r in result.ok_records():
        i = wmaxs.index(r.w_max)
        j = dw0s.index(r.dw0)
        v = r.final_test_error_pct
        if np.isnan(grid[i, j]) or v < grid[i, j]:
            grid[i, j] = v
    fig, ax = plt.subplots(figsize=(6, 4.5))
    finite = grid[np.isfinite(grid)]
    norm = LogNorm() if finite.size and finite.min() > 0 else None
    mesh = ax.pcolormesh(dw0s, wmaxs, grid, shading="nearest", norm=norm)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\Delta w_0$")
    ax.set_ylabel(r"$w_\mathrm{max}$")
    ax.set_title("Final test error [%]")
    fig.colorbar(mesh, ax=ax, label="test error [%]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_wsym_curves(curve, path) -> None:
    """Minimum error vs symmetry-point fraction, one line per shift state."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for shift, label, marker in ((False, "uncompensated", "o"), (True, "zero-shifted", "s")):
        pts = sorted((f, e) for f, s, e in curve if s == shift)
        if pts:
            ax.plot(*zip(*pts), marker=marker, label=label)
    ax.set_xlabel(r"$w_\mathrm{sym} / w_\mathrm{max}$")
    ax.set_ylabel("min test error [%]")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_states_scatter(pairs, path) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    if pairs:
        states, errs = zip(*pairs)
        ax.scatter(states, errs, s=18, alpha=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("nominal number of states")
    ax.set_ylabel("final test error [%]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_calibration_trace(report, path) -> None:
    """Zig-zag weight trajectory of the traced device during calibration."""
    if report.device_trace is None:
        raise ValueError("report has no device trace; pass trace_device")
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(report.device_trace)), report.device_trace, lw=0.8)
    if report.analytic_wsym is not None and report.trace_device is not None:
        i, j = report.trace_device
        ax.axhline(
            report.analytic_wsym[i, j], color="r", ls="--", lw=0.8, label="analytic w_sym"
        )
        ax.legend()
    ax.set_xlabel("pulse index")
    ax.set_ylabel("device weight")
    ax.set_title(f"Calibration trajectory, device {report.trace_device}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_fit(trace, fit, path) -> None:
    """Measured trace readings with the fitted model curves overlaid."""
    from .device import Direction, closed_form_weight

    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.plot(
        np.arange(len(trace.readings)),
        trace.readings,
        ".",
        ms=3,
        alpha=0.6,
        label="trace",
    )
    for d, start, count in trace.segments():
        direction = Direction.UP if d == "U" else Direction.DOWN
        nn = np.arange(count + 1)
        # Anchor each segment's curve at its fitted trajectory from the
        # segment's first reading (clipped into the fitted bounds).
        w0 = float(
            np.clip(trace.readings[start], fit.params.w_min, fit.params.w_max)
        )
        ax.plot(
            start + nn,
            closed_form_weight(fit.params, w0, nn, direction),
            "-",
            lw=1.2,
            color="C1",
        )
    ax.plot([], [], "-", color="C1", label="soft-bound fit")
    ax.set_xlabel("pulse index")
    ax.set_ylabel("weight")
    ax.set_title(f"rms={fit.rms:.4g}, linear rms={fit.linear_rms:.4g}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
