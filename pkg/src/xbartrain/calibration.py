"""Zero-shifting calibration: park every device at its symmetry point.

Alternating up/down pulse pairs drive each soft-bound device toward the
weight where its up and down steps cancel.  Applying the pairs to all rows
and columns of the array at once calibrates every device in parallel
without knowing any per-device parameters; copying the converged states
into the reference matrix then makes effective weight zero coincide with
each device's symmetry point.

The drive loop deliberately touches only the hardware-plausible tile
surface: ``pulse_all``, the device conductances, and ``set_reference``.
Analytic symmetry points appear only in the optional diagnostics, which
exist for reports and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .device import Direction

__all__ = [
    "ConvergenceReport",
    "converge_to_symmetry",
    "copy_to_reference",
    "zero_shift_calibrate",
]


@dataclass
class ConvergenceReport:
    """Outcome of a calibration drive.

    ``analytic_wsym`` and ``residuals`` are filled only when diagnostics
    are requested (they read device parameters, which the procedure itself
    must not).  ``device_trace`` holds the pulse-by-pulse weight of one
    selected device: the initial value followed by one reading per pulse,
    i.e. 2*n_pairs + 1 values alternating up/down.
    """

    n_pairs: int
    final_weights: np.ndarray
    analytic_wsym: np.ndarray | None = None
    residuals: np.ndarray | None = None
    trace_device: tuple[int, int] | None = None
    device_trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def max_residual(self) -> float:
        if self.residuals is None:
            raise ValueError("report was produced without diagnostics")
        return float(self.residuals.max())

    @property
    def mean_residual(self) -> float:
        if self.residuals is None:
            raise ValueError("report was produced without diagnostics")
        return float(self.residuals.mean())


def converge_to_symmetry(
    tile,
    n_pairs: int,
    rng: np.random.Generator,
    *,
    diagnostics: bool = True,
    trace_device: tuple[int, int] | None = None,
) -> ConvergenceReport:
    """Apply ``n_pairs`` of (up, down) pulse pairs to every device.

    The noiseless pair map w -> w + step_up(w) + step_down(w + step_up(w))
    is a contraction whose fixed point lies within one step magnitude of
    the analytic symmetry point; with cycle noise the weights hover around
    it.  Pair order is up-then-down, fixed for determinism.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    trace = None
    if trace_device is not None:
        i, j = trace_device
        if not (0 <= i < tile.rows and 0 <= j < tile.cols):
            raise ValueError(f"trace device {trace_device} outside {tile.rows}x{tile.cols}")
        trace = np.empty(2 * n_pairs + 1)
        trace[0] = tile.device_weights[i, j]
    for k in range(n_pairs):
        tile.pulse_all(Direction.UP, rng)
        if trace is not None:
            trace[2 * k + 1] = tile.device_weights[i, j]
        tile.pulse_all(Direction.DOWN, rng)
        if trace is not None:
            trace[2 * k + 2] = tile.device_weights[i, j]
    final = tile.device_weights.copy()
    report = ConvergenceReport(
        n_pairs=n_pairs,
        final_weights=final,
        trace_device=trace_device,
        device_trace=trace,
    )
    if diagnostics:
        report.analytic_wsym = tile.symmetry_points()
        report.residuals = np.abs(final - report.analytic_wsym)
    return report


def copy_to_reference(tile) -> None:
    """Copy current device conductances into the reference matrix.

    Afterwards every effective weight reads exactly zero; training then
    measures weights from the copied states.
    """
    tile.set_reference(tile.device_weights)


def zero_shift_calibrate(
    tile,
    n_pairs: int,
    rng: np.random.Generator,
    *,
    diagnostics: bool = True,
    trace_device: tuple[int, int] | None = None,
) -> ConvergenceReport:
    """Full zero-shifting procedure: converge, then copy to reference.

    After the call, each device's effective symmetry point sits within the
    convergence residual of zero, without the procedure ever reading a
    device parameter.  The returned report describes the converged states
    (captured before the copy).
    """
    report = converge_to_symmetry(
        tile, n_pairs, rng, diagnostics=diagnostics, trace_device=trace_device
    )
    copy_to_reference(tile)
    return report
