"""Synapse device models: soft-bound and linear pulse responses.

The soft-bound model describes a resistive device whose weight change per
programming pulse shrinks linearly as the weight approaches a bound:

    potentiation:  dw = +(dw0_plus  / w_max)   * (w_max - w)
    depression:    dw = -(dw0_minus / |w_min|) * (w - w_min)

``dw0_plus`` and ``dw0_minus`` are step magnitudes at w = 0, so repeated
pulsing produces the familiar saturating (exponential) pulse response.  A
device with unequal up/down responses has a symmetry point ``w_sym`` where
the two step magnitudes coincide; alternating up/down pulses drift the
weight toward it.  :func:`zero_shift` re-expresses the weight range so the
symmetry point lands on logical zero, and :func:`fit_soft_bound` recovers
model parameters from a measured pulse-response trace.

The linear model applies a constant step of magnitude ``dw0`` with hard
clipping at the bounds.

All weights are dimensionless logical weights; mapping from physical
conductance is upstream of this package.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Direction",
    "SoftBoundParams",
    "ShiftedParams",
    "DeviceVariation",
    "PulseTrace",
    "FitResult",
    "FitError",
    "potentiation_step",
    "depression_step",
    "linear_step",
    "symmetry_point",
    "zero_shift",
    "params_from_imbalance",
    "sample_device",
    "apply_pulse",
    "nominal_num_states",
    "predict_trace",
    "closed_form_weight",
    "make_trace",
    "fit_soft_bound",
    "read_trace_csv",
    "write_trace_csv",
]


class Direction(enum.Enum):
    """Pulse polarity: UP potentiates (weight increase), DOWN depresses."""

    UP = "U"
    DOWN = "D"


@dataclass(frozen=True)
class SoftBoundParams:
    """Soft-bound device parameters.

    Step magnitudes are stored as magnitudes; the sign of the depression
    step is applied by the operation, not the parameter.
    """

    dw0_plus: float   # |step| at w=0, potentiation
    dw0_minus: float  # |step| at w=0, depression
    w_max: float      # upper weight bound, > 0
    w_min: float      # lower weight bound, < 0

    def __post_init__(self) -> None:
        if not (self.dw0_plus > 0 and self.dw0_minus > 0):
            raise ValueError(
                f"step magnitudes must be positive, got dw0_plus={self.dw0_plus}, "
                f"dw0_minus={self.dw0_minus}"
            )
        if not (self.w_min < 0 < self.w_max):
            raise ValueError(
                f"bounds must straddle zero, got w_min={self.w_min}, w_max={self.w_max}"
            )
        # A single noiseless pulse must not jump past a bound.
        if not self.dw0_plus < self.w_max:
            raise ValueError(f"dw0_plus={self.dw0_plus} must be < w_max={self.w_max}")
        if not self.dw0_minus < -self.w_min:
            raise ValueError(f"dw0_minus={self.dw0_minus} must be < |w_min|={-self.w_min}")

    @property
    def up_rate(self) -> float:
        """Fractional approach rate toward w_max per up pulse."""
        return self.dw0_plus / self.w_max

    @property
    def down_rate(self) -> float:
        """Fractional approach rate toward w_min per down pulse."""
        return self.dw0_minus / abs(self.w_min)


@dataclass(frozen=True)
class ShiftedParams:
    """A device description with its weight range shifted by -w_sym.

    The shift keeps the range width and moves both bounds so the symmetry
    point of the shifted range is exactly zero:

        w_max_shifted = w_max - w_sym
        w_min_shifted = w_min - w_sym
    """

    base: SoftBoundParams
    w_sym: float
    w_max_shifted: float
    w_min_shifted: float

    def to_params(self) -> SoftBoundParams:
        """Equivalent soft-bound parameters in the shifted coordinates.

        The per-pulse fractional rates a = dw0_plus/w_max and
        b = dw0_minus/|w_min| are physical properties of the device and are
        preserved; the step magnitudes at the new zero follow from them.
        """
        a = self.base.up_rate
        b = self.base.down_rate
        return SoftBoundParams(
            dw0_plus=a * self.w_max_shifted,
            dw0_minus=b * abs(self.w_min_shifted),
            w_max=self.w_max_shifted,
            w_min=self.w_min_shifted,
        )


@dataclass(frozen=True)
class DeviceVariation:
    """Relative variation magnitudes, as fractions of the nominal value.

    ``dtod_*`` are device-to-device (spatial) spreads sampled once per
    device; ``ctoc_dw0_std`` is the cycle-to-cycle (temporal) spread applied
    to every pulse's step magnitude.
    """

    dtod_dw0_std: float = 0.30
    dtod_bound_std: float = 0.30
    ctoc_dw0_std: float = 0.30

    def __post_init__(self) -> None:
        for name in ("dtod_dw0_std", "dtod_bound_std", "ctoc_dw0_std"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ValueError(f"{name} must be in [0, 1), got {v}")

    @classmethod
    def none(cls) -> "DeviceVariation":
        return cls(0.0, 0.0, 0.0)


@dataclass
class PulseTrace:
    """A pulse-response trace: applied pulse directions and weight readings.

    ``readings`` has one more entry than ``directions``: the initial state
    is included, and readings[k] is the weight after the k-th pulse.
    """

    directions: np.ndarray  # shape (n,), elements "U" or "D"
    readings: np.ndarray    # shape (n+1,), float

    def __post_init__(self) -> None:
        self.directions = np.asarray(self.directions, dtype="<U1")
        self.readings = np.asarray(self.readings, dtype=float)
        if self.readings.ndim != 1 or self.directions.ndim != 1:
            raise ValueError("trace arrays must be one-dimensional")
        if len(self.readings) != len(self.directions) + 1:
            raise ValueError(
                f"readings length {len(self.readings)} must be directions "
                f"length {len(self.directions)} + 1 (initial state included)"
            )
        bad = ~np.isin(self.directions, ("U", "D"))
        if bad.any():
            raise ValueError(f"invalid direction {self.directions[bad][0]!r}")

    def __len__(self) -> int:
        return len(self.directions)

    def segments(self) -> list[tuple[str, int, int]]:
        """Contiguous same-direction runs as (direction, start, count).

        ``start`` indexes into ``readings``: the run covers readings
        [start .. start+count], i.e. its initial state plus one reading per
        pulse.
        """
        if len(self.directions) == 0:
            return []
        out = []
        start = 0
        for k in range(1, len(self.directions) + 1):
            if k == len(self.directions) or self.directions[k] != self.directions[start]:
                out.append((str(self.directions[start]), start, k - start))
                start = k
        return out


@dataclass(frozen=True)
class FitResult:
    """Fitted soft-bound parameters plus residual diagnostics.

    ``rms`` is the root-mean-square residual of the soft-bound fit over all
    trace points; ``linear_rms`` is the same statistic for the best
    constant-step (linear) fit, for model comparison.
    """

    params: SoftBoundParams
    rms: float
    linear_rms: float


class FitError(RuntimeError):
    """Raised when a pulse-response trace cannot support a model fit."""


# ---------------------------------------------------------------------------
# step functions


def _check_in_bounds(w, w_min: float, w_max: float) -> None:
    w = np.asarray(w)
    if np.any(w < w_min) or np.any(w > w_max):
        raise ValueError(f"weight {w} outside [{w_min}, {w_max}]")


def potentiation_step(p: SoftBoundParams, w):
    """Noiseless up-pulse weight change at weight ``w`` (scalar or array).

    dw = (dw0_plus / w_max) * (w_max - w); vanishes at the upper bound.
    """
    _check_in_bounds(w, p.w_min, p.w_max)
    return p.up_rate * (p.w_max - np.asarray(w, dtype=float))


def depression_step(p: SoftBoundParams, w):
    """Noiseless down-pulse weight change at weight ``w`` (negative value).

    dw = -(dw0_minus / |w_min|) * (w - w_min); vanishes at the lower bound.
    """
    _check_in_bounds(w, p.w_min, p.w_max)
    return -p.down_rate * (np.asarray(w, dtype=float) - p.w_min)


def linear_step(dw0: float, direction: Direction, w, w_min: float, w_max: float):
    """Constant-step model: +-dw0, clipped so the result stays in bounds."""
    if dw0 <= 0:
        raise ValueError(f"dw0 must be positive, got {dw0}")
    _check_in_bounds(w, w_min, w_max)
    w = np.asarray(w, dtype=float)
    if direction is Direction.UP:
        return np.minimum(dw0, w_max - w)
    return -np.minimum(dw0, w - w_min)


# ---------------------------------------------------------------------------
# symmetry point and zero shift


def symmetry_point(p: SoftBoundParams) -> float:
    """The unique weight where up and down step magnitudes are equal.

    Setting potentiation_step(w) = -depression_step(w) and solving gives

        w_sym = (a * w_max + b * w_min) / (a + b)

    with a = dw0_plus/w_max and b = dw0_minus/|w_min|.  For symmetric
    bounds this reduces to w_max * (a - b) / (a + b).
    """
    a = p.up_rate
    b = p.down_rate
    return (a * p.w_max + b * p.w_min) / (a + b)


def zero_shift(p: SoftBoundParams) -> ShiftedParams:
    """Shift the weight range by -w_sym so the symmetry point maps to zero.

    The range width is preserved; only the bounds move:
    w_max' = w_max - w_sym, w_min' = w_min - w_sym.
    """
    s = symmetry_point(p)
    return ShiftedParams(
        base=p,
        w_sym=s,
        w_max_shifted=p.w_max - s,
        w_min_shifted=p.w_min - s,
    )


def params_from_imbalance(
    dw0_mean: float, w_max: float, target_wsym: float
) -> SoftBoundParams:
    """Construct a symmetric-bounds device with a prescribed symmetry point.

    Given mean step magnitude m = (dw0_plus + dw0_minus)/2 and bounds
    +-w_max, the symmetry point is w_max*(dw0_plus - dw0_minus)/(dw0_plus +
    dw0_minus); inverting under the mean constraint gives

        dw0_plus  = m * (w_max + target) / w_max
        dw0_minus = m * (w_max - target) / w_max

    Raises ValueError when |target| >= w_max (no valid step magnitudes), or
    when the implied step would exceed the bound (very coarse devices).
    """
    if dw0_mean <= 0:
        raise ValueError(f"dw0_mean must be positive, got {dw0_mean}")
    if w_max <= 0:
        raise ValueError(f"w_max must be positive, got {w_max}")
    if abs(target_wsym) >= w_max:
        raise ValueError(
            f"target symmetry point {target_wsym} infeasible for w_max={w_max}"
        )
    return SoftBoundParams(
        dw0_plus=dw0_mean * (w_max + target_wsym) / w_max,
        dw0_minus=dw0_mean * (w_max - target_wsym) / w_max,
        w_max=w_max,
        w_min=-w_max,
    )


# ---------------------------------------------------------------------------
# sampling and pulsing


def sample_device(
    nominal: SoftBoundParams, var: DeviceVariation, rng: np.random.Generator
) -> SoftBoundParams:
    """Draw one device from the device-to-device variation distribution.

    Each of dw0_plus, dw0_minus, w_max, |w_min| is multiplied by an
    independent (1 + sigma*N(0,1)), clamped to >= 0.01 to preserve signs.
    The step magnitudes are additionally capped below their bound so every
    sampled device is a valid soft-bound model (independent multipliers can
    otherwise push a step past a shrunken bound, ~1e-4 of devices at 30%).
    """
    ms = rng.standard_normal(4)
    m_dwp = max(0.01, 1.0 + var.dtod_dw0_std * ms[0])
    m_dwm = max(0.01, 1.0 + var.dtod_dw0_std * ms[1])
    m_wmax = max(0.01, 1.0 + var.dtod_bound_std * ms[2])
    m_wmin = max(0.01, 1.0 + var.dtod_bound_std * ms[3])
    w_max = nominal.w_max * m_wmax
    w_min = -abs(nominal.w_min) * m_wmin
    return SoftBoundParams(
        dw0_plus=min(nominal.dw0_plus * m_dwp, 0.99 * w_max),
        dw0_minus=min(nominal.dw0_minus * m_dwm, 0.99 * abs(w_min)),
        w_max=w_max,
        w_min=w_min,
    )


def apply_pulse(
    p: SoftBoundParams,
    w: float,
    direction: Direction,
    ctoc_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> float:
    """Apply one programming pulse with cycle-to-cycle noise.

    The noiseless step is scaled by max(0, 1 + ctoc_std*N(0,1)) so noise
    never reverses the pulse direction, then the result is hard-clipped to
    the device bounds.
    """
    if direction is Direction.UP:
        step = potentiation_step(p, w)
    else:
        step = depression_step(p, w)
    if ctoc_std > 0.0:
        if rng is None:
            raise ValueError("rng required when ctoc_std > 0")
        step = step * max(0.0, 1.0 + ctoc_std * rng.standard_normal())
    return float(np.clip(w + step, p.w_min, p.w_max))


def nominal_num_states(p: SoftBoundParams, dw0: float) -> float:
    """Nominal number of states (w_max - w_min) / dw0."""
    if dw0 <= 0:
        raise ValueError(f"dw0 must be positive, got {dw0}")
    return (p.w_max - p.w_min) / dw0


# ---------------------------------------------------------------------------
# traces


def predict_trace(
    p: SoftBoundParams, w0: float, n_pulses: int, direction: Direction
) -> PulseTrace:
    """Noiseless single-direction pulse response from ``w0``.

    Iterates the exact discrete recurrence w <- w + step(w); the result is
    monotone and converges geometrically toward the relevant bound.
    """
    _check_in_bounds(w0, p.w_min, p.w_max)
    if n_pulses < 0:
        raise ValueError("n_pulses must be >= 0")
    readings = np.empty(n_pulses + 1)
    readings[0] = w0
    w = w0
    if direction is Direction.UP:
        rate, bound = p.up_rate, p.w_max
    else:
        rate, bound = p.down_rate, p.w_min
    for k in range(n_pulses):
        w = w + rate * (bound - w)
        readings[k + 1] = w
    return PulseTrace(
        directions=np.full(n_pulses, direction.value), readings=readings
    )


def closed_form_weight(p: SoftBoundParams, w0: float, n, direction: Direction):
    """Closed-form weight after ``n`` pulses (``n`` may be an array).

    w_n = bound - (bound - w0) * (1 - rate)^n, with bound/rate the relevant
    directional pair.  Equals the iterated recurrence exactly in exact
    arithmetic; to ~1e-12 in floating point.
    """
    n = np.asarray(n, dtype=float)
    if direction is Direction.UP:
        rate, bound = p.up_rate, p.w_max
    else:
        rate, bound = p.down_rate, p.w_min
    return bound - (bound - w0) * (1.0 - rate) ** n


def make_trace(
    p: SoftBoundParams,
    w0: float,
    pattern: Sequence[tuple[Direction, int]],
    *,
    kind: str = "softbound",
    ctoc_std: float = 0.0,
    read_noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> PulseTrace:
    """Generate a synthetic measured trace.

    ``pattern`` is a sequence of (direction, pulse count) runs.  Pulse
    dynamics use ``ctoc_std`` cycle noise; ``read_noise_std`` is additive
    Gaussian measurement noise on the recorded readings only (it does not
    feed back into the weight).  ``kind`` selects the soft-bound or linear
    update model; for the linear model the step magnitudes are taken from
    ``p.dw0_plus`` / ``p.dw0_minus``.
    """
    if kind not in ("softbound", "linear"):
        raise ValueError(f"unknown device kind {kind!r}")
    if (ctoc_std > 0 or read_noise_std > 0) and rng is None:
        raise ValueError("rng required for a noisy trace")
    _check_in_bounds(w0, p.w_min, p.w_max)
    directions: list[str] = []
    true = [float(w0)]
    w = float(w0)
    for direction, count in pattern:
        if count < 1:
            raise ValueError("each pattern run needs at least one pulse")
        for _ in range(count):
            if kind == "softbound":
                w = apply_pulse(p, w, direction, ctoc_std, rng)
            else:
                dw0 = p.dw0_plus if direction is Direction.UP else p.dw0_minus
                step = linear_step(dw0, direction, w, p.w_min, p.w_max)
                if ctoc_std > 0:
                    step = step * max(0.0, 1.0 + ctoc_std * rng.standard_normal())
                w = float(np.clip(w + step, p.w_min, p.w_max))
            directions.append(direction.value)
            true.append(w)
    readings = np.asarray(true)
    if read_noise_std > 0:
        readings = readings + read_noise_std * rng.standard_normal(len(readings))
    return PulseTrace(directions=np.asarray(directions), readings=readings)


def write_trace_csv(trace: PulseTrace, path) -> None:
    """Write a trace as CSV with header ``pulse_index,direction,weight``.

    Row k >= 1 holds the direction of pulse k and the reading after it.
    Row 0 carries the initial reading; its direction column repeats the
    first pulse's direction by convention and readers ignore it.
    """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["pulse_index", "direction", "weight"])
        first = trace.directions[0] if len(trace.directions) else "U"
        writer.writerow([0, first, repr(float(trace.readings[0]))])
        for k, (d, w) in enumerate(zip(trace.directions, trace.readings[1:]), start=1):
            writer.writerow([k, d, repr(float(w))])


def read_trace_csv(path) -> PulseTrace:
    """Read a trace CSV written by :func:`write_trace_csv` (or equivalent)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "pulse_index",
            "direction",
            "weight",
        ]:
            raise ValueError(
                f"{path}: expected header 'pulse_index,direction,weight', got {header}"
            )
        directions = []
        readings = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            idx, d, w = row[0].strip(), row[1].strip(), row[2].strip()
            if d not in ("U", "D"):
                raise ValueError(f"{path}:{lineno}: direction must be U or D, got {d!r}")
            if int(idx) != len(readings):
                raise ValueError(
                    f"{path}:{lineno}: pulse_index {idx} out of order "
                    f"(expected {len(readings)})"
                )
            if len(readings) > 0:
                directions.append(d)
            readings.append(float(w))
    if len(readings) < 2:
        raise ValueError(f"{path}: trace needs at least one pulse")
    return PulseTrace(directions=np.asarray(directions), readings=np.asarray(readings))


# ---------------------------------------------------------------------------
# model fitting


def _gauss_newton(residual_fn, theta0: np.ndarray, n_iter: int = 100) -> np.ndarray:
    """Damped Gauss-Newton with a numeric Jacobian and step halving."""
    theta = np.asarray(theta0, dtype=float)
    r = residual_fn(theta)
    cost = float(r @ r)
    for _ in range(n_iter):
        jac = np.empty((len(r), len(theta)))
        for k in range(len(theta)):
            h = 1e-6 * max(1.0, abs(theta[k]))
            tp = theta.copy()
            tp[k] += h
            tm = theta.copy()
            tm[k] -= h
            jac[:, k] = (residual_fn(tp) - residual_fn(tm)) / (2 * h)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        # Backtrack until the squared residual actually decreases.
        scale = 1.0
        for _ in range(30):
            cand = theta + scale * step
            rc = residual_fn(cand)
            cc = float(rc @ rc)
            if np.isfinite(cc) and cc <= cost:
                break
            scale *= 0.5
        else:
            break
        converged = np.max(np.abs(scale * step)) < 1e-12 * (1 + np.max(np.abs(theta)))
        theta, r, cost = cand, rc, cc
        if converged:
            break
    return theta


def _direction_segments(trace: PulseTrace, d: str) -> list[tuple[int, int]]:
    return [(start, count) for dd, start, count in trace.segments() if dd == d]


def _fit_direction(trace: PulseTrace, d: str) -> tuple[float, float, float]:
    """Fit bound and retention factor for one direction.

    The closed form for every segment is w_n = bound + (w0 - bound)*rho^n
    with per-segment free initial value w0 and shared (bound, rho).
    Returns (bound, rho, rms-contribution-sum-of-squares).
    """
    segs = _direction_segments(trace, d)
    if not segs or max(c for _, c in segs) < 10:
        raise FitError(f"need at least one {d} run with >= 10 pulses")
    ys = [trace.readings[s : s + c + 1] for s, c in segs]
    all_y = np.concatenate(ys)
    spread = all_y.max() - all_y.min()
    if spread < 1e-12:
        raise FitError(f"{d} readings are constant; nothing to fit")

    # Variable-projection initialization: for fixed rho the model
    # w_n = bound*(1 - rho^n) + w0*rho^n is linear in bound and the
    # per-segment w0, so scan rho on a log grid, solve the linear
    # subproblem, and start Gauss-Newton from the best candidate.  A plain
    # log-linear rate estimate is unusable here: a long noisy plateau after
    # convergence drags the slope toward zero and strands the solver on the
    # degenerate rho -> 1 ridge.
    pulse_counts = [np.arange(len(y), dtype=float) for y in ys]
    best = None
    for one_minus_rho in np.geomspace(1e-5, 0.99, 60):
        rho = 1.0 - one_minus_rho
        decay = [rho**nn for nn in pulse_counts]
        cols = [np.concatenate([1.0 - dk for dk in decay])]
        for k, dk in enumerate(decay):
            col = np.zeros(len(all_y))
            start = sum(len(y) for y in ys[:k])
            col[start : start + len(dk)] = dk
            cols.append(col)
        a = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(a, all_y, rcond=None)
        resid = a @ coef - all_y
        cost = float(resid @ resid)
        if best is None or cost < best[0]:
            best = (cost, rho, coef)
    _, rho0, coef0 = best
    theta0 = np.array([coef0[0], rho0, *coef0[1:]])

    def residuals(theta: np.ndarray) -> np.ndarray:
        bound, rho = theta[0], theta[1]
        if not (0.0 < rho < 1.0):
            return np.full(sum(len(y) for y in ys), 1e6)
        out = []
        for k, y in enumerate(ys):
            w0 = theta[2 + k]
            nn = np.arange(len(y), dtype=float)
            out.append(bound + (w0 - bound) * rho**nn - y)
        return np.concatenate(out)

    theta = _gauss_newton(residuals, theta0)
    r = residuals(theta)
    return float(theta[0]), float(theta[1]), float(r @ r)


def _fit_linear_rms(trace: PulseTrace) -> float:
    """Best constant-step fit: shared slope per direction, free intercepts.

    Each segment is modeled as w_n = w0_s + slope_d * n; least squares via
    one design matrix per direction.
    """
    total_sq = 0.0
    total_n = 0
    for d in ("U", "D"):
        segs = _direction_segments(trace, d)
        if not segs:
            continue
        rows = []
        ys = []
        for k, (s, c) in enumerate(segs):
            y = trace.readings[s : s + c + 1]
            nn = np.arange(c + 1, dtype=float)
            block = np.zeros((c + 1, 1 + len(segs)))
            block[:, 0] = nn
            block[:, 1 + k] = 1.0
            rows.append(block)
            ys.append(y)
        a = np.vstack(rows)
        y = np.concatenate(ys)
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        resid = a @ coef - y
        total_sq += float(resid @ resid)
        total_n += len(y)
    return float(np.sqrt(total_sq / total_n))


def fit_soft_bound(trace: PulseTrace) -> FitResult:
    """Least-squares soft-bound fit to a measured pulse-response trace.

    Fits the closed-form exponential trajectory per direction (shared bound
    and rate, free initial value per run) with damped Gauss-Newton, then
    maps (bound, rho) back to step magnitudes: dw0 = (1 - rho) * |bound|.
    The returned :class:`FitResult` carries the soft-bound residual RMS and
    the residual RMS of the best linear (constant-step) fit over the same
    points for model comparison.

    Requires at least one potentiation run and one depression run of >= 10
    pulses each; raises :class:`FitError` otherwise, or when the fitted
    bounds do not straddle zero.
    """
    w_max, rho_up, sq_up = _fit_direction(trace, "U")
    w_min, rho_dn, sq_dn = _fit_direction(trace, "D")
    if not (w_min < 0 < w_max):
        raise FitError(
            f"fitted bounds [{w_min:.4g}, {w_max:.4g}] do not straddle zero"
        )
    params = SoftBoundParams(
        dw0_plus=(1.0 - rho_up) * w_max,
        dw0_minus=(1.0 - rho_dn) * abs(w_min),
        w_max=w_max,
        w_min=w_min,
    )
    n_points = sum(c + 1 for _, _, c in trace.segments())
    rms = float(np.sqrt((sq_up + sq_dn) / n_points))
    return FitResult(params=params, rms=rms, linear_rms=_fit_linear_rms(trace))
