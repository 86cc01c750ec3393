"""Post-hoc trajectory analysis: tracking error and fitted amplitude/phase.

The probabilities in a run follow |c1|^2 = (1 + a cos(2*pi*t/P + phase))/2.
Fits are separable least squares: for each candidate period the amplitude
and phase are a 2-parameter linear problem, so the fit scans the period on
a grid and refines the best candidate by golden-section search.  That is
robust for the near-sinusoidal, lightly phase-kicked signals produced here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientData
from .trajectory import TrajectoryPoint

#: Period scan range in units of T_R and the grid resolution.
PERIOD_BOUNDS = (0.5, 2.0)
PERIOD_GRID = 1e-3

#: Fewest points an analysis window may hold.
MIN_WINDOW_POINTS = 8

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FitResult:
    """Sinusoid fit of an excitation-probability trace."""

    amplitude: float
    phase: float  # radians, in (-pi, pi]
    period: float  # units of T_R
    rms_residual: float

    def __post_init__(self):
        if not self.period > 0.0:
            raise ValueError("period must be positive")
        if not -1e-9 <= self.amplitude <= 1.0 + 1e-9:
            raise ValueError(f"amplitude {self.amplitude!r} outside [0, 1]")


def _linear_fit(t: np.ndarray, y: np.ndarray, periods: np.ndarray) -> np.ndarray:
    """Summed squared residual of the best (amplitude, phase) per period."""
    omega = 2.0 * math.pi / periods[:, None]
    c = np.cos(omega * t)
    s = np.sin(omega * t)
    # y - 1/2 = alpha cos(w t) + beta sin(w t); solve 2x2 normal equations
    cc = (c * c).sum(axis=1)
    ss = (s * s).sum(axis=1)
    cs = (c * s).sum(axis=1)
    yc = (c * y).sum(axis=1)
    ys = (s * y).sum(axis=1)
    det = cc * ss - cs * cs
    det = np.where(np.abs(det) < 1e-300, 1e-300, det)
    alpha = (yc * ss - ys * cs) / det
    beta = (ys * cc - yc * cs) / det
    resid = (y * y).sum() - alpha * yc - beta * ys
    return np.stack([alpha, beta, resid])


def _solve_at(t: np.ndarray, y: np.ndarray, period: float) -> tuple[float, float, float]:
    alpha, beta, resid = _linear_fit(t, y, np.array([period]))[:, 0]
    return float(alpha), float(beta), float(resid)


def fit_sinusoid(
    t: np.ndarray,
    y: np.ndarray,
    period_bounds: tuple[float, float] = PERIOD_BOUNDS,
    grid: float = PERIOD_GRID,
) -> FitResult:
    """Fit y(t) = (1 + a cos(2*pi*t/P + phase))/2 with t in units of T_R."""
    t = np.asarray(t, dtype=float)
    y0 = np.asarray(y, dtype=float) - 0.5
    if t.size < MIN_WINDOW_POINTS:
        raise InsufficientData(f"{t.size} points are too few for a sinusoid fit")
    lo, hi = period_bounds
    periods = np.arange(lo, hi + grid / 2, grid)
    resid = _linear_fit(t, y0, periods)[2]
    best = int(np.argmin(resid))
    a = periods[max(best - 1, 0)]
    b = periods[min(best + 1, len(periods) - 1)]
    # golden-section refinement of the residual over the bracketing interval
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = _solve_at(t, y0, x1)[2]
    f2 = _solve_at(t, y0, x2)[2]
    for _ in range(60):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = _solve_at(t, y0, x1)[2]
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = _solve_at(t, y0, x2)[2]
        if b - a < 1e-12:
            break
    period = (a + b) / 2.0
    alpha, beta, resid_best = _solve_at(t, y0, period)
    amplitude = 2.0 * math.hypot(alpha, beta)
    phase = math.atan2(-beta, alpha)
    rms = math.sqrt(max(resid_best, 0.0) / t.size)
    return FitResult(
        amplitude=min(max(amplitude, 0.0), 1.0 + 1e-9),
        phase=phase,
        period=period,
        rms_residual=rms,
    )


def wrap_phase(delta: float) -> float:
    """Reduce a phase difference into (-pi, pi]."""
    return -((-delta + math.pi) % (2.0 * math.pi) - math.pi)


@dataclass(frozen=True)
class WindowSummary:
    """Per-window tracking and fit metrics."""

    t_start: float
    t_end: float
    n_points: int
    rms_tracking: float  # RMS(estimate - c1sq_measured)
    fit_measured: FitResult
    fit_free: FitResult
    dphase: float  # fitted phase of measured minus free, wrapped


def analyze(points: list[TrajectoryPoint], window_cycles: int = 5) -> list[WindowSummary]:
    """Windowed comparison of estimate, disturbed and free oscillation.

    Windows of ``window_cycles`` Rabi periods tile the trajectory from
    t = 0.  When the duration is not a multiple of the window, one extra
    window anchored at the end is appended, so the final stretch of a run
    is always summarized.
    """
    if not points:
        raise InsufficientData("empty trajectory")
    if window_cycles < 1:
        raise ValueError("window_cycles must be >= 1")
    t = np.array([p.time for p in points])
    measured = np.array([p.c1sq_measured for p in points])
    free = np.array([p.c1sq_free for p in points])
    est = np.array([p.estimate for p in points])
    t_total = t[-1]
    starts = [float(w) for w in np.arange(0.0, t_total - window_cycles * 0.5, window_cycles)]
    if not starts:
        starts = [0.0]
    if t_total - (starts[-1] + window_cycles) > 1e-9:
        starts.append(t_total - window_cycles)
    out = []
    for t0 in starts:
        t1 = t0 + window_cycles
        sel = (t > t0 + 1e-12) & (t <= t1 + 1e-12)
        n_pts = int(sel.sum())
        if n_pts < MIN_WINDOW_POINTS:
            raise InsufficientData(
                f"window [{t0:g}, {t1:g}] holds only {n_pts} points"
            )
        # local time keeps the fitted phase referenced to the window start,
        # so a tiny period mismatch cannot masquerade as a phase shift
        fit_m = fit_sinusoid(t[sel] - t0, measured[sel])
        fit_f = fit_sinusoid(t[sel] - t0, free[sel])
        out.append(
            WindowSummary(
                t_start=t0,
                t_end=t1,
                n_points=n_pts,
                rms_tracking=float(np.sqrt(np.mean((est[sel] - measured[sel]) ** 2))),
                fit_measured=fit_m,
                fit_free=fit_f,
                dphase=wrap_phase(fit_m.phase - fit_f.phase),
            )
        )
    return out
