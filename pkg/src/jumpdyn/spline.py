"""Cubic smoothing splines and residual-force-driven parameter selection.

The smoothing spline F for data (X_i, Y_i) minimizes

    s_p * sum_i (Y_i - F(X_i))^2  +  (1 - s_p) * integral (F'')^2

over natural cubic splines with knots at the data sites.  s_p = 1 gives
the natural interpolating spline, s_p = 0 the least-squares straight
line.  The minimizer is found by solving one banded symmetric
positive-definite system (second-difference formulation), which stays
well conditioned over the whole parameter range.

Derivatives up to order 2 are exact piecewise-polynomial derivatives of
the fitted cubic, never finite differences of samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PPoly
from scipy.linalg import solveh_banded

from .model import AnthropometricTable, G_ACCEL, N_LANDMARKS, com_landmark_weights

# log10(1 - s_p) search bounds for automatic parameter selection
SELECTION_LOG_RANGE = (-10.0, -1.0)
SELECTION_GRID_POINTS = 31


class SplineInputError(ValueError):
    """Invalid abscissae, ordinates, or smoothing parameter."""


class SplineDomainError(ValueError):
    """Evaluation requested outside the fitted knot span."""


class SelectionError(RuntimeError):
    """Smoothing-parameter selection could not find a finite objective."""


@dataclass(frozen=True)
class SmoothingSpline:
    """Fitted smoothing spline with exact derivative evaluation."""

    knots: np.ndarray
    smooth: float
    values: np.ndarray          # fitted ordinates at the knots
    second_derivs: np.ndarray   # natural-spline second derivatives at the knots
    residual_ss: float          # sum of squared data residuals
    _ppoly: PPoly = field(repr=False, compare=False, default=None)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def __call__(self, t, order: int = 0):
        """Evaluate the spline or its first/second derivative at t.

        Raises SplineDomainError outside [first knot, last knot]; no
        extrapolation is performed.
        """
        if order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {order}")
        t = np.asarray(t, dtype=float)
        lo, hi = self.domain
        tol = 1e-9 * max(hi - lo, 1.0)
        if np.any(t < lo - tol) or np.any(t > hi + tol):
            raise SplineDomainError(
                f"evaluation at t outside fitted span [{lo:.6g}, {hi:.6g}]"
            )
        out = self._ppoly(np.clip(t, lo, hi), nu=order)
        return float(out) if np.isscalar(t) or t.ndim == 0 else out

    def roughness(self) -> float:
        """Integral of the squared second derivative over the span."""
        h = np.diff(self.knots)
        m = self.second_derivs
        return float(np.sum(h * (m[:-1] ** 2 + m[:-1] * m[1:] + m[1:] ** 2)) / 3.0)

    def functional_value(self, y) -> float:
        """Value of the fitted objective for the original data y."""
        return self.smooth * self.residual_ss + (1.0 - self.smooth) * self.roughness()


def _second_difference_rhs(h: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.diff(np.diff(y) / h)


def fit(x, y, smooth: float) -> SmoothingSpline:
    """Fit the smoothing spline for data (x, y) at parameter ``smooth``.

    Requires at least 4 samples with strictly increasing abscissae and
    smooth in [0, 1].
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise SplineInputError("x and y must be 1-D arrays of equal length")
    if x.size < 4:
        raise SplineInputError(f"need at least 4 samples, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise SplineInputError("data contain non-finite values")
    if np.any(np.diff(x) <= 0.0):
        raise SplineInputError("abscissae must be strictly increasing (no duplicates)")
    if not 0.0 <= smooth <= 1.0:
        raise SplineInputError(f"smoothing parameter must lie in [0, 1], got {smooth}")

    p = float(smooth)
    n = x.size
    h = np.diff(x)
    e = 1.0 / h

    # Tridiagonal roughness matrix R and pentadiagonal Q^T Q over the
    # n-2 interior knots (Q = second-difference operator).
    r_diag = (h[:-1] + h[1:]) / 3.0
    r_off = h[1:-1] / 6.0
    q_diag = e[:-1] ** 2 + (e[:-1] + e[1:]) ** 2 + e[1:] ** 2
    q_off1 = -e[1:-1] * (e[:-2] + 2.0 * e[1:-1] + e[2:])
    q_off2 = e[1:-2] * e[2:-1]

    nn = n - 2
    ab = np.zeros((3, nn))
    ab[2, :] = p * r_diag + (1.0 - p) * q_diag
    ab[1, 1:] = p * r_off + (1.0 - p) * q_off1
    ab[0, 2:] = (1.0 - p) * q_off2
    rhs = (1.0 - p) * _second_difference_rhs(h, y)
    w = solveh_banded(ab, rhs)

    # Fitted values a = y - Q w, then the natural-spline second
    # derivatives of the spline through a: R m = Q^T a.
    a = y.copy()
    a[:-2] -= e[:-1] * w
    a[1:-1] += (e[:-1] + e[1:]) * w
    a[2:] -= e[1:] * w

    ab_r = np.zeros((2, nn))
    ab_r[1, :] = r_diag
    ab_r[0, 1:] = r_off
    m = np.zeros(n)
    m[1:-1] = solveh_banded(ab_r, _second_difference_rhs(h, a))

    coeffs = np.vstack([
        (m[1:] - m[:-1]) / (6.0 * h),
        m[:-1] / 2.0,
        np.diff(a) / h - h * (2.0 * m[:-1] + m[1:]) / 6.0,
        a[:-1],
    ])
    ppoly = PPoly(coeffs, x, extrapolate=True)
    residual_ss = float(np.sum((y - a) ** 2))
    return SmoothingSpline(
        knots=x, smooth=p, values=a, second_derivs=m,
        residual_ss=residual_ss, _ppoly=ppoly,
    )


@dataclass(frozen=True)
class SmoothedKinematics:
    """One smoothing spline per landmark coordinate (10 channels).

    All channels share the knot time base of the raw capture; x and y of
    a landmark share its smoothing parameter.
    """

    splines_x: tuple[SmoothingSpline, ...]
    splines_y: tuple[SmoothingSpline, ...]
    smooth: np.ndarray  # per-landmark parameters, shape (5,)

    @property
    def domain(self) -> tuple[float, float]:
        return self.splines_x[0].domain

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        """Positions/velocities/accelerations of all landmarks, (n, 5, 2)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, N_LANDMARKS, 2))
        for j in range(N_LANDMARKS):
            out[:, j, 0] = self.splines_x[j](t, order)
            out[:, j, 1] = self.splines_y[j](t, order)
        return out


def smooth_markers(times, positions, smooth) -> SmoothedKinematics:
    """Fit all ten marker channels with per-landmark parameters.

    ``smooth`` may be a scalar or a length-5 array.
    """
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    smooth = np.broadcast_to(np.asarray(smooth, dtype=float), (N_LANDMARKS,)).copy()
    sx = tuple(fit(times, positions[:, j, 0], smooth[j]) for j in range(N_LANDMARKS))
    sy = tuple(fit(times, positions[:, j, 1], smooth[j]) for j in range(N_LANDMARKS))
    return SmoothedKinematics(splines_x=sx, splines_y=sy, smooth=smooth)


def selection_grid() -> np.ndarray:
    """Candidate smoothing parameters: log grid over 1 - s_p."""
    lo, hi = SELECTION_LOG_RANGE
    return 1.0 - np.logspace(lo, hi, SELECTION_GRID_POINTS)


def select_parameters(
    times,
    positions,
    force,
    window: tuple[int, int],
    table: AnthropometricTable,
    nu: int,
    *,
    grid: np.ndarray | None = None,
    max_sweeps: int = 5,
) -> np.ndarray:
    """Choose per-landmark smoothing parameters (shape (5,)).

    For each landmark, s_p is picked from a logarithmic grid so that the
    residual force over the push-off window is minimal: the objective is
    ||Rx - m*ax_G|| + ||Ry - m*g - m*ay_G||, with the whole-body COM
    acceleration rebuilt from candidate fits.  Landmarks are optimized
    by coordinate descent, two sweeps plus stabilization sweeps until no
    assignment changes (at most ``max_sweeps``).

    ``force`` must provide rx, ry and rate; ``window`` are inclusive
    sample indices into the force record; ``nu`` is the lag (in force
    samples) between the force clock and the marker clock.
    """
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    candidates = selection_grid() if grid is None else np.asarray(grid, dtype=float)

    i0, i1 = window
    dt = 1.0 / force.rate
    t_kin = (np.arange(i0, i1 + 1) + nu) * dt
    rx = force.rx[i0:i1 + 1]
    ry = force.ry[i0:i1 + 1]
    mass = table.total_mass
    weights = com_landmark_weights(table)

    # Candidate COM-acceleration contributions per landmark; changing one
    # landmark's parameter only swaps its own cached term.
    n_c = candidates.size
    acc_x = np.empty((N_LANDMARKS, n_c, t_kin.size))
    acc_y = np.empty((N_LANDMARKS, n_c, t_kin.size))
    for j in range(N_LANDMARKS):
        for c, sp in enumerate(candidates):
            acc_x[j, c] = fit(times, positions[:, j, 0], sp)(t_kin, 2)
            acc_y[j, c] = fit(times, positions[:, j, 1], sp)(t_kin, 2)

    def objective(idx: np.ndarray) -> float:
        ax = np.einsum("j,jt->t", weights, acc_x[np.arange(N_LANDMARKS), idx])
        ay = np.einsum("j,jt->t", weights, acc_y[np.arange(N_LANDMARKS), idx])
        res_x = rx - mass * ax
        res_y = ry - mass * G_ACCEL - mass * ay
        return float(np.linalg.norm(res_x) + np.linalg.norm(res_y))

    idx = np.zeros(N_LANDMARKS, dtype=int)  # start nearest interpolation
    for sweep in range(max_sweeps):
        changed = False
        for j in range(N_LANDMARKS):
            vals = np.empty(n_c)
            trial_idx = idx.copy()
            for c in range(n_c):
                trial_idx[j] = c
                vals[c] = objective(trial_idx)
            if not np.any(np.isfinite(vals)):
                lines = "\n".join(
                    f"  s_p={candidates[c]:.12g}: objective={vals[c]!r}" for c in range(n_c)
                )
                raise SelectionError(
                    f"non-finite objective at every grid point for landmark {j + 1}:\n{lines}"
                )
            best = int(np.nanargmin(vals))
            if best != idx[j]:
                idx[j] = best
                changed = True
        if sweep >= 1 and not changed:
            break
    return candidates[idx]
