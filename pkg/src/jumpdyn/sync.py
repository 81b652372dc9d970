"""Force/displacement synchronization and trunk COM-ratio determination.

The plate and camera clocks are offset by an unknown integer number of
force samples (the lag).  During push-off the double integral of
(Ry - m*g) must equal m*(y_G(t) - y_G(t0)); the mismatch is the
double-integrated residual vertical force.  Scanning the lag and the
trunk center-of-mass ratio for the minimal l2 norm of that residual
recovers both unknowns at once.  The residual is affine in the trunk
ratio at fixed lag, which this module exploits: each lag contributes one
quadratic polynomial in alpha4, precomputed once per trial.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.integrate import cumulative_trapezoid

from .model import AnthropometricTable, G_ACCEL
from .spline import SmoothedKinematics
from .trial import ForceRecord  # noqa: F401  (re-exported: force records live here conceptually)

NU_SCAN = 500                  # lag scan half-range, force samples (+-0.5 s)
ALPHA_GRID_POINTS = 201
ALPHA_REFINE_TOL = 1e-4
TAKEOFF_THRESHOLD = 5.0        # N
ONSET_SUSTAIN_S = 0.020
ONSET_SMOOTH_S = 0.025
MIN_WINDOW_SAMPLES = 50

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


class EventDetectionError(RuntimeError):
    """Push-off onset or take-off could not be located in the record."""


class WindowRangeError(ValueError):
    """A lag shift moved the analysis window outside the recorded data."""


class SynchronizationError(RuntimeError):
    """No (lag, alpha4) pair produced a finite objective."""


@dataclass(frozen=True)
class SyncResult:
    """Outcome of the joint lag / trunk-ratio optimization."""

    nu: int                 # lag, force samples
    alpha4: float           # trunk COM ratio in [0, 1]
    eta: float              # minimal residual norm at alpha4
    alpha_grid: np.ndarray  # scanned alpha4 values
    eta_curve: np.ndarray   # eta(alpha) over the grid
    nu_curve: np.ndarray    # per-alpha best lag


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    width = max(1, width)
    if width % 2 == 0:
        width += 1
    pad = width // 2
    padded = np.pad(x, pad, mode="edge")
    kernel = np.full(width, 1.0 / width)
    return np.convolve(padded, kernel, mode="valid")


def detect_push_off(force: ForceRecord) -> tuple[int, int]:
    """Locate the push-off window [onset, take-off] as sample indices.

    Onset: first sample where |d(smoothed Ry)/dt| exceeds
    max(5 * pre-window derivative RMS, 2% of peak) sustained for 20 ms.
    Take-off: first later sample with smoothed Ry below 5 N.  The record
    must start with a quiet standing phase.
    """
    dt = 1.0 / force.rate
    ry_s = _moving_average(force.ry, int(round(ONSET_SMOOTH_S * force.rate)))
    drv = np.abs(np.gradient(ry_s, dt))

    pre_n = min(300, max(50, force.n // 10))
    if force.n < pre_n + MIN_WINDOW_SAMPLES:
        raise EventDetectionError(f"record too short ({force.n} samples) for event detection")
    # Relative floor keeps the threshold meaningful on noise-free records,
    # where the pre-window RMS would be ~0.
    threshold = max(5.0 * float(np.sqrt(np.mean(drv[:pre_n] ** 2))), 0.02 * float(drv.max()))

    sustain = max(1, int(round(ONSET_SUSTAIN_S * force.rate)))
    above = drv > threshold
    runs = np.convolve(above.astype(float), np.ones(sustain), mode="valid")
    onset_candidates = np.nonzero(runs >= sustain - 0.5)[0]
    if onset_candidates.size == 0:
        raise EventDetectionError("no push-off onset found (Ry derivative never sustained)")
    i0 = int(onset_candidates[0])

    below = np.nonzero(ry_s[i0:] < TAKEOFF_THRESHOLD)[0]
    if below.size == 0:
        raise EventDetectionError(f"no take-off found (Ry never drops below {TAKEOFF_THRESHOLD} N)")
    i1 = i0 + int(below[0])
    if i1 - i0 + 1 < MIN_WINDOW_SAMPLES:
        raise EventDetectionError(f"push-off window too short: {i1 - i0 + 1} samples")
    return i0, i1


def _double_cumtrapz(values: np.ndarray, dx: float) -> np.ndarray:
    once = cumulative_trapezoid(values, dx=dx, initial=0.0)
    return cumulative_trapezoid(once, dx=dx, initial=0.0)


def residual_double_integral(force, window, ycom, mass, nu):
    """Double-integrated residual vertical force over the window.

    R_y(t_i) = iint (Ry - m g) ds du - m y_G(t_i) + m y_G(t0), with the
    body COM ordinate evaluated on the marker clock, shifted from the
    force clock by ``nu`` samples.  ``ycom`` is a callable t -> y_G(t).
    """
    i0, i1 = window
    if not 0 <= i0 < i1 < force.n:
        raise WindowRangeError(f"window [{i0}, {i1}] outside force record of {force.n} samples")
    dt = 1.0 / force.rate
    d = _double_cumtrapz(force.ry[i0:i1 + 1] - mass * G_ACCEL, dt)
    t = (np.arange(i0, i1 + 1) + nu) * dt
    try:
        y = np.asarray(ycom(t), dtype=float)
    except Exception as exc:
        raise WindowRangeError(f"lag nu={nu} shifts the window outside the marker record") from exc
    if not np.all(np.isfinite(y)):
        raise WindowRangeError(f"lag nu={nu} shifts the window outside the marker record")
    return d - mass * (y - y[0])


class SyncProblem:
    """Precomputed residual geometry for one trial.

    y_G is affine in alpha4: y_G = u + alpha4 * v.  For each candidate
    lag the residual series is b + alpha4 * a with a, b independent of
    alpha4, so only three inner products per lag are needed to evaluate
    ||residual|| for any alpha4.
    """

    def __init__(
        self,
        force: ForceRecord,
        window: tuple[int, int],
        kinematics: SmoothedKinematics,
        table: AnthropometricTable,
        nu_scan: int = NU_SCAN,
    ):
        i0, i1 = window
        if not 0 <= i0 < i1 < force.n:
            raise WindowRangeError(f"window [{i0}, {i1}] outside force record of {force.n} samples")
        self.window = (int(i0), int(i1))
        self.mass = table.total_mass
        self.nu_scan = int(nu_scan)
        dt = 1.0 / force.rate
        self._dt = dt

        self._d = _double_cumtrapz(force.ry[i0:i1 + 1] - self.mass * G_ACCEL, dt)

        # y_G = u + alpha4 * v on the extended marker-clock grid covering
        # every scanned lag; samples outside the marker span are invalid.
        ext = np.arange(i0 - nu_scan, i1 + nu_scan + 1)
        t_ext = ext * dt
        lo, hi = kinematics.domain
        tol = 1e-9 * max(hi - lo, 1.0)
        valid = (t_ext >= lo - tol) & (t_ext <= hi + tol)
        u = np.full(t_ext.size, np.nan)
        v = np.full(t_ext.size, np.nan)
        if np.any(valid):
            y = np.empty((int(valid.sum()), 5))
            tv = np.clip(t_ext[valid], lo, hi)
            for j in range(5):
                y[:, j] = kinematics.splines_y[j](tv, 0)
            f = table.normalized_fractions
            a = np.asarray(table.alphas, dtype=float)
            u_val = f[3] * y[:, 3]
            for s in range(3):
                u_val = u_val + f[s] * (y[:, s] + a[s] * (y[:, s + 1] - y[:, s]))
            u[valid] = u_val
            v[valid] = f[3] * (y[:, 4] - y[:, 3])
        self._u_ext = u
        self._v_ext = v

        w = i1 - i0 + 1
        su = sliding_window_view(u, w)
        sv = sliding_window_view(v, w)
        ok = np.all(sliding_window_view(valid, w), axis=1)
        a_mat = -self.mass * (sv - sv[:, :1])
        b_mat = self._d[None, :] - self.mass * (su - su[:, :1])
        with np.errstate(invalid="ignore"):
            a2 = np.einsum("ij,ij->i", a_mat, a_mat)
            ab = np.einsum("ij,ij->i", a_mat, b_mat)
            b2 = np.einsum("ij,ij->i", b_mat, b_mat)

        nus = np.arange(-nu_scan, nu_scan + 1)
        order = np.lexsort((nus, np.abs(nus)))  # ties resolved toward smaller |nu|
        self.nus = nus[order]
        self._valid = ok[order]
        # Invalid lags: zero the alpha4-dependent terms and put the
        # infinity in the constant one, so the norm is +inf for every
        # alpha4 (including alpha4 = 0) without producing NaN.
        self._a2 = np.where(self._valid, a2[order], 0.0)
        self._ab = np.where(self._valid, ab[order], 0.0)
        self._b2 = np.where(self._valid, b2[order], np.inf)
        if not np.any(self._valid):
            raise SynchronizationError("no scanned lag keeps the window inside the marker record")

    def norm_squared(self, alpha4: float) -> np.ndarray:
        """||residual||^2 for every scanned lag (ordered by |nu|)."""
        return self._b2 + 2.0 * alpha4 * self._ab + alpha4**2 * self._a2

    def eta(self, alpha4: float) -> tuple[float, int]:
        """Minimal residual norm over the lag scan and its lag."""
        n2 = self.norm_squared(alpha4)
        i = int(np.argmin(n2))
        return float(np.sqrt(max(n2[i], 0.0))), int(self.nus[i])

    def eta_curve(self, alphas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        alphas = np.asarray(alphas, dtype=float)
        n2 = (
            self._b2[None, :]
            + 2.0 * alphas[:, None] * self._ab[None, :]
            + alphas[:, None] ** 2 * self._a2[None, :]
        )
        idx = np.argmin(n2, axis=1)
        vals = np.sqrt(np.maximum(n2[np.arange(alphas.size), idx], 0.0))
        return vals, self.nus[idx]

    def residual_series(self, alpha4: float, nu: int) -> np.ndarray:
        """The residual series itself for one (alpha4, lag) pair."""
        i0, i1 = self.window
        k = nu + self.nu_scan
        w = i1 - i0 + 1
        u = self._u_ext[k:k + w]
        v = self._v_ext[k:k + w]
        if not np.all(np.isfinite(u)):
            raise WindowRangeError(f"lag nu={nu} shifts the window outside the marker record")
        y = u + alpha4 * v
        return self._d - self.mass * (y - y[0])

    def affine_coefficients(self, nu: int) -> tuple[np.ndarray, np.ndarray]:
        """(a, b) with residual = b + alpha4 * a at the given lag."""
        i0, i1 = self.window
        k = nu + self.nu_scan
        w = i1 - i0 + 1
        u = self._u_ext[k:k + w]
        v = self._v_ext[k:k + w]
        if not np.all(np.isfinite(u)):
            raise WindowRangeError(f"lag nu={nu} shifts the window outside the marker record")
        a = -self.mass * (v - v[0])
        b = self._d - self.mass * (u - u[0])
        return a, b


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    """Golden-section minimizer on [lo, hi] to interval width tol."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def synchronize_problem(
    problem: SyncProblem,
    *,
    grid_points: int = ALPHA_GRID_POINTS,
    refine_tol: float = ALPHA_REFINE_TOL,
) -> SyncResult:
    """Optimize (lag, alpha4) on a precomputed SyncProblem.

    alpha4 is scanned on a uniform grid over [0, 1]; the best grid cell
    is refined by golden-section search.  For every alpha4 the lag scan
    covers the problem's +-nu_scan samples, ties broken toward smaller
    |lag|.
    """
    alphas = np.linspace(0.0, 1.0, grid_points)
    etas, nu_per_alpha = problem.eta_curve(alphas)
    if not np.any(np.isfinite(etas)):
        raise SynchronizationError("synchronization objective is non-finite everywhere")
    best = int(np.argmin(etas))

    step = alphas[1] - alphas[0]
    lo = max(0.0, alphas[best] - step)
    hi = min(1.0, alphas[best] + step)
    refined = _golden_section(lambda a: problem.eta(a)[0], lo, hi, refine_tol)

    candidates = [float(alphas[best]), float(refined)]
    values = [problem.eta(a) for a in candidates]
    pick = int(np.argmin([v[0] for v in values]))
    alpha4 = candidates[pick]
    eta_val, nu = values[pick]
    return SyncResult(
        nu=nu, alpha4=alpha4, eta=eta_val,
        alpha_grid=alphas, eta_curve=etas, nu_curve=nu_per_alpha.astype(int),
    )


def synchronize(
    force: ForceRecord,
    window: tuple[int, int],
    kinematics: SmoothedKinematics,
    table: AnthropometricTable,
    *,
    nu_scan: int = NU_SCAN,
    grid_points: int = ALPHA_GRID_POINTS,
    refine_tol: float = ALPHA_REFINE_TOL,
) -> SyncResult:
    """Jointly determine the lag and the trunk COM ratio for one trial."""
    problem = SyncProblem(force, window, kinematics, table, nu_scan=nu_scan)
    return synchronize_problem(problem, grid_points=grid_points, refine_tol=refine_tol)


def alpha4_least_squares(problem: SyncProblem, nu: int) -> float:
    """Trunk ratio from the affine residual at a fixed lag.

    With the lag known the residual is b + alpha4 * a; the best alpha4
    solves the one-unknown least-squares problem a * alpha4 = -b.  The
    result is clamped to [0, 1] with a warning if it falls outside.
    """
    from .estimate import lls_solve

    a, b = problem.affine_coefficients(nu)
    alpha = float(lls_solve(a[:, None], -b)[0])
    if not 0.0 <= alpha <= 1.0:
        warnings.warn(f"least-squares trunk ratio {alpha:.4f} outside [0, 1]; clamping", stacklevel=2)
        alpha = min(1.0, max(0.0, alpha))
    return alpha


def ycom_three_ways(
    force: ForceRecord,
    window: tuple[int, int],
    kinematics: SmoothedKinematics,
    table: AnthropometricTable,
    alpha4: float,
    nu: int,
) -> dict[str, np.ndarray]:
    """Body-COM ordinate over the window from three routes.

    (a) double integration of the measured vertical force, (b) smoothed
    kinematics with the lag applied, (c) smoothed kinematics ignoring
    the lag.  Returned on the marker clock; samples that fall outside
    the marker span in route (c) are NaN.
    """
    i0, i1 = window
    dt = 1.0 / force.rate
    tbl = table.with_alpha4(alpha4)
    from .model import com_landmark_weights

    weights = com_landmark_weights(tbl)
    lo, hi = kinematics.domain

    def ycom(t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, np.nan)
        ok = (t >= lo) & (t <= hi)
        if np.any(ok):
            y = np.zeros(int(ok.sum()))
            for j in range(5):
                y += weights[j] * kinematics.splines_y[j](t[ok], 0)
            out[ok] = y
        return out

    t_sync = (np.arange(i0, i1 + 1) + nu) * dt
    y_sync = ycom(t_sync)
    y_nosync = ycom(np.arange(i0, i1 + 1) * dt)
    y_force = y_sync[0] + _double_cumtrapz(force.ry[i0:i1 + 1] / table.total_mass - G_ACCEL, dt)
    return {"t": t_sync, "y_force": y_force, "y_sync": y_sync, "y_nosync": y_nosync}
