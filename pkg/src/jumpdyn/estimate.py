"""Overdetermined systems of the three inertia-estimation methods.

Setting the residual torque of each degree to zero yields, per time
sample, one linear equation in the segment inertias:

    sum_j I_j * column_j(t_i) = rhs(t_i)

where column_j is the segment's angular acceleration (degree 0),
angular velocity (degree 1) or angle increment from push-off onset
(degree 2), and the right-hand side is the matching cumulative integral
of the measured torque plus inter-segment moments.

Method A solves for all four inertias, method B fixes the three leg
inertias from the anthropometric table and solves for the trunk only,
method C evaluates the table values without solving.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import qr

from . import invdyn
from .invdyn import TrialDynamics
from .model import AnthropometricTable, N_SEGMENTS, gyration_from_inertia

METHODS = ("A", "B", "C")
MIN_ROWS_PER_COLUMN = 10


class SingularSystemError(ValueError):
    """Design matrix is rank deficient."""


class SystemBuildError(ValueError):
    """The requested system cannot be assembled from the window data."""


@dataclass(frozen=True)
class LinearSystem:
    """Overdetermined system A x = b for one (method, degree) pair."""

    matrix: np.ndarray
    rhs: np.ndarray
    method: str
    degree: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        b = np.asarray(self.rhs, dtype=float)
        if m.ndim != 2 or b.ndim != 1 or m.shape[0] != b.size:
            raise SystemBuildError("matrix and rhs shapes are inconsistent")
        if m.shape[0] < MIN_ROWS_PER_COLUMN * m.shape[1]:
            raise SystemBuildError(
                f"only {m.shape[0]} rows for {m.shape[1]} unknowns; "
                f"need at least {MIN_ROWS_PER_COLUMN} rows per unknown"
            )
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "rhs", b)

    def residual_norm(self, x) -> float:
        return float(np.linalg.norm(self.matrix @ np.asarray(x, dtype=float) - self.rhs))

    def r_squared(self, x) -> float:
        """1 - SS_res/SS_tot with mean-centered total sum of squares.

        Not necessarily positive when x is not the least-squares
        solution (method C).
        """
        ss_res = self.residual_norm(x) ** 2
        ss_tot = float(np.sum((self.rhs - self.rhs.mean()) ** 2))
        return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class EstimationResult:
    """Inertias and fit quality for one (method, degree) pair."""

    method: str
    degree: int
    inertias: tuple[float, float, float, float]
    fixed_mask: tuple[bool, bool, bool, bool]  # True where taken from the table
    epsilon: float
    r_squared: float
    r4_tilde: float
    alpha4: float
    nu: int
    valid: bool


def lls_solve(matrix, rhs, *, rank_tol: float = 1e-10) -> np.ndarray:
    """Least-squares solution of the overdetermined system.

    Solved by orthogonal factorization; a column-pivoted QR check
    rejects rank-deficient designs, naming the dependent columns.
    """
    a = np.asarray(matrix, dtype=float)
    b = np.asarray(rhs, dtype=float)
    if a.ndim != 2:
        raise ValueError("matrix must be 2-D")
    if a.shape[0] < a.shape[1]:
        raise SingularSystemError(f"system has fewer rows ({a.shape[0]}) than unknowns ({a.shape[1]})")
    r, piv = qr(a, mode="r", pivoting=True)
    diag = np.abs(np.diag(r[: a.shape[1], : a.shape[1]]))
    scale = diag[0] if diag.size and diag[0] > 0.0 else 0.0
    if scale == 0.0 or np.any(diag <= rank_tol * scale):
        dependent = sorted(int(piv[i]) for i in range(diag.size) if scale == 0.0 or diag[i] <= rank_tol * scale)
        raise SingularSystemError(f"rank-deficient design matrix; dependent columns {dependent}")
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    return x


def build_system(
    dyn: TrialDynamics,
    degree: int,
    method: str,
    fixed_inertias=None,
) -> LinearSystem:
    """Assemble the (method, degree) system from the window dynamics.

    Degree 2 uses angle values only: the angular-acceleration channel
    never enters its design or right-hand side.  Rows whose design
    entries are all zero (the onset row at degree >= 1) are dropped.
    For method B, ``fixed_inertias`` are the three leg inertias moved to
    the right-hand side.
    """
    if degree not in invdyn.DEGREES:
        raise ValueError(f"degree must be one of {invdyn.DEGREES}, got {degree}")
    if method not in ("A", "B"):
        raise ValueError(f"build_system handles methods A and B, got {method!r}")

    dx = float(dyn.times[1] - dyn.times[0])
    forces = invdyn.joint_forces(dyn.reaction, dyn.com_accels, dyn.masses)
    moments = invdyn.intersegment_moments(dyn.positions, dyn.alphas, forces)
    rhs = dyn.c_meas + moments.sum(axis=1)
    for _ in range(degree):
        rhs = cumulative_trapezoid(rhs, dx=dx, initial=0.0)

    if degree == 0:
        columns = dyn.phi_ddot.copy()
    elif degree == 1:
        columns = dyn.phi_dot.copy()
    else:
        columns = dyn.phi - dyn.phi[0]

    if method == "B":
        fixed = np.asarray(fixed_inertias, dtype=float)
        if fixed.shape != (N_SEGMENTS - 1,):
            raise SystemBuildError(f"method B needs {N_SEGMENTS - 1} fixed leg inertias")
        rhs = rhs - columns[:, :-1] @ fixed
        columns = columns[:, -1:]

    keep = np.max(np.abs(columns), axis=1) > 0.0
    return LinearSystem(matrix=columns[keep], rhs=rhs[keep], method=method, degree=degree)


def estimate(
    dyn: TrialDynamics,
    method: str,
    degree: int,
    table: AnthropometricTable,
    lengths,
    alpha4: float,
    nu: int,
) -> EstimationResult:
    """Run one (method, degree) estimation on prepared trial dynamics.

    ``table`` supplies masses and, for methods B and C, the fixed
    gyration-derived inertias; negative method-A inertias are reported
    as-is but flagged invalid.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    table_inertias = table.segment_inertias(lengths)

    if method == "A":
        system = build_system(dyn, degree, "A")
        inertias = lls_solve(system.matrix, system.rhs)
        coeffs = inertias
        fixed_mask = (False,) * N_SEGMENTS
    elif method == "B":
        system = build_system(dyn, degree, "B", fixed_inertias=table_inertias[:3])
        i4 = float(lls_solve(system.matrix, system.rhs)[0])
        inertias = np.array([*table_inertias[:3], i4])
        coeffs = np.array([i4])
        fixed_mask = (True, True, True, False)
    else:
        system = build_system(dyn, degree, "A")  # evaluation only, never solved
        inertias = table_inertias
        coeffs = inertias
        fixed_mask = (True,) * N_SEGMENTS

    c_exp, c_ang = invdyn.residual_torque_series(dyn, inertias, degree)
    eps = invdyn.epsilon(c_exp, c_ang)
    r2 = system.r_squared(coeffs)
    mass4 = float(table.segment_masses[3])
    r4 = gyration_from_inertia(float(inertias[3]), mass4, float(lengths[3]))
    valid = bool(np.isfinite(r4) and 0.0 < r4 <= 1.0)
    return EstimationResult(
        method=method, degree=degree,
        inertias=tuple(float(v) for v in inertias),
        fixed_mask=fixed_mask,
        epsilon=float(eps), r_squared=float(r2), r4_tilde=float(r4),
        alpha4=float(alpha4), nu=int(nu), valid=valid,
    )


def gyration_filter(results: Iterable[EstimationResult]) -> tuple[list[EstimationResult], int]:
    """Keep results whose trunk gyration ratio lies in (0, 1].

    Non-positive, above-one and undefined (NaN, from non-positive
    inertia) ratios are removed.  Returns (retained, removed_count).
    """
    results = list(results)
    retained = [r for r in results if np.isfinite(r.r4_tilde) and 0.0 < r.r4_tilde <= 1.0]
    return retained, len(results) - len(retained)


def _stats(values: np.ndarray) -> dict:
    return {
        "mean": float(values.mean()),
        "sd": float(values.std(ddof=1)),
        "q25": float(np.quantile(values, 0.25)),
        "q75": float(np.quantile(values, 0.75)),
        "q025": float(np.quantile(values, 0.025)),
        "q975": float(np.quantile(values, 0.975)),
        "n": int(values.size),
    }


def aggregate(batch: Sequence[Sequence[EstimationResult]]) -> dict:
    """Population summary over a batch of per-trial estimation results.

    Per (method, degree) cell: mean and sd of log10(epsilon) and
    log10(1 - R^2), with the raw log10 values exposed for external
    statistics tools.  Error ratios are geometric-mean improvement
    factors: ratio X/Y = 10^(mean log10 eps_Y - mean log10 eps_X), the
    factor by which X divides Y's error.  alpha4 and the trunk gyration
    ratio get mean, sd and 25/75, 2.5/97.5 linear-interpolation
    quantiles.
    """
    batch = [list(trial) for trial in batch]
    if len(batch) < 2:
        raise ValueError(f"need at least 2 trials to aggregate, got {len(batch)}")

    cells: dict[str, dict] = {}
    log_eps_mean: dict[tuple[str, int], float] = {}
    keys = sorted({(r.method, r.degree) for trial in batch for r in trial})
    for method, degree in keys:
        eps = np.array([r.epsilon for trial in batch for r in trial
                        if r.method == method and r.degree == degree])
        r2 = np.array([r.r_squared for trial in batch for r in trial
                       if r.method == method and r.degree == degree])
        log_eps = np.log10(eps[eps > 0.0])
        one_minus = 1.0 - r2
        log_r2 = np.log10(one_minus[one_minus > 0.0])
        cell = {
            "n": int(eps.size),
            "epsilon_median": float(np.median(eps)),
            "log10_epsilon": [float(v) for v in log_eps],
            "log10_one_minus_r2": [float(v) for v in log_r2],
        }
        if log_eps.size >= 2:
            cell["log10_epsilon_mean"] = float(log_eps.mean())
            cell["log10_epsilon_sd"] = float(log_eps.std(ddof=1))
            log_eps_mean[(method, degree)] = float(log_eps.mean())
        if log_r2.size >= 2:
            cell["log10_one_minus_r2_mean"] = float(log_r2.mean())
            cell["log10_one_minus_r2_sd"] = float(log_r2.std(ddof=1))
        cells[f"{method}{degree}"] = cell

    def ratio(better: tuple[str, int], worse: tuple[str, int]) -> float | None:
        if better in log_eps_mean and worse in log_eps_mean:
            return float(10.0 ** (log_eps_mean[worse] - log_eps_mean[better]))
        return None

    by_method = {}
    for degree in invdyn.DEGREES:
        row = {
            "A/B": ratio(("A", degree), ("B", degree)),
            "B/C": ratio(("B", degree), ("C", degree)),
        }
        if any(v is not None for v in row.values()):
            by_method[str(degree)] = {k: v for k, v in row.items() if v is not None}
    by_degree = {}
    for method in METHODS:
        row = {
            "1/0": ratio((method, 1), (method, 0)),
            "2/1": ratio((method, 2), (method, 1)),
        }
        if any(v is not None for v in row.values()):
            by_degree[method] = {k: v for k, v in row.items() if v is not None}

    alpha4 = np.array([trial[0].alpha4 for trial in batch if trial])
    reference = []
    for trial in batch:
        by_key = {(r.method, r.degree): r for r in trial}
        ref = by_key.get(("B", 2)) or (trial[0] if trial else None)
        if ref is not None and np.isfinite(ref.r4_tilde):
            reference.append(ref.r4_tilde)
    summary = {
        "cells": cells,
        "error_ratio_by_method": by_method,
        "error_ratio_by_degree": by_degree,
        "alpha4": _stats(alpha4),
    }
    if len(reference) >= 2:
        summary["r4_tilde"] = _stats(np.array(reference))
    return summary
