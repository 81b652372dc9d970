"""Bottom-up Newton-Euler inverse dynamics for the planar chain.

Joint forces propagate upward from the measured ground reaction:

    R_k = R - sum_{j<k} m_j (a_Gj - g)

The inter-segment moment of segment j collects the joint forces acting
at its two ends about its center of mass:

    M_j = -(x_{j+1}-x_j) (alpha_j Ry_j + (1-alpha_j) Ry_{j+1})
          + (y_{j+1}-y_j) (alpha_j Rx_j + (1-alpha_j) Rx_{j+1})

and torques propagate as C_{k+1} = C_k + M_j - I_j phidd_j.  The
residual torque (top of chain) can be formed on the raw values
(degree 0), after one time integration (degree 1, using segment angular
velocities) or after two (degree 2, using angle values only).  All
integrals are cumulative trapezoids on the analysis grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .model import GRAVITY, N_SEGMENTS

DEGREES = (0, 1, 2)


class MetricUndefinedError(ValueError):
    """Both series in the normalized-error metric have zero norm."""


@dataclass(frozen=True)
class TrialDynamics:
    """Everything inverse dynamics needs, sampled on the analysis grid.

    Kinematic quantities are evaluated on the marker clock at the force
    samples of the push-off window; forces/torque are the measured plate
    channels over the same window.
    """

    times: np.ndarray          # (n,), marker clock
    positions: np.ndarray      # (n, 5, 2) smoothed landmark positions
    com_accels: np.ndarray     # (n, 4, 2) segment-COM accelerations
    phi: np.ndarray            # (n, 4) segment angles, unwrapped
    phi_dot: np.ndarray        # (n, 4)
    phi_ddot: np.ndarray       # (n, 4)
    reaction: np.ndarray       # (n, 2) measured ground reaction force
    c_meas: np.ndarray         # (n,) measured ground torque about the toe
    masses: np.ndarray         # (4,) segment masses
    alphas: np.ndarray         # (4,) segment COM ratios (trunk ratio resolved)


@dataclass(frozen=True)
class JointLoads:
    """Joint forces, torques and residuals over the analysis window."""

    times: np.ndarray
    forces: np.ndarray          # (n, 5, 2); row 5 is the residual force
    moments: np.ndarray         # (n, 4)
    torques: np.ndarray         # (n, 5); row 5 equals the degree-0 residual
    residual_torque: dict       # degree -> (n,) series C_exp^(j) - C_ang^(j)


def joint_forces(reaction: np.ndarray, com_accels: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Joint forces R_1..R_5, shape (n, 5, 2).

    R_1 is the measured ground reaction; R_5 is the residual force and
    vanishes for perfect data and parameters.
    """
    reaction = np.asarray(reaction, dtype=float)
    n = reaction.shape[0]
    forces = np.empty((n, N_SEGMENTS + 1, 2))
    forces[:, 0] = reaction
    for j in range(N_SEGMENTS):
        forces[:, j + 1] = forces[:, j] - masses[j] * (com_accels[:, j] - GRAVITY)
    return forces


def intersegment_moments(positions: np.ndarray, alphas: np.ndarray, forces: np.ndarray) -> np.ndarray:
    """Moments of the end-point joint forces about each segment COM, (n, 4)."""
    dx = positions[:, 1:, 0] - positions[:, :-1, 0]
    dy = positions[:, 1:, 1] - positions[:, :-1, 1]
    a = np.asarray(alphas, dtype=float)
    fy = a * forces[:, :-1, 1] + (1.0 - a) * forces[:, 1:, 1]
    fx = a * forces[:, :-1, 0] + (1.0 - a) * forces[:, 1:, 0]
    return -dx * fy + dy * fx


def joint_torques(
    c_meas: np.ndarray, moments: np.ndarray, phi_ddot: np.ndarray, inertias: np.ndarray
) -> np.ndarray:
    """Joint torques C_1..C_5, shape (n, 5).

    C_1 is the measured ground torque; C_5 is the degree-0 residual
    torque.
    """
    n = c_meas.shape[0]
    torques = np.empty((n, N_SEGMENTS + 1))
    torques[:, 0] = c_meas
    for j in range(N_SEGMENTS):
        torques[:, j + 1] = torques[:, j] + moments[:, j] - inertias[j] * phi_ddot[:, j]
    return torques


def _cumtrapz(values: np.ndarray, dx: float, repeats: int) -> np.ndarray:
    out = np.asarray(values, dtype=float)
    for _ in range(repeats):
        out = cumulative_trapezoid(out, dx=dx, initial=0.0, axis=0)
    return out


def residual_torque_series(
    dyn: TrialDynamics, inertias: np.ndarray, degree: int
) -> tuple[np.ndarray, np.ndarray]:
    """(C_exp^(j), C_ang^(j)) series for the requested degree.

    Degree 0 compares raw torques; degree 1 integrates once, replacing
    the angular-acceleration terms with angular velocities (angular
    velocities are taken as null at push-off onset); degree 2 integrates
    twice and uses angle values only, no differentiation.
    """
    if degree not in DEGREES:
        raise ValueError(f"degree must be one of {DEGREES}, got {degree}")
    inertias = np.asarray(inertias, dtype=float)
    dx = float(dyn.times[1] - dyn.times[0])
    forces = joint_forces(dyn.reaction, dyn.com_accels, dyn.masses)
    moments = intersegment_moments(dyn.positions, dyn.alphas, forces)

    c_exp = _cumtrapz(dyn.c_meas, dx, degree)
    moment_sum = _cumtrapz(moments.sum(axis=1), dx, degree)
    if degree == 0:
        angular = dyn.phi_ddot @ inertias
    elif degree == 1:
        angular = dyn.phi_dot @ inertias
    else:
        angular = (dyn.phi - dyn.phi[0]) @ inertias
    c_ang = -moment_sum + angular
    return c_exp, c_ang


def epsilon(c_exp: np.ndarray, c_ang: np.ndarray) -> float:
    """Normalized residual error ||a - b|| / (||a|| + ||b||) in [0, 1]."""
    c_exp = np.asarray(c_exp, dtype=float)
    c_ang = np.asarray(c_ang, dtype=float)
    if c_exp.shape != c_ang.shape:
        raise ValueError("series must have identical lengths")
    na = float(np.linalg.norm(c_exp))
    nb = float(np.linalg.norm(c_ang))
    if na + nb == 0.0:
        raise MetricUndefinedError("both series are identically zero; metric undefined")
    return float(np.linalg.norm(c_exp - c_ang) / (na + nb))


def compute_joint_loads(dyn: TrialDynamics, inertias: np.ndarray) -> JointLoads:
    """Assemble joint forces, torques and all residual-torque degrees."""
    inertias = np.asarray(inertias, dtype=float)
    forces = joint_forces(dyn.reaction, dyn.com_accels, dyn.masses)
    moments = intersegment_moments(dyn.positions, dyn.alphas, forces)
    torques = joint_torques(dyn.c_meas, moments, dyn.phi_ddot, inertias)
    residual = {}
    for degree in DEGREES:
        c_exp, c_ang = residual_torque_series(dyn, inertias, degree)
        residual[degree] = c_exp - c_ang
    return JointLoads(
        times=dyn.times, forces=forces, moments=moments,
        torques=torques, residual_torque=residual,
    )
