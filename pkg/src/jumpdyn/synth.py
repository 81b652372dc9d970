"""Forward-dynamics oracle: synthetic squat-jump trials with known truth.

Joint-angle profiles are smoothstep ramps s(x) = I_x(p+1, q+1) (the
regularized incomplete beta function), one per joint with staggered
start times: angular velocity and acceleration vanish at both ends of
each joint's active interval, so the motion starts from rest exactly,
splices to the static phases smoothly, and every kinematic quantity has
a closed form.  The exponents and staggering were tuned so that the
four joint-angle histories remain linearly independent over the push
while the marker channels stay representable by 100 Hz sampling.

The ground reaction and the ground torque about the toe are evaluated
from the exact chain kinematics, independently of the inverse-dynamics
module: forces by the top-down recursion (zero wrench above the
shoulder), torques by summing per-segment Euler balances with cross
products.  closure_check then runs the bottom-up inverse recursion on
the same exact signals, locking the sign conventions of both code paths
against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_function, betainc

from . import invdyn, model
from .model import AnthropometricTable, GRAVITY, N_SEGMENTS
from .trial import ForceRecord, Trial

TAKEOFF_LEVEL = 5.0  # N, matches the take-off detector


class ScenarioError(ValueError):
    """Scenario parameters produce an invalid or degenerate motion."""


def _smoothstep(x: np.ndarray, p: float, q: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ramp with s'(x) proportional to x^p (1-x)^q, and two derivatives.

    s(0) = 0, s(1) = 1; velocity and acceleration vanish at both ends
    for p, q >= 2.  x is expected pre-clipped to [0, 1].
    """
    c = 1.0 / beta_function(p + 1.0, q + 1.0)
    s = betainc(p + 1.0, q + 1.0, x)
    sd = c * x**p * (1.0 - x) ** q
    with np.errstate(invalid="ignore", divide="ignore"):
        sdd = c * (p * x ** (p - 1.0) * (1.0 - x) ** q - q * x**p * (1.0 - x) ** (q - 1.0))
    sdd = np.where((x <= 0.0) | (x >= 1.0), 0.0, sdd)
    return s, sd, sdd


# Default motion: deep squat to full extension with proximal-to-distal
# sequencing (hip leads, foot follows).  Angles in radians; activations
# as fractions of the push-off profile (start, end); shapes are the
# (p, q) smoothstep exponents per joint.  Amplitudes and staggering
# balance jump-like vigor against what 100 Hz marker capture can
# represent: more violent motions leave the segment inertias
# unidentifiable from interpolated 100 Hz data.
DEFAULT_THETA_INITIAL = (2.4435, -1.3963, 1.5708, -1.6755)
DEFAULT_THETA_DELTA = (-0.3927, 0.7854, -1.1126, 1.3500)
DEFAULT_ACTIVATION = ((0.30, 1.00), (0.20, 1.00), (0.10, 1.00), (0.00, 1.00))
DEFAULT_SHAPE = ((2.0, 2.0), (2.0, 2.0), (2.0, 2.0), (2.0, 2.0))


@dataclass(frozen=True)
class SyntheticScenario:
    """Ground-truth parameters and motion script for one synthetic jump."""

    total_mass: float = 72.0
    lengths: tuple[float, ...] = (0.20, 0.42, 0.41, 0.60)
    alphas: tuple[float, ...] = (0.5000, 0.5670, 0.5670, 0.45)
    mass_fractions: tuple[float, ...] = model.WINTER_MASS_FRACTIONS
    gyration_ratios: tuple[float, ...] = model.WINTER_GYRATION_RATIOS
    theta_initial: tuple[float, ...] = DEFAULT_THETA_INITIAL
    theta_delta: tuple[float, ...] = DEFAULT_THETA_DELTA
    activation: tuple[tuple[float, float], ...] = DEFAULT_ACTIVATION
    shape: tuple[tuple[float, float], ...] = DEFAULT_SHAPE
    push_start: float = 0.8
    push_duration: float = 0.35
    record_duration: float = 2.0
    lag: int = 0                  # injected offset, force samples
    marker_noise: float = 0.0     # m, i.i.d. Gaussian per coordinate
    force_noise: float = 0.0     # N (and N*m on the torque channel)
    seed: int = 0
    marker_rate: float = 100.0
    force_rate: float = 1000.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if len(self.lengths) != N_SEGMENTS or any(l <= 0.0 for l in self.lengths):
            raise ScenarioError(f"need {N_SEGMENTS} positive segment lengths")
        for name in ("theta_initial", "theta_delta"):
            if len(getattr(self, name)) != N_SEGMENTS:
                raise ScenarioError(f"{name} must have {N_SEGMENTS} entries")
        if len(self.activation) != N_SEGMENTS:
            raise ScenarioError(f"activation must have {N_SEGMENTS} (start, end) pairs")
        for a, b in self.activation:
            if not (0.0 <= a < b <= 1.0):
                raise ScenarioError(f"activation interval ({a}, {b}) not within [0, 1]")
        if len(self.shape) != N_SEGMENTS:
            raise ScenarioError(f"shape must have {N_SEGMENTS} (p, q) pairs")
        for p, q in self.shape:
            if p < 2.0 or q < 2.0:
                raise ScenarioError(f"shape exponents must be >= 2 for smooth splices, got ({p}, {q})")
        if self.push_duration <= 0.0 or self.push_start <= 0.0:
            raise ScenarioError("push_start and push_duration must be positive")
        if self.push_start + self.push_duration >= self.record_duration:
            raise ScenarioError("push-off must end before the record does")
        if self.marker_noise < 0.0 or self.force_noise < 0.0:
            raise ScenarioError("noise levels must be non-negative")
        # Table construction validates ratios and mass fractions.
        self.table  # noqa: B018

    @property
    def table(self) -> AnthropometricTable:
        return AnthropometricTable(
            alphas=self.alphas,
            mass_fractions=self.mass_fractions,
            gyration_ratios=self.gyration_ratios,
            total_mass=self.total_mass,
        )

    @property
    def inertias(self) -> np.ndarray:
        return self.table.segment_inertias(self.lengths)


class SyntheticTruth:
    """Exact signals of a scenario, evaluable at arbitrary times."""

    def __init__(self, scenario: SyntheticScenario):
        self.scenario = scenario
        self.table = scenario.table
        self.inertias = scenario.inertias
        self.alpha4 = float(scenario.alphas[3])
        self.lag = int(scenario.lag)
        self._masses = self.table.segment_masses
        self._alphas = np.asarray(self.table.alphas, dtype=float)
        self.window = (scenario.push_start, self._find_takeoff())

    # -- joint-space profiles ------------------------------------------------

    def theta(self, t) -> np.ndarray:
        return self._profiles(t)[0]

    def _profiles(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        sc = self.scenario
        theta = np.empty((t.size, N_SEGMENTS))
        theta_d = np.empty_like(theta)
        theta_dd = np.empty_like(theta)
        for j, (a, b) in enumerate(sc.activation):
            start = sc.push_start + a * sc.push_duration
            dur = (b - a) * sc.push_duration
            tau = np.clip((t - start) / dur, 0.0, 1.0)
            s, sd, sdd = _smoothstep(tau, *sc.shape[j])
            theta[:, j] = sc.theta_initial[j] + sc.theta_delta[j] * s
            theta_d[:, j] = sc.theta_delta[j] * sd / dur
            theta_dd[:, j] = sc.theta_delta[j] * sdd / dur**2
        return theta, theta_d, theta_dd

    def segment_angles(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(phi, phi_dot, phi_ddot), each (n, 4)."""
        theta, theta_d, theta_dd = self._profiles(t)
        return (
            np.cumsum(theta, axis=1),
            np.cumsum(theta_d, axis=1),
            np.cumsum(theta_dd, axis=1),
        )

    # -- chain kinematics ----------------------------------------------------

    def chain(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Landmark positions, velocities, accelerations, each (n, 5, 2)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phi, phi_d, phi_dd = self.segment_angles(t)
        sc = self.scenario
        pos = np.zeros((t.size, N_SEGMENTS + 1, 2))
        vel = np.zeros_like(pos)
        acc = np.zeros_like(pos)
        pos[:, 0] = sc.origin
        for j in range(N_SEGMENTS):
            c, s = np.cos(phi[:, j]), np.sin(phi[:, j])
            l = sc.lengths[j]
            pos[:, j + 1, 0] = pos[:, j, 0] + l * c
            pos[:, j + 1, 1] = pos[:, j, 1] + l * s
            vel[:, j + 1, 0] = vel[:, j, 0] - l * phi_d[:, j] * s
            vel[:, j + 1, 1] = vel[:, j, 1] + l * phi_d[:, j] * c
            acc[:, j + 1, 0] = acc[:, j, 0] - l * (phi_dd[:, j] * s + phi_d[:, j] ** 2 * c)
            acc[:, j + 1, 1] = acc[:, j, 1] + l * (phi_dd[:, j] * c - phi_d[:, j] ** 2 * s)
        return pos, vel, acc

    def positions(self, t) -> np.ndarray:
        return self.chain(t)[0]

    def body_com(self, t) -> np.ndarray:
        return model.body_com(self.positions(t), self.table)

    def ycom(self, t) -> np.ndarray:
        return self.body_com(t)[..., 1]

    def com_accel(self, t) -> np.ndarray:
        weights = model.com_landmark_weights(self.table)
        return np.einsum("njk,j->nk", self.chain(t)[2], weights)

    # -- exact plate signals (independent of the inverse-dynamics module) ----

    def reaction(self, t) -> np.ndarray:
        """Ground reaction force (n, 2): R = -m g + m a_G."""
        return self.scenario.total_mass * (self.com_accel(t) - GRAVITY)

    def _top_down_forces(self, acc: np.ndarray, pos: np.ndarray) -> np.ndarray:
        """Joint forces (n, 5, 2) accumulated from the free top end."""
        com_acc = model.segment_coms(acc, self._alphas)
        forces = np.zeros((acc.shape[0], N_SEGMENTS + 1, 2))
        for j in range(N_SEGMENTS - 1, -1, -1):
            forces[:, j] = forces[:, j + 1] + self._masses[j] * (com_acc[:, j] - GRAVITY)
        return forces

    def ground_torque(self, t) -> np.ndarray:
        """Ground torque about the toe, from per-segment Euler balances.

        C = sum_j I_j phidd_j - sum_j M_j, with each M_j formed as the
        cross products of the end forces about the segment COM.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        pos, _, acc = self.chain(t)
        _, _, phi_dd = self.segment_angles(t)
        forces = self._top_down_forces(acc, pos)
        coms = model.segment_coms(pos, self._alphas)
        c = np.zeros(t.size)
        for j in range(N_SEGMENTS):
            lever_lo = pos[:, j] - coms[:, j]
            lever_hi = pos[:, j + 1] - coms[:, j]
            m_j = (
                lever_lo[:, 0] * forces[:, j, 1] - lever_lo[:, 1] * forces[:, j, 0]
                - (lever_hi[:, 0] * forces[:, j + 1, 1] - lever_hi[:, 1] * forces[:, j + 1, 0])
            )
            c += self.inertias[j] * phi_dd[:, j] - m_j
        return c

    # -- events ----------------------------------------------------------------

    def _find_takeoff(self) -> float:
        """First time Ry drops below the take-off level inside the push.

        Falls back to the profile end for motions that never unload
        (e.g. zero-motion scenarios); such records are not jumps and the
        event detector will reject them.
        """
        sc = self.scenario
        t = np.linspace(sc.push_start, sc.push_start + sc.push_duration, 4001)
        ry = self.reaction(t)[:, 1]
        below = np.nonzero(ry < TAKEOFF_LEVEL)[0]
        if below.size == 0:
            return sc.push_start + sc.push_duration
        k = int(below[0])
        lo, hi = t[k - 1], t[k]
        for _ in range(60):  # bisection to machine precision
            mid = 0.5 * (lo + hi)
            if self.reaction(np.array([mid]))[0, 1] < TAKEOFF_LEVEL:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)


def generate(scenario: SyntheticScenario) -> tuple[Trial, SyntheticTruth]:
    """Sample a scenario into a Trial plus its exact truth.

    Markers are sampled at the marker rate with Gaussian noise; the
    force record holds the true signals shifted by the injected lag
    (recorded sample k carries the value at true time (k + lag)/rate)
    with Gaussian noise on all three channels.  Draw order is fixed:
    marker coordinates, then Rx, Ry, C.
    """
    truth = SyntheticTruth(scenario)
    rng = np.random.default_rng(scenario.seed)

    n_m = int(round(scenario.record_duration * scenario.marker_rate))
    marker_times = np.arange(n_m + 1) / scenario.marker_rate
    positions = truth.positions(marker_times)
    if scenario.marker_noise > 0.0:
        positions = positions + rng.normal(0.0, scenario.marker_noise, positions.shape)

    n_f = int(round(scenario.record_duration * scenario.force_rate))
    recorded = np.arange(n_f + 1) / scenario.force_rate
    t_true = recorded + scenario.lag / scenario.force_rate
    reaction = truth.reaction(t_true)
    rx, ry = reaction[:, 0].copy(), reaction[:, 1].copy()
    c = truth.ground_torque(t_true)
    if scenario.force_noise > 0.0:
        rx += rng.normal(0.0, scenario.force_noise, rx.shape)
        ry += rng.normal(0.0, scenario.force_noise, ry.shape)
        c = c + rng.normal(0.0, scenario.force_noise, c.shape)

    force = ForceRecord(times=recorded, rx=rx, ry=ry, c=c, rate=scenario.force_rate)
    trial = Trial(
        marker_times=marker_times, marker_positions=positions,
        force=force, total_mass=scenario.total_mass, marker_rate=scenario.marker_rate,
    )
    return trial, truth


def closure_check(truth: SyntheticTruth, samples: int = 400) -> dict[str, float]:
    """Residuals of the inverse recursions on the exact signals.

    Runs the bottom-up force recursion and the torque recursion of the
    inverse-dynamics module on noise-free truth; both residuals must be
    at rounding level, otherwise the two code paths disagree on a sign
    convention.
    """
    t = np.linspace(truth.window[0], truth.window[1], samples)
    pos, _, acc = truth.chain(t)
    _, _, phi_dd = truth.segment_angles(t)
    com_acc = model.segment_coms(acc, np.asarray(truth.table.alphas))
    forces = invdyn.joint_forces(truth.reaction(t), com_acc, truth.table.segment_masses)
    moments = invdyn.intersegment_moments(pos, np.asarray(truth.table.alphas), forces)
    torques = invdyn.joint_torques(truth.ground_torque(t), moments, phi_dd, truth.inertias)
    return {
        "force": float(np.max(np.abs(forces[:, -1]))),
        "torque": float(np.max(np.abs(torques[:, -1]))),
    }
