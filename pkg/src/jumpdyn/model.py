"""Planar four-segment chain model.

The body is modeled as a kinematic chain of five anatomical landmarks
(toe, ankle, knee, hip, shoulder) joined by four rigid segments
(foot, shank, thigh, HAT = head+arms+trunk).  This module holds the
anthropometric table (center-of-mass ratios, mass fractions, gyration
ratios), joint/segment angle computation, segment length extraction and
center-of-mass machinery.  Everything works on plain numpy arrays with
landmark positions stacked as (..., 5, 2).

Conventions:
    - x horizontal, y vertical (up positive); gravity is (0, -G_ACCEL).
    - joint angle 1 is measured from the horizontal unit vector to the
      foot segment; joint angles 2..4 between consecutive segments.
    - all joint angles are wrapped into (-pi, pi].
    - segment angle j (absolute orientation from the horizontal) is the
      cumulative sum of joint angles 1..j, unwrapped over time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

G_ACCEL = 9.81
GRAVITY = np.array([0.0, -G_ACCEL])

N_LANDMARKS = 5
N_SEGMENTS = 4
SEGMENT_NAMES = ("foot", "shank", "thigh", "hat")

MIN_SEGMENT_LENGTH = 1e-6

# Cadaver-based reference coefficients (Winter), one row per segment from
# the ground up: com ratio alpha, mass fraction m_j/m, gyration ratio.
WINTER_ALPHAS = (0.5000, 0.5670, 0.5670, 0.6260)
WINTER_MASS_FRACTIONS = (0.0290, 0.0930, 0.2000, 0.6780)
WINTER_GYRATION_RATIOS = (0.4750, 0.3020, 0.3230, 0.4960)


class DegenerateSegmentError(ValueError):
    """Two consecutive landmarks coincide; segment direction undefined."""


class GyrationRangeError(ValueError):
    """Gyration ratio outside the physically meaningful range (0, 1]."""


class TableError(ValueError):
    """Anthropometric table violates a validity constraint."""


@dataclass(frozen=True)
class AnthropometricTable:
    """Per-segment anthropometry plus the subject's total mass (kg).

    ``alphas`` are center-of-mass position ratios along each segment
    measured from the lower landmark, ``mass_fractions`` are m_j/m and
    ``gyration_ratios`` are the radii of gyration relative to segment
    length.  Mass fractions may sum slightly off 1 (published tables
    do); they are renormalized on use.
    """

    alphas: tuple[float, ...]
    mass_fractions: tuple[float, ...]
    gyration_ratios: tuple[float, ...]
    total_mass: float

    def __post_init__(self):
        for name in ("alphas", "mass_fractions", "gyration_ratios"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != N_SEGMENTS:
                raise TableError(f"{name} must have {N_SEGMENTS} entries, got {len(vals)}")
            if not all(np.isfinite(vals)):
                raise TableError(f"{name} contains non-finite values")
            if any(v < 0.0 or v > 1.0 for v in vals):
                raise TableError(f"{name} must lie in [0, 1], got {vals}")
            object.__setattr__(self, name, vals)
        total = sum(self.mass_fractions)
        if not 0.99 <= total <= 1.01:
            raise TableError(f"mass fractions sum to {total:.6f}, expected within [0.99, 1.01]")
        if not (np.isfinite(self.total_mass) and self.total_mass > 0.0):
            raise TableError(f"total mass must be positive, got {self.total_mass}")

    @property
    def normalized_fractions(self) -> np.ndarray:
        """Mass fractions rescaled to sum exactly to 1."""
        f = np.asarray(self.mass_fractions, dtype=float)
        return f / f.sum()

    @property
    def segment_masses(self) -> np.ndarray:
        return self.normalized_fractions * self.total_mass

    def segment_inertias(self, lengths) -> np.ndarray:
        """Moments of inertia about each segment's center of mass."""
        lengths = np.asarray(lengths, dtype=float)
        return np.array([
            inertia_from_gyration(m, l, r)
            for m, l, r in zip(self.segment_masses, lengths, self.gyration_ratios)
        ])

    def with_alpha4(self, alpha4: float) -> "AnthropometricTable":
        """Copy of the table with the trunk com ratio replaced."""
        return AnthropometricTable(
            alphas=(*self.alphas[:3], float(alpha4)),
            mass_fractions=self.mass_fractions,
            gyration_ratios=self.gyration_ratios,
            total_mass=self.total_mass,
        )

    def with_gyration_scale(self, scale: float) -> "AnthropometricTable":
        """Copy with all gyration ratios multiplied by ``scale``."""
        return AnthropometricTable(
            alphas=self.alphas,
            mass_fractions=self.mass_fractions,
            gyration_ratios=tuple(r * scale for r in self.gyration_ratios),
            total_mass=self.total_mass,
        )


def winter_table(total_mass: float) -> AnthropometricTable:
    """Reference table scaled to a subject of the given total mass (kg)."""
    return AnthropometricTable(
        alphas=WINTER_ALPHAS,
        mass_fractions=WINTER_MASS_FRACTIONS,
        gyration_ratios=WINTER_GYRATION_RATIOS,
        total_mass=total_mass,
    )


@dataclass(frozen=True)
class LandmarkTrajectory:
    """Sampled planar trajectory of one landmark, uniformly sampled."""

    index: int  # landmark number, 1..5 from the ground up
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sample_rate: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not 1 <= self.index <= N_LANDMARKS:
            raise ValueError(f"landmark index must be in 1..{N_LANDMARKS}, got {self.index}")
        if times.size < 2:
            raise ValueError("trajectory needs at least 2 samples")
        if times.shape != x.shape or times.shape != y.shape:
            raise ValueError("times, x, y must have identical shapes")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(times))):
            raise ValueError("trajectory contains non-finite values")
        dt = 1.0 / self.sample_rate
        expected = times[0] + dt * np.arange(times.size)
        if np.max(np.abs(times - expected)) > 1e-6:
            raise ValueError("trajectory is not uniformly sampled at the stated rate")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def stack_trajectories(trajectories) -> tuple[np.ndarray, np.ndarray]:
    """Combine five LandmarkTrajectory objects into (times, positions).

    Returns positions shaped (n_frames, 5, 2) ordered by landmark index.
    """
    trajs = sorted(trajectories, key=lambda tr: tr.index)
    if [tr.index for tr in trajs] != list(range(1, N_LANDMARKS + 1)):
        raise ValueError("need exactly one trajectory per landmark 1..5")
    times = trajs[0].times
    for tr in trajs[1:]:
        if tr.times.shape != times.shape or np.max(np.abs(tr.times - times)) > 1e-9:
            raise ValueError("trajectories do not share a common time base")
    positions = np.stack([np.stack([tr.x, tr.y], axis=-1) for tr in trajs], axis=1)
    return times, positions


@dataclass(frozen=True)
class ChainState:
    """Geometry of the chain at one instant."""

    landmarks: np.ndarray        # (5, 2)
    joint_angles: np.ndarray     # (4,), each in (-pi, pi]
    segment_angles: np.ndarray   # (4,), cumulative
    segment_lengths: np.ndarray  # (4,)
    segment_coms: np.ndarray     # (4, 2)
    body_com: np.ndarray         # (2,)


def _wrap_angle(theta: np.ndarray) -> np.ndarray:
    """Wrap angles into (-pi, pi]."""
    wrapped = np.remainder(theta + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def segment_vectors(landmarks: np.ndarray) -> np.ndarray:
    """Consecutive landmark differences A_{j+1} - A_j, shape (..., 4, 2)."""
    landmarks = np.asarray(landmarks, dtype=float)
    return landmarks[..., 1:, :] - landmarks[..., :-1, :]


def joint_angles(landmarks: np.ndarray) -> np.ndarray:
    """Joint angles of the chain, shape (..., 4), wrapped into (-pi, pi].

    The first angle is measured from the horizontal axis to the foot
    segment; the others between consecutive segment vectors.  Raises
    DegenerateSegmentError if consecutive landmarks coincide.
    """
    v = segment_vectors(landmarks)
    norms = np.hypot(v[..., 0], v[..., 1])
    if np.any(norms <= MIN_SEGMENT_LENGTH):
        bad = int(np.argwhere(norms <= MIN_SEGMENT_LENGTH)[0][-1])
        raise DegenerateSegmentError(
            f"segment {bad + 1} ({SEGMENT_NAMES[bad]}) shorter than {MIN_SEGMENT_LENGTH} m"
        )
    theta1 = np.arctan2(v[..., 0, 1], v[..., 0, 0])
    cross = v[..., :-1, 0] * v[..., 1:, 1] - v[..., :-1, 1] * v[..., 1:, 0]
    dot = v[..., :-1, 0] * v[..., 1:, 0] + v[..., :-1, 1] * v[..., 1:, 1]
    rest = np.arctan2(cross, dot)
    theta = np.concatenate([theta1[..., None], rest], axis=-1)
    return _wrap_angle(theta)


def segment_angles(theta: np.ndarray) -> np.ndarray:
    """Absolute segment orientations: cumulative joint angles, unwrapped.

    For a time series (n, 4) the result is continuous in time (2*pi
    jumps between consecutive samples are removed segment by segment).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.cumsum(theta, axis=-1)
    if phi.ndim >= 2:
        phi = np.unwrap(phi, axis=0)
    return phi


def segment_angle_rates(positions: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    """First derivative of the absolute segment angles, shape (..., 4).

    Computed analytically from landmark positions and velocities:
    d/dt atan2(dy, dx) = (dx*ddy - dy*ddx) / (dx^2 + dy^2).
    """
    v = segment_vectors(positions)
    vd = segment_vectors(velocities)
    den = v[..., 0] ** 2 + v[..., 1] ** 2
    return (v[..., 0] * vd[..., 1] - v[..., 1] * vd[..., 0]) / den


def segment_angle_accels(
    positions: np.ndarray, velocities: np.ndarray, accelerations: np.ndarray
) -> np.ndarray:
    """Second derivative of the absolute segment angles, shape (..., 4)."""
    v = segment_vectors(positions)
    vd = segment_vectors(velocities)
    vdd = segment_vectors(accelerations)
    den = v[..., 0] ** 2 + v[..., 1] ** 2
    num = v[..., 0] * vd[..., 1] - v[..., 1] * vd[..., 0]
    num_dot = v[..., 0] * vdd[..., 1] - v[..., 1] * vdd[..., 0]
    den_dot = 2.0 * (v[..., 0] * vd[..., 0] + v[..., 1] * vd[..., 1])
    return (num_dot * den - num * den_dot) / den**2


def segment_lengths(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment length and a data-quality indicator.

    Raw digitized markers violate the rigid-segment assumption frame to
    frame; the per-frame median suppresses outliers.  Returns
    (lengths (4,), max relative deviation (4,)).  A deviation above 10%
    emits a warning but does not fail.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 2:
        positions = positions[None, :, :]
    v = segment_vectors(positions)
    norms = np.hypot(v[..., 0], v[..., 1])  # (n, 4)
    lengths = np.median(norms, axis=0)
    if np.any(lengths <= MIN_SEGMENT_LENGTH):
        bad = int(np.argwhere(lengths <= MIN_SEGMENT_LENGTH)[0][0])
        raise DegenerateSegmentError(
            f"segment {bad + 1} ({SEGMENT_NAMES[bad]}) has near-zero median length"
        )
    max_rel_dev = np.max(np.abs(norms - lengths), axis=0) / lengths
    if np.any(max_rel_dev > 0.10):
        worst = int(np.argmax(max_rel_dev))
        warnings.warn(
            f"segment {worst + 1} ({SEGMENT_NAMES[worst]}) length varies by "
            f"{100.0 * max_rel_dev[worst]:.1f}% across frames",
            stacklevel=2,
        )
    return lengths, max_rel_dev


def segment_coms(positions: np.ndarray, alphas) -> np.ndarray:
    """Segment centers of mass G_j = A_j + alpha_j (A_{j+1} - A_j)."""
    positions = np.asarray(positions, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    return positions[..., :-1, :] + alphas[:, None] * segment_vectors(positions)


def body_com(positions: np.ndarray, table: AnthropometricTable) -> np.ndarray:
    """Whole-body center of mass, shape (..., 2).

    Mass-fraction-weighted mean of the segment centers of mass, with
    fractions renormalized to sum exactly to 1.
    """
    coms = segment_coms(positions, table.alphas)
    fractions = table.normalized_fractions
    return np.einsum("...jk,j->...k", coms, fractions)


def com_landmark_weights(table: AnthropometricTable) -> np.ndarray:
    """Weights w such that body_com = sum_j w_j * A_j (shape (5,)).

    The body center of mass is linear in the landmark positions; this
    collects the per-landmark coefficients implied by the table.
    """
    f = table.normalized_fractions
    a = np.asarray(table.alphas, dtype=float)
    w = np.zeros(N_LANDMARKS)
    w[:-1] += f * (1.0 - a)
    w[1:] += f * a
    return w


def inertia_from_gyration(mass: float, length: float, gyration_ratio: float) -> float:
    """Moment of inertia about the segment COM from the gyration ratio."""
    if not 0.0 < gyration_ratio <= 1.0:
        raise GyrationRangeError(f"gyration ratio must be in (0, 1], got {gyration_ratio}")
    if mass <= 0.0 or length <= 0.0:
        raise ValueError("mass and length must be positive")
    return mass * (gyration_ratio * length) ** 2


def gyration_from_inertia(inertia: float, mass: float, length: float) -> float:
    """Inverse of inertia_from_gyration; NaN for non-positive inertia."""
    if inertia <= 0.0:
        return float("nan")
    return float(np.sqrt(inertia / mass) / length)


def chain_state(landmarks: np.ndarray, table: AnthropometricTable) -> ChainState:
    """Assemble the full geometric state for a single frame."""
    landmarks = np.asarray(landmarks, dtype=float)
    theta = joint_angles(landmarks)
    lengths, _ = segment_lengths(landmarks)
    return ChainState(
        landmarks=landmarks,
        joint_angles=theta,
        segment_angles=segment_angles(theta),
        segment_lengths=lengths,
        segment_coms=segment_coms(landmarks, table.alphas),
        body_com=body_com(landmarks, table),
    )
