"""Trial containers: force-plate record and one recorded jump."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import N_LANDMARKS

MARKER_RATE = 100.0
FORCE_RATE = 1000.0


class RecordError(ValueError):
    """A recorded stream violates a sampling or finiteness constraint."""


@dataclass(frozen=True)
class ForceRecord:
    """Ground reaction record: Rx, Ry (N) and torque C (N*m about the toe).

    Samples are uniform at ``rate`` Hz on the plate's own clock, which
    is offset from the marker clock by an unknown integer lag.
    """

    times: np.ndarray
    rx: np.ndarray
    ry: np.ndarray
    c: np.ndarray
    rate: float = FORCE_RATE

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        channels = {}
        for name in ("rx", "ry", "c"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != times.shape:
                raise RecordError(f"channel {name} length differs from time base")
            if not np.all(np.isfinite(arr)):
                raise RecordError(f"channel {name} contains non-finite values")
            channels[name] = arr
        if times.size < 2:
            raise RecordError("force record needs at least 2 samples")
        dt = 1.0 / self.rate
        expected = times[0] + dt * np.arange(times.size)
        if np.max(np.abs(times - expected)) > 1e-6:
            raise RecordError(f"force record not uniformly sampled at {self.rate} Hz")
        object.__setattr__(self, "times", times)
        for name, arr in channels.items():
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class Trial:
    """One jump: raw marker trajectories plus the force-plate record."""

    marker_times: np.ndarray        # (n,), uniform at marker_rate
    marker_positions: np.ndarray    # (n, 5, 2), meters
    force: ForceRecord
    total_mass: float               # kg
    marker_rate: float = MARKER_RATE

    def __post_init__(self):
        times = np.asarray(self.marker_times, dtype=float)
        pos = np.asarray(self.marker_positions, dtype=float)
        if pos.ndim != 3 or pos.shape[1:] != (N_LANDMARKS, 2):
            raise RecordError(f"marker positions must be (n, {N_LANDMARKS}, 2), got {pos.shape}")
        if pos.shape[0] != times.size:
            raise RecordError("marker positions length differs from time base")
        if times.size < 4:
            raise RecordError("marker record needs at least 4 samples")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(pos))):
            raise RecordError("marker record contains non-finite values")
        dt = 1.0 / self.marker_rate
        expected = times[0] + dt * np.arange(times.size)
        if np.max(np.abs(times - expected)) > 1e-6:
            raise RecordError(f"marker record not uniformly sampled at {self.marker_rate} Hz")
        if self.total_mass <= 0.0:
            raise RecordError("total mass must be positive")
        object.__setattr__(self, "marker_times", times)
        object.__setattr__(self, "marker_positions", pos)
