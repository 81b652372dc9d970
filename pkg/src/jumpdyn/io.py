"""File formats: trial CSVs, config files, reports.

All numeric output is written with ``repr`` of the Python float
(shortest round-trip form, at most 17 significant digits), so emitted
files re-ingest bit-identically and re-runs on identical inputs produce
byte-identical outputs.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .model import AnthropometricTable, LandmarkTrajectory, N_LANDMARKS, N_SEGMENTS
from .synth import SyntheticScenario
from .trial import FORCE_RATE, ForceRecord, MARKER_RATE

MARKER_COLUMNS = ("t", "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4", "x5", "y5")
FORCE_COLUMNS = ("t", "Rx", "Ry", "C")


class ParseError(ValueError):
    """Located ingestion failure; ``line`` is the 1-based file line."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}, line {line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


def _fmt(value) -> str:
    return repr(float(value))


def _read_table(path, columns: tuple[str, ...], rate: float) -> np.ndarray:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(path, None, f"cannot read file: {exc}") from exc
    if not lines:
        raise ParseError(path, 1, "empty file")
    header = tuple(col.strip() for col in lines[0].split(","))
    if header != columns:
        raise ParseError(path, 1, f"expected header {','.join(columns)!r}, got {lines[0]!r}")
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(columns):
            raise ParseError(path, line_no, f"expected {len(columns)} columns, got {len(cells)}")
        try:
            row = [float(cell) for cell in cells]
        except ValueError as exc:
            raise ParseError(path, line_no, f"non-numeric cell: {exc}") from exc
        for col, value in zip(columns, row):
            if not math.isfinite(value):
                raise ParseError(path, line_no, f"non-finite value in column {col!r}")
        rows.append(row)
    if len(rows) < 2:
        raise ParseError(path, len(lines), "need at least 2 data rows")
    data = np.asarray(rows, dtype=float)
    t = data[:, 0]
    if np.any(np.diff(t) <= 0.0):
        bad = int(np.nonzero(np.diff(t) <= 0.0)[0][0])
        raise ParseError(path, bad + 3, "time column not strictly increasing")
    dt = 1.0 / rate
    dev = np.abs(t - (t[0] + dt * np.arange(t.size)))
    if np.max(dev) > 1e-6:
        bad = int(np.argmax(dev))
        raise ParseError(path, bad + 2, f"time column not uniform at {rate:g} Hz (deviation {dev[bad]:.3g} s)")
    return data


def ingest_markers(path) -> list[LandmarkTrajectory]:
    """Read a marker CSV (t, x1, y1, ..., x5, y5 at 100 Hz, SI units)."""
    data = _read_table(path, MARKER_COLUMNS, MARKER_RATE)
    t = data[:, 0]
    return [
        LandmarkTrajectory(
            index=j + 1, times=t,
            x=data[:, 1 + 2 * j], y=data[:, 2 + 2 * j],
            sample_rate=MARKER_RATE,
        )
        for j in range(N_LANDMARKS)
    ]


def ingest_forces(path) -> ForceRecord:
    """Read a force CSV (t, Rx, Ry, C at 1000 Hz, SI units)."""
    data = _read_table(path, FORCE_COLUMNS, FORCE_RATE)
    return ForceRecord(times=data[:, 0], rx=data[:, 1], ry=data[:, 2], c=data[:, 3])


def emit_markers(path, times, positions) -> None:
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    lines = [",".join(MARKER_COLUMNS)]
    for i in range(times.size):
        cells = [_fmt(times[i])]
        for j in range(N_LANDMARKS):
            cells.append(_fmt(positions[i, j, 0]))
            cells.append(_fmt(positions[i, j, 1]))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def emit_forces(path, force: ForceRecord) -> None:
    lines = [",".join(FORCE_COLUMNS)]
    for i in range(force.n):
        lines.append(",".join(_fmt(v) for v in (force.times[i], force.rx[i], force.ry[i], force.c[i])))
    Path(path).write_text("\n".join(lines) + "\n")


def _config_rows(path) -> list[tuple[int, list[str]]]:
    rows = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if stripped:
            rows.append((line_no, stripped.split()))
    return rows


def read_anthro(path, total_mass: float) -> AnthropometricTable:
    """Read an anthropometric config: one segment per row, ground up.

    Row format: ``name alpha mass_fraction gyration_ratio``.  The
    subject's total mass is a per-run input, not part of the file.
    """
    rows = _config_rows(path)
    if len(rows) != N_SEGMENTS:
        raise ParseError(path, None, f"expected {N_SEGMENTS} segment rows, found {len(rows)}")
    alphas, fractions, gyrations = [], [], []
    for line_no, cells in rows:
        if len(cells) != 4:
            raise ParseError(path, line_no, "expected: name alpha mass_fraction gyration_ratio")
        try:
            values = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise ParseError(path, line_no, f"non-numeric value: {exc}") from exc
        alphas.append(values[0])
        fractions.append(values[1])
        gyrations.append(values[2])
    try:
        return AnthropometricTable(
            alphas=tuple(alphas), mass_fractions=tuple(fractions),
            gyration_ratios=tuple(gyrations), total_mass=total_mass,
        )
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from exc


def write_anthro(path, table: AnthropometricTable) -> None:
    names = ("foot", "shank", "thigh", "hat")
    lines = ["# segment  alpha  mass_fraction  gyration_ratio"]
    for name, a, f, r in zip(names, table.alphas, table.mass_fractions, table.gyration_ratios):
        lines.append(f"{name}  {_fmt(a)}  {_fmt(f)}  {_fmt(r)}")
    Path(path).write_text("\n".join(lines) + "\n")


_SCENARIO_SCALARS = {
    "total_mass": float, "push_start": float, "push_duration": float,
    "record_duration": float, "marker_noise": float, "force_noise": float,
    "marker_rate": float, "force_rate": float, "lag": int, "seed": int,
}
_SCENARIO_VECTORS = {
    "lengths": N_SEGMENTS, "alphas": N_SEGMENTS, "mass_fractions": N_SEGMENTS,
    "gyration_ratios": N_SEGMENTS, "theta_initial": N_SEGMENTS,
    "theta_delta": N_SEGMENTS, "origin": 2, "activation": 2 * N_SEGMENTS,
    "shape": 2 * N_SEGMENTS,
}


def read_scenario(path, **overrides) -> SyntheticScenario:
    """Read a synthetic-scenario config (key value... rows, # comments).

    Keys mirror the SyntheticScenario fields; ``activation`` is eight
    numbers (start/end fraction per joint).  Unspecified keys keep
    their defaults; keyword overrides win over the file.
    """
    kwargs: dict = {}
    for line_no, cells in _config_rows(path):
        key, values = cells[0], cells[1:]
        if key in _SCENARIO_SCALARS:
            if len(values) != 1:
                raise ParseError(path, line_no, f"{key} takes exactly one value")
            try:
                kwargs[key] = _SCENARIO_SCALARS[key](values[0])
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad value for {key}: {exc}") from exc
        elif key in _SCENARIO_VECTORS:
            expected = _SCENARIO_VECTORS[key]
            if len(values) != expected:
                raise ParseError(path, line_no, f"{key} takes {expected} values, got {len(values)}")
            try:
                numbers = tuple(float(v) for v in values)
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad value for {key}: {exc}") from exc
            if key in ("activation", "shape"):
                numbers = tuple((numbers[2 * j], numbers[2 * j + 1]) for j in range(N_SEGMENTS))
            kwargs[key] = numbers
        else:
            raise ParseError(path, line_no, f"unknown scenario key {key!r}")
    kwargs.update(overrides)
    try:
        return SyntheticScenario(**kwargs)
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from exc


def jsonable(obj):
    """Recursively convert numpy containers/scalars for JSON output."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, columns: dict[str, np.ndarray]) -> None:
    """Write named columns as CSV with a one-line header."""
    names = list(columns)
    arrays = [np.asarray(columns[name]) for name in names]
    n = arrays[0].shape[0]
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(_fmt(arr[i]) for arr in arrays))
    Path(path).write_text("\n".join(lines) + "\n")
