"""Per-trial orchestration and batch processing.

The per-trial pipeline is: detect the push-off window on the force
record, fit near-interpolating provisional splines, synchronize
(lag + trunk COM ratio), select the smoothing parameters against the
residual force, re-synchronize once with the final fits, run the
inverse dynamics, then estimate inertias for every requested
(method, degree) pair.  Any stage failure aborts the trial with a
stage-tagged error; in batch mode the remaining trials still run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimate, invdyn, io, model, spline, sync
from .model import AnthropometricTable
from .trial import Trial

PROVISIONAL_SMOOTH = 1.0 - 1e-6
REPORT_SCHEMA = 1


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


class BatchInputError(ValueError):
    """The batch directory holds no usable trial pairs."""


@dataclass(frozen=True)
class RunConfig:
    """Selection and output options shared by single runs and batches."""

    total_mass: float
    anthro: str | Path | None = None
    methods: tuple[str, ...] = ("A", "B", "C")
    degrees: tuple[int, ...] = (0, 1, 2)
    jobs: int = 1

    def __post_init__(self):
        methods = tuple(dict.fromkeys(m.upper() for m in self.methods))
        degrees = tuple(dict.fromkeys(int(d) for d in self.degrees))
        if not methods or not degrees:
            raise ValueError("select at least one method and one degree")
        bad = [m for m in methods if m not in estimate.METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {estimate.METHODS}")
        bad_d = [d for d in degrees if d not in invdyn.DEGREES]
        if bad_d:
            raise ValueError(f"unknown degrees {bad_d}; choose from {invdyn.DEGREES}")
        if self.total_mass <= 0.0:
            raise ValueError("total mass must be positive")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "degrees", degrees)

    def load_table(self) -> AnthropometricTable:
        if self.anthro is None:
            return model.winter_table(self.total_mass)
        return io.read_anthro(self.anthro, self.total_mass)


@dataclass
class TrialResult:
    """Everything the per-trial pipeline produced."""

    window: tuple[int, int]
    sync_provisional: sync.SyncResult
    sync_final: sync.SyncResult
    alpha4_least_squares: float
    smooth: np.ndarray
    kinematics: spline.SmoothedKinematics
    dynamics: invdyn.TrialDynamics
    loads: invdyn.JointLoads
    lengths: np.ndarray
    length_deviation: np.ndarray
    estimates: list[estimate.EstimationResult]
    ycom: dict[str, np.ndarray]
    scatter: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def reference_estimate(estimates) -> estimate.EstimationResult:
    """The estimate population statistics key on: B2, else A2, else first."""
    by_key = {(r.method, r.degree): r for r in estimates}
    return by_key.get(("B", 2)) or by_key.get(("A", 2)) or estimates[0]


def analyze_trial(trial: Trial, table: AnthropometricTable, config: RunConfig) -> TrialResult:
    """Run the full pipeline on an in-memory trial."""
    force = trial.force
    window = _stage("events", sync.detect_push_off, force)

    kin0 = _stage(
        "smooth-provisional", spline.smooth_markers,
        trial.marker_times, trial.marker_positions, PROVISIONAL_SMOOTH,
    )
    sync0 = _stage("synchronize", sync.synchronize, force, window, kin0, table)

    smooth = _stage(
        "smooth-select", spline.select_parameters,
        trial.marker_times, trial.marker_positions, force, window,
        table.with_alpha4(sync0.alpha4), sync0.nu,
    )
    kin = _stage("smooth-fit", spline.smooth_markers, trial.marker_times, trial.marker_positions, smooth)

    problem = _stage("resynchronize", sync.SyncProblem, force, window, kin, table)
    sync1 = _stage("resynchronize", sync.synchronize_problem, problem)
    alpha_lls = _stage("resynchronize", sync.alpha4_least_squares, problem, sync1.nu)

    dyn, lengths, length_dev = _stage("dynamics", _build_dynamics, trial, table, kin, window, sync1)

    table4 = table.with_alpha4(sync1.alpha4)
    estimates = []
    for method in config.methods:
        for degree in config.degrees:
            estimates.append(_stage(
                f"estimate-{method}{degree}", estimate.estimate,
                dyn, method, degree, table4, lengths, sync1.alpha4, sync1.nu,
            ))

    loads = _stage(
        "dynamics", invdyn.compute_joint_loads,
        dyn, np.asarray(reference_estimate(estimates).inertias),
    )
    ycom = _stage(
        "dynamics", sync.ycom_three_ways,
        force, window, kin, table, sync1.alpha4, sync1.nu,
    )
    scatter = {}
    if "B" in config.methods:
        fixed = table4.segment_inertias(lengths)[:3]
        for degree in config.degrees:
            system = estimate.build_system(dyn, degree, "B", fixed_inertias=fixed)
            scatter[degree] = (system.matrix[:, 0].copy(), system.rhs.copy())

    return TrialResult(
        window=window, sync_provisional=sync0, sync_final=sync1,
        alpha4_least_squares=alpha_lls, smooth=np.asarray(smooth),
        kinematics=kin, dynamics=dyn, loads=loads,
        lengths=lengths, length_deviation=length_dev,
        estimates=estimates, ycom=ycom, scatter=scatter,
    )


def _build_dynamics(trial, table, kin, window, sync_result):
    i0, i1 = window
    dt = 1.0 / trial.force.rate
    t_kin = (np.arange(i0, i1 + 1) + sync_result.nu) * dt
    pos = kin.evaluate(t_kin, 0)
    vel = kin.evaluate(t_kin, 1)
    acc = kin.evaluate(t_kin, 2)
    table4 = table.with_alpha4(sync_result.alpha4)
    alphas = np.asarray(table4.alphas)
    theta = model.joint_angles(pos)
    lengths, length_dev = model.segment_lengths(trial.marker_positions)
    dyn = invdyn.TrialDynamics(
        times=t_kin,
        positions=pos,
        com_accels=model.segment_coms(acc, alphas),
        phi=model.segment_angles(theta),
        phi_dot=model.segment_angle_rates(pos, vel),
        phi_ddot=model.segment_angle_accels(pos, vel, acc),
        reaction=np.stack([trial.force.rx[i0:i1 + 1], trial.force.ry[i0:i1 + 1]], axis=-1),
        c_meas=trial.force.c[i0:i1 + 1],
        masses=table4.segment_masses,
        alphas=alphas,
    )
    return dyn, lengths, length_dev


def build_report(result: TrialResult, table: AnthropometricTable, trial: Trial) -> dict:
    """Deterministic JSON-ready report for one trial."""
    i0, i1 = result.window
    return {
        "schema": REPORT_SCHEMA,
        "total_mass": trial.total_mass,
        "events": {
            "onset_index": i0,
            "takeoff_index": i1,
            "t0": float(trial.force.times[i0]),
            "tf": float(trial.force.times[i1]),
            "window_samples": i1 - i0 + 1,
        },
        "sync": {
            "nu": result.sync_final.nu,
            "alpha4": result.sync_final.alpha4,
            "eta": result.sync_final.eta,
            "alpha4_least_squares": result.alpha4_least_squares,
            "alpha4_table": table.alphas[3],
        },
        "smoothing": list(result.smooth),
        "segment_lengths": list(result.lengths),
        "segment_length_max_rel_dev": list(result.length_deviation),
        "estimates": [
            {
                "method": r.method,
                "degree": r.degree,
                "inertias": list(r.inertias),
                "fixed": list(r.fixed_mask),
                "epsilon": r.epsilon,
                "r2": r.r_squared,
                "r4_tilde": r.r4_tilde,
                "alpha4": r.alpha4,
                "nu": r.nu,
                "valid": r.valid,
            }
            for r in result.estimates
        ],
    }


def write_trial_outputs(out_dir, result: TrialResult, report: dict) -> None:
    """Write the report JSON and the plotting CSVs for one trial."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "report.json", report)
    io.write_csv(out / "eta_curve.csv", {
        "alpha4": result.sync_final.alpha_grid,
        "eta": result.sync_final.eta_curve,
        "nu": result.sync_final.nu_curve,
    })
    io.write_csv(out / "ycom_three_ways.csv", result.ycom)
    loads = result.loads
    columns: dict[str, np.ndarray] = {"t": loads.times}
    for k in range(5):
        columns[f"Rx{k + 1}"] = loads.forces[:, k, 0]
    for k in range(5):
        columns[f"Ry{k + 1}"] = loads.forces[:, k, 1]
    for k in range(5):
        columns[f"C{k + 1}"] = loads.torques[:, k]
    for degree in invdyn.DEGREES:
        columns[f"Ctilde{degree}"] = loads.residual_torque[degree]
    io.write_csv(out / "joint_loads.csv", columns)
    for degree, (x, y) in sorted(result.scatter.items()):
        io.write_csv(out / f"method_b_scatter_deg{degree}.csv", {"x": x, "y": y})


def run_trial(markers_path, forces_path, config: RunConfig, out_dir=None) -> dict:
    """Ingest one trial, analyze it, optionally write outputs."""
    table = _stage("config", config.load_table)
    trajectories = _stage("ingest", io.ingest_markers, markers_path)
    force = _stage("ingest", io.ingest_forces, forces_path)
    times, positions = model.stack_trajectories(trajectories)
    trial = _stage("ingest", Trial, times, positions, force, config.total_mass)
    result = analyze_trial(trial, table, config)
    report = build_report(result, table, trial)
    if out_dir is not None:
        write_trial_outputs(out_dir, result, report)
    return report


def discover_pairs(directory) -> list[tuple[str, Path, Path]]:
    """Trial pairs <name>_markers.csv / <name>_forces.csv, sorted by name."""
    directory = Path(directory)
    pairs = []
    for markers in sorted(directory.glob("*_markers.csv")):
        name = markers.name[: -len("_markers.csv")]
        forces = directory / f"{name}_forces.csv"
        if forces.exists():
            pairs.append((name, markers, forces))
    return pairs


def run_batch(directory, config: RunConfig, out_dir=None) -> dict:
    """Process every trial pair in a directory and aggregate.

    Trials run concurrently (config.jobs threads); each trial's own
    pipeline stays sequential and failures do not stop the batch.  The
    gyration filter keys on each trial's reference estimate (B2 when
    selected).
    """
    pairs = discover_pairs(directory)
    if not pairs:
        raise BatchInputError(f"no <name>_markers.csv / <name>_forces.csv pairs in {directory}")

    def one(pair):
        name, markers, forces = pair
        trial_out = None if out_dir is None else Path(out_dir) / name
        try:
            return name, run_trial(markers, forces, config, trial_out), None
        except StageError as exc:
            return name, None, exc

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(one, pairs))
    else:
        outcomes = [one(pair) for pair in pairs]

    reports = {name: report for name, report, _ in outcomes if report is not None}
    failures = [
        {"trial": name, "stage": exc.stage, "error": str(exc.cause)}
        for name, _, exc in outcomes if exc is not None
    ]

    results = []
    for name in sorted(reports):
        estimates = [
            estimate.EstimationResult(
                method=e["method"], degree=e["degree"],
                inertias=tuple(e["inertias"]), fixed_mask=tuple(e["fixed"]),
                epsilon=e["epsilon"], r_squared=e["r2"], r4_tilde=e["r4_tilde"],
                alpha4=e["alpha4"], nu=e["nu"], valid=e["valid"],
            )
            for e in reports[name]["estimates"]
        ]
        results.append((name, estimates))

    retained = [(name, ests) for name, ests in results if reference_estimate(ests).valid]
    removed = len(results) - len(retained)

    summary: dict = {
        "schema": REPORT_SCHEMA,
        "n_trials": len(pairs),
        "n_analyzed": len(results),
        "n_failed": len(failures),
        "failures": sorted(failures, key=lambda f: f["trial"]),
        "gyration_filter": {
            "total": len(results),
            "removed": removed,
            "retained": len(retained),
        },
    }
    if len(retained) >= 2:
        summary["aggregate"] = estimate.aggregate([ests for _, ests in retained])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "summary.json", summary)
        if retained:
            alpha4 = np.array([reference_estimate(ests).alpha4 for _, ests in retained])
            r4 = np.array([reference_estimate(ests).r4_tilde for _, ests in retained])
            io.write_csv(out / "alpha4_values.csv", {"alpha4": alpha4})
            io.write_csv(out / "r4_tilde_values.csv", {"r4_tilde": r4})
    return summary
