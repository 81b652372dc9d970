"""jumpdyn: planar inverse-dynamics toolkit for squat-jump recordings.

Estimates the trunk center-of-mass ratio and segment moments of inertia
by minimizing residual forces and torques (raw, integrated once, or
integrated twice) over the push-off window.
"""

from . import estimate, invdyn, io, model, pipeline, spline, sync, synth, trial
from .estimate import EstimationResult, LinearSystem, aggregate, build_system, gyration_filter, lls_solve
from .invdyn import JointLoads, TrialDynamics, epsilon
from .model import AnthropometricTable, LandmarkTrajectory, winter_table
from .pipeline import RunConfig, analyze_trial, run_batch, run_trial
from .spline import SmoothedKinematics, SmoothingSpline, fit, select_parameters, smooth_markers
from .sync import ForceRecord, SyncResult, detect_push_off, synchronize
from .synth import SyntheticScenario, SyntheticTruth, closure_check, generate
from .trial import Trial

__version__ = "0.1.0"

__all__ = [
    "AnthropometricTable",
    "EstimationResult",
    "ForceRecord",
    "JointLoads",
    "LandmarkTrajectory",
    "LinearSystem",
    "RunConfig",
    "SmoothedKinematics",
    "SmoothingSpline",
    "SyncResult",
    "SyntheticScenario",
    "SyntheticTruth",
    "Trial",
    "TrialDynamics",
    "aggregate",
    "analyze_trial",
    "build_system",
    "closure_check",
    "detect_push_off",
    "epsilon",
    "fit",
    "generate",
    "gyration_filter",
    "lls_solve",
    "run_batch",
    "run_trial",
    "select_parameters",
    "smooth_markers",
    "synchronize",
    "winter_table",
]
