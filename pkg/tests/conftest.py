"""Shared fixtures: oracle trials and the seeded noisy batch.

The expensive artifacts (analyzed trials, the 20-trial batch) are
session-scoped so the acceptance suite and the module tests share them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from jumpdyn import estimate, pipeline, synth

TOTAL_MASS = 72.0

# (alpha4, lag, seed) for the noiseless round-trip scenarios: spans
# alpha4 in {0.3, 0.45, 0.6} and lags in {-300, -50, 0, 50, 300}.
ROUND_TRIP_CASES = (
    (0.30, -300, 11),
    (0.45, -50, 12),
    (0.60, 0, 13),
    (0.30, 50, 14),
    (0.45, 300, 15),
)

BATCH_SIZE = 20
BATCH_MARKER_NOISE = 1e-3
BATCH_FORCE_NOISE = 2.0


def make_scenario(alpha4=0.45, **kwargs) -> synth.SyntheticScenario:
    return synth.SyntheticScenario(alphas=(0.5, 0.567, 0.567, alpha4), **kwargs)


@dataclass
class AnalyzedTrial:
    scenario: synth.SyntheticScenario
    trial: object
    truth: synth.SyntheticTruth
    result: pipeline.TrialResult


def analyze(scenario: synth.SyntheticScenario) -> AnalyzedTrial:
    trial, truth = synth.generate(scenario)
    config = pipeline.RunConfig(total_mass=scenario.total_mass)
    result = pipeline.analyze_trial(trial, scenario.table, config)
    return AnalyzedTrial(scenario=scenario, trial=trial, truth=truth, result=result)


@pytest.fixture(scope="session")
def oracle() -> AnalyzedTrial:
    """One noiseless trial with an injected lag, fully analyzed."""
    return analyze(make_scenario(alpha4=0.45, lag=137, seed=3))


@pytest.fixture(scope="session")
def round_trips() -> list[AnalyzedTrial]:
    """The five noiseless round-trip scenarios, analyzed."""
    return [
        analyze(make_scenario(alpha4=a4, lag=lag, seed=seed))
        for a4, lag, seed in ROUND_TRIP_CASES
    ]


@pytest.fixture(scope="session")
def noisy_batch() -> list[AnalyzedTrial]:
    """Seeded 20-trial batch at 1 mm marker / 2 N force noise."""
    out = []
    for k in range(BATCH_SIZE):
        scenario = make_scenario(
            alpha4=0.45,
            marker_noise=BATCH_MARKER_NOISE,
            force_noise=BATCH_FORCE_NOISE,
            lag=37 + 3 * k,
            seed=100 + k,
        )
        out.append(analyze(scenario))
    return out


def batch_epsilon_medians(batch) -> dict[tuple[str, int], float]:
    eps: dict[tuple[str, int], list[float]] = {}
    for item in batch:
        for r in item.result.estimates:
            eps.setdefault((r.method, r.degree), []).append(r.epsilon)
    return {key: float(np.median(vals)) for key, vals in eps.items()}


def perturbed_c2_epsilons(batch, factor=1.25) -> list[float]:
    """Method C at degree 2 evaluated with inertias truth * factor."""
    out = []
    for item in batch:
        res = item.result
        table = item.scenario.table.with_gyration_scale(np.sqrt(factor))
        table = table.with_alpha4(res.sync_final.alpha4)
        r = estimate.estimate(
            res.dynamics, "C", 2, table, res.lengths,
            res.sync_final.alpha4, res.sync_final.nu,
        )
        out.append(r.epsilon)
    return out
