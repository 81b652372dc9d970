import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpdyn import invdyn, model, synth
from jumpdyn.invdyn import (
    MetricUndefinedError,
    epsilon,
    intersegment_moments,
    joint_forces,
    joint_torques,
    residual_torque_series,
)

G = model.G_ACCEL


def static_inputs(n=50):
    masses = model.winter_table(70.0).segment_masses
    reaction = np.zeros((n, 2))
    reaction[:, 1] = masses.sum() * G
    com_accels = np.zeros((n, 4, 2))
    return reaction, com_accels, masses


class TestJointForces:
    def test_static_weight_above_joint(self):
        reaction, com_accels, masses = static_inputs()
        forces = joint_forces(reaction, com_accels, masses)
        for k in range(5):
            expected = G * masses[k:].sum()
            assert forces[:, k, 1] == pytest.approx(expected)
            assert forces[:, k, 0] == pytest.approx(0.0)

    def test_boundary_is_measured_reaction(self):
        reaction, com_accels, masses = static_inputs()
        reaction[:, 0] = 13.0
        forces = joint_forces(reaction, com_accels, masses)
        np.testing.assert_array_equal(forces[:, 0], reaction)

    def test_massless_segments_pass_force_through(self):
        table = model.AnthropometricTable(
            alphas=(0.5,) * 4, mass_fractions=(0.0, 0.0, 0.0, 1.0),
            gyration_ratios=(0.3,) * 4, total_mass=70.0,
        )
        rng = np.random.default_rng(1)
        reaction = rng.normal(0.0, 100.0, (30, 2))
        com_accels = rng.normal(0.0, 5.0, (30, 4, 2))
        forces = joint_forces(reaction, com_accels, table.segment_masses)
        np.testing.assert_array_equal(forces[:, 1], forces[:, 0])

    def test_oracle_residual_small(self, oracle):
        loads = oracle.result.loads
        res = np.linalg.norm(loads.forces[:, 4])
        ground = np.linalg.norm(loads.forces[:, 0])
        assert res / ground < 1e-3

    def test_force_closure_equivalence(self, oracle):
        # top-of-chain force equals the residual-force formula pointwise
        dyn = oracle.result.dynamics
        table = oracle.scenario.table.with_alpha4(oracle.result.sync_final.alpha4)
        forces = joint_forces(dyn.reaction, dyn.com_accels, dyn.masses)
        weights = model.com_landmark_weights(table)
        kin = oracle.result.kinematics
        acc_g = np.einsum("njk,j->nk", kin.evaluate(dyn.times, 2), weights)
        mass = table.total_mass
        residual = dyn.reaction + mass * model.GRAVITY - mass * acc_g
        assert np.max(np.abs(forces[:, 4] - residual)) < 1e-9


class TestIntersegmentMoments:
    def test_zero_forces_zero_moments(self):
        positions = np.zeros((10, 5, 2))
        positions[:, :, 0] = np.arange(5) * 0.3
        forces = np.zeros((10, 5, 2))
        moments = intersegment_moments(positions, np.full(4, 0.5), forces)
        assert np.max(np.abs(moments)) == 0.0

    def test_horizontal_segment_vertical_forces(self):
        n = 4
        positions = np.zeros((n, 5, 2))
        positions[:, :, 0] = np.arange(5) * 0.3  # all segments horizontal
        forces = np.zeros((n, 5, 2))
        forces[:, :, 1] = 50.0
        alphas = np.array([0.3, 0.4, 0.5, 0.6])
        moments = intersegment_moments(positions, alphas, forces)
        expected = -0.3 * (alphas * 50.0 + (1.0 - alphas) * 50.0)
        assert moments[0] == pytest.approx(expected)

    def test_matches_independent_cross_product_route(self, oracle):
        # expanded lever formula vs the generator's cross products, on
        # exact signals
        truth = oracle.truth
        t = np.linspace(truth.window[0], truth.window[1], 200)
        pos, _, acc = truth.chain(t)
        alphas = np.asarray(truth.table.alphas)
        com_acc = model.segment_coms(acc, alphas)
        forces = joint_forces(truth.reaction(t), com_acc, truth.table.segment_masses)
        moments = intersegment_moments(pos, alphas, forces)
        coms = model.segment_coms(pos, alphas)
        expected = np.empty_like(moments)
        for j in range(4):
            lo = pos[:, j] - coms[:, j]
            hi = pos[:, j + 1] - coms[:, j]
            expected[:, j] = (
                lo[:, 0] * forces[:, j, 1] - lo[:, 1] * forces[:, j, 0]
                - (hi[:, 0] * forces[:, j + 1, 1] - hi[:, 1] * forces[:, j + 1, 0])
            )
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(moments - expected)) / scale < 1e-6


class TestJointTorques:
    def test_static_residual_zero(self):
        reaction, com_accels, masses = static_inputs()
        positions = np.zeros((50, 5, 2))
        positions[:, :, 1] = np.arange(5) * 0.3
        positions[:, :, 0] = np.array([0.0, -0.05, 0.02, -0.08, 0.01])
        forces = joint_forces(reaction, com_accels, masses)
        alphas = np.asarray(model.WINTER_ALPHAS)
        moments = intersegment_moments(positions, alphas, forces)
        c_meas = -moments.sum(axis=1)  # consistent static plate torque
        torques = joint_torques(c_meas, moments, np.zeros((50, 4)), np.ones(4))
        assert np.max(np.abs(torques[:, 4])) < 1e-9

    def test_oracle_residual_small(self, oracle):
        dyn = oracle.result.dynamics
        forces = joint_forces(dyn.reaction, dyn.com_accels, dyn.masses)
        moments = intersegment_moments(dyn.positions, dyn.alphas, forces)
        torques = joint_torques(dyn.c_meas, moments, dyn.phi_ddot, oracle.truth.inertias)
        assert np.max(np.abs(torques[:, 4])) < 1e-3 * np.max(np.abs(dyn.c_meas))

    def test_recursion_telescopes_to_direct_formula(self, oracle):
        dyn = oracle.result.dynamics
        inertias = oracle.truth.inertias
        forces = joint_forces(dyn.reaction, dyn.com_accels, dyn.masses)
        moments = intersegment_moments(dyn.positions, dyn.alphas, forces)
        torques = joint_torques(dyn.c_meas, moments, dyn.phi_ddot, inertias)
        direct = dyn.c_meas + moments.sum(axis=1) - dyn.phi_ddot @ inertias
        assert np.max(np.abs(torques[:, 4] - direct)) < 1e-9


class TestResidualTorque:
    def test_degree_validation(self, oracle):
        with pytest.raises(ValueError, match="degree"):
            residual_torque_series(oracle.result.dynamics, np.ones(4), 3)

    def test_exact_static_degree0_zero(self):
        reaction, com_accels, masses = static_inputs()
        positions = np.zeros((50, 5, 2))
        positions[:, :, 1] = np.arange(5) * 0.3
        forces = joint_forces(reaction, com_accels, masses)
        alphas = np.asarray(model.WINTER_ALPHAS)
        moments = intersegment_moments(positions, alphas, forces)
        dyn = invdyn.TrialDynamics(
            times=np.arange(50) / 1000.0, positions=positions,
            com_accels=com_accels, phi=np.zeros((50, 4)),
            phi_dot=np.zeros((50, 4)), phi_ddot=np.zeros((50, 4)),
            reaction=reaction, c_meas=-moments.sum(axis=1),
            masses=masses, alphas=alphas,
        )
        c_exp, c_ang = residual_torque_series(dyn, np.ones(4), 0)
        assert np.max(np.abs(c_exp - c_ang)) < 1e-9

    def test_noiseless_oracle_residuals_small(self, oracle):
        dyn = oracle.result.dynamics
        for degree in (0, 1, 2):
            c_exp, c_ang = residual_torque_series(dyn, oracle.truth.inertias, degree)
            assert epsilon(c_exp, c_ang) < 2e-3

    def test_derivative_of_degree2_matches_degree1(self, oracle):
        dyn = oracle.result.dynamics
        inertias = oracle.truth.inertias
        e1, a1 = residual_torque_series(dyn, inertias, 1)
        e2, a2 = residual_torque_series(dyn, inertias, 2)
        h = dyn.times[1] - dyn.times[0]
        d_exp = np.gradient(e2, h)
        d_ang = np.gradient(a2, h)
        scale = np.max(np.abs(e1))
        assert np.max(np.abs(d_exp[2:-2] - e1[2:-2])) / scale < 1e-3
        assert np.max(np.abs(d_ang[2:-2] - a1[2:-2])) / max(np.max(np.abs(a1)), 1e-12) < 1e-3

    def test_degree_anchoring_at_onset(self, oracle):
        dyn = oracle.result.dynamics
        inertias = oracle.truth.inertias
        e2, a2 = residual_torque_series(dyn, inertias, 2)
        assert e2[0] == 0.0
        assert a2[0] == 0.0  # angle increments vanish at onset exactly
        e1, a1 = residual_torque_series(dyn, inertias, 1)
        assert e1[0] == 0.0
        # angular velocities are taken as null at onset; the fitted ones
        # are only numerically small
        assert abs(a1[0]) < 1e-4 * np.max(np.abs(a1))
        # degree-2 residual starts with (numerically) zero slope
        resid2 = e2 - a2
        h = dyn.times[1] - dyn.times[0]
        slope0 = (resid2[1] - resid2[0]) / h
        assert abs(slope0) < 1e-3 * np.max(np.abs(resid2)) / (dyn.times[-1] - dyn.times[0])


class TestEpsilon:
    def test_identical_series(self):
        x = np.sin(np.linspace(0, 5, 100))
        assert epsilon(x, x) == 0.0

    def test_antipodal_bound(self):
        x = np.sin(np.linspace(0, 5, 100)) + 2.0
        assert epsilon(x, -x) == pytest.approx(1.0)

    def test_undefined_for_zero_series(self):
        z = np.zeros(10)
        with pytest.raises(MetricUndefinedError):
            epsilon(z, z)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            epsilon(np.zeros(5), np.zeros(6))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_bounds(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(0.0, 10.0, 50)
        b = rng.normal(0.0, 10.0, 50)
        val = epsilon(a, b)
        assert 0.0 <= val <= 1.0

    @given(st.floats(1e-6, 1e6))
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance(self, lam):
        rng = np.random.default_rng(42)
        a = rng.normal(0.0, 1.0, 64)
        b = rng.normal(0.0, 1.0, 64)
        assert epsilon(lam * a, lam * b) == pytest.approx(epsilon(a, b), abs=1e-12)


def test_joint_loads_assembly(oracle):
    loads = oracle.result.loads
    n = loads.times.size
    assert loads.forces.shape == (n, 5, 2)
    assert loads.torques.shape == (n, 5)
    assert set(loads.residual_torque) == {0, 1, 2}
    # row 5 of the torque recursion is the degree-0 residual
    np.testing.assert_allclose(loads.residual_torque[0], loads.torques[:, 4], atol=1e-9)
