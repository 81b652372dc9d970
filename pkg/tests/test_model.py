import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpdyn import model
from jumpdyn.model import (
    AnthropometricTable,
    DegenerateSegmentError,
    GyrationRangeError,
    LandmarkTrajectory,
    TableError,
    body_com,
    com_landmark_weights,
    gyration_from_inertia,
    inertia_from_gyration,
    joint_angles,
    segment_angles,
    segment_coms,
    segment_lengths,
    winter_table,
)

WINTER = winter_table(69.1)


def chain_from_angles(phi, lengths, origin=(0.0, 0.0)):
    pts = [np.asarray(origin, dtype=float)]
    for angle, length in zip(phi, lengths):
        pts.append(pts[-1] + length * np.array([np.cos(angle), np.sin(angle)]))
    return np.stack(pts)


class TestJointAngles:
    def test_vertical_first_segment(self):
        lm = np.array([[0.0, 0.0], [0.0, 1.0], [0.5, 1.5], [1.0, 2.0], [1.5, 2.5]])
        theta = joint_angles(lm)
        assert theta[0] == pytest.approx(np.pi / 2)

    def test_collinear_chain_zero_joint(self):
        lm = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]])
        theta = joint_angles(lm)
        assert theta[1] == pytest.approx(0.0)
        assert theta[2] == pytest.approx(0.0)

    def test_right_turn_negative(self):
        # atan2 of cross/dot of the two segment vectors
        lm = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, -1.0], [2.0, -1.0], [2.0, 0.0]])
        theta = joint_angles(lm)
        assert theta[1] == pytest.approx(-np.pi / 2)

    def test_degenerate_segment_named(self):
        lm = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        with pytest.raises(DegenerateSegmentError, match="shank"):
            joint_angles(lm)

    @given(st.lists(st.floats(-10, 10), min_size=10, max_size=10))
    @settings(max_examples=50, deadline=None)
    def test_wrap_range(self, coords):
        lm = np.asarray(coords).reshape(5, 2)
        diffs = np.diff(lm, axis=0)
        if np.any(np.hypot(diffs[:, 0], diffs[:, 1]) <= 1e-6):
            return
        theta = joint_angles(lm)
        assert np.all(theta > -np.pi)
        assert np.all(theta <= np.pi)


class TestSegmentAngles:
    def test_straight_vertical_chain(self):
        phi = segment_angles(np.array([np.pi / 2, 0.0, 0.0, 0.0]))
        assert phi == pytest.approx([np.pi / 2] * 4)

    def test_sum_telescopes(self):
        phi = segment_angles(np.array([np.pi / 2, -np.pi / 4, 0.0, 0.0]))
        assert phi[1] == pytest.approx(np.pi / 4)

    def test_unwrap_across_branch_cut(self):
        # chain spinning through +-pi: unwrapped phi must stay monotone
        t = np.linspace(0.0, 1.0, 200)
        spin = np.pi / 2 + 3.0 * np.pi * t
        lengths = (0.2, 0.3, 0.3, 0.4)
        frames = np.stack([chain_from_angles([a, a, a, a], lengths) for a in spin])
        theta = joint_angles(frames)
        phi = segment_angles(theta)
        reference = np.unwrap(np.cumsum(theta, axis=-1), axis=0)
        assert np.allclose(phi, reference)
        assert np.all(np.diff(phi[:, 0]) > 0)
        assert np.max(np.abs(np.diff(phi, axis=0))) < np.pi

    def test_angle_rate_formulas_match_finite_differences(self):
        # analytic rates/accels of the segment angles vs central differences
        t = np.linspace(0.0, 1.0, 1001)
        angles = np.stack([
            0.5 + 0.4 * np.sin(2 * np.pi * t),
            1.0 + 0.2 * np.cos(3.0 * t),
            -0.3 + 0.5 * np.sin(1.7 * t + 0.5),
            0.1 * t**2,
        ], axis=1)
        lengths = (0.2, 0.4, 0.4, 0.6)
        pos = np.stack([chain_from_angles(a, lengths) for a in angles])
        h = t[1] - t[0]
        vel = np.gradient(pos, h, axis=0, edge_order=2)
        acc = np.gradient(vel, h, axis=0, edge_order=2)
        phi = segment_angles(joint_angles(pos))
        rates = model.segment_angle_rates(pos, vel)
        fd_rates = np.gradient(phi, h, axis=0, edge_order=2)
        assert np.allclose(rates[5:-5], fd_rates[5:-5], rtol=1e-3, atol=1e-4)
        accels = model.segment_angle_accels(pos, vel, acc)
        fd_acc = np.gradient(fd_rates, h, axis=0, edge_order=2)
        assert np.allclose(accels[10:-10], fd_acc[10:-10], rtol=5e-3, atol=5e-3)


class TestSegmentLengths:
    def test_constant_frames(self):
        frame = np.array([[0.0, 0.0], [0.0, 0.4], [0.2, 0.6], [0.2, 1.0], [0.0, 1.4]])
        frames = np.repeat(frame[None], 10, axis=0)
        lengths, dev = segment_lengths(frames)
        assert lengths[0] == pytest.approx(0.4)
        assert np.all(dev < 1e-12)

    def test_median_suppresses_outlier(self):
        frame = np.array([[0.0, 0.0], [0.0, 0.4], [0.2, 0.6], [0.2, 1.0], [0.0, 1.4]])
        frames = np.repeat(frame[None], 99, axis=0)
        frames[17, 1, 1] = 0.43  # one corrupted ankle sample
        lengths, _ = segment_lengths(frames)
        assert lengths[0] == pytest.approx(0.4)

    def test_large_deviation_warns_not_fails(self):
        frame = np.array([[0.0, 0.0], [0.0, 0.4], [0.2, 0.6], [0.2, 1.0], [0.0, 1.4]])
        frames = np.repeat(frame[None], 9, axis=0)
        frames[4, 1, 1] = 0.48  # 20% longer foot in one frame
        with pytest.warns(UserWarning, match="varies"):
            lengths, dev = segment_lengths(frames)
        assert lengths[0] == pytest.approx(0.4)
        assert dev[0] > 0.10

    def test_noisy_synthetic_within_half_percent(self, noisy_batch):
        item = noisy_batch[0]
        lengths, _ = segment_lengths(item.trial.marker_positions)
        assert np.all(np.abs(lengths - np.asarray(item.scenario.lengths))
                      / np.asarray(item.scenario.lengths) < 0.005)

    @given(st.floats(-np.pi, np.pi))
    @settings(max_examples=25, deadline=None)
    def test_rotation_invariance(self, angle):
        rng = np.random.default_rng(7)
        frames = rng.uniform(-1.0, 1.0, (6, 5, 2)).cumsum(axis=1)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        lengths, _ = segment_lengths(frames)
        rotated, _ = segment_lengths(frames @ rot.T)
        assert np.allclose(lengths, rotated, rtol=0.0, atol=1e-12)


class TestBodyCom:
    def test_symmetric_chain_centered(self):
        table = AnthropometricTable(
            alphas=(0.5, 0.5, 0.5, 0.5),
            mass_fractions=(0.25, 0.25, 0.25, 0.25),
            gyration_ratios=(0.3, 0.3, 0.3, 0.3),
            total_mass=70.0,
        )
        lm = np.array([[-1.0, 0.0], [-0.5, 1.0], [0.0, 1.5], [0.5, 1.0], [1.0, 0.0]])
        g = body_com(lm, table)
        assert g[0] == pytest.approx(0.0, abs=1e-12)

    def test_single_segment_degenerate_table(self):
        table = AnthropometricTable(
            alphas=(0.5, 0.5, 0.5, 0.3),
            mass_fractions=(0.0, 0.0, 0.0, 1.0),
            gyration_ratios=(0.3, 0.3, 0.3, 0.3),
            total_mass=70.0,
        )
        lm = np.array([[0.0, 0.0], [0.1, 0.4], [0.3, 0.8], [0.2, 1.2], [0.2, 1.8]])
        g = body_com(lm, table)
        expected = lm[3] + 0.3 * (lm[4] - lm[3])
        assert g == pytest.approx(expected)

    def test_matches_brute_force_sum(self):
        lm = np.array([[0.0, 0.0], [-0.15, 0.13], [0.06, 0.49], [-0.30, 0.70], [0.0, 1.22]])
        g = body_com(lm, WINTER)
        fractions = WINTER.normalized_fractions
        expected = np.zeros(2)
        for j in range(4):
            com_j = lm[j] + WINTER.alphas[j] * (lm[j + 1] - lm[j])
            expected += fractions[j] * com_j
        assert g == pytest.approx(expected, abs=1e-12)

    def test_landmark_weights_equivalent(self):
        lm = np.array([[0.0, 0.0], [-0.15, 0.13], [0.06, 0.49], [-0.30, 0.70], [0.0, 1.22]])
        w = com_landmark_weights(WINTER)
        assert w.sum() == pytest.approx(1.0)
        assert body_com(lm, WINTER) == pytest.approx(np.einsum("jk,j->k", lm, w))

    @given(st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=25, deadline=None)
    def test_translation_equivariance(self, dx, dy):
        rng = np.random.default_rng(11)
        lm = rng.uniform(-1.0, 1.0, (5, 2)).cumsum(axis=0)
        shift = np.array([dx, dy])
        assert np.allclose(body_com(lm + shift, WINTER), body_com(lm, WINTER) + shift,
                           atol=1e-12)


class TestAnthropometricTable:
    def test_winter_rows(self):
        assert WINTER.alphas == (0.5000, 0.5670, 0.5670, 0.6260)
        assert WINTER.mass_fractions == (0.0290, 0.0930, 0.2000, 0.6780)
        assert WINTER.gyration_ratios == (0.4750, 0.3020, 0.3230, 0.4960)
        assert sum(WINTER.mass_fractions) == pytest.approx(1.0)

    def test_fraction_sum_validation(self):
        with pytest.raises(TableError, match="sum"):
            AnthropometricTable(
                alphas=(0.5,) * 4, mass_fractions=(0.2, 0.2, 0.2, 0.2),
                gyration_ratios=(0.3,) * 4, total_mass=70.0,
            )

    def test_ratio_range_validation(self):
        with pytest.raises(TableError):
            AnthropometricTable(
                alphas=(0.5, 0.5, 0.5, 1.2), mass_fractions=(0.25,) * 4,
                gyration_ratios=(0.3,) * 4, total_mass=70.0,
            )

    def test_renormalization_preserves_ratios(self):
        f = np.asarray(WINTER.mass_fractions)
        fn = WINTER.normalized_fractions
        assert fn.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.allclose(fn / fn[0], f / f[0], atol=1e-12)

    def test_with_alpha4(self):
        t = WINTER.with_alpha4(0.45)
        assert t.alphas == (0.5000, 0.5670, 0.5670, 0.45)
        assert t.mass_fractions == WINTER.mass_fractions


class TestInertia:
    def test_identity(self):
        assert inertia_from_gyration(1.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_winter_trunk_value(self):
        # published trunk inertia 4.2067 kg m^2 for a 69.1 kg subject
        mass4 = 69.1 * 0.6780
        length4 = np.sqrt(4.2067 / mass4) / 0.4960
        assert inertia_from_gyration(mass4, length4, 0.4960) == pytest.approx(4.2067, abs=1e-9)

    def test_inverse_round_trip(self):
        inertia = inertia_from_gyration(46.85, 0.604, 0.496)
        assert gyration_from_inertia(inertia, 46.85, 0.604) == pytest.approx(0.496, abs=1e-12)

    def test_gyration_range_error(self):
        with pytest.raises(GyrationRangeError):
            inertia_from_gyration(1.0, 1.0, 1.5)
        with pytest.raises(GyrationRangeError):
            inertia_from_gyration(1.0, 1.0, 0.0)

    def test_negative_inertia_maps_to_nan(self):
        assert np.isnan(gyration_from_inertia(-0.5, 2.0, 0.3))


class TestLandmarkTrajectory:
    def test_valid_construction(self):
        t = np.arange(10) / 100.0
        tr = LandmarkTrajectory(index=1, times=t, x=np.zeros(10), y=np.ones(10), sample_rate=100.0)
        assert tr.times.size == 10

    def test_rejects_nonuniform(self):
        t = np.arange(10) / 100.0
        t[5] += 1e-3
        with pytest.raises(ValueError, match="uniform"):
            LandmarkTrajectory(index=1, times=t, x=np.zeros(10), y=np.ones(10), sample_rate=100.0)

    def test_rejects_nan(self):
        t = np.arange(10) / 100.0
        x = np.zeros(10)
        x[3] = np.nan
        with pytest.raises(ValueError, match="finite"):
            LandmarkTrajectory(index=1, times=t, x=x, y=np.ones(10), sample_rate=100.0)

    def test_stack_trajectories(self):
        t = np.arange(8) / 100.0
        trajs = [
            LandmarkTrajectory(index=j + 1, times=t, x=np.full(8, float(j)),
                               y=np.full(8, 2.0 * j), sample_rate=100.0)
            for j in range(5)
        ]
        times, positions = model.stack_trajectories(trajs)
        assert positions.shape == (8, 5, 2)
        assert positions[0, 3, 0] == 3.0
        assert positions[0, 3, 1] == 6.0


def test_chain_state_assembly():
    lm = np.array([[0.0, 0.0], [-0.15, 0.13], [0.06, 0.49], [-0.30, 0.70], [0.0, 1.22]])
    state = model.chain_state(lm, WINTER)
    assert state.joint_angles.shape == (4,)
    assert state.segment_coms.shape == (4, 2)
    assert state.body_com == pytest.approx(body_com(lm, WINTER))
    np.testing.assert_allclose(
        state.segment_coms,
        segment_coms(lm, WINTER.alphas),
    )
