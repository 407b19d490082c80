import numpy as np
import pytest

from conftest import random_rotation
from lidarcal.errors import InsufficientData, NotStatic
from lidarcal.geom import Transform, compose, exp_so3, geodesic_distance
from lidarcal.lsq import Bounds
from lidarcal.observe import RateBatch
from lidarcal.pipeline import (
    BatchConfig,
    CalibrationState,
    TimedPose,
    associate_poses,
    gravity_align_init,
    make_rate_batch,
    metric_delta_r,
    metric_delta_t,
    normalize_to_initial,
    optimal_rotation_noise,
    optimal_translation_noise,
    pose_error,
    run_calibration,
    step_batch,
)
from lidarcal.sim import ScenarioSpec, Segment, generate_scenario

ROT_90_Z = exp_so3([0.0, 0.0, np.pi / 2])


def small_config(**overrides):
    defaults = dict(
        batch_size_n=10,
        beta=0.01,
        epsilon=1.0,
        bounds=Bounds.around(np.zeros(3), 0.3),
        max_association_gap=0.05,
    )
    defaults.update(overrides)
    return BatchConfig(**defaults)


class TestNormalizeToInitial:
    def test_single_pose(self, rng):
        t0 = Transform(random_rotation(rng), rng.normal(size=3))
        out = normalize_to_initial([TimedPose(0.0, t0)])
        assert np.allclose(out[0].pose.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(out[0].pose.translation, 0.0, atol=1e-12)

    def test_repeated_pose(self, rng):
        t0 = Transform(random_rotation(rng), rng.normal(size=3))
        out = normalize_to_initial([TimedPose(0.0, t0), TimedPose(1.0, t0)])
        for tp in out:
            assert np.allclose(tp.pose.rotation, np.eye(3), atol=1e-12)

    def test_relative_motion_preserved(self, rng):
        t0 = Transform(random_rotation(rng), rng.normal(size=3))
        d = Transform(ROT_90_Z, [1.0, 0.0, 0.0])
        out = normalize_to_initial([TimedPose(0.0, t0),
                                    TimedPose(1.0, compose(t0, d))])
        assert np.allclose(out[1].pose.rotation, d.rotation, atol=1e-12)
        assert np.allclose(out[1].pose.translation, d.translation, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            normalize_to_initial([])


class TestGravityAlignInit:
    def test_level(self):
        roll, pitch = gravity_align_init([[0.0, 0.0, 9.81]] * 10)
        assert roll == pytest.approx(0.0)
        assert pitch == pytest.approx(0.0)

    def test_recovers_tilt(self):
        roll_gt, pitch_gt = np.radians(5.0), np.radians(-3.0)
        accel = (exp_so3([roll_gt, 0.0, 0.0]).T @ exp_so3([0.0, pitch_gt, 0.0]).T
                 @ np.array([0.0, 0.0, 9.81]))
        roll, pitch = gravity_align_init([accel] * 10)
        assert roll == pytest.approx(roll_gt, abs=1e-9)
        assert pitch == pytest.approx(pitch_gt, abs=1e-9)

    def test_jitter_not_static(self, rng):
        samples = [[0.0, 0.0, 9.81 + 2.0 * (-1) ** k] for k in range(10)]
        with pytest.raises(NotStatic):
            gravity_align_init(samples)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            gravity_align_init([[0.0, 0.0, 9.81]] * 9)

    def test_not_near_gravity(self):
        with pytest.raises(ValueError):
            gravity_align_init([[0.0, 0.0, 5.0]] * 10)


class TestAssociatePoses:
    @staticmethod
    def grid(times):
        return [TimedPose(t, Transform.identity()) for t in times]

    def test_identical_grids(self):
        times = np.arange(10) * 0.1
        pairs = associate_poses(self.grid(times), self.grid(times), 0.05)
        assert len(pairs) == 10
        assert all(p.dt == 0.0 for p in pairs)

    def test_fast_base_slow_lidar(self):
        base = self.grid(np.arange(100) * 0.01)
        lidar = self.grid(np.arange(10) * 0.1 + 0.003)
        pairs = associate_poses(base, lidar, 0.05)
        assert len(pairs) == 10
        assert all(abs(p.dt) <= 0.005 + 1e-12 for p in pairs)

    def test_disjoint_ranges(self):
        pairs = associate_poses(self.grid([0.0, 0.1]), self.grid([10.0]), 0.05)
        assert pairs == []

    def test_each_base_pose_used_once(self):
        base = self.grid([0.0, 1.0])
        lidar = self.grid([0.0, 0.01, 0.02])
        pairs = associate_poses(base, lidar, 0.5)
        used = [p.base.t for p in pairs]
        assert len(used) == len(set(used))


class TestPoseError:
    def test_exact_pairs_zero_error(self, rng):
        x = Transform(random_rotation(rng), rng.normal(size=3) * 0.2)
        pairs = []
        for k in range(5):
            base = Transform(random_rotation(rng), rng.normal(size=3))
            lidar = compose(x, base)
            pairs.append(associate_poses([TimedPose(float(k), base)],
                                         [TimedPose(float(k), lidar)], 0.1)[0])
        total, rot = pose_error(x, pairs)
        assert total < 1e-12
        assert rot < 1e-12

    def test_quarter_turn_rotation_residual(self):
        base = TimedPose(0.0, Transform.identity())
        lidar = TimedPose(0.0, Transform(ROT_90_Z.T, np.zeros(3)))
        pairs = associate_poses([base], [lidar], 0.1)
        total, rot = pose_error(Transform.identity(), pairs)
        assert total == pytest.approx(np.sqrt(2.0) * np.pi / 2, abs=1e-9)
        assert rot == pytest.approx(total)

    def test_translation_residual(self):
        base = TimedPose(0.0, Transform.identity())
        lidar = TimedPose(0.0, Transform(np.eye(3), [0.3, 0.0, 0.0]))
        pairs = associate_poses([base], [lidar], 0.1)
        total, rot = pose_error(Transform.identity(), pairs)
        assert total == pytest.approx(0.3, abs=1e-12)
        assert rot == pytest.approx(0.0, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pose_error(Transform.identity(), [])


def excited_rate_batch(n=10, sigma_scale=0.01):
    t = np.arange(n) * 0.01
    rates = np.column_stack([np.sin(7 * t) + 0.3, np.cos(5 * t),
                             np.sin(3 * t + 1.0)])
    return RateBatch(rates, rates, t, sigma_scale**2 * np.eye(3))


def zero_rate_batch(n=10):
    return RateBatch(np.zeros((n, 3)), np.zeros((n, 3)),
                     np.arange(n) * 0.01, 0.01**2 * np.eye(3))


def consistent_pairs(x, rng, n):
    pairs = []
    for k in range(n):
        base = Transform(random_rotation(rng), rng.normal(size=3))
        pairs.append(associate_poses(
            [TimedPose(float(k), base)],
            [TimedPose(float(k), compose(x, base))], 0.1)[0])
    return pairs


class TestStepBatch:
    def test_rejected_batch_state_unchanged(self, rng):
        cfg = small_config()
        x = Transform(random_rotation(rng), rng.normal(size=3) * 0.1)
        state = CalibrationState.initial(x)
        out = step_batch(state, consistent_pairs(x, rng, 10),
                         zero_rate_batch(), cfg)
        assert out.extrinsic is state.extrinsic
        assert out.accepted_pairs == state.accepted_pairs
        assert len(out.gate_log) == 1
        assert not out.gate_log[0].accepted

    def test_accepted_batch_recovers_rotation(self, rng):
        cfg = small_config()
        x = Transform(exp_so3([0.05, -0.1, 0.2]), [0.1, -0.05, 0.02])
        state = CalibrationState.initial(Transform(np.eye(3), np.zeros(3)))
        out = step_batch(state, consistent_pairs(x, rng, 10),
                         excited_rate_batch(), cfg)
        assert out.gate_log[0].accepted
        assert geodesic_distance(out.extrinsic.rotation, x.rotation) < 1e-6
        assert np.linalg.norm(out.extrinsic.translation - x.translation) < 1e-6
        assert out.converged

    def test_adversarial_batch_does_not_regress(self, rng):
        cfg = small_config(beta=1e-9)
        x = Transform(exp_so3([0.05, -0.1, 0.2]), [0.1, -0.05, 0.02])
        state = CalibrationState.initial(Transform(np.eye(3), np.zeros(3)))
        state = step_batch(state, consistent_pairs(x, rng, 10),
                           excited_rate_batch(), cfg)
        good_error, _ = pose_error(state.extrinsic, state.accepted_pairs)

        # a batch of pairs inconsistent with the accumulated majority
        bad_pairs = []
        for k in range(10):
            base = Transform(random_rotation(rng), rng.normal(size=3))
            lidar = Transform(random_rotation(rng), rng.normal(size=3))
            bad_pairs.append(associate_poses(
                [TimedPose(float(k), base)], [TimedPose(float(k), lidar)],
                0.1)[0])
        out = step_batch(state, bad_pairs, excited_rate_batch(), cfg)

        totals = [entry[1] for entry in out.cost_history]
        assert all(b <= a + 1e-9 for a, b in zip(totals, totals[1:]))
        # the old extrinsic must still fit the clean majority at least as well
        new_error, _ = pose_error(out.extrinsic, state.accepted_pairs)
        assert new_error <= good_error + 1e-6 or np.allclose(
            out.extrinsic.rotation, state.extrinsic.rotation)

    def test_wrong_batch_size_rejected(self, rng):
        cfg = small_config()
        x = Transform(np.eye(3), np.zeros(3))
        with pytest.raises(ValueError):
            step_batch(CalibrationState.initial(x),
                       consistent_pairs(x, rng, 5), excited_rate_batch(), cfg)


class TestMakeRateBatch:
    def test_pairs_within_window(self):
        from lidarcal.imu_preint import ImuSample
        base = [ImuSample(k * 0.01, [0.1, 0.2, 0.3], [0, 0, 0])
                for k in range(100)]
        sensor = [ImuSample(k * 0.01 + 0.001, [0.1, 0.2, 0.3], [0, 0, 0])
                  for k in range(100)]
        batch = make_rate_batch(base, sensor, 0.0, 0.5, 0.01**2 * np.eye(3),
                                0.05)
        assert batch is not None
        assert len(batch) == 50
        assert np.all(batch.timestamps <= 0.5)

    def test_sparse_window_returns_none(self):
        from lidarcal.imu_preint import ImuSample
        base = [ImuSample(0.0, [0, 0, 0], [0, 0, 0])]
        sensor = [ImuSample(0.0, [0, 0, 0], [0, 0, 0])]
        assert make_rate_batch(base, sensor, 0.0, 1.0, np.eye(3), 0.05) is None


class TestRunCalibration:
    SPEC = ScenarioSpec(
        segments=(
            Segment("s_curve", 20.0, 5.0, 0.3, 0.15),
            Segment("figure_eight", 20.0, 5.0, 0.25, 0.1),
        ),
        pose_rate=10.0,
        imu_rate=100.0,
    )
    X_GT = Transform(exp_so3([0.02, -0.03, 0.17]), [0.2, -0.1, 0.05])

    def config(self):
        return BatchConfig(
            batch_size_n=50,
            beta=0.01,
            epsilon=10.0,
            bounds=Bounds.around(self.X_GT.translation + [0.05, -0.05, 0.02], 0.3),
            max_association_gap=0.05,
            cad_prior=self.X_GT.translation + [0.05, -0.05, 0.02],
        )

    def test_zero_noise_round_trip(self):
        scenario = generate_scenario(self.SPEC, self.X_GT, "common_frame")
        report = run_calibration(scenario.base_poses, scenario.lidar_poses,
                                 scenario.base_rates, scenario.lidar_rates,
                                 self.config())
        assert report.converged
        assert metric_delta_r(report.final_extrinsic.rotation,
                              self.X_GT.rotation) < 0.05
        assert metric_delta_t(report.final_extrinsic.translation,
                              self.X_GT.translation) < 0.005

    def test_straight_line_never_converges(self):
        spec = ScenarioSpec(segments=(Segment("straight", 30.0, 5.0),),
                            pose_rate=10.0, imu_rate=100.0)
        scenario = generate_scenario(spec, self.X_GT, "common_frame")
        report = run_calibration(scenario.base_poses, scenario.lidar_poses,
                                 scenario.base_rates, scenario.lidar_rates,
                                 self.config())
        assert not report.converged
        assert all(not e.accepted for e in report.gate_log)
        # extrinsic translation still at the prior
        assert np.allclose(report.final_extrinsic.translation,
                           self.config().cad_prior)

    def test_empty_stream(self):
        with pytest.raises(InsufficientData):
            run_calibration([], [], [], [], self.config())

    def test_deterministic(self):
        scenario = generate_scenario(self.SPEC, self.X_GT, "common_frame")
        args = (scenario.base_poses, scenario.lidar_poses,
                scenario.base_rates, scenario.lidar_rates, self.config())
        r1 = run_calibration(*args)
        r2 = run_calibration(*args)
        assert np.array_equal(r1.final_extrinsic.rotation,
                              r2.final_extrinsic.rotation)
        assert np.array_equal(r1.final_extrinsic.translation,
                              r2.final_extrinsic.translation)
        assert r1.cost_history == r2.cost_history


class TestMetrics:
    def test_zero_errors(self, rng):
        r = random_rotation(rng)
        t = rng.normal(size=3)
        assert metric_delta_t(t, t) == 0.0
        assert metric_delta_r(r, r) == pytest.approx(0.0, abs=1e-6)

    def test_translation_third(self):
        assert metric_delta_t([3.0, 0.0, 0.0], [0.0, 0.0, 0.0]) == pytest.approx(1.0)

    def test_rotation_quarter_turn(self, rng):
        r = random_rotation(rng)
        assert metric_delta_r(r, r @ ROT_90_Z) == pytest.approx(90.0, abs=1e-9)


def fd_gradient(f, x0, h=1e-6):
    x0 = np.asarray(x0, dtype=float)
    grad = np.zeros_like(x0)
    it = np.nditer(x0, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x0.copy()
        xm = x0.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
        it.iternext()
    return grad


class TestSensitivityOracles:
    def test_rotation_noise_consistent_triple_is_zero(self, rng):
        r_bl = random_rotation(rng)
        r_b = random_rotation(rng)
        assert np.allclose(optimal_rotation_noise(r_bl, r_b, r_bl @ r_b), 0.0,
                           atol=1e-12)

    def test_rotation_noise_zeroes_fd_gradient(self, rng):
        for _ in range(100):
            r_bl = random_rotation(rng)
            r_b = random_rotation(rng)
            r_l = random_rotation(rng)
            eta = optimal_rotation_noise(r_bl, r_b, r_l)

            def objective(eta_flat):
                e = eta_flat.reshape(3, 3)
                resid = r_bl @ (r_b + e) - r_l
                return float(np.sum(resid**2) + np.sum(e**2))

            grad = fd_gradient(objective, eta.reshape(-1))
            assert np.max(np.abs(grad)) < 1e-9

    def test_rotation_noise_residual_identity(self, rng):
        r_bl = random_rotation(rng)
        r_b = random_rotation(rng)
        r_l = random_rotation(rng)
        eta = optimal_rotation_noise(r_bl, r_b, r_l)
        assert np.allclose(eta, -0.5 * r_bl.T @ (r_bl @ r_b - r_l), atol=1e-12)

    def test_translation_noise_consistent_inputs_are_zero(self, rng):
        r_bl = random_rotation(rng)
        t_bl = rng.normal(size=3)
        r_rel = random_rotation(rng)
        t_b_rel = rng.normal(size=3)
        t_l_rel = np.linalg.solve(r_bl, (r_rel - np.eye(3)) @ t_bl + t_b_rel)
        delta = optimal_translation_noise(r_bl, t_bl, r_rel, t_b_rel, t_l_rel)
        assert np.allclose(delta, 0.0, atol=1e-9)

    def test_translation_noise_zeroes_fd_gradient(self, rng):
        for _ in range(100):
            r_bl = random_rotation(rng)
            t_bl = rng.normal(size=3)
            r_rel = random_rotation(rng)
            t_b_rel = rng.normal(size=3)
            t_l_rel = rng.normal(size=3)
            delta = optimal_translation_noise(r_bl, t_bl, r_rel, t_b_rel,
                                              t_l_rel)

            def objective(d):
                resid = ((r_rel - np.eye(3)) @ t_bl
                         - (r_bl @ t_l_rel - (t_b_rel + d)))
                return float(resid @ resid + d @ d)

            grad = fd_gradient(objective, delta)
            assert np.max(np.abs(grad)) < 1e-9

    def test_translation_noise_linearity(self, rng):
        r_bl = random_rotation(rng)
        t_bl = rng.normal(size=3)
        r_rel = random_rotation(rng)
        t_b_rel = rng.normal(size=3)
        t_l_rel = rng.normal(size=3)
        d1 = optimal_translation_noise(r_bl, t_bl, r_rel, t_b_rel, t_l_rel)
        # doubling every translation doubles the hand-eye residual and
        # therefore the stationary noise
        d2 = optimal_translation_noise(r_bl, 2.0 * t_bl, r_rel,
                                       2.0 * t_b_rel, 2.0 * t_l_rel)
        assert np.allclose(d2, 2.0 * d1, atol=1e-12)
