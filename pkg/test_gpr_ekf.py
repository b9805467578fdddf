#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
EKF 센서 융합 테스트 파일
"""

import dataclasses
import math
import os
import sys
import unittest

import numpy as np

# 현재 디렉토리를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from gpr_dataset import from_simulation, step_displacements  # noqa: E402
from gpr_ekf import (IAX, IX, IY, IYAW, STATE_DIM, EkfConfig, EkfState, EncoderSample,  # noqa: E402
                     GprDisplacement, GprPosition, Imu, ReorderBuffer, SensorLog, WheelOdom, build_sensor_log,
                     condition_covariance, dead_reckoning, fuse_sequence, gpr_to_position, inflate_gpr_covariance,
                     initial_state, motion_jacobian, motion_model, predict, run_filter, step_table, update,
                     wheel_odometry)
from gpr_errors import ConfigurationError, InputError, NumericalError  # noqa: E402
from gpr_evaluation import Trajectory, rmse_ate  # noqa: E402
from gpr_simulator import generate_sequence, random_scene, straight_profile  # noqa: E402

TPM = 1000.0
W = 0.5
R = 0.1


def _straight_encoders(duration=100.0, rate=20.0, ticks_per_step=50, turn_ticks=0):
    """매 구간 같은 틱이 증가하는 엔코더 샘플 (기본 1 m/s 직진)"""
    n = int(round(duration * rate))
    samples = []
    for i in range(n + 1):
        left = i * (ticks_per_step - turn_ticks)
        right = i * (ticks_per_step + turn_ticks)
        samples.append(EncoderSample(i / rate, (left, right, left, right)))
    return samples


def _encoder_only(**overrides):
    return dataclasses.replace(EkfConfig(), use_imu=False, gpr_enabled=False, **overrides)


def _interp(frame, column, times):
    return np.interp(times, frame['time'].to_numpy(), frame[column].to_numpy())


class TestOdometry(unittest.TestCase):
    """엔코더 / GPR 측정 변환 테스트"""

    def test_differential_drive_with_ticks_per_meter(self):
        odom = wheel_odometry(EncoderSample(0.0, (0, 0, 0, 0)), EncoderSample(0.5, (100, 300, 100, 300)), R, W, TPM)
        self.assertAlmostEqual(odom.forward_velocity, 0.4)
        self.assertAlmostEqual(odom.yaw_rate, 0.4 / W)
        self.assertEqual(odom.start_time, 0.0)

    def test_angle_ticks_scaled_by_radius(self):
        odom = wheel_odometry(EncoderSample(0.0, (0, 0, 0, 0)), EncoderSample(1.0, (2, 2, 2, 2)), R, W)
        self.assertAlmostEqual(odom.forward_velocity, 2.0 * R)
        self.assertEqual(odom.yaw_rate, 0.0)

    def test_in_place_rotation(self):
        odom = wheel_odometry(EncoderSample(0.0, (0, 0, 0, 0)), EncoderSample(1.0, (-50, 50, -50, 50)), R, W, TPM)
        self.assertAlmostEqual(odom.forward_velocity, 0.0)
        self.assertAlmostEqual(odom.yaw_rate, 0.1 / W)

    def test_non_increasing_time_rejected(self):
        sample = EncoderSample(1.0, (0, 0, 0, 0))
        with self.assertRaises(InputError):
            wheel_odometry(sample, sample, R, W, TPM)

    def test_gpr_to_position(self):
        x, y = gpr_to_position(2.0, math.pi / 2.0, (1.0, 1.0))
        self.assertAlmostEqual(x, 1.0)
        self.assertAlmostEqual(y, 3.0)

    def test_turn_inflation(self):
        base = np.eye(2) * 0.01
        np.testing.assert_array_equal(inflate_gpr_covariance(base, 0.0, 0.1, 25.0), base)
        np.testing.assert_allclose(inflate_gpr_covariance(base, -0.3, 0.1, 25.0), base * 25.0)
        with self.assertRaises(ConfigurationError):
            inflate_gpr_covariance(base, 0.3, 0.1, 0.5)

    def test_step_table_shape_checked(self):
        starts, ends, steps = step_table(np.array([0.0, 1.0, 2.0]), np.array([0.1, 0.2]))
        np.testing.assert_array_equal(starts, [0.0, 1.0])
        np.testing.assert_array_equal(ends, [1.0, 2.0])
        with self.assertRaises(InputError):
            step_table(np.array([0.0, 1.0]), np.array([0.1, 0.2]))


class TestPredictUpdate(unittest.TestCase):
    """예측 / 갱신 수치 테스트"""

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.config = EkfConfig()

    def _random_state(self):
        mean = self.rng.normal(0.0, 1.0, STATE_DIM)
        A = self.rng.normal(0.0, 0.1, (STATE_DIM, STATE_DIM))
        return EkfState(mean, A @ A.T + 1e-4 * np.eye(STATE_DIM), 0.0)

    def test_jacobian_matches_finite_difference(self):
        eps = 1e-6
        for _ in range(20):
            mean = self.rng.normal(0.0, 1.0, STATE_DIM)
            dt = float(self.rng.uniform(0.01, 0.5))
            numeric = np.zeros((STATE_DIM, STATE_DIM))
            for j in range(STATE_DIM):
                step = np.zeros(STATE_DIM)
                step[j] = eps
                numeric[:, j] = (motion_model(mean + step, dt) - motion_model(mean - step, dt)) / (2.0 * eps)
            np.testing.assert_allclose(motion_jacobian(mean, dt), numeric, rtol=1e-5, atol=1e-8)

    def test_covariance_stays_psd_under_fuzz(self):
        state = initial_state(0.0, (0.0, 0.0, 0.0), 0.5, 0.0, self.config)
        Q = self.config.process_noise()
        cycles = 100_000
        dts = self.rng.uniform(0.0, 0.2, cycles)
        draws = self.rng.normal(0.0, 1.0, (cycles, 4))
        headings = self.rng.uniform(-math.pi, math.pi, cycles)
        gpr_cov = np.eye(2) * 0.03 ** 2
        worst_asymmetry, worst_eigenvalue = 0.0, math.inf
        for i in range(cycles):
            state = predict(state, float(dts[i]), Q)
            d = draws[i]
            kind = i % 3
            if kind == 0:
                m = WheelOdom(state.time, 0.5 + 0.2 * d[0], 0.2 * d[1], lateral_sigma=0.01)
            elif kind == 1:
                m = Imu(state.time, float(headings[i]), 0.2 * d[0], 0.5 * d[1], 0.5 * d[2])
            else:
                m = GprPosition(state.time, state.x + 0.1 * d[0], state.y + 0.1 * d[1], gpr_cov)
            state = update(state, m)
            P = state.covariance
            scale = max(1.0, float(np.max(np.abs(np.diag(P)))))
            worst_asymmetry = max(worst_asymmetry, float(np.max(np.abs(P - P.T))) / scale)
            worst_eigenvalue = min(worst_eigenvalue, float(np.linalg.eigvalsh(P)[0]) / scale)
            if not -math.pi - 1e-12 < state.yaw <= math.pi + 1e-12:
                self.fail(f"yaw {state.yaw} 가 (−π, π] 밖입니다 (cycle {i})")
        self.assertLessEqual(worst_asymmetry, 1e-12)
        self.assertGreaterEqual(worst_eigenvalue, -1e-9)

    def test_zero_motion_predict_adds_process_noise(self):
        state = EkfState(np.zeros(STATE_DIM), np.zeros((STATE_DIM, STATE_DIM)), 0.0)
        Q = self.config.process_noise()
        out = predict(state, 0.25, Q)
        np.testing.assert_array_equal(out.mean, state.mean)
        np.testing.assert_allclose(out.covariance, Q * 0.25)
        self.assertEqual(out.time, 0.25)

    def test_negative_dt_rejected(self):
        with self.assertRaises(InputError):
            predict(self._random_state(), -0.1, self.config.process_noise())

    def test_measurement_at_prediction_keeps_mean(self):
        state = self._random_state()
        m = GprPosition(0.0, float(state.mean[IX]), float(state.mean[IY]), np.eye(2) * 0.01)
        out = update(state, m)
        np.testing.assert_allclose(out.mean, state.mean, atol=1e-12)
        self.assertLessEqual(np.trace(out.covariance), np.trace(state.covariance) + 1e-12)

    def test_infinite_covariance_leaves_state(self):
        state = self._random_state()
        inf = math.inf
        out = update(state, Imu(0.0, 1.0, 2.0, 3.0, 4.0, inf, inf, inf))
        np.testing.assert_array_equal(out.mean, state.mean)
        np.testing.assert_array_equal(out.covariance, state.covariance)

    def test_infinite_accel_sigma_skips_accel_rows(self):
        state = initial_state(0.0, (0.0, 0.0, 0.0), 0.0, 0.0, self.config)
        out = update(state, Imu(0.0, 0.3, 0.0, 5.0, 5.0, accel_sigma=math.inf))
        self.assertEqual(out.mean[IAX], state.mean[IAX])
        self.assertNotEqual(out.mean[IYAW], state.mean[IYAW])

    def test_yaw_innovation_wraps(self):
        state = initial_state(0.0, (0.0, 0.0, math.pi - 0.01), 0.0, 0.0, self.config)
        out = update(state, Imu(0.0, -math.pi + 0.01, 0.0, 0.0, 0.0, accel_sigma=math.inf))
        # 짧은 쪽 (+0.02 rad) 으로 보정되어 π 경계를 넘는다
        self.assertGreater(abs(out.yaw), math.pi - 0.02)

    def test_condition_covariance(self):
        P = np.diag([1.0, -1e-12, 2.0])
        self.assertGreaterEqual(float(np.linalg.eigvalsh(condition_covariance(P))[0]), 0.0)
        with self.assertRaises(NumericalError):
            condition_covariance(np.diag([1.0, -0.5, 2.0]))
        with self.assertRaises(NumericalError):
            condition_covariance(np.diag([1.0, np.nan, 2.0]))


class TestReorderBuffer(unittest.TestCase):

    @staticmethod
    def _gpr(t):
        return GprDisplacement(t, t - 0.1, 0.01)

    def test_reorders_within_window_and_drops_late(self):
        buffer = ReorderBuffer(0.1)
        released = list(buffer.push(self._gpr(1.0)))
        released += list(buffer.push(self._gpr(0.95)))
        self.assertEqual(released, [])
        released += list(buffer.push(self._gpr(1.2)))
        self.assertEqual([m.timestamp for m in released], [0.95, 1.0])
        self.assertEqual(list(buffer.push(self._gpr(0.5))), [])
        self.assertEqual(buffer.dropped, 1)
        self.assertEqual([m.timestamp for m in buffer.flush()], [1.2])

    def test_same_timestamp_wheel_before_imu(self):
        buffer = ReorderBuffer(0.1)
        out = list(buffer.replay([Imu(1.0, 0.0, 0.0, 0.0, 0.0), WheelOdom(1.0, 0.1, 0.0)]))
        self.assertEqual([m.source for m in out], ['wheel', 'imu'])


class TestRunFilter(unittest.TestCase):
    """필터 실행 테스트"""

    def setUp(self):
        self.encoders = _straight_encoders()

    def _log(self, config, gpr_steps=None, encoders=None):
        return build_sensor_log(encoders or self.encoders, config, R=R, W=W, ticks_per_meter=TPM,
                                gpr_steps=gpr_steps)

    def test_matches_dead_reckoning_without_noise(self):
        config = _encoder_only()
        frame = run_filter(self._log(config), config).frame
        reference = dead_reckoning(self.encoders, R, W, TPM)
        self.assertAlmostEqual(float(reference.x[-1]), 100.0, places=9)
        np.testing.assert_allclose(_interp(frame, 'x', reference.time), reference.x, atol=1e-6)
        np.testing.assert_allclose(_interp(frame, 'y', reference.time), reference.y, atol=1e-6)

    def test_consistent_gpr_changes_nothing(self):
        epochs = np.arange(0.0, 100.0, 0.6)
        steps = np.diff(epochs) * 1.0
        off = _encoder_only()
        on = dataclasses.replace(off, gpr_enabled=True)
        without = run_filter(self._log(off), off).frame
        with_gpr = run_filter(self._log(on, step_table(epochs, steps)), on).frame
        times = without['time'].to_numpy()
        np.testing.assert_allclose(_interp(with_gpr, 'x', times), without['x'], atol=1e-6)
        np.testing.assert_allclose(_interp(with_gpr, 'y', times), without['y'], atol=1e-6)

    def test_output_rate(self):
        config = _encoder_only()
        encoders = _straight_encoders(duration=10.0, rate=5.0, ticks_per_step=200)
        frame = run_filter(self._log(config, encoders=encoders), config).frame
        gaps = np.diff(frame['time'].to_numpy())
        self.assertLessEqual(float(np.max(gaps)), 1.0 / 15.0 + 1e-9)
        self.assertGreaterEqual(len(frame), 15 * 10)
        self.assertEqual(list(frame.columns[:4]), ['time', 'x', 'y', 'yaw'])

    def test_late_measurement_dropped(self):
        config = dataclasses.replace(EkfConfig(), gpr_enabled=False)
        log = self._log(_encoder_only(), encoders=_straight_encoders(duration=2.0))
        log = SensorLog(log.measurements + [Imu(0.2, 0.0, 0.0, 0.0, 0.0)])
        result = run_filter(log, config)
        self.assertEqual(result.dropped, 1)
        self.assertEqual(result.updates, len(log) - 1)

    def test_in_place_turn_heading(self):
        config = _encoder_only()
        # 제자리 회전: ψ̇ = 2·(10/1000)/0.05/W = 0.8 rad/s, 1 초
        encoders = _straight_encoders(duration=1.0, ticks_per_step=0, turn_ticks=10)
        frame = run_filter(self._log(config, encoders=encoders), config).frame
        self.assertAlmostEqual(float(frame['yaw'].iloc[-1]), 0.8, places=6)
        self.assertLessEqual(float(np.max(np.abs(frame[['x', 'y']].to_numpy()))), 1e-9)

    def test_empty_log_rejected(self):
        with self.assertRaises(InputError):
            run_filter(SensorLog([]), EkfConfig())

    def test_invalid_config_rejected(self):
        with self.assertRaises(ConfigurationError):
            run_filter(self._log(_encoder_only()), dataclasses.replace(EkfConfig(), wheel_mode='odometer'))


class TestSequenceFusion(unittest.TestCase):
    """시뮬레이션 시퀀스 융합 테스트"""

    @staticmethod
    def _run(slip_ratio, seed=11):
        motion = straight_profile(6.0, 0.1, slip_ratio=slip_ratio, imu_yaw_sigma=0.0, imu_yaw_rate_sigma=0.0,
                                  imu_accel_sigma=0.0)
        seq = generate_sequence(random_scene(6.0, seed), motion, seed)
        data = from_simulation(seq)
        steps = step_table(seq.epoch_times, step_displacements(data.truth, seq.epoch_times))
        truth = Trajectory.from_frame(data.truth, time_column='timestamp')
        with_gpr = fuse_sequence(data, EkfConfig(), gpr_steps=steps).trajectory()
        without = fuse_sequence(data, dataclasses.replace(EkfConfig(), gpr_enabled=False)).trajectory()
        return rmse_ate(truth, with_gpr), rmse_ate(truth, without)

    def test_gpr_reduces_error_under_slip(self):
        with_gpr, without = self._run(0.3)
        self.assertLess(with_gpr, without)

    def test_gpr_neutral_without_slip(self):
        with_gpr, without = self._run(0.0)
        self.assertLessEqual(abs(with_gpr - without), max(0.1 * max(with_gpr, without), 1e-3))

    def test_gpr_enabled_requires_steps(self):
        data = from_simulation(generate_sequence(random_scene(2.0, 0), straight_profile(2.0, 0.1), 0))
        with self.assertRaises(InputError):
            fuse_sequence(data, EkfConfig())


if __name__ == '__main__':
    unittest.main()
