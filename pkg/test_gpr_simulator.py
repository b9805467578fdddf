#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
합성 레이더그램 시뮬레이터 테스트 파일
"""

import dataclasses
import math
import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# 현재 디렉토리를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from gpr_errors import ConfigurationError  # noqa: E402
from gpr_signal import FilterConfig, condition_traces  # noqa: E402
from gpr_simulator import (DEFAULT_SAMPLE_DT_NS, MotionProfile, ScatterScene, Scatterer,  # noqa: E402
                           generate_sequence, load_motion, load_scene, moving_scatterer_hyperbola,
                           random_scene, reflection_coeff, straight_profile, survey_profile, trace_response,
                           two_way_time, unwrap_yaw, wrap_angle, write_motion, write_scene)


class TestReflection(unittest.TestCase):
    """반사 계수 테스트"""

    def test_known_values(self):
        self.assertAlmostEqual(reflection_coeff(1.0, 9.0), -0.5)
        self.assertAlmostEqual(reflection_coeff(9.0, 1.0), 0.5)
        self.assertEqual(reflection_coeff(4.0, 4.0), 0.0)

    def test_bounded(self):
        for k1, k2 in ((1.0, 80.0), (3.0, 12.0), (12.0, 1.0)):
            self.assertLess(abs(reflection_coeff(k1, k2)), 1.0)

    def test_rejects_permittivity_below_one(self):
        with self.assertRaises(ConfigurationError):
            reflection_coeff(0.5, 4.0)


class TestTraceResponse(unittest.TestCase):
    """단일 트레이스 응답 테스트"""

    def setUp(self):
        self.empty = ScatterScene(scatterers=[], wow_coefficients=(0.0,), noise_sigma=0.0)

    def test_noise_free_is_deterministic(self):
        scene = ScatterScene(scatterers=[Scatterer(0.0, 0.8, 9.0)])
        a = trace_response(scene, 0.1, scene.sample_dt_ns, scene.samples)
        b = trace_response(scene, 0.1, scene.sample_dt_ns, scene.samples)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_scatterer_below_antenna_peaks_at_two_way_time(self):
        scene = dataclasses.replace(self.empty, scatterers=[Scatterer(0.0, 1.0, 12.0)])
        background = trace_response(self.empty, 0.0, DEFAULT_SAMPLE_DT_NS, 200).samples
        trace = trace_response(scene, 0.0, DEFAULT_SAMPLE_DT_NS, 200).samples
        expected = two_way_time(1.0, 4.0) / DEFAULT_SAMPLE_DT_NS
        self.assertLessEqual(abs(int(np.argmax(np.abs(trace - background))) - expected), 1.0)

    def test_two_scatterers_superpose(self):
        a, b = Scatterer(-0.3, 0.6, 9.0), Scatterer(0.4, 1.1, 1.5)
        background = trace_response(self.empty, 0.1, DEFAULT_SAMPLE_DT_NS, 200).samples

        def response(*scatterers):
            scene = dataclasses.replace(self.empty, scatterers=list(scatterers))
            return trace_response(scene, 0.1, DEFAULT_SAMPLE_DT_NS, 200).samples - background

        np.testing.assert_allclose(response(a, b), response(a) + response(b), atol=1e-12)

    def test_doubling_depth_doubles_apex_time(self):
        self.assertAlmostEqual(two_way_time(0.8, 4.0), 2.0 * two_way_time(0.4, 4.0), places=12)
        background = trace_response(self.empty, 0.0, DEFAULT_SAMPLE_DT_NS, 200).samples
        peaks = []
        for depth in (0.4, 0.8):
            scene = dataclasses.replace(self.empty, scatterers=[Scatterer(0.0, depth, 12.0)])
            trace = trace_response(scene, 0.0, DEFAULT_SAMPLE_DT_NS, 200).samples
            peak = int(np.argmax(np.abs(trace - background)))
            self.assertLessEqual(abs(peak - two_way_time(depth, 4.0) / DEFAULT_SAMPLE_DT_NS), 1.0)
            peaks.append(peak)
        self.assertLessEqual(abs(peaks[1] - 2 * peaks[0]), 2)

    def test_scatterer_beyond_window_is_invisible(self):
        scene = dataclasses.replace(self.empty, scatterers=[Scatterer(0.0, 5.0, 12.0)])
        np.testing.assert_array_equal(trace_response(scene, 0.0, DEFAULT_SAMPLE_DT_NS, 200).samples,
                                      trace_response(self.empty, 0.0, DEFAULT_SAMPLE_DT_NS, 200).samples)

    def test_matched_permittivity_gives_no_reflection(self):
        scene = dataclasses.replace(self.empty, scatterers=[Scatterer(0.0, 0.5, 4.0)])
        np.testing.assert_allclose(trace_response(scene, 0.0, DEFAULT_SAMPLE_DT_NS, 200).samples,
                                   trace_response(self.empty, 0.0, DEFAULT_SAMPLE_DT_NS, 200).samples)

    def test_hyperbola_apex_and_symmetry(self):
        scene = ScatterScene(scatterers=[Scatterer(1.0, 0.5, 12.0)], noise_sigma=0.0)
        check = moving_scatterer_hyperbola(scene, straight_profile(2.0, 0.1))
        self.assertTrue(check.apex_is_minimum)
        self.assertLessEqual(check.symmetry_error, 1)
        left = check.peak_indices[:check.apex_trace + 1]
        right = check.peak_indices[check.apex_trace:]
        self.assertTrue(np.all(np.diff(left) <= 0))
        self.assertTrue(np.all(np.diff(right) >= 0))

    def test_hyperbola_requires_single_scatterer(self):
        with self.assertRaises(ConfigurationError):
            moving_scatterer_hyperbola(ScatterScene(), straight_profile(2.0, 0.1))


class TestAngles(unittest.TestCase):

    def test_wrap_range(self):
        self.assertAlmostEqual(wrap_angle(-math.pi), math.pi)
        self.assertAlmostEqual(wrap_angle(3.0 * math.pi / 2.0), -math.pi / 2.0)

    def test_unwrap_crosses_pi(self):
        yaws = unwrap_yaw([3.0, -3.0])
        self.assertAlmostEqual(yaws[1], 2.0 * math.pi - 3.0)


class TestGenerateSequence(unittest.TestCase):
    """시퀀스 생성 테스트"""

    def setUp(self):
        self.scene = random_scene(6.0, seed=1)
        self.motion = straight_profile(6.0, 0.1)

    def test_same_seed_identical(self):
        a = generate_sequence(self.scene, self.motion, 3)
        b = generate_sequence(self.scene, self.motion, 3)
        for x, y in zip(a.traces, b.traces):
            np.testing.assert_array_equal(x.samples, y.samples)
        np.testing.assert_array_equal(a.imu, b.imu)
        np.testing.assert_array_equal(a.encoder_ticks, b.encoder_ticks)

    def test_different_seed_differs(self):
        a = generate_sequence(self.scene, self.motion, 3)
        b = generate_sequence(self.scene, self.motion, 4)
        self.assertFalse(np.array_equal(a.traces[0].samples, b.traces[0].samples))

    def test_stacked_traces_per_epoch(self):
        seq = generate_sequence(self.scene, self.motion, 0)
        self.assertEqual(len(seq.traces), seq.n_epochs * self.motion.stack_repeats)
        epochs = condition_traces(seq.traces, FilterConfig(stack_size=self.motion.stack_repeats))
        np.testing.assert_allclose([e.timestamp for e in epochs], seq.epoch_times, atol=1e-12)

    def test_straight_path_constant_yaw_and_steps(self):
        seq = generate_sequence(self.scene, self.motion, 0)
        np.testing.assert_array_equal(seq.truth_poses[:, 3], 0.0)
        np.testing.assert_allclose(seq.truth_displacements, 0.1 / self.motion.gpr_rate, atol=1e-9)

    def test_step_displacements_sum_to_path_length(self):
        # 에포크가 경로 시작과 끝에 정확히 걸리도록 stack_repeats=1, 정수 배 주기
        straight = generate_sequence(self.scene, straight_profile(6.0, 0.1, gpr_rate=2.0, stack_repeats=1), 0)
        self.assertAlmostEqual(float(np.sum(straight.truth_displacements)), 6.0, delta=1e-9)

        survey = generate_sequence(self.scene, survey_profile(3, 2.0, 0.2, turn_rate=math.pi / 4.0,
                                                              gpr_rate=2.0, stack_repeats=1), 0)
        self.assertAlmostEqual(survey.path_length, 6.0, delta=1e-9)
        poses = survey.truth_poses
        pose_length = float(np.sum(np.hypot(np.diff(poses[:, 1]), np.diff(poses[:, 2]))))
        self.assertAlmostEqual(survey.path_length, pose_length, delta=1e-6)

    def test_zero_slip_encoder_matches_path(self):
        seq = generate_sequence(self.scene, self.motion, 0)
        tpm = self.motion.encoder_ticks_per_meter
        travel = seq.encoder_ticks[-1] / tpm
        np.testing.assert_allclose(travel, 6.0, atol=1.0 / tpm)

    def test_slip_overcounts_encoder(self):
        motion = dataclasses.replace(self.motion, slip_ratio=0.2)
        seq = generate_sequence(self.scene, motion, 0)
        tpm = motion.encoder_ticks_per_meter
        np.testing.assert_allclose(seq.encoder_ticks[-1] / tpm, 6.0 * 1.25, atol=1.0 / tpm)

    def test_in_place_turn_splits_wheels(self):
        motion = survey_profile(2, 1.0, 0.1)
        seq = generate_sequence(self.scene, motion, 0)
        fl, fr = seq.encoder_ticks[-1, 0], seq.encoder_ticks[-1, 1]
        tpm = motion.encoder_ticks_per_meter
        turn = 0.5 * motion.wheel_separation * math.pi / 2.0
        self.assertAlmostEqual(fl / tpm, 2.0 - turn, delta=2.0 / tpm)
        self.assertAlmostEqual(fr / tpm, 2.0 + turn, delta=2.0 / tpm)

    def test_anomalous_epochs_are_screened(self):
        motion = dataclasses.replace(self.motion, anomaly_rate=1.0)
        seq = generate_sequence(self.scene, motion, 0)
        self.assertEqual(seq.anomalous_epochs.size, seq.n_epochs)
        self.assertEqual(condition_traces(seq.traces, FilterConfig()), [])

    def test_invalid_segment_slip(self):
        motion = dataclasses.replace(self.motion, segment_slip=[0.1, 0.2])
        with self.assertRaises(ConfigurationError):
            generate_sequence(self.scene, motion, 0)

    def test_too_short_path(self):
        with self.assertRaises(ConfigurationError):
            generate_sequence(self.scene, straight_profile(0.01, 0.1), 0)


class TestSceneFiles(unittest.TestCase):
    """장면/경로 INI 입출력 테스트"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_scene_round_trip(self):
        scene = random_scene(3.0, seed=5)
        loaded = load_scene(write_scene(scene, self.dir / 'scene.ini'))
        self.assertEqual(loaded, scene)

    def test_motion_round_trip(self):
        motion = survey_profile(3, 2.0, 0.2, leg_slip=[0.1, 0.0, 0.2])
        loaded = load_motion(write_motion(motion, self.dir / 'motion.ini'))
        self.assertEqual(loaded.waypoints, [tuple(w) for w in motion.waypoints])
        self.assertEqual(loaded.segment_slip, motion.segment_slip)

    def test_tangent_yaw_when_omitted(self):
        path = self.dir / 'motion.ini'
        path.write_text("[motion]\ngpr_rate = 2.0\n\n[waypoints]\n0, 0, 0\n10, 1, 1\n", encoding='utf-8')
        motion = load_motion(path)
        self.assertAlmostEqual(motion.waypoints[0][3], math.pi / 4.0)

    def test_missing_scatterer_key_reports_file(self):
        path = self.dir / 'scene.ini'
        path.write_text("[scene]\nhost_permittivity = 4\n\n[scatterer.0]\nx = 1.0\n", encoding='utf-8')
        with self.assertRaises(ConfigurationError) as ctx:
            load_scene(path)
        self.assertEqual(ctx.exception.source, str(path))

    def test_bundled_scenes_load(self):
        scenes = Path(__file__).parent / 'scenes'
        scene = load_scene(scenes / 'basalt_scene.ini')
        self.assertGreater(len(scene.scatterers), 0)
        for name in ('survey_motion.ini', 'slip_motion.ini', 'straight_motion.ini'):
            self.assertIsInstance(load_motion(scenes / name), MotionProfile)


if __name__ == '__main__':
    unittest.main()
