#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
평가 (overlap-add, RMSE, ATE, 비교 리포트) 테스트 파일
"""

import math
import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

# 현재 디렉토리를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from gpr_errors import InputError  # noqa: E402
from gpr_evaluation import (Trajectory, WindowPrediction, compare_report, overlap_add,  # noqa: E402
                            predictions_from_frame, predictions_to_frame, resample_trajectory, rmse, rmse_ate)


def _brute_force(preds, n_steps):
    """스텝마다 덮는 윈도우를 모두 찾아 평균"""
    out = np.full(n_steps, np.nan)
    for j in range(n_steps):
        shares = [p.value / p.span for p in preds if p.start_index <= j < p.start_index + p.span]
        if shares:
            out[j] = sum(shares) / len(shares)
    return out


def _curve(n=200):
    t = np.linspace(0.0, 20.0, n)
    return Trajectory(t, 0.5 * t + np.sin(0.3 * t), 0.2 * t ** 1.2, 0.1 * t)


class TestOverlapAdd(unittest.TestCase):
    """윈도우 → 스텝 분배 테스트"""

    def test_single_window_splits_evenly(self):
        steps = overlap_add([WindowPrediction(0, 4, 0.8)], 4)
        np.testing.assert_allclose(steps, 0.2)

    def test_overlapping_windows_average(self):
        steps = overlap_add([WindowPrediction(0, 2, 0.2), WindowPrediction(1, 2, 0.4)], 3)
        np.testing.assert_allclose(steps, [0.1, 0.15, 0.2])

    def test_uncovered_steps_are_nan(self):
        steps = overlap_add([WindowPrediction(2, 2, 1.0)], 6)
        self.assertTrue(np.all(np.isnan(steps[[0, 1, 4, 5]])))
        np.testing.assert_allclose(steps[2:4], 0.5)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n_steps = int(rng.integers(5, 60))
            preds = []
            for _ in range(int(rng.integers(0, 20))):
                span = int(rng.integers(1, n_steps + 1))
                start = int(rng.integers(0, n_steps - span + 1))
                preds.append(WindowPrediction(start, span, float(rng.normal(0.5, 0.2))))
            np.testing.assert_allclose(overlap_add(preds, n_steps), _brute_force(preds, n_steps),
                                       rtol=1e-12, atol=1e-15, equal_nan=True)

    def test_constant_steps_recovered(self):
        preds = [WindowPrediction(s, 9, 9 * 0.06) for s in range(0, 30)]
        np.testing.assert_allclose(overlap_add(preds, 38), 0.06)

    def test_window_outside_range_rejected(self):
        with self.assertRaises(InputError):
            overlap_add([WindowPrediction(3, 4, 1.0)], 5)
        with self.assertRaises(InputError):
            overlap_add([WindowPrediction(0, 0, 1.0)], 5)

    def test_prediction_frame_columns(self):
        preds = [WindowPrediction(0, 9, 0.5), WindowPrediction(1, 9, 0.6)]
        frame = predictions_to_frame(preds)
        self.assertEqual(list(frame.columns), ['start_index', 'T', 'value'])
        self.assertEqual(predictions_from_frame(frame), preds)
        with self.assertRaises(InputError):
            predictions_from_frame(frame.rename(columns={'T': 'span'}))


class TestRmse(unittest.TestCase):

    def test_millimetres(self):
        self.assertAlmostEqual(rmse([0.1, 0.2], [0.101, 0.199]), 1.0)

    def test_identical_is_zero(self):
        self.assertEqual(rmse([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]), 0.0)

    def test_nan_steps_excluded(self):
        self.assertAlmostEqual(rmse([0.1, np.nan, 0.3], [0.102, 5.0, np.nan]), 2.0)

    def test_nothing_to_compare(self):
        with self.assertRaises(InputError):
            rmse([np.nan], [0.1])
        with self.assertRaises(InputError):
            rmse([0.1, 0.2], [0.1])


class TestAte(unittest.TestCase):
    """궤적 오차 테스트"""

    def test_identical_trajectory_is_zero(self):
        truth = _curve()
        self.assertLessEqual(rmse_ate(truth, truth), 1e-12)

    def test_rotation_and_offset_removed(self):
        truth = _curve()
        theta = 0.7
        c, s = math.cos(theta), math.sin(theta)
        x = c * truth.x - s * truth.y + 3.0
        y = s * truth.x + c * truth.y - 1.5
        est = Trajectory(truth.time, x, y, truth.yaw + theta)
        self.assertLessEqual(rmse_ate(truth, est), 1e-9)
        self.assertGreater(rmse_ate(truth, est, align_yaw=False), 0.1)

    def test_constant_offset_without_anchoring(self):
        truth = _curve()
        shifted = Trajectory(truth.time, truth.x + 0.3, truth.y + 0.4, truth.yaw)
        self.assertAlmostEqual(rmse_ate(truth, shifted, anchor=False, align_yaw=False), 0.5, places=12)
        self.assertLessEqual(rmse_ate(truth, shifted), 1e-12)

        n = 20
        still = Trajectory(np.arange(float(n)), np.full(n, 1.0), np.full(n, -2.0), np.zeros(n))
        offset = Trajectory(still.time, still.x + 0.3, still.y + 0.4, still.yaw)
        self.assertAlmostEqual(rmse_ate(still, offset, anchor=False), 0.5, places=12)

    def test_scale_error_remains(self):
        truth = Trajectory(np.arange(11.0), np.arange(11.0), np.zeros(11), np.zeros(11))
        est = Trajectory(truth.time, 1.25 * truth.x, truth.y, truth.yaw)
        expected = math.sqrt(np.mean((0.25 * truth.x) ** 2))
        self.assertAlmostEqual(rmse_ate(truth, est), expected, places=12)

    def test_different_rates_are_resampled(self):
        truth = _curve(400)
        est = resample_trajectory(truth, np.linspace(0.0, 20.0, 37))
        self.assertLess(rmse_ate(truth, est), 1e-3)

    def test_no_overlap_rejected(self):
        a = Trajectory([0.0, 1.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0])
        b = Trajectory([5.0, 6.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0])
        with self.assertRaises(InputError):
            rmse_ate(a, b)

    def test_trajectory_validation(self):
        with self.assertRaises(InputError):
            Trajectory([0.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0])
        with self.assertRaises(InputError):
            Trajectory.from_frame(pd.DataFrame({'time': [0.0], 'x': [0.0]}))

    def test_yaw_resampled_on_short_arc(self):
        traj = Trajectory([0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [math.pi - 0.1, -math.pi + 0.1])
        mid = resample_trajectory(traj, np.array([0.5]))
        self.assertAlmostEqual(abs(float(mid.yaw[0])), math.pi, places=9)


class TestCompareReport(unittest.TestCase):
    """비교 리포트 테스트"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.truth_steps = np.full(20, 0.06)
        self.methods = {'gprformer': self.truth_steps + 0.002, 'encoder': self.truth_steps * 1.25}
        self.truth = _curve(50)

    def tearDown(self):
        self.tmp.cleanup()

    def _report(self, out_dir):
        return compare_report(self.methods, self.truth_steps, out_dir, sequence='unit',
                              trajectories={'self': self.truth}, truth_trajectory=self.truth)

    def test_tables_and_files(self):
        report = self._report(self.dir / 'report')
        names = sorted(p.name for p in report.files)
        self.assertEqual(names, ['ate.csv', 'cumulative_displacement.svg', 'displacement_rmse.csv',
                                 'trajectory.svg'])
        table = pd.read_csv(self.dir / 'report' / 'displacement_rmse.csv').set_index('method')
        self.assertAlmostEqual(table.loc['gprformer', 'rmse_mm'], 2.0, places=9)
        self.assertAlmostEqual(table.loc['encoder', 'rmse_mm'], 15.0, places=9)
        self.assertLessEqual(report.ate['rmse_ate_m'].iloc[0], 1e-12)
        self.assertIn('gprformer', report.summary_text())

    def test_encoder_overcount_visible(self):
        table = self._report(self.dir / 'report').displacement.set_index('method')
        self.assertGreater(table.loc['encoder', 'cumulative_m'], table.loc['encoder', 'truth_cumulative_m'])

    def test_reports_are_byte_identical(self):
        a = self._report(self.dir / 'a')
        b = self._report(self.dir / 'b')
        for left, right in zip(a.files, b.files):
            self.assertEqual(left.read_bytes(), right.read_bytes(), left.name)

    def test_without_trajectories(self):
        report = compare_report(self.methods, self.truth_steps, self.dir / 'steps_only')
        self.assertTrue(report.ate.empty)
        self.assertFalse((self.dir / 'steps_only' / 'ate.csv').exists())


if __name__ == '__main__':
    unittest.main()
