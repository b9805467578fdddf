#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
평가 모듈 - overlap-add 누적, 이동 거리 RMSE, yaw 정렬 RMSE ATE, 비교 리포트
Version: 1.0.0

보고 단위: 이동 거리 RMSE 는 mm, ATE 는 m
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from gpr_errors import InputError  # noqa: E402

logger = logging.getLogger(__name__)

# SVG 결과를 재생성해도 바이트 단위로 같도록 고정
plt.rcParams['svg.hashsalt'] = 'gpr-localizer'
_SVG_METADATA = {'Date': None}

TRAJECTORY_COLUMNS = ['time', 'x', 'y', 'yaw']
PREDICTION_COLUMNS = ['start_index', 'T', 'value']


@dataclass(frozen=True)
class WindowPrediction:
    """start_index 부터 T 스텝 구간의 총 이동 거리 예측"""
    start_index: int
    span: int
    value: float


def overlap_add(preds: Sequence[WindowPrediction], n_steps: int) -> np.ndarray:
    """윈도우 예측을 스텝별로 균등 분배한 뒤 평균 (덮이지 않은 스텝은 NaN)"""
    if n_steps < 0:
        raise InputError(f"스텝 수는 0 이상이어야 합니다: {n_steps}")
    sums = np.zeros(n_steps)
    counts = np.zeros(n_steps, dtype=np.int64)
    for pred in preds:
        if pred.span < 1:
            raise InputError(f"윈도우 길이는 1 이상이어야 합니다: {pred.span}")
        stop = pred.start_index + pred.span
        if pred.start_index < 0 or stop > n_steps:
            raise InputError(f"윈도우 [{pred.start_index}, {stop}) 가 스텝 범위 [0, {n_steps}) 를 벗어납니다")
        sums[pred.start_index:stop] += pred.value / pred.span
        counts[pred.start_index:stop] += 1

    steps = np.full(n_steps, np.nan)
    covered = counts > 0
    steps[covered] = sums[covered] / counts[covered]
    return steps


def predictions_to_frame(preds: Sequence[WindowPrediction]) -> pd.DataFrame:
    return pd.DataFrame([(p.start_index, p.span, p.value) for p in preds], columns=PREDICTION_COLUMNS)


def predictions_from_frame(frame: pd.DataFrame) -> List[WindowPrediction]:
    if list(frame.columns) != PREDICTION_COLUMNS:
        raise InputError(f"예측 CSV 열은 {PREDICTION_COLUMNS} 이어야 합니다")
    return [WindowPrediction(int(s), int(t), float(v)) for s, t, v in frame.itertuples(index=False)]


def rmse(truth: Sequence[float], pred: Sequence[float]) -> float:
    """스텝별 이동 거리 RMSE (mm), 한쪽이라도 NaN 인 스텝은 제외"""
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape:
        raise InputError(f"길이가 다릅니다: truth {truth.shape}, pred {pred.shape}")
    mask = np.isfinite(truth) & np.isfinite(pred)
    if not mask.any():
        raise InputError("비교 가능한 스텝이 없습니다")
    return float(math.sqrt(np.mean((truth[mask] - pred[mask]) ** 2)) * 1000.0)


@dataclass
class Trajectory:
    """시간순 2D 포즈 열"""
    time: np.ndarray
    x: np.ndarray
    y: np.ndarray
    yaw: np.ndarray

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.yaw = np.asarray(self.yaw, dtype=float)
        n = self.time.shape[0]
        if any(a.shape != (n,) for a in (self.x, self.y, self.yaw)):
            raise InputError("궤적 열 길이가 서로 다릅니다")
        if n == 0:
            raise InputError("궤적이 비어 있습니다")
        if np.any(np.diff(self.time) <= 0):
            raise InputError("궤적 시간이 엄격히 증가하지 않습니다")

    def __len__(self) -> int:
        return int(self.time.shape[0])

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, time_column: str = 'time') -> 'Trajectory':
        missing = [c for c in (time_column, 'x', 'y', 'yaw') if c not in frame.columns]
        if missing:
            raise InputError(f"궤적 열이 없습니다: {', '.join(missing)}")
        return cls(frame[time_column].to_numpy(), frame['x'].to_numpy(), frame['y'].to_numpy(),
                   frame['yaw'].to_numpy())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'time': self.time, 'x': self.x, 'y': self.y, 'yaw': self.yaw},
                            columns=TRAJECTORY_COLUMNS)

    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


def _wrap(angle: np.ndarray) -> np.ndarray:
    return np.arctan2(np.sin(angle), np.cos(angle))


def resample_trajectory(traj: Trajectory, times: np.ndarray) -> Trajectory:
    """위치는 선형, yaw 는 최단 호로 보간"""
    times = np.asarray(times, dtype=float)
    unwrapped = np.unwrap(traj.yaw)
    return Trajectory(times, np.interp(times, traj.time, traj.x), np.interp(times, traj.time, traj.y),
                      _wrap(np.interp(times, traj.time, unwrapped)))


def rmse_ate(truth: Trajectory, est: Trajectory, *, anchor: bool = True, align_yaw: bool = True) -> float:
    """참값 시작점 기준 yaw 회전 정렬 후 위치 RMSE (m)

    anchor 는 추정 궤적의 시작점을 참값 시작점으로 옮기고, align_yaw 는 그 점을 중심으로
    최적 회전을 적용한다. 일정한 오프셋 (0.3, 0.4) 을 그대로 0.5 m 로 보려면
    anchor=False, align_yaw=False 로 호출한다. 정지한 참값이면 anchor=False 만으로 충분하다
    (회전 중심 주변에 참값 분산이 없어 회전각이 0).
    """
    lo = max(truth.time[0], est.time[0])
    hi = min(truth.time[-1], est.time[-1])
    times = est.time[(est.time >= lo) & (est.time <= hi)]
    if times.size < 2:
        raise InputError(f"공통 타임스탬프가 2개 미만입니다 ({times.size}개)")

    ref = resample_trajectory(truth, times).positions()
    pts = resample_trajectory(est, times).positions()
    pivot = ref[0]
    if anchor:
        pts = pts - pts[0] + pivot

    if align_yaw:
        p = pts - pivot
        q = ref - pivot
        cross = float(np.sum(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]))
        dot = float(np.sum(p[:, 0] * q[:, 0] + p[:, 1] * q[:, 1]))
        theta = math.atan2(cross, dot)
        c, s = math.cos(theta), math.sin(theta)
        pts = pivot + np.column_stack([c * p[:, 0] - s * p[:, 1], s * p[:, 0] + c * p[:, 1]])

    return float(math.sqrt(np.mean(np.sum((pts - ref) ** 2, axis=1))))


def save_svg(fig, path) -> Path:
    """결정적 SVG 저장"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format='svg', metadata=_SVG_METADATA)
    plt.close(fig)
    return path


@dataclass
class ComparisonReport:
    """비교 리포트 결과 표와 파일 경로"""
    displacement: pd.DataFrame
    ate: pd.DataFrame
    files: List[Path] = field(default_factory=list)

    def summary_text(self) -> str:
        lines = ['이동 거리 RMSE (mm)']
        lines.append(self.displacement.to_string(index=False) if not self.displacement.empty else '  (없음)')
        lines.append('')
        lines.append('RMSE ATE (m)')
        lines.append(self.ate.to_string(index=False) if not self.ate.empty else '  (없음)')
        return '\n'.join(lines)


def compare_report(methods: Mapping[str, np.ndarray], truth_steps: np.ndarray, out_dir, *,
                   sequence: str = 'sequence', step_times: Optional[np.ndarray] = None,
                   trajectories: Optional[Mapping[str, Trajectory]] = None,
                   truth_trajectory: Optional[Trajectory] = None) -> ComparisonReport:
    """방법별 RMSE/ATE 표(CSV)와 누적 이동 거리·궤적 그림(SVG) 생성"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    truth_steps = np.asarray(truth_steps, dtype=float)
    trajectories = dict(trajectories or {})
    files: List[Path] = []

    rows = []
    for name, steps in methods.items():
        steps = np.asarray(steps, dtype=float)
        rows.append({
            'sequence': sequence,
            'method': name,
            'rmse_mm': rmse(truth_steps, steps),
            'steps': int(np.sum(np.isfinite(steps) & np.isfinite(truth_steps))),
            'cumulative_m': float(np.nansum(steps)),
            'truth_cumulative_m': float(np.nansum(truth_steps)),
        })
    displacement = pd.DataFrame(rows, columns=['sequence', 'method', 'rmse_mm', 'steps',
                                               'cumulative_m', 'truth_cumulative_m'])
    path = out_dir / 'displacement_rmse.csv'
    displacement.to_csv(path, index=False, lineterminator='\n')
    files.append(path)

    ate_rows = []
    if truth_trajectory is not None:
        for name, traj in trajectories.items():
            ate_rows.append({'sequence': sequence, 'configuration': name,
                             'rmse_ate_m': rmse_ate(truth_trajectory, traj)})
    ate = pd.DataFrame(ate_rows, columns=['sequence', 'configuration', 'rmse_ate_m'])
    if ate_rows:
        path = out_dir / 'ate.csv'
        ate.to_csv(path, index=False, lineterminator='\n')
        files.append(path)

    if methods:
        files.append(_plot_displacement(methods, truth_steps, step_times, out_dir / 'cumulative_displacement.svg',
                                        sequence))
    if truth_trajectory is not None and trajectories:
        files.append(_plot_trajectories(trajectories, truth_trajectory, out_dir / 'trajectory.svg', sequence))

    logger.info(f"리포트 생성: {out_dir} ({len(files)}개 파일)")
    return ComparisonReport(displacement=displacement, ate=ate, files=files)


def _plot_displacement(methods: Mapping[str, np.ndarray], truth_steps: np.ndarray,
                       step_times: Optional[np.ndarray], path: Path, title: str) -> Path:
    axis = np.asarray(step_times, dtype=float) if step_times is not None else np.arange(truth_steps.size)
    fig, (ax_cum, ax_step) = plt.subplots(1, 2, figsize=(11, 4))
    ax_cum.plot(axis, np.nancumsum(truth_steps), color='black', label='reference')
    ax_step.plot(axis, truth_steps, color='black', label='reference')
    for name, steps in methods.items():
        steps = np.asarray(steps, dtype=float)
        ax_cum.plot(axis, np.nancumsum(steps), label=name)
        ax_step.plot(axis, steps, label=name, linewidth=0.8)
    ax_cum.set_xlabel('time (s)' if step_times is not None else 'step')
    ax_cum.set_ylabel('cumulative displacement (m)')
    ax_step.set_xlabel(ax_cum.get_xlabel())
    ax_step.set_ylabel('displacement per step (m)')
    ax_cum.legend(loc='upper left', fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    return save_svg(fig, path)


def _plot_trajectories(trajectories: Mapping[str, Trajectory], truth: Trajectory, path: Path, title: str) -> Path:
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.plot(truth.x, truth.y, color='black', label='reference')
    for name, traj in trajectories.items():
        ax.plot(traj.x, traj.y, label=name, linewidth=0.9)
    ax.set_aspect('equal', adjustable='datalim')
    ax.set_xlabel('x (m)')
    ax.set_ylabel('y (m)')
    ax.legend(loc='best', fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    return save_svg(fig, path)
