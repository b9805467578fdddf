#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
EKF 센서 융합 - 휠 엔코더, IMU, GPR 이동 거리 예측으로 2D 포즈 추정
Version: 1.0.0

상태 벡터 (8): [x, y, ψ, ẋ, ẏ, ψ̇, ẍ, ÿ]
  - x, y, ψ 는 월드 좌표계, 속도/가속도는 차체 좌표계
"""

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from gpr_dataset import SequenceData
from gpr_errors import ConfigurationError, InputError, NumericalError
from gpr_evaluation import Trajectory
from gpr_simulator import wrap_angle

logger = logging.getLogger(__name__)

STATE_DIM = 8
IX, IY, IYAW, IVX, IVY, IYAW_RATE, IAX, IAY = range(STATE_DIM)
STATE_NAMES = ('x', 'y', 'yaw', 'vx', 'vy', 'yaw_rate', 'ax', 'ay')

WHEEL_MODES = ('velocity', 'position')
GPR_HEADINGS = ('imu', 'filter')

# 같은 시각의 측정 처리 순서
_SOURCE_PRIORITY = {'wheel': 0, 'imu': 1, 'gpr': 2}


@dataclass
class EkfConfig:
    """EKF 설정 (표준편차 단위: m, rad, s)"""
    encoder_velocity_sigma: float = 0.05
    encoder_yaw_rate_sigma: float = 0.05
    lateral_constraint: bool = True
    lateral_velocity_sigma: float = 0.01
    wheel_mode: str = 'velocity'
    wheel_position_sigma: float = 0.02
    use_imu: bool = True
    use_imu_accel: bool = True
    imu_yaw_sigma: float = 0.02
    imu_yaw_rate_sigma: float = 0.01
    imu_accel_sigma: float = 0.2
    gpr_enabled: bool = True
    gpr_sigma: float = 0.03
    gpr_heading: str = 'imu'
    turn_threshold: float = 0.1
    turn_factor: float = 25.0
    output_rate: float = 15.0
    reorder_window: float = 0.1
    q_position: float = 1e-4
    q_yaw: float = 1e-4
    q_velocity: float = 0.05
    q_yaw_rate: float = 0.05
    q_accel: float = 0.5
    initial_position_sigma: float = 1e-3
    initial_yaw_sigma: float = 0.01
    initial_velocity_sigma: float = 0.05
    initial_yaw_rate_sigma: float = 0.05
    initial_accel_sigma: float = 0.1
    psd_tolerance: float = 1e-9

    def validate(self):
        positive = ('encoder_velocity_sigma', 'encoder_yaw_rate_sigma', 'lateral_velocity_sigma',
                    'wheel_position_sigma', 'imu_yaw_sigma', 'imu_yaw_rate_sigma', 'imu_accel_sigma',
                    'gpr_sigma', 'turn_threshold', 'output_rate', 'initial_position_sigma',
                    'initial_yaw_sigma', 'initial_velocity_sigma', 'initial_yaw_rate_sigma',
                    'initial_accel_sigma', 'psd_tolerance')
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} 는 양수여야 합니다: {getattr(self, name)}")
        for name in ('q_position', 'q_yaw', 'q_velocity', 'q_yaw_rate', 'q_accel', 'reorder_window'):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} 는 0 이상이어야 합니다: {getattr(self, name)}")
        if self.turn_factor < 1:
            raise ConfigurationError(f"turn_factor 는 1 이상이어야 합니다: {self.turn_factor}")
        if self.wheel_mode not in WHEEL_MODES:
            raise ConfigurationError(f"지원하지 않는 wheel_mode: {self.wheel_mode}")
        if self.gpr_heading not in GPR_HEADINGS:
            raise ConfigurationError(f"지원하지 않는 gpr_heading: {self.gpr_heading}")

    def process_noise(self) -> np.ndarray:
        return np.diag([self.q_position, self.q_position, self.q_yaw, self.q_velocity, self.q_velocity,
                        self.q_yaw_rate, self.q_accel, self.q_accel])


@dataclass
class EkfState:
    mean: np.ndarray
    covariance: np.ndarray
    time: float

    def copy(self) -> 'EkfState':
        return EkfState(self.mean.copy(), self.covariance.copy(), self.time)

    @property
    def x(self) -> float:
        return float(self.mean[IX])

    @property
    def y(self) -> float:
        return float(self.mean[IY])

    @property
    def yaw(self) -> float:
        return float(self.mean[IYAW])

    @property
    def yaw_rate(self) -> float:
        return float(self.mean[IYAW_RATE])


# ---------------------------------------------------------------------------
# 측정
# ---------------------------------------------------------------------------

@dataclass
class Observation:
    """상태 성분을 직접 관측하는 선형 측정 (H 는 행 선택)"""
    indices: Tuple[int, ...]
    z: np.ndarray
    covariance: np.ndarray


@dataclass
class EncoderSample:
    """네 바퀴 누적 틱 (FL, FR, RL, RR)"""
    timestamp: float
    ticks: Tuple[int, int, int, int]


@dataclass
class WheelOdom:
    """차체 전진 속도와 yaw 각속도 (엔코더 구간 [start_time, timestamp])"""
    timestamp: float
    forward_velocity: float
    yaw_rate: float
    start_time: float = float('nan')
    velocity_sigma: float = 0.05
    yaw_rate_sigma: float = 0.05
    lateral_sigma: Optional[float] = None  # 지정 시 ẏ = 0 구속 행 추가
    source: str = field(default='wheel', init=False)

    def observation(self) -> Observation:
        indices = [IVX, IYAW_RATE]
        z = [self.forward_velocity, self.yaw_rate]
        variances = [self.velocity_sigma ** 2, self.yaw_rate_sigma ** 2]
        if self.lateral_sigma is not None:
            indices.append(IVY)
            z.append(0.0)
            variances.append(self.lateral_sigma ** 2)
        return Observation(tuple(indices), np.array(z), np.diag(variances))


@dataclass
class WheelPosition:
    """엔코더 적분 위치 측정 (wheel_mode = position)"""
    timestamp: float
    x: float
    y: float
    yaw_rate: float
    position_sigma: float
    yaw_rate_sigma: float
    source: str = field(default='wheel', init=False)

    def observation(self) -> Observation:
        return Observation((IX, IY, IYAW_RATE), np.array([self.x, self.y, self.yaw_rate]),
                           np.diag([self.position_sigma ** 2] * 2 + [self.yaw_rate_sigma ** 2]))


@dataclass
class Imu:
    """yaw, yaw 각속도, 차체 2D 선가속도 (표준편차가 inf 인 성분은 무시)"""
    timestamp: float
    yaw: float
    yaw_rate: float
    ax: float
    ay: float
    yaw_sigma: float = 0.02
    yaw_rate_sigma: float = 0.01
    accel_sigma: float = 0.2
    source: str = field(default='imu', init=False)

    def observation(self) -> Observation:
        return Observation((IYAW, IYAW_RATE, IAX, IAY), np.array([self.yaw, self.yaw_rate, self.ax, self.ay]),
                           np.diag([self.yaw_sigma ** 2, self.yaw_rate_sigma ** 2,
                                    self.accel_sigma ** 2, self.accel_sigma ** 2]))


@dataclass
class GprDisplacement:
    """GPR 스텝 [start_time, timestamp] 의 이동 거리 예측 (NaN 이면 결측)"""
    timestamp: float
    start_time: float
    delta: float
    source: str = field(default='gpr', init=False)


@dataclass
class GprPosition:
    """누적 GPR 의사 위치"""
    timestamp: float
    x: float
    y: float
    covariance: np.ndarray
    source: str = field(default='gpr', init=False)

    def observation(self) -> Observation:
        return Observation((IX, IY), np.array([self.x, self.y]), np.asarray(self.covariance, dtype=float))


@dataclass
class SensorLog:
    """이종 센서 측정 열"""
    measurements: List = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.measurements)

    def count(self, source: str) -> int:
        return sum(1 for m in self.measurements if m.source == source)


def wheel_odometry(prev: EncoderSample, curr: EncoderSample, R: float, W: float,
                   ticks_per_meter: Optional[float] = None) -> WheelOdom:
    """앞뒤 바퀴 평균 틱 변화 → 차동 구동 (ẋ, ψ̇)

    ticks_per_meter 가 주어지면 틱을 거리로 직접 환산하고, 없으면 틱을 바퀴 회전각(rad)으로 보고 R 을 곱한다.
    """
    dt = curr.timestamp - prev.timestamp
    if dt <= 0:
        raise InputError(f"엔코더 시간 간격이 0 이하입니다: dt={dt}")
    if W <= 0:
        raise ConfigurationError(f"바퀴 간격은 양수여야 합니다: {W}")
    fl, fr, rl, rr = (c - p for c, p in zip(curr.ticks, prev.ticks))
    delta_left = 0.5 * (fl + rl)
    delta_right = 0.5 * (fr + rr)
    if ticks_per_meter:
        v_left = delta_left / ticks_per_meter / dt
        v_right = delta_right / ticks_per_meter / dt
    else:
        v_left = delta_left / dt * R
        v_right = delta_right / dt * R
    return WheelOdom(timestamp=curr.timestamp, start_time=prev.timestamp,
                     forward_velocity=0.5 * (v_right + v_left), yaw_rate=(v_right - v_left) / W)


def gpr_to_position(delta: float, yaw: float, prev: Tuple[float, float]) -> Tuple[float, float]:
    """이동 거리 Δd 를 heading ψ 방향으로 누적"""
    return prev[0] + delta * math.cos(yaw), prev[1] + delta * math.sin(yaw)


def inflate_gpr_covariance(base: np.ndarray, yaw_rate: float, threshold: float, factor: float) -> np.ndarray:
    """회전 중 (|ψ̇| > threshold) GPR 공분산을 factor 배"""
    if factor < 1:
        raise ConfigurationError(f"factor 는 1 이상이어야 합니다: {factor}")
    if threshold <= 0:
        raise ConfigurationError(f"threshold 는 양수여야 합니다: {threshold}")
    base = np.asarray(base, dtype=float)
    return base * factor if abs(yaw_rate) > threshold else base.copy()


# ---------------------------------------------------------------------------
# 예측 / 갱신
# ---------------------------------------------------------------------------

def motion_model(mean: np.ndarray, dt: float) -> np.ndarray:
    """상수 가속도 2D 운동학 (위치는 차체 속도를 ψ 로 회전해 적분)"""
    x, y, yaw, vx, vy, yaw_rate, ax, ay = mean
    c, s = math.cos(yaw), math.sin(yaw)
    half = 0.5 * dt * dt
    return np.array([
        x + (vx * c - vy * s) * dt + (ax * c - ay * s) * half,
        y + (vx * s + vy * c) * dt + (ax * s + ay * c) * half,
        yaw + yaw_rate * dt,
        vx + ax * dt,
        vy + ay * dt,
        yaw_rate,
        ax,
        ay,
    ])


def motion_jacobian(mean: np.ndarray, dt: float) -> np.ndarray:
    """motion_model 의 상태 야코비안"""
    _, _, yaw, vx, vy, _, ax, ay = mean
    c, s = math.cos(yaw), math.sin(yaw)
    half = 0.5 * dt * dt
    F = np.eye(STATE_DIM)
    F[IX, IYAW] = (-vx * s - vy * c) * dt + (-ax * s - ay * c) * half
    F[IX, IVX] = c * dt
    F[IX, IVY] = -s * dt
    F[IX, IAX] = c * half
    F[IX, IAY] = -s * half
    F[IY, IYAW] = (vx * c - vy * s) * dt + (ax * c - ay * s) * half
    F[IY, IVX] = s * dt
    F[IY, IVY] = c * dt
    F[IY, IAX] = s * half
    F[IY, IAY] = c * half
    F[IYAW, IYAW_RATE] = dt
    F[IVX, IAX] = dt
    F[IVY, IAY] = dt
    return F


def condition_covariance(P: np.ndarray, tolerance: float = 1e-9) -> np.ndarray:
    """대칭화 후 음의 고윳값이 허용치 이내면 0 으로 보정, 넘으면 NumericalError"""
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise NumericalError("공분산에 비유한 값이 있습니다")
    eigenvalues, vectors = np.linalg.eigh(P)
    floor = -tolerance * max(1.0, float(np.max(np.abs(np.diag(P)))))
    if eigenvalues[0] < floor:
        raise NumericalError(f"공분산이 양의 준정부호가 아닙니다 (최소 고윳값 {eigenvalues[0]:.3e})",
                             details={'min_eigenvalue': float(eigenvalues[0])})
    if eigenvalues[0] < 0:
        P = (vectors * np.maximum(eigenvalues, 0.0)) @ vectors.T
        P = 0.5 * (P + P.T)
    return P


def predict(state: EkfState, dt: float, Q: np.ndarray, tolerance: float = 1e-9) -> EkfState:
    """P ← F P Fᵀ + Q·dt"""
    if dt < 0:
        raise InputError(f"예측 시간 간격이 음수입니다: {dt}")
    F = motion_jacobian(state.mean, dt)
    mean = motion_model(state.mean, dt)
    mean[IYAW] = wrap_angle(mean[IYAW])
    covariance = condition_covariance(F @ state.covariance @ F.T + Q * dt, tolerance)
    return EkfState(mean, covariance, state.time + dt)


def update(state: EkfState, measurement, tolerance: float = 1e-9) -> EkfState:
    """선형 관측 EKF 갱신 (Joseph 형식, yaw 혁신 정규화, 비유한 분산 행 제외)"""
    obs = measurement.observation()
    keep = [i for i in range(len(obs.indices)) if np.isfinite(obs.covariance[i, i])]
    if not keep:
        return state.copy()
    indices = [obs.indices[i] for i in keep]
    R = obs.covariance[np.ix_(keep, keep)]
    z = obs.z[keep]
    if not np.all(np.isfinite(z)):
        raise InputError(f"측정값에 비유한 값이 있습니다 ({measurement.source}, t={measurement.timestamp})")

    H = np.zeros((len(indices), STATE_DIM))
    H[np.arange(len(indices)), indices] = 1.0
    innovation = z - state.mean[indices]
    for row, index in enumerate(indices):
        if index == IYAW:
            innovation[row] = wrap_angle(innovation[row])

    P = state.covariance
    S = H @ P @ H.T + R
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"혁신 공분산이 가역이 아닙니다 ({measurement.source}, t={measurement.timestamp})") from e
    if not np.all(np.isfinite(K)):
        raise NumericalError(f"칼만 이득에 비유한 값이 있습니다 ({measurement.source})")

    mean = state.mean + K @ innovation
    mean[IYAW] = wrap_angle(mean[IYAW])
    A = np.eye(STATE_DIM) - K @ H
    covariance = condition_covariance(A @ P @ A.T + K @ R @ K.T, tolerance)
    return EkfState(mean, covariance, state.time)


# ---------------------------------------------------------------------------
# 재정렬 버퍼와 필터 실행
# ---------------------------------------------------------------------------

class ReorderBuffer:
    """window 초 이내로 늦게 도착한 측정을 시간순으로 재정렬 (더 늦으면 폐기)"""

    def __init__(self, window: float):
        self.window = window
        self._heap: List = []
        self._sequence = 0
        self._newest = -math.inf
        self._released = -math.inf
        self.dropped = 0

    def push(self, measurement) -> Iterator:
        if measurement.timestamp < self._released:
            self.dropped += 1
            logger.warning(f"순서가 늦은 측정 폐기: {measurement.source} t={measurement.timestamp:.3f} "
                           f"(이미 {self._released:.3f} 까지 처리)")
            return
        heapq.heappush(self._heap, (measurement.timestamp, _SOURCE_PRIORITY.get(measurement.source, 9),
                                    self._sequence, measurement))
        self._sequence += 1
        self._newest = max(self._newest, measurement.timestamp)
        while self._heap and self._heap[0][0] <= self._newest - self.window:
            yield self._pop()

    def flush(self) -> Iterator:
        while self._heap:
            yield self._pop()

    def _pop(self):
        timestamp, _, _, measurement = heapq.heappop(self._heap)
        self._released = timestamp
        return measurement

    def replay(self, measurements: Iterable) -> Iterator:
        for measurement in measurements:
            yield from self.push(measurement)
        yield from self.flush()


@dataclass
class FilterResult:
    frame: pd.DataFrame
    updates: int
    dropped: int

    def trajectory(self) -> Trajectory:
        return Trajectory.from_frame(self.frame)


def initial_state(time: float, pose: Tuple[float, float, float], forward_velocity: float, yaw_rate: float,
                  config: EkfConfig) -> EkfState:
    mean = np.zeros(STATE_DIM)
    mean[[IX, IY, IYAW]] = pose[0], pose[1], wrap_angle(pose[2])
    mean[IVX] = forward_velocity
    mean[IYAW_RATE] = yaw_rate
    sigmas = [config.initial_position_sigma] * 2 + [config.initial_yaw_sigma] + \
             [config.initial_velocity_sigma] * 2 + [config.initial_yaw_rate_sigma] + [config.initial_accel_sigma] * 2
    return EkfState(mean, np.diag(np.square(sigmas)), time)


class _TrajectoryRecorder:
    """시각별 출력 행 (같은 시각은 마지막 상태로 대체)"""

    def __init__(self):
        self.times: List[float] = []
        self.rows: List[np.ndarray] = []

    def emit(self, state: EkfState):
        row = np.concatenate([[state.time], state.mean[:3], np.diag(state.covariance)])
        if self.times and abs(state.time - self.times[-1]) <= 1e-12:
            self.rows[-1] = row
        else:
            self.times.append(state.time)
            self.rows.append(row)

    def position_at(self, time: float) -> Tuple[float, float]:
        times = np.asarray(self.times)
        data = np.asarray(self.rows)
        return float(np.interp(time, times, data[:, 1])), float(np.interp(time, times, data[:, 2]))

    def frame(self) -> pd.DataFrame:
        columns = ['time', 'x', 'y', 'yaw'] + [f"var_{name}" for name in STATE_NAMES]
        return pd.DataFrame(np.asarray(self.rows), columns=columns)


def run_filter(log: SensorLog, config: EkfConfig,
               initial_pose: Optional[Tuple[float, float, float]] = None) -> FilterResult:
    """측정을 시간순으로 재생하며 예측/갱신, 갱신 시각과 output_rate 격자에서 포즈 출력"""
    config.validate()
    if not log.measurements:
        raise InputError("센서 로그가 비어 있습니다")

    buffer = ReorderBuffer(config.reorder_window)
    ordered = list(buffer.replay(log.measurements))
    Q = config.process_noise()
    tol = config.psd_tolerance

    wheels = [m for m in ordered if isinstance(m, WheelOdom)]
    imus = [m for m in ordered if isinstance(m, Imu)]
    start = ordered[0].timestamp
    forward, yaw_rate = 0.0, 0.0
    if wheels:
        first = wheels[0]
        forward, yaw_rate = first.forward_velocity, first.yaw_rate
        if math.isfinite(first.start_time):
            start = min(start, first.start_time)
    if initial_pose is None:
        initial_pose = (0.0, 0.0, imus[0].yaw if imus else 0.0)

    state = initial_state(start, initial_pose, forward, yaw_rate, config)
    recorder = _TrajectoryRecorder()
    recorder.emit(state)

    period = 1.0 / config.output_rate
    tick = 1
    latest_imu_yaw: Optional[float] = None
    gpr_point: Optional[Tuple[float, float]] = None
    gpr_last_end: Optional[float] = None
    wheel_pose = np.array(initial_pose, dtype=float)
    updates = 0
    base_gpr = np.eye(2) * config.gpr_sigma ** 2

    for measurement in ordered:
        t = measurement.timestamp
        while start + tick * period < t - 1e-12:
            state = predict(state, start + tick * period - state.time, Q, tol)
            recorder.emit(state)
            tick += 1
        state = predict(state, t - state.time, Q, tol)

        if isinstance(measurement, Imu):
            latest_imu_yaw = measurement.yaw
            if not config.use_imu:
                continue
        elif isinstance(measurement, GprDisplacement):
            if not config.gpr_enabled:
                continue
            if not math.isfinite(measurement.delta):
                gpr_point = None
                continue
            if gpr_point is None or gpr_last_end is None or abs(measurement.start_time - gpr_last_end) > 1e-9:
                gpr_point = recorder.position_at(measurement.start_time)
            heading = latest_imu_yaw if (config.gpr_heading == 'imu' and latest_imu_yaw is not None) else state.yaw
            gpr_point = gpr_to_position(measurement.delta, heading, gpr_point)
            gpr_last_end = t
            covariance = inflate_gpr_covariance(base_gpr, state.yaw_rate, config.turn_threshold, config.turn_factor)
            measurement = GprPosition(t, gpr_point[0], gpr_point[1], covariance)
        elif isinstance(measurement, WheelOdom) and config.wheel_mode == 'position':
            dt = t - measurement.start_time if math.isfinite(measurement.start_time) else 0.0
            wheel_pose = _integrate_pose(wheel_pose, measurement.forward_velocity * dt, measurement.yaw_rate * dt)
            measurement = WheelPosition(t, wheel_pose[0], wheel_pose[1], measurement.yaw_rate,
                                        config.wheel_position_sigma, measurement.yaw_rate_sigma)

        state = update(state, measurement, tol)
        updates += 1
        recorder.emit(state)

    logger.info(f"EKF 완료: 갱신 {updates}회, 출력 {len(recorder.times)}행, 폐기 {buffer.dropped}개, "
                f"GPR {'사용' if config.gpr_enabled else '미사용'}")
    return FilterResult(frame=recorder.frame(), updates=updates, dropped=buffer.dropped)


# ---------------------------------------------------------------------------
# 엔코더 기반 기준선
# ---------------------------------------------------------------------------

def _integrate_pose(pose: np.ndarray, distance: float, turn: float) -> np.ndarray:
    """중간 heading 으로 한 구간 적분"""
    heading = pose[2] + 0.5 * turn
    return np.array([pose[0] + distance * math.cos(heading), pose[1] + distance * math.sin(heading),
                     wrap_angle(pose[2] + turn)])


def encoder_samples(frame: pd.DataFrame) -> List[EncoderSample]:
    values = frame[['timestamp', 'front_left', 'front_right', 'rear_left', 'rear_right']].to_numpy()
    return [EncoderSample(float(row[0]), tuple(int(v) for v in row[1:])) for row in values]


def dead_reckoning(samples: Sequence[EncoderSample], R: float, W: float, ticks_per_meter: Optional[float],
                   initial_pose: Tuple[float, float, float] = (0.0, 0.0, 0.0)) -> Trajectory:
    """엔코더만으로 적분한 궤적"""
    if len(samples) < 2:
        raise InputError("엔코더 샘플이 2개 이상 필요합니다")
    pose = np.array(initial_pose, dtype=float)
    poses = [pose]
    for prev, curr in zip(samples[:-1], samples[1:]):
        odom = wheel_odometry(prev, curr, R, W, ticks_per_meter)
        dt = curr.timestamp - prev.timestamp
        pose = _integrate_pose(pose, odom.forward_velocity * dt, odom.yaw_rate * dt)
        poses.append(pose)
    poses = np.asarray(poses)
    return Trajectory([s.timestamp for s in samples], poses[:, 0], poses[:, 1], poses[:, 2])


def encoder_travel(samples: Sequence[EncoderSample], ticks_per_meter: float) -> Tuple[np.ndarray, np.ndarray]:
    """(시각, 누적 전진 거리)"""
    times = np.array([s.timestamp for s in samples])
    ticks = np.array([s.ticks for s in samples], dtype=float)
    left = 0.5 * (ticks[:, 0] + ticks[:, 2])
    right = 0.5 * (ticks[:, 1] + ticks[:, 3])
    travel = 0.5 * (left + right) / ticks_per_meter
    return times, travel - travel[0]


def encoder_step_displacements(samples: Sequence[EncoderSample], ticks_per_meter: float,
                               query_times: np.ndarray) -> np.ndarray:
    """GPR 에포크 사이 엔코더 전진 거리"""
    times, travel = encoder_travel(samples, ticks_per_meter)
    return np.diff(np.interp(np.asarray(query_times, dtype=float), times, travel))


# ---------------------------------------------------------------------------
# 로그 구성
# ---------------------------------------------------------------------------

def build_sensor_log(encoders: Sequence[EncoderSample], config: EkfConfig, *, R: float, W: float,
                     ticks_per_meter: Optional[float], imu: Optional[np.ndarray] = None,
                     gpr_steps: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None) -> SensorLog:
    """엔코더 샘플, IMU 행 (time, yaw, yaw_rate, ax, ay), GPR 스텝 (시작, 끝, Δd) → SensorLog"""
    measurements: List = []
    lateral = config.lateral_velocity_sigma if config.lateral_constraint else None
    for prev, curr in zip(encoders[:-1], encoders[1:]):
        odom = wheel_odometry(prev, curr, R, W, ticks_per_meter)
        odom.velocity_sigma = config.encoder_velocity_sigma
        odom.yaw_rate_sigma = config.encoder_yaw_rate_sigma
        odom.lateral_sigma = lateral
        measurements.append(odom)

    if imu is not None:
        accel_sigma = config.imu_accel_sigma if config.use_imu_accel else math.inf
        for t, yaw, yaw_rate, ax, ay in np.asarray(imu, dtype=float):
            measurements.append(Imu(float(t), float(yaw), float(yaw_rate), float(ax), float(ay),
                                    config.imu_yaw_sigma, config.imu_yaw_rate_sigma, accel_sigma))

    if gpr_steps is not None:
        starts, ends, deltas = (np.asarray(a, dtype=float) for a in gpr_steps)
        for t0, t1, delta in zip(starts, ends, deltas):
            measurements.append(GprDisplacement(float(t1), float(t0), float(delta)))

    measurements.sort(key=lambda m: (m.timestamp, _SOURCE_PRIORITY[m.source]))
    log = SensorLog(measurements)
    logger.info(f"센서 로그: 휠 {log.count('wheel')}개, IMU {log.count('imu')}개, GPR {log.count('gpr')}개")
    return log


def geometry_warning(R: float, W: float):
    if W < R:
        logger.warning(f"바퀴 간격 W={W} m 가 바퀴 반경 R={R} m 보다 작습니다 (두 값이 뒤바뀌었을 수 있음)")


def step_table(epoch_times: np.ndarray, steps: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """에포크 시각과 스텝별 이동 거리 → (시작, 끝, Δd)"""
    epoch_times = np.asarray(epoch_times, dtype=float)
    steps = np.asarray(steps, dtype=float)
    if steps.shape[0] != epoch_times.shape[0] - 1:
        raise InputError(f"스텝 수 {steps.shape[0]} 가 에포크 수 {epoch_times.shape[0]} − 1 과 다릅니다")
    return epoch_times[:-1], epoch_times[1:], steps


def state_summary(state: EkfState) -> Dict[str, float]:
    return {name: float(value) for name, value in zip(STATE_NAMES, state.mean)}


def sequence_sensor_log(data: SequenceData, config: EkfConfig,
                        gpr_steps: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None) -> SensorLog:
    """시퀀스 디렉터리의 엔코더/IMU 와 GPR 스텝으로 SensorLog 구성"""
    manifest = data.manifest
    geometry_warning(manifest.wheel_radius, manifest.wheel_separation)
    return build_sensor_log(encoder_samples(data.encoders), config, R=manifest.wheel_radius,
                            W=manifest.wheel_separation, ticks_per_meter=manifest.ticks_per_meter,
                            imu=data.imu.to_numpy(dtype=float) if config.use_imu else None,
                            gpr_steps=gpr_steps)


def fuse_sequence(data: SequenceData, config: EkfConfig, *,
                  gpr_steps: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
                  initial_pose: Optional[Tuple[float, float, float]] = None) -> FilterResult:
    """시퀀스 하나를 EKF 로 융합 (참값이 있으면 첫 참값 포즈에서 시작)"""
    if config.gpr_enabled and gpr_steps is None:
        raise InputError("GPR 채널을 켜려면 이동 거리 예측이 필요합니다", source=str(data.path))
    if initial_pose is None and data.truth is not None:
        first = data.truth.iloc[0]
        initial_pose = (float(first['x']), float(first['y']), float(first['yaw']))
    log = sequence_sensor_log(data, config, gpr_steps if config.gpr_enabled else None)
    return run_filter(log, config, initial_pose)
