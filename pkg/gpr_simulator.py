#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
GPR 합성 레이더그램 시뮬레이터
Version: 1.0.0

점 산란체 장면과 차량 경로로부터 GPR 트레이스, 휠 엔코더 틱, IMU, 참값 포즈를 생성한다.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from gpr_config import apply_mapping, parse_float_list, read_ini, section_values
from gpr_errors import ConfigurationError
from gpr_signal import Trace

logger = logging.getLogger(__name__)

# 진공 중 광속 (m/ns)
SPEED_OF_LIGHT = 0.299792458

# 기하 확산 하한 (m)
R_MIN = 0.05

# 200 샘플이 κ=4 매질에서 약 2 m 깊이를 덮도록 하는 샘플 간격 (ns)
DEFAULT_SAMPLES = 200
DEFAULT_SAMPLE_DT_NS = 2.0 * 2.0 * math.sqrt(4.0) / SPEED_OF_LIGHT / DEFAULT_SAMPLES

# 리커 웨이블릿 지지 구간 (주기 단위)
_RICKER_SUPPORT = 1.1

# 포화 에포크에 기록되는 진폭 (mV)
ANOMALY_AMPLITUDE = 120.0

# Husky 기준 기본값
DEFAULT_TICKS_PER_METER = 78000
DEFAULT_WHEEL_SEPARATION = 0.165
DEFAULT_WHEEL_RADIUS = 0.5455


def reflection_coeff(kappa1: float, kappa2: float) -> float:
    """두 매질 경계의 반사 계수 R = (√κ₁ − √κ₂)/(√κ₁ + √κ₂)"""
    if kappa1 < 1 or kappa2 < 1:
        raise ConfigurationError(f"상대 유전율은 1 이상이어야 합니다: κ₁={kappa1}, κ₂={kappa2}")
    root1, root2 = math.sqrt(kappa1), math.sqrt(kappa2)
    return (root1 - root2) / (root1 + root2)


def ricker(times_ns: np.ndarray, frequency_ghz: float) -> np.ndarray:
    """중심 주파수 frequency_ghz 의 리커 웨이블릿 (지지 구간 밖은 0)"""
    times_ns = np.asarray(times_ns, dtype=float)
    beta = (math.pi * frequency_ghz * times_ns) ** 2
    wavelet = (1.0 - 2.0 * beta) * np.exp(-beta)
    wavelet[np.abs(times_ns) > _RICKER_SUPPORT / frequency_ghz] = 0.0
    return wavelet


@dataclass
class Scatterer:
    """트랙 방향 위치 x, 깊이, 내부/주변 매질 유전율을 가진 점 산란체"""
    x: float
    depth: float
    permittivity_inner: float
    permittivity_host: Optional[float] = None  # None 이면 장면의 host_permittivity

    def validate(self):
        if self.depth <= 0:
            raise ConfigurationError(f"산란체 깊이는 양수여야 합니다: {self.depth}")
        if self.permittivity_inner < 1:
            raise ConfigurationError(f"산란체 유전율은 1 이상이어야 합니다: {self.permittivity_inner}")
        if self.permittivity_host is not None and self.permittivity_host < 1:
            raise ConfigurationError(f"주변 매질 유전율은 1 이상이어야 합니다: {self.permittivity_host}")


@dataclass
class ScatterScene:
    """합성 지하 장면"""
    scatterers: List[Scatterer] = field(default_factory=list)
    host_permittivity: float = 4.0
    direct_wave_amplitude: float = 8.0
    wow_coefficients: Tuple[float, ...] = (0.5, 0.01, -2.0e-5, 0.0)
    noise_sigma: float = 0.3
    sample_dt_ns: float = DEFAULT_SAMPLE_DT_NS
    samples: int = DEFAULT_SAMPLES
    frequency_ghz: float = 0.5
    source_amplitude: float = 4.0      # 1 m 거리, |R|=1 일 때 진폭 (mV)
    direct_wave_time_ns: float = 2.5

    def validate(self):
        if self.host_permittivity < 1:
            raise ConfigurationError(f"host_permittivity 는 1 이상이어야 합니다: {self.host_permittivity}")
        if self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma 는 0 이상이어야 합니다: {self.noise_sigma}")
        if self.sample_dt_ns <= 0:
            raise ConfigurationError(f"sample_dt_ns 는 양수여야 합니다: {self.sample_dt_ns}")
        if self.samples < 1:
            raise ConfigurationError(f"samples 는 1 이상이어야 합니다: {self.samples}")
        if self.frequency_ghz <= 0:
            raise ConfigurationError(f"frequency_ghz 는 양수여야 합니다: {self.frequency_ghz}")
        if len(self.wow_coefficients) > 4:
            raise ConfigurationError("wow 다항식은 3차 이하여야 합니다")
        for scatterer in self.scatterers:
            scatterer.validate()


@dataclass
class MotionProfile:
    """웨이포인트 (time, x, y, yaw) 로 정의되는 차량 경로와 센서 설정"""
    waypoints: List[Tuple[float, float, float, float]] = field(default_factory=list)
    gpr_rate: float = 1.67
    slip_ratio: float = 0.0
    segment_slip: Optional[List[float]] = None  # 웨이포인트 구간별 슬립 (slip_ratio 대체)
    encoder_ticks_per_meter: int = DEFAULT_TICKS_PER_METER
    wheel_separation: float = DEFAULT_WHEEL_SEPARATION
    wheel_radius: float = DEFAULT_WHEEL_RADIUS
    encoder_rate: float = 20.0
    imu_rate: float = 50.0
    imu_yaw_sigma: float = 0.01
    imu_yaw_rate_sigma: float = 0.005
    imu_accel_sigma: float = 0.02
    accel_smoothing: int = 5
    stack_repeats: int = 3
    stack_spacing: float = 0.001
    anomaly_rate: float = 0.0

    def validate(self):
        if len(self.waypoints) < 2:
            raise ConfigurationError("웨이포인트가 2개 이상 필요합니다")
        times = np.array([w[0] for w in self.waypoints], dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("웨이포인트 시간이 단조 증가하지 않습니다")
        for name in ('gpr_rate', 'encoder_rate', 'imu_rate', 'encoder_ticks_per_meter',
                     'wheel_separation', 'wheel_radius'):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} 는 양수여야 합니다: {getattr(self, name)}")
        slips = [self.slip_ratio] + list(self.segment_slip or [])
        if any(not 0 <= s < 1 for s in slips):
            raise ConfigurationError(f"슬립 비율은 [0, 1) 범위여야 합니다: {slips}")
        if self.segment_slip is not None and len(self.segment_slip) != len(self.waypoints) - 1:
            raise ConfigurationError(
                f"segment_slip 개수 {len(self.segment_slip)} 가 구간 수 {len(self.waypoints) - 1} 와 다릅니다")
        if self.stack_repeats < 1:
            raise ConfigurationError(f"stack_repeats 는 1 이상이어야 합니다: {self.stack_repeats}")
        if self.stack_repeats > 1 and (self.stack_repeats - 1) * self.stack_spacing >= 1.0 / self.gpr_rate:
            raise ConfigurationError("스택 반복 구간이 GPR 주기보다 깁니다")
        if not 0 <= self.anomaly_rate <= 1:
            raise ConfigurationError(f"anomaly_rate 는 [0, 1] 범위여야 합니다: {self.anomaly_rate}")
        for name in ('imu_yaw_sigma', 'imu_yaw_rate_sigma', 'imu_accel_sigma'):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} 는 0 이상이어야 합니다")
        if self.accel_smoothing < 1:
            raise ConfigurationError("accel_smoothing 은 1 이상이어야 합니다")
        if self.wheel_separation < self.wheel_radius:
            logger.warning(f"바퀴 간격 W={self.wheel_separation} m 가 바퀴 반경 R={self.wheel_radius} m 보다 작습니다 "
                           f"(두 값이 뒤바뀌었을 수 있음)")

    def segment_slips(self) -> np.ndarray:
        if self.segment_slip is not None:
            return np.asarray(self.segment_slip, dtype=float)
        return np.full(len(self.waypoints) - 1, float(self.slip_ratio))


@dataclass
class SimSequence:
    """시뮬레이션 결과 - 모든 스트림은 같은 시계를 공유한다"""
    traces: List[Trace]               # 원시 트레이스 (에포크당 stack_repeats 개)
    epoch_times: np.ndarray           # (n,) 에포크 중심 시각
    truth_displacements: np.ndarray   # (n-1,) 에포크 간 경로 길이
    encoder_times: np.ndarray         # (m,)
    encoder_ticks: np.ndarray         # (m, 4) FL, FR, RL, RR
    imu: np.ndarray                   # (p, 5) time, yaw, yaw_rate, ax, ay
    truth_poses: np.ndarray           # (p, 4) time, x, y, yaw
    anomalous_epochs: np.ndarray      # 포화된 에포크 인덱스
    seed: int
    scene: ScatterScene
    motion: MotionProfile

    @property
    def n_epochs(self) -> int:
        return int(self.epoch_times.shape[0])

    @property
    def path_length(self) -> float:
        """첫 에포크부터 마지막 에포크까지의 경로 길이"""
        return float(np.sum(self.truth_displacements))


def wrap_angle(angle):
    """(−π, π] 로 각도 정규화"""
    wrapped = np.arctan2(np.sin(angle), np.cos(angle))
    # arctan2 는 −π 를 반환할 수 있다
    wrapped = np.where(wrapped <= -math.pi, wrapped + 2.0 * math.pi, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def unwrap_yaw(yaws: Sequence[float]) -> np.ndarray:
    """연속 yaw 를 최단 호 증분으로 누적"""
    yaws = np.asarray(yaws, dtype=float)
    if yaws.size == 0:
        return yaws
    steps = np.array([wrap_angle(d) for d in np.diff(yaws)]) if yaws.size > 1 else np.zeros(0)
    return np.concatenate([[yaws[0]], yaws[0] + np.cumsum(steps)])


class _PathModel:
    """웨이포인트 사이 선형 위치, 최단 호 yaw 보간 경로"""

    def __init__(self, motion: MotionProfile):
        wp = np.asarray(motion.waypoints, dtype=float)
        self.times = wp[:, 0]
        self.xs = wp[:, 1]
        self.ys = wp[:, 2]
        self.yaws = unwrap_yaw(wp[:, 3])
        self.arc = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(self.xs), np.diff(self.ys)))])

        half_w = 0.5 * motion.wheel_separation
        d_arc = np.diff(self.arc)
        d_yaw = np.diff(self.yaws)
        scale = 1.0 / (1.0 - motion.segment_slips())
        # 구간 내 바퀴 속도는 일정하므로 누적 주행거리는 매듭 사이에서 선형
        self.left = np.concatenate([[0.0], np.cumsum((d_arc - half_w * d_yaw) * scale)])
        self.right = np.concatenate([[0.0], np.cumsum((d_arc + half_w * d_yaw) * scale)])

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def arc_length(self, t):
        return np.interp(t, self.times, self.arc)

    def position(self, t) -> Tuple[np.ndarray, np.ndarray]:
        return np.interp(t, self.times, self.xs), np.interp(t, self.times, self.ys)

    def yaw(self, t):
        return np.interp(t, self.times, self.yaws)

    def yaw_rate(self, t):
        seg = np.clip(np.searchsorted(self.times, t, side='right') - 1, 0, len(self.times) - 2)
        return (self.yaws[seg + 1] - self.yaws[seg]) / (self.times[seg + 1] - self.times[seg])

    def wheel_travel(self, t) -> Tuple[np.ndarray, np.ndarray]:
        return np.interp(t, self.times, self.left), np.interp(t, self.times, self.right)


def _grid_times(start: float, end: float, rate: float) -> np.ndarray:
    """start 부터 rate 간격으로 end 이하의 시각"""
    count = int(math.floor((end - start) * rate + 1e-9))
    return start + np.arange(count + 1) / rate


def _sample_times(start: float, end: float, rate: float) -> np.ndarray:
    """start 부터 rate 간격, 마지막은 항상 end"""
    times = _grid_times(start, end, rate)
    if end - times[-1] > 1e-9:
        times = np.append(times, end)
    else:
        times[-1] = end
    return times


def _scatterer_arrays(scene: ScatterScene) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    xs = np.array([s.x for s in scene.scatterers], dtype=float)
    depths = np.array([s.depth for s in scene.scatterers], dtype=float)
    hosts = np.array([s.permittivity_host if s.permittivity_host is not None else scene.host_permittivity
                      for s in scene.scatterers], dtype=float)
    coeffs = np.array([reflection_coeff(h, s.permittivity_inner)
                       for h, s in zip(hosts, scene.scatterers)], dtype=float)
    return xs, depths, hosts, coeffs


def trace_response(scene: ScatterScene, antenna_x: float, sample_dt: float, t: int,
                   rng: Optional[np.random.Generator] = None, timestamp: float = 0.0) -> Trace:
    """안테나 위치 antenna_x 에서의 A-scan (rng 가 없으면 잡음 없이 생성)"""
    if sample_dt <= 0:
        raise ConfigurationError(f"sample_dt 는 양수여야 합니다: {sample_dt}")
    times = np.arange(t, dtype=float) * sample_dt
    samples = scene.direct_wave_amplitude * ricker(times - scene.direct_wave_time_ns, scene.frequency_ghz)

    if scene.scatterers:
        xs, depths, hosts, coeffs = _scatterer_arrays(scene)
        ranges = np.hypot(depths, antenna_x - xs)
        taus = 2.0 * ranges * np.sqrt(hosts) / SPEED_OF_LIGHT
        amplitudes = scene.source_amplitude * coeffs / np.maximum(ranges, R_MIN)
        support = _RICKER_SUPPORT / scene.frequency_ghz
        for tau, amplitude in zip(taus, amplitudes):
            if tau - support > times[-1]:
                continue
            samples = samples + amplitude * ricker(times - tau, scene.frequency_ghz)

    index = np.arange(t, dtype=float)
    for power, coeff in enumerate(scene.wow_coefficients):
        if coeff:
            samples = samples + coeff * index ** power

    if rng is not None and scene.noise_sigma > 0:
        samples = samples + rng.normal(0.0, scene.noise_sigma, size=t)
    return Trace(samples, timestamp)


def generate_sequence(scene: ScatterScene, motion: MotionProfile, seed: int) -> SimSequence:
    """장면과 경로로부터 동기화된 센서 스트림 생성 (seed 고정 시 결정적)"""
    scene.validate()
    motion.validate()
    path = _PathModel(motion)
    if path.arc[-1] <= 0:
        raise ConfigurationError("경로 길이가 0 입니다")

    trace_rng, imu_rng, anomaly_rng = [np.random.default_rng(s)
                                       for s in np.random.SeedSequence(seed).spawn(3)]

    # GPR 에포크: 에포크마다 stack_repeats 개 트레이스를 대칭 오프셋으로 수집
    half_span = 0.5 * (motion.stack_repeats - 1) * motion.stack_spacing
    offsets = (np.arange(motion.stack_repeats) - 0.5 * (motion.stack_repeats - 1)) * motion.stack_spacing
    epoch_times = _grid_times(path.start + half_span, path.end - half_span, motion.gpr_rate)
    if epoch_times.size < 2:
        raise ConfigurationError("경로가 짧아 GPR 에포크가 2개 미만입니다")

    anomalous = np.flatnonzero(anomaly_rng.random(epoch_times.size) < motion.anomaly_rate)
    anomalous_set = set(anomalous.tolist())
    traces: List[Trace] = []
    for j, epoch in enumerate(epoch_times):
        for offset in offsets:
            stamp = float(epoch + offset)
            trace = trace_response(scene, float(path.arc_length(stamp)), scene.sample_dt_ns,
                                   scene.samples, trace_rng, timestamp=stamp)
            if j in anomalous_set:
                trace.samples[scene.samples // 5: scene.samples // 5 + 20] = ANOMALY_AMPLITUDE
            traces.append(trace)

    truth_displacements = np.diff(path.arc_length(epoch_times))

    # 휠 엔코더 (앞뒤 바퀴는 같은 측 주행거리를 공유)
    encoder_times = _sample_times(path.start, path.end, motion.encoder_rate)
    left, right = path.wheel_travel(encoder_times)
    tpm = motion.encoder_ticks_per_meter
    left_ticks = np.rint(left * tpm).astype(np.int64)
    right_ticks = np.rint(right * tpm).astype(np.int64)
    encoder_ticks = np.stack([left_ticks, right_ticks, left_ticks, right_ticks], axis=1)

    # IMU 와 조밀한 참값 포즈
    imu_times = _sample_times(path.start, path.end, motion.imu_rate)
    px, py = path.position(imu_times)
    yaw = path.yaw(imu_times)
    yaw_rate = path.yaw_rate(imu_times)
    accel_x, accel_y = _body_accelerations(imu_times, px, py, yaw, motion.accel_smoothing)
    n_imu = imu_times.size
    imu = np.column_stack([
        imu_times,
        wrap_angle(yaw + imu_rng.normal(0.0, motion.imu_yaw_sigma, n_imu)),
        yaw_rate + imu_rng.normal(0.0, motion.imu_yaw_rate_sigma, n_imu),
        accel_x + imu_rng.normal(0.0, motion.imu_accel_sigma, n_imu),
        accel_y + imu_rng.normal(0.0, motion.imu_accel_sigma, n_imu),
    ])
    truth_poses = np.column_stack([imu_times, px, py, wrap_angle(yaw)])

    logger.info(f"시퀀스 생성: seed={seed}, 에포크 {epoch_times.size}개, 원시 트레이스 {len(traces)}개, "
                f"경로 {path.arc[-1]:.3f} m, 포화 에포크 {anomalous.size}개")
    return SimSequence(
        traces=traces,
        epoch_times=epoch_times,
        truth_displacements=truth_displacements,
        encoder_times=encoder_times,
        encoder_ticks=encoder_ticks,
        imu=imu,
        truth_poses=truth_poses,
        anomalous_epochs=anomalous,
        seed=seed,
        scene=scene,
        motion=motion,
    )


def _body_accelerations(times: np.ndarray, px: np.ndarray, py: np.ndarray, yaw: np.ndarray,
                        smoothing: int) -> Tuple[np.ndarray, np.ndarray]:
    """위치 이중 차분 + 이동 평균 → 차체 좌표계 가속도"""
    if times.size < 3:
        return np.zeros_like(times), np.zeros_like(times)
    ax = np.gradient(np.gradient(px, times), times)
    ay = np.gradient(np.gradient(py, times), times)
    if smoothing > 1:
        kernel = np.ones(smoothing) / smoothing
        pad = smoothing // 2
        ax = np.convolve(np.pad(ax, (pad, smoothing - 1 - pad), mode='edge'), kernel, mode='valid')
        ay = np.convolve(np.pad(ay, (pad, smoothing - 1 - pad), mode='edge'), kernel, mode='valid')
    cos, sin = np.cos(yaw), np.sin(yaw)
    return cos * ax + sin * ay, -sin * ax + cos * ay


@dataclass
class HyperbolaCheck:
    """단일 산란체 통과 시 B-scan 쌍곡선 특성"""
    peak_indices: np.ndarray
    antenna_positions: np.ndarray
    apex_trace: int          # 최근접 트레이스
    apex_index: int          # 최근접 트레이스의 피크 인덱스
    symmetry_error: int      # 정점 대칭 쌍의 최대 피크 인덱스 차

    @property
    def apex_is_minimum(self) -> bool:
        return self.apex_index == int(self.peak_indices.min())


def moving_scatterer_hyperbola(scene: ScatterScene, motion: MotionProfile) -> HyperbolaCheck:
    """직선 등속 경로 위 단일 산란체의 트레이스별 피크 인덱스 (잡음 없이)"""
    if len(scene.scatterers) != 1:
        raise ConfigurationError(f"산란체가 정확히 1개여야 합니다: {len(scene.scatterers)}개")
    scene.validate()
    motion.validate()
    path = _PathModel(motion)
    epoch_times = _grid_times(path.start, path.end, motion.gpr_rate)
    positions = path.arc_length(epoch_times)

    empty = dataclasses.replace(scene, scatterers=[])
    background = trace_response(empty, 0.0, scene.sample_dt_ns, scene.samples).samples
    peaks = np.array([
        int(np.argmax(np.abs(trace_response(scene, float(s), scene.sample_dt_ns, scene.samples).samples
                             - background)))
        for s in positions
    ])

    apex = int(np.argmin(np.abs(positions - scene.scatterers[0].x)))
    reach = min(apex, peaks.size - 1 - apex)
    symmetry = max((abs(int(peaks[apex - i]) - int(peaks[apex + i])) for i in range(1, reach + 1)), default=0)
    return HyperbolaCheck(peak_indices=peaks, antenna_positions=positions, apex_trace=apex,
                          apex_index=int(peaks[apex]), symmetry_error=symmetry)


def two_way_time(depth: float, permittivity: float) -> float:
    """수직 하방 산란체까지 왕복 시간 (ns)"""
    return 2.0 * depth * math.sqrt(permittivity) / SPEED_OF_LIGHT


# ---------------------------------------------------------------------------
# 장면/경로 생성 도우미
# ---------------------------------------------------------------------------

def random_scene(length: float, seed: int, *, density: float = 6.0,
                 depth_range: Tuple[float, float] = (0.1, 1.8),
                 permittivity_range: Tuple[float, float] = (1.0, 12.0),
                 host_permittivity: float = 4.0, margin: float = 1.0, **overrides) -> ScatterScene:
    """트랙 [−margin, length+margin] 에 균일 분포한 산란체 장면"""
    rng = np.random.default_rng(seed)
    count = max(1, int(round(density * (length + 2.0 * margin))))
    xs = np.sort(rng.uniform(-margin, length + margin, count))
    depths = rng.uniform(*depth_range, count)
    kappas = rng.uniform(*permittivity_range, count)
    scatterers = [Scatterer(float(x), float(d), float(k)) for x, d, k in zip(xs, depths, kappas)]
    return ScatterScene(scatterers=scatterers, host_permittivity=host_permittivity, **overrides)


def straight_profile(length: float, speed: float, *, heading: float = 0.0,
                     start: Tuple[float, float] = (0.0, 0.0), **overrides) -> MotionProfile:
    """등속 직선 경로"""
    if length <= 0 or speed <= 0:
        raise ConfigurationError(f"길이와 속도는 양수여야 합니다: length={length}, speed={speed}")
    end = (start[0] + length * math.cos(heading), start[1] + length * math.sin(heading))
    waypoints = [(0.0, start[0], start[1], heading), (length / speed, end[0], end[1], heading)]
    return MotionProfile(waypoints=waypoints, **overrides)


def survey_profile(legs: int, leg_length: float, speed: float, *, turn_rate: float = 0.5,
                   leg_slip: Optional[Sequence[float]] = None, **overrides) -> MotionProfile:
    """직선 구간과 제자리 90° 좌회전을 번갈아 하는 측량 경로"""
    if legs < 1:
        raise ConfigurationError(f"legs 는 1 이상이어야 합니다: {legs}")
    if leg_slip is not None and len(leg_slip) != legs:
        raise ConfigurationError("leg_slip 개수가 legs 와 다릅니다")
    t, x, y, yaw = 0.0, 0.0, 0.0, 0.0
    waypoints = [(t, x, y, yaw)]
    slips: List[float] = []
    for leg in range(legs):
        t += leg_length / speed
        x += leg_length * math.cos(yaw)
        y += leg_length * math.sin(yaw)
        waypoints.append((t, x, y, wrap_angle(yaw)))
        slips.append(float(leg_slip[leg]) if leg_slip is not None else overrides.get('slip_ratio', 0.0))
        if leg < legs - 1:
            t += (math.pi / 2.0) / turn_rate
            yaw += math.pi / 2.0
            waypoints.append((t, x, y, wrap_angle(yaw)))
            slips.append(overrides.get('slip_ratio', 0.0))
    if leg_slip is not None:
        overrides['segment_slip'] = slips
    return MotionProfile(waypoints=waypoints, **overrides)


# ---------------------------------------------------------------------------
# INI 입출력
# ---------------------------------------------------------------------------

_SCENE_SECTION = 'scene'
_SCATTERER_PREFIX = 'scatterer.'
_MOTION_SECTION = 'motion'
_WAYPOINT_SECTION = 'waypoints'


def load_scene(path) -> ScatterScene:
    """[scene] 키-값 + [scatterer.N] 섹션으로 구성된 장면 문서 로드"""
    parser = read_ini(path)
    source = str(path)
    if not parser.has_section(_SCENE_SECTION):
        raise ConfigurationError(f"[{_SCENE_SECTION}] 섹션이 없습니다", source=source)
    scene = apply_mapping(ScatterScene, section_values(parser, _SCENE_SECTION), source=source)

    scatterers = []
    for section in parser.sections():
        if not section.startswith(_SCATTERER_PREFIX):
            continue
        values = section_values(parser, section)
        try:
            scatterer = Scatterer(
                x=float(values['x']),
                depth=float(values['depth']),
                permittivity_inner=float(values['permittivity_inner']),
                permittivity_host=float(values['permittivity_host']) if 'permittivity_host' in values else None,
            )
        except KeyError as e:
            raise ConfigurationError(f"[{section}] 에 필수 키 {e} 가 없습니다", source=source) from e
        except ValueError as e:
            raise ConfigurationError(f"[{section}] 값을 해석할 수 없습니다: {e}", source=source) from e
        scatterers.append(scatterer)

    scene = dataclasses.replace(scene, scatterers=scatterers)
    try:
        scene.validate()
    except ConfigurationError as e:
        raise ConfigurationError(e.message, source=source) from e
    logger.info(f"장면 로드: {path} (산란체 {len(scatterers)}개)")
    return scene


def load_motion(path) -> MotionProfile:
    """[motion] 키-값 + [waypoints] 목록 (time, x, y[, yaw]) 경로 문서 로드"""
    parser = read_ini(path, allow_no_value=True)
    source = str(path)
    values = section_values(parser, _MOTION_SECTION)
    segment_slip = values.pop('segment_slip', None)
    motion = apply_mapping(MotionProfile, values,
                           source=source, base=MotionProfile(waypoints=[(0.0, 0.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0)]))

    rows = []
    for line in parser.options(_WAYPOINT_SECTION) if parser.has_section(_WAYPOINT_SECTION) else []:
        try:
            rows.append(parse_float_list(line))
        except ValueError as e:
            raise ConfigurationError(f"웨이포인트를 해석할 수 없습니다: {line!r}", source=source) from e
    widths = {len(row) for row in rows}
    if not rows or widths - {3, 4} or len(widths) != 1:
        raise ConfigurationError("웨이포인트는 'time, x, y[, yaw]' 형식으로 2개 이상 필요합니다", source=source)
    if widths == {3}:
        rows = _tangent_waypoints(rows)

    motion = dataclasses.replace(
        motion,
        waypoints=[tuple(row) for row in rows],
        segment_slip=parse_float_list(segment_slip) if segment_slip else None,
    )
    try:
        motion.validate()
    except ConfigurationError as e:
        raise ConfigurationError(e.message, source=source) from e
    logger.info(f"경로 로드: {path} (웨이포인트 {len(rows)}개)")
    return motion


def _tangent_waypoints(rows: List[List[float]]) -> List[List[float]]:
    """yaw 가 없는 웨이포인트에 경로 접선 방향 yaw 부여"""
    out = []
    heading = 0.0
    for i, (t, x, y) in enumerate(rows):
        nxt = rows[i + 1] if i + 1 < len(rows) else None
        if nxt is not None and math.hypot(nxt[1] - x, nxt[2] - y) > 0:
            heading = math.atan2(nxt[2] - y, nxt[1] - x)
        out.append([t, x, y, heading])
    return out


def scene_to_dict(scene: ScatterScene) -> Dict:
    return dataclasses.asdict(scene)


def motion_to_dict(motion: MotionProfile) -> Dict:
    return dataclasses.asdict(motion)


def write_scene(scene: ScatterScene, path) -> Path:
    """장면을 INI 문서로 저장"""
    path = Path(path)
    lines = [f"[{_SCENE_SECTION}]"]
    for f in dataclasses.fields(scene):
        if f.name == 'scatterers':
            continue
        value = getattr(scene, f.name)
        text = ', '.join(repr(float(v)) for v in value) if isinstance(value, tuple) else repr(value)
        lines.append(f"{f.name} = {text}")
    for i, s in enumerate(scene.scatterers):
        lines += ['', f"[{_SCATTERER_PREFIX}{i}]", f"x = {s.x!r}", f"depth = {s.depth!r}",
                  f"permittivity_inner = {s.permittivity_inner!r}"]
        if s.permittivity_host is not None:
            lines.append(f"permittivity_host = {s.permittivity_host!r}")
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


def write_motion(motion: MotionProfile, path) -> Path:
    """경로를 INI 문서로 저장"""
    path = Path(path)
    lines = [f"[{_MOTION_SECTION}]"]
    for f in dataclasses.fields(motion):
        value = getattr(motion, f.name)
        if f.name == 'waypoints' or value is None:
            continue
        if isinstance(value, list):
            value = ', '.join(repr(float(v)) for v in value)
        lines.append(f"{f.name} = {value}")
    lines += ['', f"[{_WAYPOINT_SECTION}]"]
    lines += [', '.join(repr(float(v)) for v in wp) for wp in motion.waypoints]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path
