#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
GPR 신호 처리 모듈 - 이상 트레이스 제거, 스태킹, B-scan 필터링
Version: 1.0.0

필터 순서: 배경 제거 → dewow → SEC 이득 → 웨이블릿 잡음 제거
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pywt

from gpr_errors import ConfigurationError, InputError, NumericalError

logger = logging.getLogger(__name__)

# 표준 필터 순서
DEFAULT_FILTER_ORDER = ('background_removal', 'dewow', 'sec_gain', 'wavelet_denoise')

# MAD → 표준편차 환산 상수
_MAD_TO_SIGMA = 0.6745


@dataclass
class Trace:
    """단일 GPR A-scan"""
    samples: np.ndarray  # (t,) mV
    timestamp: float     # s

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.timestamp = float(self.timestamp)

    @property
    def length(self) -> int:
        return int(self.samples.shape[0])


@dataclass
class BScan:
    """연속 트레이스 행렬 G (행 = 깊이 인덱스 i, 열 = 트레이스 인덱스 j)"""
    data: np.ndarray        # (t, k)
    timestamps: np.ndarray  # (k,)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        if self.data.ndim != 2:
            raise InputError(f"B-scan 은 2차원이어야 합니다: shape={self.data.shape}")
        if self.data.shape[1] < 1:
            raise InputError("B-scan 에 트레이스가 없습니다")
        if self.timestamps.shape != (self.data.shape[1],):
            raise InputError("타임스탬프 수가 트레이스 수와 다릅니다")
        if self.timestamps.size > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise InputError("B-scan 트레이스 타임스탬프가 단조 증가하지 않습니다")

    @classmethod
    def from_traces(cls, traces: Sequence[Trace]) -> 'BScan':
        if not traces:
            raise InputError("B-scan 에 트레이스가 없습니다")
        lengths = {trace.length for trace in traces}
        if len(lengths) != 1:
            raise InputError(f"트레이스 길이가 일정하지 않습니다: {sorted(lengths)}")
        data = np.stack([trace.samples for trace in traces], axis=1)
        return cls(data=data, timestamps=np.array([trace.timestamp for trace in traces]))

    @property
    def k(self) -> int:
        return int(self.data.shape[1])

    @property
    def t(self) -> int:
        return int(self.data.shape[0])

    def with_data(self, data: np.ndarray) -> 'BScan':
        return BScan(data=data, timestamps=self.timestamps.copy())

    def to_traces(self) -> List[Trace]:
        return [Trace(self.data[:, j].copy(), self.timestamps[j]) for j in range(self.k)]


@dataclass
class FilterConfig:
    """필터 파이프라인 설정"""
    sec_a: float = 0.015
    sec_b: float = 0.0
    sec_threshold: int = 100
    dewow_degree: int = 3
    wavelet: str = 'db6'
    wavelet_levels: int = 4
    wavelet_threshold_rule: str = 'soft'
    wavelet_threshold: Optional[float] = None  # None 이면 universal threshold
    wavelet_mode: str = 'symmetric'
    stack_size: int = 3
    anomaly_limit: float = 50.0
    order: Tuple[str, ...] = DEFAULT_FILTER_ORDER
    enabled: bool = True

    def validate(self):
        if self.sec_a < 0:
            raise ConfigurationError(f"sec_a 는 0 이상이어야 합니다: {self.sec_a}")
        if self.sec_b < 0:
            raise ConfigurationError(f"sec_b 는 0 이상이어야 합니다: {self.sec_b}")
        if self.sec_threshold < 0:
            raise ConfigurationError(f"sec_threshold 는 0 이상이어야 합니다: {self.sec_threshold}")
        if self.dewow_degree < 0:
            raise ConfigurationError(f"dewow_degree 는 0 이상이어야 합니다: {self.dewow_degree}")
        if self.stack_size < 1:
            raise ConfigurationError(f"stack_size 는 1 이상이어야 합니다: {self.stack_size}")
        if self.anomaly_limit <= 0:
            raise ConfigurationError(f"anomaly_limit 는 양수여야 합니다: {self.anomaly_limit}")
        if self.wavelet_threshold_rule not in ('soft', 'hard'):
            raise ConfigurationError(f"지원하지 않는 임계값 규칙: {self.wavelet_threshold_rule}")
        if self.wavelet_threshold is not None and self.wavelet_threshold < 0:
            raise ConfigurationError("wavelet_threshold 는 0 이상이어야 합니다")
        if self.wavelet not in pywt.wavelist(kind='discrete'):
            raise ConfigurationError(f"알 수 없는 웨이블릿: {self.wavelet}")
        unknown = [name for name in self.order if name not in FILTER_STAGES]
        if unknown:
            raise ConfigurationError(f"알 수 없는 필터 단계: {', '.join(unknown)}")


def screen_anomalies(traces: Iterable[Trace], limit: float) -> List[Trace]:
    """|sample| > limit 인 샘플이 있는 트레이스 제거 (순서 유지)"""
    if limit <= 0:
        raise ConfigurationError(f"이상치 한계값은 양수여야 합니다: {limit}")
    traces = list(traces)
    kept = [trace for trace in traces if np.all(np.abs(trace.samples) <= limit)]
    if len(kept) != len(traces):
        logger.info(f"이상 트레이스 제거: {len(traces) - len(kept)}/{len(traces)}개")
    return kept


def stack(traces: Iterable[Trace], n: int) -> List[Trace]:
    """연속 n 개 트레이스 평균 (남는 부분 그룹은 버림)"""
    if n < 1:
        raise ConfigurationError(f"스태킹 크기는 1 이상이어야 합니다: {n}")
    traces = list(traces)
    stacked = []
    for start in range(0, len(traces) - n + 1, n):
        group = traces[start:start + n]
        samples = np.mean(np.stack([trace.samples for trace in group]), axis=0)
        timestamp = float(np.mean([trace.timestamp for trace in group]))
        stacked.append(Trace(samples, timestamp))
    dropped = len(traces) - len(stacked) * n
    if dropped:
        logger.debug(f"스태킹 잔여 트레이스 {dropped}개 제외")
    return stacked


def condition_traces(traces: Iterable[Trace], cfg: FilterConfig) -> List[Trace]:
    """이상치 제거 후 스태킹 (순서 고정: screen → stack)"""
    return stack(screen_anomalies(traces, cfg.anomaly_limit), cfg.stack_size)


def background_removal(b: BScan) -> BScan:
    """행별 평균 제거"""
    return b.with_data(b.data - b.data.mean(axis=1, keepdims=True))


@lru_cache(maxsize=32)
def _dewow_basis(t: int, degree: int) -> np.ndarray:
    """정규직교 다항식 기저 Q (t × (degree+1))"""
    if degree + 1 > t:
        raise ConfigurationError(f"dewow 차수 {degree} 가 트레이스 길이 {t} 에 비해 큽니다")
    x = np.linspace(-1.0, 1.0, t) if t > 1 else np.zeros(1)
    vander = np.polynomial.legendre.legvander(x, degree)
    q, r = np.linalg.qr(vander)
    diag = np.abs(np.diag(r))
    if diag.min() <= np.finfo(float).eps * max(diag.max(), 1.0) * t:
        raise NumericalError(f"dewow 정규방정식이 랭크 부족입니다 (t={t}, ρ={degree})")
    q.setflags(write=False)
    return q


def _detrend(data: np.ndarray, degree: int) -> np.ndarray:
    q = _dewow_basis(data.shape[0], degree)
    return data - q @ (q.T @ data)


def dewow(g: Trace, rho: int) -> Trace:
    """최소제곱 다항식 추세 제거"""
    if rho < 0:
        raise ConfigurationError(f"dewow 차수는 0 이상이어야 합니다: {rho}")
    return Trace(_detrend(g.samples[:, None], rho)[:, 0], g.timestamp)


def dewow_bscan(b: BScan, rho: int) -> BScan:
    """B-scan 의 모든 트레이스에 dewow 적용"""
    if rho < 0:
        raise ConfigurationError(f"dewow 차수는 0 이상이어야 합니다: {rho}")
    return b.with_data(_detrend(b.data, rho))


def sec_gain_curve(t: int, a: float, bexp: float, threshold: int) -> np.ndarray:
    """SEC 이득 γ_i (0^0 = 1, threshold 이후 고정)"""
    if not 0 <= threshold < t:
        raise ConfigurationError(f"SEC 임계 인덱스가 범위를 벗어났습니다: {threshold} (t={t})")
    i = np.arange(t, dtype=float)
    clamped = np.minimum(i, float(threshold))
    # numpy 는 0.0 ** 0.0 == 1.0
    return np.power(clamped, bexp) * np.exp(a * clamped)


def sec_gain(b: BScan, a: float, bexp: float, threshold: int) -> BScan:
    """깊이별 SEC 이득 적용"""
    gamma = sec_gain_curve(b.t, a, bexp, threshold)
    return b.with_data(b.data * gamma[:, None])


def universal_threshold(detail: np.ndarray, n: int) -> float:
    """가장 미세한 상세 계수의 MAD 기반 universal threshold"""
    sigma = np.median(np.abs(detail)) / _MAD_TO_SIGMA
    return float(sigma * math.sqrt(2.0 * math.log(n))) if n > 1 else 0.0


def wavelet_denoise(g: Trace, cfg: FilterConfig) -> Trace:
    """DWT 분해 → 상세 계수 임계값 처리 → 재구성"""
    t = g.length
    wavelet = pywt.Wavelet(cfg.wavelet)
    max_level = pywt.dwt_max_level(t, wavelet.dec_len)
    if cfg.wavelet_levels < 1 or cfg.wavelet_levels > max_level:
        raise ConfigurationError(
            f"웨이블릿 분해 단계 {cfg.wavelet_levels} 가 트레이스 길이 {t} 에 맞지 않습니다 (최대 {max_level})")

    coeffs = pywt.wavedec(g.samples, wavelet, mode=cfg.wavelet_mode, level=cfg.wavelet_levels)
    threshold = cfg.wavelet_threshold
    if threshold is None:
        threshold = universal_threshold(coeffs[-1], t)

    if threshold > 0:
        coeffs = [coeffs[0]] + [pywt.threshold(c, threshold, mode=cfg.wavelet_threshold_rule)
                                for c in coeffs[1:]]
    denoised = pywt.waverec(coeffs, wavelet, mode=cfg.wavelet_mode)[:t]
    return Trace(denoised, g.timestamp)


def wavelet_denoise_bscan(b: BScan, cfg: FilterConfig) -> BScan:
    """B-scan 의 모든 트레이스에 웨이블릿 잡음 제거 적용"""
    columns = [wavelet_denoise(trace, cfg).samples for trace in b.to_traces()]
    return b.with_data(np.stack(columns, axis=1))


FILTER_STAGES: Dict[str, Callable[[BScan, FilterConfig], BScan]] = {
    'background_removal': lambda b, cfg: background_removal(b),
    'dewow': lambda b, cfg: dewow_bscan(b, cfg.dewow_degree),
    'sec_gain': lambda b, cfg: sec_gain(b, cfg.sec_a, cfg.sec_b, cfg.sec_threshold),
    'wavelet_denoise': wavelet_denoise_bscan,
}


def filter_pipeline(b: BScan, cfg: FilterConfig) -> BScan:
    """설정된 순서대로 필터 적용"""
    if not cfg.enabled:
        return b.with_data(b.data.copy())
    for name in cfg.order:
        stage = FILTER_STAGES.get(name)
        if stage is None:
            raise ConfigurationError(f"알 수 없는 필터 단계: {name}")
        b = stage(b, cfg)
    return b


def filter_sequence(traces: Iterable[Trace], cfg: FilterConfig, k: int) -> Tuple[BScan, BScan]:
    """원시 트레이스 → (스태킹된 에포크 B-scan, k 단위 비중첩 필터링 결과)"""
    if k < 1:
        raise ConfigurationError(f"윈도우 크기는 1 이상이어야 합니다: {k}")
    epochs = condition_traces(traces, cfg)
    if not epochs:
        raise InputError("이상치 제거/스태킹 후 남은 트레이스가 없습니다")
    raw = BScan.from_traces(epochs)
    blocks = [filter_pipeline(BScan(raw.data[:, start:start + k], raw.timestamps[start:start + k]), cfg).data
              for start in range(0, raw.k, k)]
    logger.info(f"필터링 완료: 에포크 {raw.k}개, 윈도우 {len(blocks)}개 (k={k})")
    return raw, raw.with_data(np.concatenate(blocks, axis=1))
