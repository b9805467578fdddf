#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
시퀀스 디렉터리 입출력 및 학습 윈도우 구성
Version: 1.0.0

디렉터리 구성 (자체 포맷):
    gpr.csv       timestamp, s000 ... s199  (원시 트레이스, 스태킹 전)
    encoders.csv  timestamp, front_left, front_right, rear_left, rear_right
    imu.csv       timestamp, yaw, yaw_rate, ax, ay
    truth.csv     timestamp, x, y, yaw      (참값이 없는 시퀀스는 생략 가능)
    manifest.json 단위, 수집 주기, 출처(simulated | ingested), 생성 파라미터
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from gpr_errors import InputError
from gpr_signal import BScan, FilterConfig, Trace, condition_traces, filter_pipeline
from gpr_simulator import SimSequence, motion_to_dict, scene_to_dict

logger = logging.getLogger(__name__)

FORMAT_VERSION = '1.0'

GPR_FILE = 'gpr.csv'
ENCODER_FILE = 'encoders.csv'
IMU_FILE = 'imu.csv'
TRUTH_FILE = 'truth.csv'
MANIFEST_FILE = 'manifest.json'

ENCODER_COLUMNS = ['timestamp', 'front_left', 'front_right', 'rear_left', 'rear_right']
IMU_COLUMNS = ['timestamp', 'yaw', 'yaw_rate', 'ax', 'ay']
TRUTH_COLUMNS = ['timestamp', 'x', 'y', 'yaw']

DEFAULT_UNITS = {
    'timestamp': 's',
    'amplitude': 'mV',
    'ticks': 'count',
    'yaw': 'rad',
    'yaw_rate': 'rad/s',
    'acceleration': 'm/s^2',
    'position': 'm',
}


def gpr_columns(samples: int) -> List[str]:
    return ['timestamp'] + [f"s{i:03d}" for i in range(samples)]


class SequenceManifest(BaseModel):
    """시퀀스 메타데이터"""
    format_version: str = Field(FORMAT_VERSION, description="시퀀스 포맷 버전")
    format_note: str = Field("시퀀스별 디렉터리에 CSV 를 두는 자체 포맷", description="포맷 출처")
    provenance: Literal['simulated', 'ingested'] = Field(..., description="데이터 출처")
    samples_per_trace: int = Field(..., gt=0, description="트레이스당 샘플 수")
    sample_dt_ns: Optional[float] = Field(None, gt=0, description="샘플 간격 (ns)")
    gpr_rate: float = Field(..., gt=0, description="GPR 에포크 주기 (Hz)")
    stack_size: int = Field(1, ge=1, description="에포크당 반복 트레이스 수")
    encoder_rate: Optional[float] = Field(None, gt=0, description="엔코더 주기 (Hz)")
    imu_rate: Optional[float] = Field(None, gt=0, description="IMU 주기 (Hz)")
    ticks_per_meter: float = Field(..., gt=0, description="엔코더 틱/미터")
    wheel_separation: float = Field(..., gt=0, description="바퀴 간격 W (m)")
    wheel_radius: float = Field(..., gt=0, description="바퀴 반경 R (m)")
    units: Dict[str, str] = Field(default_factory=lambda: dict(DEFAULT_UNITS), description="열 단위")
    seed: Optional[int] = Field(None, description="시뮬레이션 시드")
    parameters: Dict[str, Any] = Field(default_factory=dict, description="생성 파라미터 (scene, motion)")


@dataclass
class SequenceData:
    """메모리에 로드된 시퀀스"""
    manifest: SequenceManifest
    gpr: pd.DataFrame
    encoders: pd.DataFrame
    imu: pd.DataFrame
    truth: Optional[pd.DataFrame] = None
    path: Optional[Path] = None

    @property
    def name(self) -> str:
        return self.path.name if self.path is not None else 'sequence'

    def traces(self) -> List[Trace]:
        values = self.gpr.to_numpy(dtype=float)
        return [Trace(row[1:], row[0]) for row in values]

    def require_truth(self) -> pd.DataFrame:
        if self.truth is None:
            raise InputError("참값(truth.csv)이 없는 시퀀스입니다", source=str(self.path))
        return self.truth


def from_simulation(seq: SimSequence) -> SequenceData:
    """SimSequence → SequenceData"""
    samples = seq.scene.samples
    gpr = pd.DataFrame(
        np.column_stack([[t.timestamp for t in seq.traces], np.stack([t.samples for t in seq.traces])]),
        columns=gpr_columns(samples),
    )
    encoders = pd.DataFrame(seq.encoder_ticks, columns=ENCODER_COLUMNS[1:])
    encoders.insert(0, 'timestamp', seq.encoder_times)
    manifest = SequenceManifest(
        provenance='simulated',
        samples_per_trace=samples,
        sample_dt_ns=seq.scene.sample_dt_ns,
        gpr_rate=seq.motion.gpr_rate,
        stack_size=seq.motion.stack_repeats,
        encoder_rate=seq.motion.encoder_rate,
        imu_rate=seq.motion.imu_rate,
        ticks_per_meter=seq.motion.encoder_ticks_per_meter,
        wheel_separation=seq.motion.wheel_separation,
        wheel_radius=seq.motion.wheel_radius,
        seed=seq.seed,
        parameters={'scene': scene_to_dict(seq.scene), 'motion': motion_to_dict(seq.motion)},
    )
    return SequenceData(
        manifest=manifest,
        gpr=gpr,
        encoders=encoders,
        imu=pd.DataFrame(seq.imu, columns=IMU_COLUMNS),
        truth=pd.DataFrame(seq.truth_poses, columns=TRUTH_COLUMNS),
    )


def write_sequence(data: SequenceData, out_dir) -> Path:
    """시퀀스 디렉터리 저장 (같은 입력이면 바이트 단위로 동일)"""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"출력 디렉터리를 만들 수 없습니다: {e}", source=str(out_dir)) from e

    frames = [(GPR_FILE, data.gpr), (ENCODER_FILE, data.encoders), (IMU_FILE, data.imu)]
    if data.truth is not None:
        frames.append((TRUTH_FILE, data.truth))
    try:
        for name, frame in frames:
            frame.to_csv(out_dir / name, index=False, lineterminator='\n')
        (out_dir / MANIFEST_FILE).write_text(data.manifest.model_dump_json(indent=2) + '\n', encoding='utf-8')
    except OSError as e:
        raise InputError(f"시퀀스를 저장할 수 없습니다: {e}", source=str(out_dir)) from e

    logger.info(f"시퀀스 저장: {out_dir} (트레이스 {len(data.gpr)}개)")
    return out_dir


def _read_csv(path: Path, columns: Sequence[str], integer_columns: Sequence[str] = ()) -> pd.DataFrame:
    if not path.exists():
        raise InputError("파일을 찾을 수 없습니다", source=str(path))
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputError(f"CSV 를 해석할 수 없습니다: {e}", source=str(path)) from e

    if list(frame.columns) != list(columns):
        raise InputError(f"열 구성이 다릅니다: 기대 {len(columns)}개, 실제 {len(frame.columns)}개",
                         source=str(path), line=1)
    if frame.empty:
        raise InputError("데이터 행이 없습니다", source=str(path))

    bad = frame.isna().any(axis=1).to_numpy()
    if bad.any():
        raise InputError("값이 비었거나 숫자가 아닙니다", source=str(path), line=int(np.argmax(bad)) + 2)
    for name in columns:
        if not pd.api.types.is_numeric_dtype(frame[name]):
            raise InputError(f"'{name}' 열에 숫자가 아닌 값이 있습니다", source=str(path))
    for name in integer_columns:
        if not pd.api.types.is_integer_dtype(frame[name]):
            raise InputError(f"'{name}' 열은 정수여야 합니다", source=str(path))

    stamps = frame['timestamp'].to_numpy(dtype=float)
    backwards = np.flatnonzero(np.diff(stamps) < 0)
    if backwards.size:
        raise InputError("타임스탬프가 감소합니다", source=str(path), line=int(backwards[0]) + 3)
    return frame


def read_sequence(seq_dir) -> SequenceData:
    """시퀀스 디렉터리 로드 및 검증"""
    seq_dir = Path(seq_dir)
    if not seq_dir.is_dir():
        raise InputError("시퀀스 디렉터리가 아닙니다", source=str(seq_dir))

    manifest_path = seq_dir / MANIFEST_FILE
    if not manifest_path.exists():
        raise InputError("manifest.json 이 없습니다", source=str(manifest_path))
    try:
        manifest = SequenceManifest.model_validate_json(manifest_path.read_text(encoding='utf-8'))
    except ValidationError as e:
        raise InputError(f"manifest 검증 실패: {e}", source=str(manifest_path)) from e

    truth_path = seq_dir / TRUTH_FILE
    data = SequenceData(
        manifest=manifest,
        gpr=_read_csv(seq_dir / GPR_FILE, gpr_columns(manifest.samples_per_trace)),
        encoders=_read_csv(seq_dir / ENCODER_FILE, ENCODER_COLUMNS, integer_columns=ENCODER_COLUMNS[1:]),
        imu=_read_csv(seq_dir / IMU_FILE, IMU_COLUMNS),
        truth=_read_csv(truth_path, TRUTH_COLUMNS) if truth_path.exists() else None,
        path=seq_dir,
    )
    logger.info(f"시퀀스 로드: {seq_dir} ({manifest.provenance}, 트레이스 {len(data.gpr)}개)")
    return data


# ---------------------------------------------------------------------------
# 에포크, 라벨, 윈도우
# ---------------------------------------------------------------------------

def stacked_epochs(data: SequenceData, cfg: FilterConfig) -> List[Trace]:
    """원시 트레이스 → 이상치 제거 → 스태킹된 에포크"""
    if cfg.stack_size != data.manifest.stack_size:
        logger.warning(f"{data.name}: 필터 stack_size={cfg.stack_size} 가 manifest "
                       f"stack_size={data.manifest.stack_size} 와 다릅니다")
    epochs = condition_traces(data.traces(), cfg)
    logger.info(f"{data.name}: 원시 트레이스 {len(data.gpr)}개 → 에포크 {len(epochs)}개")
    return epochs


def truth_arc_length(truth: pd.DataFrame) -> np.ndarray:
    """참값 포즈의 누적 경로 길이"""
    xy = truth[['x', 'y']].to_numpy(dtype=float)
    steps = np.hypot(*np.diff(xy, axis=0).T) if len(xy) > 1 else np.zeros(0)
    return np.concatenate([[0.0], np.cumsum(steps)])


def cumulative_truth(truth: pd.DataFrame, times: np.ndarray) -> np.ndarray:
    """시각 times 에서의 누적 경로 길이 (선형 보간)"""
    stamps = truth['timestamp'].to_numpy(dtype=float)
    times = np.asarray(times, dtype=float)
    if times.size and (times.min() < stamps[0] - 1e-9 or times.max() > stamps[-1] + 1e-9):
        raise InputError("참값 포즈 구간 밖의 시각이 있습니다")
    return np.interp(times, stamps, truth_arc_length(truth))


def step_displacements(truth: pd.DataFrame, epoch_times: np.ndarray) -> np.ndarray:
    """연속 에포크 사이 참값 이동 거리"""
    return np.diff(cumulative_truth(truth, epoch_times))


@dataclass
class WindowSet:
    """필터링된 k-윈도우 묶음"""
    inputs: np.ndarray        # (n, k, t)
    labels: np.ndarray        # (n,) 윈도우 구간 총 이동 거리, 참값이 없으면 NaN
    starts: np.ndarray        # (n,) 첫 에포크 인덱스
    k: int
    n_epochs: int
    epoch_times: np.ndarray

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def span(self) -> int:
        return self.k - 1

    @staticmethod
    def concatenate(sets: Sequence['WindowSet']) -> 'WindowSet':
        if not sets:
            raise InputError("윈도우 세트가 비어 있습니다")
        ks = {s.k for s in sets}
        if len(ks) != 1:
            raise InputError(f"윈도우 크기가 서로 다릅니다: {sorted(ks)}")
        return WindowSet(
            inputs=np.concatenate([s.inputs for s in sets]),
            labels=np.concatenate([s.labels for s in sets]),
            starts=np.concatenate([s.starts for s in sets]),
            k=sets[0].k,
            n_epochs=sum(s.n_epochs for s in sets),
            epoch_times=np.concatenate([s.epoch_times for s in sets]),
        )


def window_starts(n_epochs: int, k: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise InputError(f"stride 는 1 이상이어야 합니다: {stride}")
    if n_epochs < k:
        raise InputError(f"에포크 {n_epochs}개가 윈도우 크기 k={k} 보다 적습니다 (최소 {k}개 필요)")
    return np.arange(0, n_epochs - k + 1, stride)


def build_windows(epochs: Sequence[Trace], k: int, cfg: FilterConfig, *, stride: int = 1,
                  truth: Optional[pd.DataFrame] = None) -> WindowSet:
    """에포크 열을 stride 간격 k-윈도우로 자르고 윈도우마다 필터 적용"""
    if k < 2:
        raise InputError(f"윈도우는 이동 구간을 가지려면 k ≥ 2 여야 합니다: {k}")
    starts = window_starts(len(epochs), k, stride)
    raw = BScan.from_traces(list(epochs))

    inputs = np.empty((starts.size, k, raw.t))
    for n, start in enumerate(starts):
        window = BScan(raw.data[:, start:start + k], raw.timestamps[start:start + k])
        inputs[n] = filter_pipeline(window, cfg).data.T

    if truth is not None:
        cumulative = cumulative_truth(truth, raw.timestamps)
        labels = cumulative[starts + k - 1] - cumulative[starts]
    else:
        labels = np.full(starts.size, np.nan)

    logger.info(f"윈도우 구성: {starts.size}개 (k={k}, stride={stride})")
    return WindowSet(inputs=inputs, labels=labels, starts=starts, k=k, n_epochs=len(epochs),
                     epoch_times=raw.timestamps)


def sequence_windows(data: SequenceData, k: int, cfg: FilterConfig, *, stride: int = 1,
                     with_labels: bool = True) -> WindowSet:
    epochs = stacked_epochs(data, cfg)
    return build_windows(epochs, k, cfg, stride=stride,
                         truth=data.require_truth() if with_labels else None)
