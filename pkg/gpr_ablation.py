#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
GPRFormer 절제 실험 - 축 하나의 값을 바꿔가며 재학습하고 스텝 RMSE 비교
Version: 1.0.0

지원 축:
  - k          : 윈도우 길이
  - alpha      : α 를 주어진 값으로 고정
  - layers     : 인코더 층 수 (1 이면 헤드도 1)
  - dropout    : 드롭아웃 비율
  - pooling    : dual | post
  - encoder    : linear | none
  - filtering  : all | none | no_<단계명>
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from gpr_dataset import SequenceData, WindowSet, sequence_windows, step_displacements  # noqa: E402
from gpr_errors import ConfigurationError, InputError  # noqa: E402
from gpr_evaluation import WindowPrediction, overlap_add, rmse, save_svg  # noqa: E402
from gpr_former import ModelConfig, TrainConfig, predict, train  # noqa: E402
from gpr_signal import FILTER_STAGES, FilterConfig  # noqa: E402

logger = logging.getLogger(__name__)

ABLATION_AXES = ('k', 'alpha', 'layers', 'dropout', 'pooling', 'encoder', 'filtering')

DEFAULT_SWEEPS: Dict[str, Tuple[str, ...]] = {
    'k': ('5', '10', '15', '20', '30', '40'),
    'alpha': ('0.1', '0.2', '0.3', '0.4', '0.5', '0.6', '0.7', '0.8', '0.9'),
    'layers': ('1', '6'),
    'dropout': ('0.0', '0.1', '0.3'),
    'pooling': ('dual', 'post'),
    'encoder': ('linear', 'none'),
    'filtering': ('all', 'none') + tuple(f"no_{name}" for name in FILTER_STAGES),
}

SWEEP_COLUMNS = ['axis', 'value', 'rmse_mm', 'val_mse', 'alpha', 'best_epoch', 'windows']


def sweep_values(axis: str, overrides: Optional[Mapping[str, str]] = None) -> List[str]:
    """축의 값 목록 ([ABLATION] 섹션의 같은 이름 키가 있으면 그 값)"""
    if axis not in ABLATION_AXES:
        raise ConfigurationError(f"지원하지 않는 절제 축: {axis} (가능: {', '.join(ABLATION_AXES)})")
    if overrides and overrides.get(axis):
        return [part.strip() for part in overrides[axis].split(',') if part.strip()]
    return list(DEFAULT_SWEEPS[axis])


def _largest_divisor_heads(token_dim: int, heads: int) -> int:
    for candidate in range(min(heads, token_dim), 0, -1):
        if token_dim % candidate == 0:
            return candidate
    return 1


def apply_ablation(axis: str, value: str, fcfg: FilterConfig,
                   mcfg: ModelConfig) -> Tuple[FilterConfig, ModelConfig]:
    """축 값 하나를 반영한 (FilterConfig, ModelConfig) 사본"""
    try:
        if axis == 'k':
            mcfg = dataclasses.replace(mcfg, window_k=int(value))
        elif axis == 'alpha':
            mcfg = dataclasses.replace(mcfg, alpha_init=float(value), alpha_frozen=True)
        elif axis == 'layers':
            layers = int(value)
            mcfg = dataclasses.replace(mcfg, layers=layers, heads=1 if layers == 1 else mcfg.heads)
        elif axis == 'dropout':
            mcfg = dataclasses.replace(mcfg, dropout_p=float(value))
        elif axis == 'pooling':
            mcfg = dataclasses.replace(mcfg, pooling=value)
        elif axis == 'encoder':
            if value == 'linear':
                mcfg = dataclasses.replace(mcfg, use_encoder=True)
            elif value == 'none':
                mcfg = dataclasses.replace(mcfg, use_encoder=False, token_dim=mcfg.input_dim,
                                           heads=_largest_divisor_heads(mcfg.input_dim, mcfg.heads))
            else:
                raise ConfigurationError(f"encoder 축 값은 linear|none 입니다: {value}")
        elif axis == 'filtering':
            if value == 'all':
                fcfg = dataclasses.replace(fcfg, enabled=True)
            elif value == 'none':
                fcfg = dataclasses.replace(fcfg, enabled=False)
            elif value.startswith('no_') and value[3:] in FILTER_STAGES:
                fcfg = dataclasses.replace(fcfg, enabled=True,
                                           order=tuple(name for name in fcfg.order if name != value[3:]))
            else:
                raise ConfigurationError(f"filtering 축 값이 올바르지 않습니다: {value}")
        else:
            raise ConfigurationError(f"지원하지 않는 절제 축: {axis}")
    except ValueError as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(f"{axis} 축 값을 해석할 수 없습니다: {value}") from e
    fcfg.validate()
    mcfg.validate()
    return fcfg, mcfg


def _windows(datasets: Sequence[SequenceData], k: int, fcfg: FilterConfig, stride: int) -> List[WindowSet]:
    return [sequence_windows(data, k, fcfg, stride=stride) for data in datasets]


def step_predictions(model, windows: WindowSet) -> np.ndarray:
    """윈도우 예측을 overlap-add 로 스텝 추정으로 변환"""
    values = predict(model, windows.inputs)
    preds = [WindowPrediction(int(start), windows.span, float(v)) for start, v in zip(windows.starts, values)]
    return overlap_add(preds, windows.n_epochs - 1)


@dataclass
class AblationResult:
    table: pd.DataFrame
    files: List[Path] = field(default_factory=list)

    @property
    def best_value(self) -> str:
        return str(self.table.loc[self.table['rmse_mm'].idxmin(), 'value'])


def ablation_sweep(axis: str, values: Sequence[str], train_data: Sequence[SequenceData],
                   val_data: Sequence[SequenceData], fcfg: FilterConfig, mcfg: ModelConfig, tcfg: TrainConfig,
                   *, stride: int = 1, out_dir=None) -> AblationResult:
    """값마다 윈도우 재구성 → 재학습 → 검증 시퀀스 스텝 RMSE (mm)"""
    if not values:
        raise InputError("절제 값 목록이 비어 있습니다")
    if not train_data or not val_data:
        raise InputError("학습/검증 시퀀스가 각각 1개 이상 필요합니다")

    rows = []
    for value in values:
        run_fcfg, run_mcfg = apply_ablation(axis, value, fcfg, mcfg)
        k = run_mcfg.window_k
        logger.info(f"절제 실행: {axis}={value} (k={k}, layers={run_mcfg.layers}, pooling={run_mcfg.pooling})")
        train_set = WindowSet.concatenate(_windows(train_data, k, run_fcfg, stride))
        val_sets = _windows(val_data, k, run_fcfg, stride)
        val_set = WindowSet.concatenate(val_sets)

        result = train(train_set.inputs, train_set.labels, val_set.inputs, val_set.labels, tcfg, run_mcfg)

        truth_steps, est_steps = [], []
        for data, windows in zip(val_data, val_sets):
            truth_steps.append(step_displacements(data.require_truth(), windows.epoch_times))
            est_steps.append(step_predictions(result.model, windows))
        rows.append({
            'axis': axis,
            'value': value,
            'rmse_mm': rmse(np.concatenate(truth_steps), np.concatenate(est_steps)),
            'val_mse': result.best_val_mse,
            'alpha': result.model.alpha_value(),
            'best_epoch': result.best_epoch,
            'windows': len(train_set),
        })
        logger.info(f"  {axis}={value}: RMSE {rows[-1]['rmse_mm']:.3f} mm")

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    files: List[Path] = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"ablation_{axis}.csv"
        table.to_csv(csv_path, index=False, lineterminator='\n')
        files.append(csv_path)
        files.append(plot_sweep(table, out_dir / f"ablation_{axis}.svg"))
    return AblationResult(table=table, files=files)


def plot_sweep(table: pd.DataFrame, path) -> Path:
    """값별 RMSE 선 그래프, 최소값 표시"""
    axis = str(table['axis'].iloc[0])
    labels = [str(v) for v in table['value']]
    numeric = all(_is_number(v) for v in labels)
    xs = [float(v) for v in labels] if numeric else list(range(len(labels)))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, table['rmse_mm'], marker='o', color='tab:blue')
    best = int(table['rmse_mm'].to_numpy().argmin())
    ax.scatter([xs[best]], [table['rmse_mm'].iloc[best]], s=120, facecolors='none', edgecolors='tab:red',
               zorder=3, label=f"best: {labels[best]}")
    if not numeric:
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, rotation=30, ha='right')
    ax.set_xlabel(axis)
    ax.set_ylabel('displacement RMSE (mm)')
    ax.legend(loc='best', fontsize=8)
    fig.tight_layout()
    return save_svg(fig, path)


def _is_number(text: str) -> bool:
    try:
        return math.isfinite(float(text))
    except ValueError:
        return False
