#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
GPRFormer - B-scan 윈도우로부터 상대 이동 거리를 회귀하는 소형 트랜스포머
Version: 1.0.0

선형 인코더 + 학습형 위치 임베딩 → pre-norm 인코더 스택 → 이중 시퀀스 풀링
(x_final = α·x₁ + (1−α)·x₂) → 회귀 헤드
"""

import copy
import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.utils.data import DataLoader, TensorDataset

from gpr_errors import ConfigurationError, InputError, NumericalError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

POOLING_MODES = ('dual', 'post')

HISTORY_COLUMNS = ['epoch', 'train_mse', 'val_mse', 'alpha']


@dataclass
class ModelConfig:
    """GPRFormer 하이퍼파라미터"""
    input_dim: int = 200
    token_dim: int = 256
    window_k: int = 10
    layers: int = 6
    heads: int = 4
    ffn_ratio: float = 3.0
    dropout_p: float = 0.1
    alpha_init: float = 0.5
    alpha_frozen: bool = False
    pooling: str = 'dual'
    use_encoder: bool = True
    input_scale: float = 0.02  # mV → 대략 단위 크기
    seed: int = 0

    def validate(self):
        if self.input_dim < 1 or self.token_dim < 1:
            raise ConfigurationError("input_dim, token_dim 은 1 이상이어야 합니다")
        if self.heads < 1 or self.token_dim % self.heads != 0:
            raise ConfigurationError(f"token_dim {self.token_dim} 이 heads {self.heads} 로 나누어떨어지지 않습니다")
        if self.window_k < 1:
            raise ConfigurationError(f"window_k 는 1 이상이어야 합니다: {self.window_k}")
        if self.layers < 0:
            raise ConfigurationError(f"layers 는 0 이상이어야 합니다: {self.layers}")
        if not 0 <= self.dropout_p < 1:
            raise ConfigurationError(f"dropout_p 는 [0, 1) 범위여야 합니다: {self.dropout_p}")
        if self.ffn_ratio <= 0:
            raise ConfigurationError(f"ffn_ratio 는 양수여야 합니다: {self.ffn_ratio}")
        if self.pooling not in POOLING_MODES:
            raise ConfigurationError(f"지원하지 않는 pooling: {self.pooling}")
        if not self.use_encoder and self.token_dim != self.input_dim:
            raise ConfigurationError("인코더를 쓰지 않으면 token_dim 이 input_dim 과 같아야 합니다")


@dataclass
class TrainConfig:
    """학습 설정 (Adam + 선형 학습률 감소, MSE 손실)"""
    batch_size: int = 128
    epochs: int = 30
    learning_rate: float = 1e-3
    final_learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0

    def validate(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size 는 1 이상이어야 합니다: {self.batch_size}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs 는 0 이상이어야 합니다: {self.epochs}")
        if self.learning_rate <= 0 or self.final_learning_rate <= 0:
            raise ConfigurationError("학습률은 양수여야 합니다")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("Adam beta 는 [0, 1) 범위여야 합니다")
        if self.eps <= 0:
            raise ConfigurationError("eps 는 양수여야 합니다")


class EncoderLayer(nn.Module):
    """pre-norm 트랜스포머 인코더 층"""

    def __init__(self, dim: int, heads: int, ffn_ratio: float, dropout_p: float):
        super().__init__()
        hidden = int(dim * ffn_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, dropout=dropout_p, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.GELU(),
            nn.Dropout(dropout_p),
            nn.Linear(hidden, dim),
        )
        self.dropout = nn.Dropout(dropout_p)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attended, _ = self.attn(h, h, h, need_weights=False)
        x = x + self.dropout(attended)
        return x + self.dropout(self.ffn(self.norm2(x)))


class AttentionPool(nn.Module):
    """시퀀스 방향 softmax 가중치 (B, k, d) → (B, k, 1)"""

    def __init__(self, dim: int):
        super().__init__()
        self.score = nn.Linear(dim, 1)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.score(tokens), dim=1)


class GPRFormer(nn.Module):
    """GPR B-scan 윈도우 → 윈도우 구간 이동 거리 (m)"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        d = config.token_dim

        self.encoder = nn.Linear(config.input_dim, d) if config.use_encoder else nn.Identity()
        self.positional = nn.Parameter(torch.empty(1, config.window_k, d))
        nn.init.normal_(self.positional, std=0.02)
        self.embed_dropout = nn.Dropout(config.dropout_p)
        self.blocks = nn.ModuleList(
            [EncoderLayer(d, config.heads, config.ffn_ratio, config.dropout_p) for _ in range(config.layers)])
        self.norm = nn.LayerNorm(d)

        self.pool_post = AttentionPool(d)
        if config.pooling == 'dual':
            self.pool_pre = AttentionPool(d)
            alpha = torch.tensor(float(config.alpha_init))
            if config.alpha_frozen:
                self.register_buffer('alpha', alpha)
            else:
                self.alpha = nn.Parameter(alpha)
        else:
            self.pool_pre = None
            self.alpha = None

        self.head = nn.Sequential(
            nn.Linear(d, d),
            nn.ReLU(),
            nn.Dropout(config.dropout_p),
            nn.Linear(d, 1),
        )

    def _check_shape(self, x: torch.Tensor) -> torch.Tensor:
        expected = (self.config.window_k, self.config.input_dim)
        if x.dim() == 2:
            x = x.unsqueeze(0)
        if x.dim() != 3 or tuple(x.shape[1:]) != expected:
            raise InputError(f"입력 형상 {tuple(x.shape)} 이 (B, {expected[0]}, {expected[1]}) 와 다릅니다")
        return x

    def pooled(self, x: torch.Tensor) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        """(x₁, x₂) 풀링 표현"""
        x = self._check_shape(x)
        tokens = self.encoder(x * self.config.input_scale) + self.positional
        tokens = self.embed_dropout(tokens)
        h = tokens
        for block in self.blocks:
            h = block(h)
        h = self.norm(h)

        x1 = (self.pool_post(h) * h).sum(dim=1)
        if self.pool_pre is None:
            return x1, None
        # 변환 전 토큰에서 얻은 가중치를 변환 후 출력에 적용
        x2 = (self.pool_pre(tokens) * h).sum(dim=1)
        return x1, x2

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x1, x2 = self.pooled(x)
        features = x1 if x2 is None else self.alpha * x1 + (1.0 - self.alpha) * x2
        return self.head(features).squeeze(-1)

    def alpha_value(self) -> float:
        return float('nan') if self.alpha is None else float(self.alpha.detach())


def build_model(config: ModelConfig) -> GPRFormer:
    """config.seed 로 가중치를 초기화한 모델"""
    torch.manual_seed(config.seed)
    return GPRFormer(config)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def loss(pred, truth) -> torch.Tensor:
    """평균 제곱 오차"""
    pred = torch.as_tensor(pred, dtype=torch.float64) if not torch.is_tensor(pred) else pred
    truth = torch.as_tensor(truth, dtype=pred.dtype) if not torch.is_tensor(truth) else truth.to(pred.dtype)
    return F.mse_loss(pred, truth)


def check_gradients(model: nn.Module):
    """비유한 기울기가 있으면 파라미터 이름과 함께 NumericalError"""
    for name, param in model.named_parameters():
        if param.grad is not None and not torch.isfinite(param.grad).all():
            raise NumericalError(f"비유한 기울기: {name}", details={'parameter': name})


def backward(model: GPRFormer, inputs: torch.Tensor, truth: torch.Tensor) -> Tuple[float, Dict[str, torch.Tensor]]:
    """배치 손실과 모든 파라미터의 기울기"""
    model.zero_grad(set_to_none=True)
    batch_loss = loss(model(inputs), truth)
    batch_loss.backward()
    check_gradients(model)
    grads = {name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
             for name, p in model.named_parameters()}
    return float(batch_loss.detach()), grads


def _tensor(array: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(array), dtype=dtype)


@torch.no_grad()
def predict(model: GPRFormer, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """추론 모드 일괄 예측 (드롭아웃 비활성)"""
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    outputs = [model(_tensor(inputs[i:i + batch_size], dtype)).cpu().numpy()
               for i in range(0, len(inputs), batch_size)]
    model.train(was_training)
    return np.concatenate(outputs).astype(float) if outputs else np.zeros(0)


@torch.no_grad()
def time_forward(model: GPRFormer, inputs: np.ndarray) -> np.ndarray:
    """윈도우 하나씩 순전파한 소요 시간 (s)"""
    model.eval()
    dtype = next(model.parameters()).dtype
    durations = []
    for window in inputs:
        x = _tensor(window[None], dtype)
        started = time.perf_counter()
        model(x)
        durations.append(time.perf_counter() - started)
    return np.array(durations)


def evaluate_mse(model: GPRFormer, inputs: np.ndarray, labels: np.ndarray) -> float:
    preds = predict(model, inputs)
    return float(np.mean((preds - labels) ** 2))


@dataclass
class TrainResult:
    model: GPRFormer
    history: pd.DataFrame
    best_epoch: int
    best_val_mse: float


def train(train_inputs: np.ndarray, train_labels: np.ndarray, val_inputs: np.ndarray, val_labels: np.ndarray,
          cfg: TrainConfig, mcfg: ModelConfig) -> TrainResult:
    """Adam + 선형 학습률 감소로 학습하고 검증 손실이 가장 낮은 가중치를 반환"""
    cfg.validate()
    mcfg.validate()
    if len(train_inputs) == 0:
        raise InputError("학습 윈도우가 없습니다")
    if len(val_inputs) == 0:
        raise InputError("검증 윈도우가 없습니다")
    for name, labels in (('학습', train_labels), ('검증', val_labels)):
        if not np.all(np.isfinite(labels)):
            raise InputError(f"{name} 라벨에 비유한 값이 있습니다")

    model = build_model(mcfg)
    torch.manual_seed(cfg.seed)
    loader = DataLoader(
        TensorDataset(_tensor(train_inputs), _tensor(train_labels)),
        batch_size=cfg.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(cfg.seed),
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2),
                                 eps=cfg.eps, weight_decay=cfg.weight_decay)
    scheduler = torch.optim.lr_scheduler.LinearLR(
        optimizer, start_factor=1.0, end_factor=cfg.final_learning_rate / cfg.learning_rate,
        total_iters=max(cfg.epochs - 1, 1))

    def record(epoch: int) -> Dict[str, float]:
        row = {
            'epoch': epoch,
            'train_mse': evaluate_mse(model, train_inputs, train_labels),
            'val_mse': evaluate_mse(model, val_inputs, val_labels),
            'alpha': model.alpha_value(),
        }
        if not (math.isfinite(row['train_mse']) and math.isfinite(row['val_mse'])):
            raise NumericalError(f"에포크 {epoch} 손실이 발산했습니다", details=row)
        logger.info(f"에포크 {epoch:3d}: train_mse={row['train_mse']:.6g}, val_mse={row['val_mse']:.6g}, "
                    f"alpha={row['alpha']:.5f}")
        return row

    history: List[Dict[str, float]] = [record(0)]
    best_state = copy.deepcopy(model.state_dict())
    best_epoch, best_val = 0, history[0]['val_mse']

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        for batch, (inputs, labels) in enumerate(loader):
            optimizer.zero_grad(set_to_none=True)
            batch_loss = loss(model(inputs), labels)
            if not torch.isfinite(batch_loss):
                raise NumericalError(
                    f"학습 손실이 NaN/Inf 입니다 (에포크 {epoch}, 배치 {batch})",
                    details={'epoch': epoch, 'batch': batch, 'lr': scheduler.get_last_lr()[0],
                             'alpha': model.alpha_value()})
            batch_loss.backward()
            check_gradients(model)
            optimizer.step()
        if epoch < cfg.epochs:
            scheduler.step()

        row = record(epoch)
        history.append(row)
        if row['val_mse'] < best_val:
            best_val, best_epoch = row['val_mse'], epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    model.eval()
    logger.info(f"학습 완료: 최적 에포크 {best_epoch}, val_mse={best_val:.6g}")
    return TrainResult(model=model, history=pd.DataFrame(history, columns=HISTORY_COLUMNS),
                       best_epoch=best_epoch, best_val_mse=best_val)


def save_checkpoint(model: GPRFormer, path) -> Path:
    """가중치와 ModelConfig 를 한 파일로 저장"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'model_config': dataclasses.asdict(model.config),
        'state_dict': model.state_dict(),
    }, path)
    logger.info(f"체크포인트 저장: {path} (파라미터 {parameter_count(model):,}개)")
    return path


def load_checkpoint(path) -> GPRFormer:
    """체크포인트 로드 (추론 모드)"""
    path = Path(path)
    if not path.exists():
        raise InputError("체크포인트 파일을 찾을 수 없습니다", source=str(path))
    try:
        payload = torch.load(path, map_location='cpu', weights_only=True)
    except Exception as e:
        raise InputError(f"체크포인트를 읽을 수 없습니다: {e}", source=str(path)) from e
    if not isinstance(payload, dict) or payload.get('format_version') != CHECKPOINT_FORMAT_VERSION:
        raise InputError("지원하지 않는 체크포인트 형식입니다", source=str(path))

    try:
        config = ModelConfig(**payload['model_config'])
    except TypeError as e:
        raise InputError(f"체크포인트 설정이 올바르지 않습니다: {e}", source=str(path)) from e
    model = GPRFormer(config)
    model.load_state_dict(payload['state_dict'])
    model.eval()
    return model
