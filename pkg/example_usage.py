#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
GPR 보조 로버 위치 추정기 - 통합 사용 예시
시뮬레이션 → 필터링 → 학습 → 추론 → EKF 융합 → 평가 전체 흐름
"""

import dataclasses
import logging
from pathlib import Path

import numpy as np

from gpr_dataset import WindowSet, from_simulation, sequence_windows, step_displacements
from gpr_ekf import EkfConfig, encoder_step_displacements, encoder_samples, fuse_sequence, step_table
from gpr_evaluation import Trajectory, compare_report, rmse
from gpr_former import ModelConfig, TrainConfig, parameter_count, train
from gpr_ablation import step_predictions
from gpr_signal import FilterConfig
from gpr_simulator import generate_sequence, random_scene, straight_profile, survey_profile

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

OUT = Path('example_output')


def example_simulation(count: int = 6):
    """속도가 다른 직선 시퀀스 여러 개 생성"""
    print("\n=== 1. 시뮬레이션 ===")
    sequences = []
    for seed in range(count):
        speed = 0.05 + 0.25 * seed / max(count - 1, 1)
        motion = straight_profile(6.0, speed)
        scene = random_scene(6.0, seed)
        sequences.append(from_simulation(generate_sequence(scene, motion, seed)))
        print(f"- seed {seed}: 속도 {speed:.3f} m/s, 트레이스 {len(sequences[-1].gpr)}개")
    return sequences


def example_training(train_data, val_data, fcfg: FilterConfig):
    """축소 설정으로 GPRFormer 학습"""
    print("\n=== 2. GPRFormer 학습 ===")
    mcfg = ModelConfig(token_dim=64, layers=2, heads=2, window_k=10)
    tcfg = TrainConfig(batch_size=32, epochs=5)
    train_set = WindowSet.concatenate([sequence_windows(d, mcfg.window_k, fcfg) for d in train_data])
    val_set = WindowSet.concatenate([sequence_windows(d, mcfg.window_k, fcfg) for d in val_data])
    result = train(train_set.inputs, train_set.labels, val_set.inputs, val_set.labels, tcfg, mcfg)
    print(f"✅ 학습 완료: 파라미터 {parameter_count(result.model):,}개, 최적 에포크 {result.best_epoch}, "
          f"α={result.model.alpha_value():.4f}")
    return result.model


def example_fusion(model, fcfg: FilterConfig):
    """슬립 구간이 있는 측량 경로에서 GPR 채널 유무 비교"""
    print("\n=== 3. EKF 융합 ===")
    motion = survey_profile(3, 4.0, 0.15, leg_slip=[0.2, 0.0, 0.2])
    scene = random_scene(12.0, 99)
    data = from_simulation(generate_sequence(scene, motion, 99))

    windows = sequence_windows(data, model.config.window_k, fcfg)
    steps = step_predictions(model, windows)
    truth_steps = step_displacements(data.truth, windows.epoch_times)
    encoder_steps = encoder_step_displacements(encoder_samples(data.encoders), data.manifest.ticks_per_meter,
                                               windows.epoch_times)
    print(f"- GPRFormer 스텝 RMSE: {rmse(truth_steps, steps):.2f} mm")
    print(f"- 엔코더 스텝 RMSE:   {rmse(truth_steps, encoder_steps):.2f} mm")

    # 윈도우로 덮이지 않은 스텝은 엔코더 값으로 채운다
    filled = np.where(np.isfinite(steps), steps, encoder_steps)
    with_gpr = fuse_sequence(data, EkfConfig(), gpr_steps=step_table(windows.epoch_times, filled))
    without = fuse_sequence(data, dataclasses.replace(EkfConfig(), gpr_enabled=False))

    report = compare_report(
        {'gprformer': steps, 'encoder': encoder_steps}, truth_steps, OUT / 'report',
        sequence='survey-slip', step_times=windows.epoch_times[1:],
        trajectories={'encoder + imu': without.trajectory(), 'encoder + imu + gpr': with_gpr.trajectory()},
        truth_trajectory=Trajectory.from_frame(data.truth, time_column='timestamp'),
    )
    print(report.summary_text())


def main():
    fcfg = FilterConfig()
    sequences = example_simulation()
    model = example_training(sequences[:-1], sequences[-1:], fcfg)
    example_fusion(model, fcfg)
    print(f"\n📄 리포트: {OUT / 'report'}")


if __name__ == "__main__":
    main()
