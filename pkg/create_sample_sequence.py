#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
샘플 시퀀스 생성 스크립트
"""

import logging
from pathlib import Path

from gpr_dataset import from_simulation, write_sequence
from gpr_simulator import generate_sequence, load_motion, load_scene

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

scenes = Path(__file__).parent / 'scenes'
scene = load_scene(scenes / 'basalt_scene.ini')

# 슬립 없는 측량 경로와 20 % 슬립 경로
for name, motion_file in (('sample_survey', 'survey_motion.ini'), ('sample_slip', 'slip_motion.ini')):
    motion = load_motion(scenes / motion_file)
    sequence = generate_sequence(scene, motion, seed=7)
    out = write_sequence(from_simulation(sequence), Path('samples') / name)
    print(f"샘플 시퀀스가 생성되었습니다: {out} "
          f"(에포크 {sequence.n_epochs}개, 경로 {sequence.path_length:.2f} m)")
