#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
GPR 보조 로버 위치 추정기 - 설치 스크립트
"""

from setuptools import setup
from pathlib import Path

# README 파일 읽기
this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text(encoding='utf-8') if (this_directory / "README.md").exists() else ""

setup(
    name="gpr-localizer",
    version="1.0.0",
    description="지표 투과 레이더(GPR) 이동 거리 회귀와 EKF 융합으로 로버 위치를 추정하는 Python 파이프라인",
    long_description=long_description,
    long_description_content_type="text/markdown",
    py_modules=[
        "gpr_errors",
        "gpr_config",
        "gpr_signal",
        "gpr_simulator",
        "gpr_dataset",
        "gpr_former",
        "gpr_ablation",
        "gpr_ekf",
        "gpr_evaluation",
        "gpr_localizer",
    ],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24.0",
        "pandas>=2.0.0",
        "matplotlib>=3.7.0",
        "pydantic>=2.0.0",
        "torch>=2.0.0",
        "PyWavelets>=1.4.0",
    ],
    extras_require={
        "dev": ["pytest>=7.0.0", "black>=22.0.0", "flake8>=5.0.0"],
        "build": ["setuptools>=65.0.0", "wheel>=0.38.0"],
    },
    entry_points={
        "console_scripts": [
            "gpr-localizer=gpr_localizer:main",
        ],
    },
    include_package_data=True,
    package_data={
        "": ["*.md", "*.ini"],
    },
    keywords="gpr ground-penetrating-radar localization odometry ekf transformer rover",
)
