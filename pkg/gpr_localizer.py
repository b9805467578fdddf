#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
GPR 보조 로버 위치 추정기 - 메인 실행 파일
Version: 1.0.0

하위 명령: simulate, filter, train, infer, fuse, eval, ablate
종료 코드: 0 성공, 2 입력/설정 오류, 3 수치 오류
"""

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from gpr_config import ExperimentConfig, load_experiment_config, write_key_value_file  # noqa: E402
from gpr_dataset import (SequenceData, from_simulation, gpr_columns, read_sequence, sequence_windows,  # noqa: E402
                         stacked_epochs, step_displacements, write_sequence)
from gpr_errors import ConfigurationError, GPRLocalizationError, InputError  # noqa: E402
from gpr_evaluation import (Trajectory, WindowPrediction, compare_report, overlap_add,  # noqa: E402
                            predictions_from_frame, predictions_to_frame, save_svg)
from gpr_signal import BScan, filter_sequence  # noqa: E402
from gpr_simulator import (generate_sequence, load_motion, load_scene, random_scene,  # noqa: E402
                           straight_profile)

VERSION = '1.0.0'
LOG_FILE = 'gpr_localizer.log'

# 윈도우당 평균 순전파 시간 목표 (ms)
LATENCY_LIMIT_MS = 10.0

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def setup_logging(level: str = 'INFO', verbose: bool = False, log_file: Optional[str] = LOG_FILE):
    """콘솔 + 파일 로그 설정"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _set_threads(jobs: Optional[int]):
    if jobs is None:
        return
    if jobs < 1:
        raise ConfigurationError(f"--jobs 는 1 이상이어야 합니다: {jobs}")
    import torch
    torch.set_num_threads(jobs)
    logger.debug(f"torch 스레드 수: {jobs}")


def _output_dir(args, config: ExperimentConfig) -> Path:
    out = Path(args.out) if args.out else config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_table(path, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise InputError("파일을 찾을 수 없습니다", source=str(path))
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputError(f"CSV 를 읽을 수 없습니다: {e}", source=str(path)) from e
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputError(f"필수 열이 없습니다: {', '.join(missing)}", source=str(path))
    return frame


def _named_paths(items: Optional[Sequence[str]]) -> Dict[str, Path]:
    """'이름=경로' 또는 '경로' 목록 (이름 생략 시 파일명)"""
    named: Dict[str, Path] = {}
    for item in items or []:
        name, sep, path = item.partition('=')
        if not sep:
            name, path = Path(item).stem, item
        if name in named:
            raise InputError(f"같은 이름이 두 번 지정되었습니다: {name}")
        named[name] = Path(path)
    return named


# ---------------------------------------------------------------------------
# 공통 파이프라인 단계
# ---------------------------------------------------------------------------

def simulate_sequences(config: ExperimentConfig, seeds: Sequence[int], *, slip_ratio: Optional[float] = None,
                       jobs: int = 1) -> List[SequenceData]:
    """설정의 장면/경로로 시드별 시퀀스 생성 (장면 파일이 없으면 시드별 무작위 장면)"""
    if config.motion_file is not None:
        motion = load_motion(config.motion_file)
    else:
        motion = straight_profile(10.0, 0.1)
        logger.info("경로 파일이 없어 기본 직선 경로(10 m, 0.1 m/s)를 사용합니다")
    if slip_ratio is not None:
        motion = dataclasses.replace(motion, slip_ratio=slip_ratio, segment_slip=None)
    scene = load_scene(config.scene_file) if config.scene_file is not None else None
    points = np.array([w[1:3] for w in motion.waypoints], dtype=float)
    length = float(np.hypot(*np.diff(points, axis=0).T).sum())

    def one(seed: int) -> SequenceData:
        world = scene if scene is not None else random_scene(length, seed)
        logger.info(f"시뮬레이션: seed={seed}, 산란체 {len(world.scatterers)}개")
        return from_simulation(generate_sequence(world, motion, seed))

    if jobs > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, seeds))
    return [one(seed) for seed in seeds]


def predicted_steps(data: SequenceData, config: ExperimentConfig,
                    preds: Sequence[WindowPrediction]) -> Tuple[np.ndarray, np.ndarray]:
    """윈도우 예측 → (에포크 시각, 스텝별 이동 거리)"""
    epochs = stacked_epochs(data, config.filter)
    times = np.array([e.timestamp for e in epochs])
    return times, overlap_add(preds, len(epochs) - 1)


def epoch_times(data: SequenceData, config: ExperimentConfig) -> np.ndarray:
    return np.array([e.timestamp for e in stacked_epochs(data, config.filter)])


def read_predictions(path) -> List[WindowPrediction]:
    frame = _read_table(path, ['start_index', 'T', 'value'])
    return predictions_from_frame(frame[['start_index', 'T', 'value']])


# ---------------------------------------------------------------------------
# 하위 명령
# ---------------------------------------------------------------------------

def cmd_simulate(args, config: ExperimentConfig) -> int:
    if args.scene:
        config.scene_file = Path(args.scene)
    if args.motion:
        config.motion_file = Path(args.motion)
    config.check_files()
    if args.count < 1:
        raise ConfigurationError(f"--count 는 1 이상이어야 합니다: {args.count}")

    out = _output_dir(args, config)
    seeds = [config.seed + i for i in range(args.count)]
    sequences = simulate_sequences(config, seeds, slip_ratio=args.slip_ratio, jobs=args.jobs or 1)
    for seed, data in zip(seeds, sequences):
        target = out if args.count == 1 else out / f"seq_{seed:04d}"
        write_sequence(data, target)
        truth = data.require_truth()
        logger.info(f"✓ 시퀀스 저장: {target} (에포크 {len(data.gpr) // data.manifest.stack_size}개, "
                    f"경로 {float(np.hypot(*np.diff(truth[['x', 'y']].to_numpy(), axis=0).T).sum()):.3f} m)")
    return 0


def cmd_filter(args, config: ExperimentConfig) -> int:
    data = read_sequence(args.sequence)
    k = args.k or config.model.window_k
    raw, filtered = filter_sequence(data.traces(), config.filter, k)
    out = _output_dir(args, config)

    frame = pd.DataFrame(np.column_stack([filtered.timestamps, filtered.data.T]),
                         columns=gpr_columns(filtered.t))
    csv_path = out / 'filtered.csv'
    frame.to_csv(csv_path, index=False, lineterminator='\n')
    write_key_value_file(config.filter, out / 'filter.cfg')
    svg_path = plot_bscans(raw, filtered, out / 'bscan.svg', data.name)
    logger.info(f"✓ 필터링 결과: {csv_path}, {svg_path}")
    return 0


def plot_bscans(raw: BScan, filtered: BScan, path, title: str) -> Path:
    """필터링 전/후 B-scan"""
    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for ax, scan, label in ((axes[0], raw, 'raw (stacked)'), (axes[1], filtered, 'filtered')):
        limit = float(np.percentile(np.abs(scan.data), 99)) or 1.0
        ax.imshow(scan.data, aspect='auto', cmap='gray', vmin=-limit, vmax=limit,
                  extent=(scan.timestamps[0], scan.timestamps[-1], scan.t, 0))
        ax.set_title(label)
        ax.set_xlabel('time (s)')
    axes[0].set_ylabel('sample index')
    fig.suptitle(title)
    fig.tight_layout()
    return save_svg(fig, path)


def _window_sets(dirs: Sequence[str], config: ExperimentConfig, k: int, stride: int):
    from gpr_dataset import WindowSet
    sets = [sequence_windows(read_sequence(d), k, config.filter, stride=stride) for d in dirs]
    return WindowSet.concatenate(sets)


def _model_config_for(config: ExperimentConfig, samples: int):
    mcfg = config.model
    if mcfg.input_dim != samples:
        logger.warning(f"model input_dim={mcfg.input_dim} 를 데이터 샘플 수 {samples} 로 맞춥니다")
        token_dim = mcfg.token_dim if mcfg.use_encoder else samples
        mcfg = dataclasses.replace(mcfg, input_dim=samples, token_dim=token_dim)
        mcfg.validate()
    return dataclasses.replace(mcfg, seed=config.seed)


def cmd_train(args, config: ExperimentConfig) -> int:
    from gpr_former import parameter_count, save_checkpoint, train

    if not args.train or not args.val:
        raise InputError("학습/검증 시퀀스가 각각 1개 이상 필요합니다")
    k = config.model.window_k
    train_set = _window_sets(args.train, config, k, args.stride)
    val_set = _window_sets(args.val, config, k, args.stride)
    if len(train_set) == 0 or len(val_set) == 0:
        raise InputError("윈도우가 비어 있습니다")

    mcfg = _model_config_for(config, train_set.inputs.shape[2])
    tcfg = dataclasses.replace(config.train, seed=config.seed)
    result = train(train_set.inputs, train_set.labels, val_set.inputs, val_set.labels, tcfg, mcfg)

    out = _output_dir(args, config)
    checkpoint = save_checkpoint(result.model, out / 'model.pt')
    history_path = out / 'loss_history.csv'
    result.history.to_csv(history_path, index=False, lineterminator='\n')
    logger.info(f"✓ 학습 완료: {checkpoint} (파라미터 {parameter_count(result.model):,}개, "
                f"최적 에포크 {result.best_epoch}, α={result.model.alpha_value():.5f})")
    return 0


def cmd_infer(args, config: ExperimentConfig) -> int:
    from gpr_former import load_checkpoint, predict, time_forward

    model = load_checkpoint(args.checkpoint)
    data = read_sequence(args.sequence)
    k = model.config.window_k
    if data.manifest.samples_per_trace != model.config.input_dim:
        raise InputError(f"체크포인트 input_dim={model.config.input_dim} 이 시퀀스 샘플 수 "
                         f"{data.manifest.samples_per_trace} 와 다릅니다", source=str(args.sequence))
    stride = args.stride or 1
    windows = sequence_windows(data, k, config.filter, stride=stride, with_labels=False)
    values = predict(model, windows.inputs)
    preds = [WindowPrediction(int(s), windows.span, float(v)) for s, v in zip(windows.starts, values)]

    out = _output_dir(args, config)
    pred_path = out / 'predictions.csv'
    predictions_to_frame(preds).to_csv(pred_path, index=False, lineterminator='\n')

    seconds = time_forward(model, windows.inputs)
    runtime_path = out / 'runtime.csv'
    pd.DataFrame({'window': np.arange(seconds.size), 'seconds': seconds}).to_csv(
        runtime_path, index=False, lineterminator='\n')
    logger.info(f"✓ 추론 완료: 윈도우 {len(preds)}개 → {pred_path}")
    mean_ms = float(np.mean(seconds)) * 1000.0
    if mean_ms > LATENCY_LIMIT_MS:
        logger.warning(f"평균 추론 시간 {mean_ms:.3f} ms/윈도우 가 목표 {LATENCY_LIMIT_MS:.0f} ms 를 넘습니다")
    else:
        logger.info(f"평균 추론 시간: {mean_ms:.3f} ms/윈도우 (목표 {LATENCY_LIMIT_MS:.0f} ms 이내)")
    return 0


def cmd_fuse(args, config: ExperimentConfig) -> int:
    from gpr_ekf import fuse_sequence, step_table

    data = read_sequence(args.sequence)
    ekf = dataclasses.replace(config.ekf, gpr_enabled=not args.no_gpr)
    gpr_steps = None
    if ekf.gpr_enabled:
        if not args.predictions:
            raise InputError("GPR 채널을 켜려면 --predictions 가 필요합니다 (끄려면 --no-gpr)")
        times, steps = predicted_steps(data, config, read_predictions(args.predictions))
        gpr_steps = step_table(times, steps)

    result = fuse_sequence(data, ekf, gpr_steps=gpr_steps)
    out = _output_dir(args, config)
    path = out / (args.name or ('trajectory_gpr.csv' if ekf.gpr_enabled else 'trajectory.csv'))
    result.frame.to_csv(path, index=False, lineterminator='\n')
    logger.info(f"✓ 궤적 저장: {path} ({len(result.frame)}행)")
    return 0


def cmd_eval(args, config: ExperimentConfig) -> int:
    from gpr_ekf import dead_reckoning, encoder_samples, encoder_step_displacements

    data = read_sequence(args.sequence)
    truth = data.require_truth()
    times = epoch_times(data, config)
    truth_steps = step_displacements(truth, times)
    manifest = data.manifest
    samples = encoder_samples(data.encoders)

    methods: Dict[str, np.ndarray] = {}
    for name, path in _named_paths(args.predictions).items():
        methods[name] = overlap_add(read_predictions(path), len(times) - 1)
    methods['encoder'] = encoder_step_displacements(samples, manifest.ticks_per_meter, times)

    truth_traj = Trajectory.from_frame(truth, time_column='timestamp')
    trajectories: Dict[str, Trajectory] = {}
    for name, path in _named_paths(args.trajectories).items():
        frame = _read_table(path, ['x', 'y', 'yaw'])
        trajectories[name] = Trajectory.from_frame(frame, 'timestamp' if 'timestamp' in frame.columns else 'time')
    first = truth.iloc[0]
    trajectories['encoder dead-reckoning'] = dead_reckoning(
        samples, manifest.wheel_radius, manifest.wheel_separation, manifest.ticks_per_meter,
        (float(first['x']), float(first['y']), float(first['yaw'])))

    report = compare_report(methods, truth_steps, _output_dir(args, config), sequence=data.name,
                            step_times=times[1:], trajectories=trajectories, truth_trajectory=truth_traj)
    print(report.summary_text())
    return 0


def cmd_ablate(args, config: ExperimentConfig) -> int:
    from gpr_ablation import ablation_sweep, sweep_values

    settings = dict(config.ablation)
    values = [v.strip() for v in args.values.split(',') if v.strip()] if args.values \
        else sweep_values(args.axis, settings)

    if args.train and args.val:
        train_data = [read_sequence(d) for d in args.train]
        val_data = [read_sequence(d) for d in args.val]
    else:
        n_train = int(settings.get('train_sequences', 4))
        n_val = int(settings.get('val_sequences', 1))
        logger.info(f"시뮬레이션 데이터로 절제 실행: 학습 {n_train}개, 검증 {n_val}개")
        sequences = simulate_sequences(config, [config.seed + i for i in range(n_train + n_val)],
                                       jobs=args.jobs or 1)
        train_data, val_data = sequences[:n_train], sequences[n_train:]

    tcfg = dataclasses.replace(config.train, seed=config.seed)
    if 'epochs' in settings:
        tcfg = dataclasses.replace(tcfg, epochs=int(settings['epochs']))
    mcfg = _model_config_for(config, train_data[0].manifest.samples_per_trace)
    stride = args.stride or int(settings.get('stride', 1))

    result = ablation_sweep(args.axis, values, train_data, val_data, config.filter, mcfg, tcfg,
                            stride=stride, out_dir=_output_dir(args, config))
    print(result.table.to_string(index=False))
    logger.info(f"✓ 절제 완료: 최적 {args.axis}={result.best_value}")
    return 0


COMMANDS = {
    'simulate': cmd_simulate,
    'filter': cmd_filter,
    'train': cmd_train,
    'infer': cmd_infer,
    'fuse': cmd_fuse,
    'eval': cmd_eval,
    'ablate': cmd_ablate,
}


def _add_common_options(parser: argparse.ArgumentParser, suppress: bool = False):
    default = argparse.SUPPRESS if suppress else None
    flag_default = argparse.SUPPRESS if suppress else False
    parser.add_argument('--config', metavar='INI', default=default, help='설정 파일 (기본: config.ini 가 있으면 사용)')
    parser.add_argument('--seed', type=int, default=default, help='난수 시드 (설정 파일 값 대체)')
    parser.add_argument('--out', metavar='DIR', default=default, help='출력 디렉터리')
    parser.add_argument('--jobs', type=int, default=default, help='torch 스레드 수 / 시뮬레이션 작업 수')
    parser.add_argument('-v', '--verbose', action='store_true', default=flag_default, help='자세한 로그 출력')
    parser.add_argument('--json-errors', action='store_true', default=flag_default,
                        help='오류를 JSON 으로 stderr 에 출력')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='gpr-localizer',
        description="GPR 보조 로버 위치 추정기 - GPR 필터링, GPRFormer 이동 거리 회귀, EKF 융합, 평가",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
사용 예시:
  %(prog)s simulate --motion scenes/survey_motion.ini --count 10 --out data/
  %(prog)s train --train data/seq_0000 data/seq_0001 --val data/seq_0009 --out model/
  %(prog)s infer data/seq_0009 --checkpoint model/model.pt --out run/
  %(prog)s fuse data/seq_0009 --predictions run/predictions.csv --out run/
  %(prog)s eval data/seq_0009 --predictions gprformer=run/predictions.csv \\
           --trajectories ekf+gpr=run/trajectory_gpr.csv --out report/
  %(prog)s ablate --axis k --out ablation/
        """
    )
    _add_common_options(parser)
    parser.add_argument('--version', action='version', version=f'GPR 위치 추정기 v{VERSION}')

    # 공통 옵션은 하위 명령 뒤에도 올 수 있음 (주어진 경우에만 덮어씀)
    common = argparse.ArgumentParser(add_help=False)
    _add_common_options(common, suppress=True)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', parents=[common], help='합성 시퀀스 생성')
    p.add_argument('--scene', help='장면 INI')
    p.add_argument('--motion', help='경로 INI')
    p.add_argument('--count', type=int, default=1, help='생성할 시퀀스 수 (시드 연속)')
    p.add_argument('--slip-ratio', type=float, help='전 구간 슬립 비율 대체')

    p = sub.add_parser('filter', parents=[common], help='트레이스 필터링 및 B-scan 그림')
    p.add_argument('sequence')
    p.add_argument('--k', type=int, help='필터 윈도우 크기 (기본: model window_k)')

    p = sub.add_parser('train', parents=[common], help='GPRFormer 학습')
    p.add_argument('--train', nargs='+', required=True, metavar='SEQ')
    p.add_argument('--val', nargs='+', required=True, metavar='SEQ')
    p.add_argument('--stride', type=int, default=1)

    p = sub.add_parser('infer', parents=[common], help='윈도우 이동 거리 예측')
    p.add_argument('sequence')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--stride', type=int, default=1)

    p = sub.add_parser('fuse', parents=[common], help='EKF 융합 궤적')
    p.add_argument('sequence')
    p.add_argument('--predictions', help='infer 결과 CSV')
    p.add_argument('--no-gpr', action='store_true', help='GPR 채널 끄기 (엔코더 + IMU)')
    p.add_argument('--name', help='출력 파일명')

    p = sub.add_parser('eval', parents=[common], help='RMSE / ATE 비교 리포트')
    p.add_argument('sequence')
    p.add_argument('--predictions', nargs='*', metavar='NAME=CSV')
    p.add_argument('--trajectories', nargs='*', metavar='NAME=CSV')

    p = sub.add_parser('ablate', parents=[common], help='절제 실험')
    p.add_argument('--axis', required=True)
    p.add_argument('--values', help='쉼표 구분 값 (기본: 축별 기본 스윕)')
    p.add_argument('--train', nargs='*', metavar='SEQ')
    p.add_argument('--val', nargs='*', metavar='SEQ')
    p.add_argument('--stride', type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """메인 함수"""
    parser = build_parser()
    args = parser.parse_args(argv)

    config_path = args.config
    if config_path is None and Path('config.ini').exists():
        config_path = 'config.ini'

    setup_logging(verbose=args.verbose)
    try:
        config = load_experiment_config(config_path, check_files=False)
        if not args.verbose:
            logging.getLogger().setLevel(getattr(logging, config.log_level.upper(), logging.INFO))
        if args.seed is not None:
            config.seed = args.seed
        logger.info(f"GPR 위치 추정기 v{VERSION} 시작: {args.command} (seed={config.seed})")
        _set_threads(args.jobs)
        code = COMMANDS[args.command](args, config)
        if code == 0:
            logger.info("프로그램이 성공적으로 완료되었습니다")
        return code

    except GPRLocalizationError as e:
        logger.error(f"{e.kind} 오류: {e}")
        if args.json_errors:
            print(json.dumps(e.to_dict(), ensure_ascii=False), file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("사용자에 의해 중단되었습니다")
        return 1


if __name__ == "__main__":
    sys.exit(main())
