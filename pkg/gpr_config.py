#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
설정 파일 처리 모듈 - config.ini 및 key-value 설정 파일 입출력
Version: 1.0.0
"""

import configparser
import dataclasses
import logging
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, TypeVar

from gpr_errors import ConfigurationError

logger = logging.getLogger(__name__)

T = TypeVar('T')

_TRUE_VALUES = {'1', 'true', 'yes', 'on'}
_FALSE_VALUES = {'0', 'false', 'no', 'off'}

# key-value 파일은 섹션 헤더가 없으므로 읽을 때 임시 섹션을 붙인다
_FLAT_SECTION = 'values'


def _coerce(raw: str, annotation: Any, key: str, source: Optional[str]) -> Any:
    """문자열 값을 필드 타입으로 변환"""
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    text = raw.strip()

    if origin is typing.Union and type(None) in args:
        if text.lower() in ('', 'none', 'null'):
            return None
        inner = next(a for a in args if a is not type(None))
        return _coerce(text, inner, key, source)

    try:
        if annotation is bool:
            lowered = text.lower()
            if lowered in _TRUE_VALUES:
                return True
            if lowered in _FALSE_VALUES:
                return False
            raise ValueError(f"불리언 값이 아닙니다: {raw!r}")
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if annotation is str:
            return text
        if origin in (tuple, list):
            item_type = args[0] if args else str
            items = [item for item in (part.strip() for part in text.split(',')) if item]
            values = [_coerce(item, item_type, key, source) for item in items]
            return tuple(values) if origin is tuple else values
    except ValueError as e:
        raise ConfigurationError(f"'{key}' 값을 해석할 수 없습니다: {e}", source=source) from e

    raise ConfigurationError(f"'{key}' 필드 타입을 지원하지 않습니다: {annotation}", source=source)


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ', '.join(_format(v) for v in value)
    if value is None:
        return 'none'
    return str(value)


def apply_mapping(cls: Type[T], values: Dict[str, str], *, base: Optional[T] = None,
                  source: Optional[str] = None, strict: bool = True) -> T:
    """문자열 매핑을 데이터클래스 인스턴스로 변환 (누락 키는 기본값 유지)"""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown and strict:
        raise ConfigurationError(f"알 수 없는 설정 키: {', '.join(unknown)}", source=source)

    updates = {key: _coerce(raw, hints[key], key, source)
               for key, raw in values.items() if key in names}
    instance = dataclasses.replace(base, **updates) if base is not None else cls(**updates)

    validate = getattr(instance, 'validate', None)
    if callable(validate):
        try:
            validate()
        except ConfigurationError as e:
            raise ConfigurationError(e.message, source=source) from e
    return instance


def to_key_value_text(instance: Any) -> str:
    """데이터클래스를 평탄한 key = value 텍스트로 직렬화"""
    lines = [f"{f.name} = {_format(getattr(instance, f.name))}"
             for f in dataclasses.fields(instance)]
    return '\n'.join(lines) + '\n'


def write_key_value_file(instance: Any, path) -> Path:
    """key-value 설정 파일 저장"""
    path = Path(path)
    path.write_text(to_key_value_text(instance), encoding='utf-8')
    logger.debug(f"설정 파일 저장: {path}")
    return path


def read_key_value_file(path, cls: Type[T]) -> T:
    """key-value 설정 파일 로드"""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError("설정 파일을 찾을 수 없습니다", source=str(path))

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_FLAT_SECTION}]\n" + path.read_text(encoding='utf-8'), source=str(path))
    except configparser.Error as e:
        # 임시 헤더 한 줄만큼 줄 번호 보정
        line = getattr(e, 'lineno', None)
        raise ConfigurationError(f"설정 파일 구문 오류: {e}", source=str(path),
                                 line=line - 1 if line else None) from e

    return apply_mapping(cls, dict(parser.items(_FLAT_SECTION, raw=True)), source=str(path))


def read_ini(path, *, allow_no_value: bool = False) -> configparser.ConfigParser:
    """INI 문서 로드 (키 대소문자 유지, allow_no_value 이면 목록형 섹션 허용)"""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError("INI 파일을 찾을 수 없습니다", source=str(path))
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'),
                                       default_section='__defaults__',
                                       allow_no_value=allow_no_value)
    parser.optionxform = str
    try:
        parser.read(path, encoding='utf-8')
    except configparser.Error as e:
        raise ConfigurationError(f"INI 구문 오류: {e}", source=str(path),
                                 line=getattr(e, 'lineno', None)) from e
    return parser


def section_values(parser: configparser.ConfigParser, section: str) -> Dict[str, str]:
    """섹션 값 (DEFAULT 상속 없이) 반환"""
    if not parser.has_section(section):
        return {}
    return {key: value for key, value in parser.items(section, raw=True)}


@dataclass
class ExperimentConfig:
    """실험 단위 설정 - config.ini 의 모든 섹션을 묶는다"""
    filter: Any
    model: Any
    train: Any
    ekf: Any
    scene_file: Optional[Path] = None
    motion_file: Optional[Path] = None
    seed: int = 0
    output_dir: Path = Path('output')
    log_level: str = 'INFO'
    ablation: Dict[str, str] = field(default_factory=dict)
    source: Optional[str] = None

    def check_files(self):
        """참조 파일 존재 여부 확인"""
        for label, path in (('scene_file', self.scene_file), ('motion_file', self.motion_file)):
            if path is not None and not Path(path).exists():
                raise ConfigurationError(f"{label} 경로가 존재하지 않습니다: {path}", source=self.source)


def load_experiment_config(path=None, *, check_files: bool = True) -> ExperimentConfig:
    """config.ini 로부터 실험 설정 구성 (파일이 없으면 기본값)"""
    from gpr_ekf import EkfConfig
    from gpr_former import ModelConfig, TrainConfig
    from gpr_signal import FilterConfig

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'),
                                       default_section='__defaults__')
    parser.optionxform = str
    source = None
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError("설정 파일을 찾을 수 없습니다", source=str(path))
        source = str(path)
        try:
            parser.read(path, encoding='utf-8')
        except configparser.Error as e:
            raise ConfigurationError(f"설정 파일 구문 오류: {e}", source=source,
                                     line=getattr(e, 'lineno', None)) from e

    def own(section: str) -> Dict[str, str]:
        return section_values(parser, section)

    base_dir = path.parent if path is not None else Path('.')
    sim = own('SIMULATION')
    defaults = own('DEFAULT')

    def resolve(value: Optional[str]) -> Optional[Path]:
        if not value:
            return None
        candidate = Path(value)
        return candidate if candidate.is_absolute() else base_dir / candidate

    config = ExperimentConfig(
        filter=apply_mapping(FilterConfig, own('FILTER'), source=source),
        model=apply_mapping(ModelConfig, own('MODEL'), source=source),
        train=apply_mapping(TrainConfig, own('TRAIN'), source=source),
        ekf=apply_mapping(EkfConfig, own('EKF'), source=source),
        scene_file=resolve(sim.get('scene_file')),
        motion_file=resolve(sim.get('motion_file')),
        seed=int(defaults.get('seed', 0)),
        output_dir=Path(own('OUTPUT').get('output_dir', 'output')),
        log_level=defaults.get('log_level', 'INFO'),
        ablation=own('ABLATION'),
        source=source,
    )
    if check_files:
        config.check_files()
    return config


def parse_float_list(text: str) -> List[float]:
    """쉼표 구분 실수 목록"""
    return [float(part) for part in text.split(',') if part.strip()]
