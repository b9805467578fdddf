#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
GPR 로컬라이제이션 예외 정의
Version: 1.0.0
"""

from typing import Any, Dict, Optional


class GPRLocalizationError(Exception):
    """모든 파이프라인 오류의 기본 클래스"""

    exit_code = 1
    kind = 'error'

    def __init__(self, message: str, *, source: Optional[str] = None,
                 line: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.source = source
        self.line = line
        self.details = details or {}
        super().__init__(self._format())

    def _format(self) -> str:
        if self.source and self.line is not None:
            return f"{self.source}:{self.line}: {self.message}"
        if self.source:
            return f"{self.source}: {self.message}"
        return self.message

    def to_dict(self) -> Dict[str, Any]:
        """JSON 직렬화용 오류 정보"""
        return {
            'kind': self.kind,
            'exit_code': self.exit_code,
            'message': self.message,
            'source': self.source,
            'line': self.line,
            'details': self.details,
        }


class InputError(GPRLocalizationError, ValueError):
    """잘못된 입력 데이터 (형상 불일치, 빈 로그 등)"""

    exit_code = 2
    kind = 'input'


class ConfigurationError(GPRLocalizationError, ValueError):
    """잘못된 설정값 또는 설정 파일"""

    exit_code = 2
    kind = 'configuration'


class NumericalError(GPRLocalizationError, ArithmeticError):
    """수치 계산 실패 (랭크 부족, 비유한 값, 공분산 비정상 등)"""

    exit_code = 3
    kind = 'numerical'
