"""
Иерархия исключений и коды завершения CLI.

Каждое исключение несет exit_code, который manage.py возвращает процессу.
"""
from typing import Optional

EXIT_OK: int = 0
EXIT_CONFIG: int = 1
EXIT_VERIFICATION: int = 2
EXIT_DIVERGENCE: int = 3
EXIT_NUMERICAL: int = 4


class PlSgdError(Exception):
    """Базовое исключение пакета."""

    exit_code: int = EXIT_NUMERICAL


class InvalidInputError(PlSgdError, ValueError):
    """Некорректные входные данные (размерности, знаки констант, пустые батчи)."""

    exit_code = EXIT_CONFIG


class NumericalFailureError(PlSgdError, ArithmeticError):
    """Неконечные значения функции или производных."""


class InsufficientProbesError(PlSgdError):
    """Ни одна проба не прошла порог по значению потерь."""


class NotInterpolatedError(PlSgdError):
    """Метки не лежат в Range(X): интерполяция невозможна."""


class PreconditionViolationError(PlSgdError):
    """Нарушено условие вывода оценки (например, eta > 2/lambda)."""

    exit_code = EXIT_CONFIG


class NonContractiveError(PlSgdError):
    """Множитель сжатия вне допустимого интервала."""


class EnumerationTooLargeError(PlSgdError):
    """Полный перебор батчей превышает бюджет."""


class DivergenceError(PlSgdError):
    """Прогон SGD разошелся."""

    exit_code = EXIT_DIVERGENCE

    def __init__(self, message: str, run: int, step: int) -> None:
        super().__init__(message)
        self.run = run
        self.step = step


class VerificationFailure(PlSgdError):
    """Набор инвариантов экземпляра не выполнен."""

    exit_code = EXIT_VERIFICATION


class ConfigError(PlSgdError):
    """Ошибка конфигурационного файла эксперимента."""

    exit_code = EXIT_CONFIG

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None) -> None:
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key:
            location.append(f"key '{key}'")
        full = f"{message} ({', '.join(location)})" if location else message
        super().__init__(full)
        self.line = line
        self.key = key
