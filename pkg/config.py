"""
Конфигурация приложения.

Загружает переменные окружения из .env файла и предоставляет
централизованный доступ к настройкам экспериментов: пути к данным,
допуски численных проверок и параметры прогонов SGD по умолчанию.
"""

import os
import logging
from typing import Optional
from dotenv import load_dotenv

# Загружаем переменные окружения из .env файла
load_dotenv()


def _get_float(name: str, default: str) -> float:
    """
    Читает вещественную настройку из окружения.

    Args:
        name: Имя переменной окружения
        default: Значение по умолчанию (строкой, как в .env)

    Returns:
        Значение настройки; при ошибке разбора - значение по умолчанию
    """
    raw: Optional[str] = os.getenv(name, default)
    try:
        return float(raw)
    except (TypeError, ValueError):
        logging.warning("Некорректное значение %s=%r, используем %s", name, raw, default)
        return float(default)


def _get_int(name: str, default: str) -> int:
    """Читает целочисленную настройку из окружения."""
    raw: Optional[str] = os.getenv(name, default)
    try:
        return int(raw)
    except (TypeError, ValueError):
        logging.warning("Некорректное значение %s=%r, используем %s", name, raw, default)
        return int(default)


# Пути к файлам данных
DATA_DIR: str = os.getenv("DATA_DIR", "data")
LOG_DIR: str = os.getenv("LOG_DIR", os.path.join(DATA_DIR, "logs"))
LOG_FILE_NAME: str = "pl_sgd.log"
LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()
VERSION_PATH: str = os.path.join(os.path.dirname(os.path.abspath(__file__)), "version.txt")  # Файл версии (не в data/, чтобы коммитился)

# Прогоны SGD
WORKERS: int = _get_int("WORKERS", "1")
DIVERGENCE_FACTOR: float = _get_float("DIVERGENCE_FACTOR", "1e12")  # Порог роста потерь относительно L(w0)
SWEEP_WINDOW: int = _get_int("SWEEP_WINDOW", "50")

# Численные допуски
RANK_RTOL: float = _get_float("RANK_RTOL", "1e-10")  # tau_rank = RANK_RTOL * sigma_max * max(rows, cols)
FD_RELATIVE_STEP: float = _get_float("FD_RELATIVE_STEP", "1e-5")  # h = FD_RELATIVE_STEP * max(1, ||w||)
LOSS_FLOOR_RELATIVE: float = _get_float("LOSS_FLOOR_RELATIVE", "1e-12")  # loss_floor = 1e-12 * L(w0)
RATIO_LOSS_FLOOR: float = _get_float("RATIO_LOSS_FLOOR", "1e-14")  # ниже этого ||grad||^2 / (2 beta l) не проверяем
RATIO_SLACK: float = 1e-8
PL_SLACK: float = 1e-10
ENUMERATION_BUDGET: int = _get_int("ENUMERATION_BUDGET", "1000000")

# Протокол проб
PROBE_COUNT: int = _get_int("PROBE_COUNT", "1000")
PROBE_SEED: int = _get_int("PROBE_SEED", "12345")
PROBE_RADIUS_SCALES: tuple = (0.1, 1.0, 10.0)


def get_version() -> str:
    """
    Получает версию пакета из файла version.txt.

    Returns:
        Версия или "unknown" если файл не найден
    """
    try:
        if os.path.exists(VERSION_PATH):
            with open(VERSION_PATH, "r", encoding="utf-8") as f:
                version = f.read().strip()
                return version if version else "unknown"
        return "unknown"
    except OSError as e:
        logging.warning("Failed to read version: %s", e)
        return "unknown"
