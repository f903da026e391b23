"""
Атомарная запись результатов экспериментов: CSV-кривые и JSON-отчеты.

Файл сначала пишется во временный <path>.tmp, затем заменяется через os.replace,
так что читатель никогда не видит недописанный результат.
"""
import csv
import json
import logging
import math
import os
from typing import Any, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def format_float(value: float) -> str:
    """17 значащих цифр (точный обратный разбор); неконечные значения - nan."""
    x = float(value)
    if not math.isfinite(x):
        return "nan"
    return format(x, ".17g")


def _format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_csv_atomic(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """
    Атомарно записывает CSV с заданным заголовком.

    Args:
        path: Путь к файлу
        header: Имена столбцов
        rows: Строки значений (целые пишутся как есть, вещественные - format_float)

    Returns:
        Число записанных строк данных
    """
    _ensure_parent(path)
    temp_path = f"{path}.tmp"
    count = 0
    try:
        with open(temp_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ValueError(f"Строка из {len(row)} значений при {len(header)} столбцах")
                writer.writerow([_format_cell(v) for v in row])
                count += 1
        os.replace(temp_path, path)
    except Exception:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    logger.info("CSV сохранен: %s (%d строк)", path, count)
    return count


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return x if math.isfinite(x) else None
    return value


def write_json_atomic(path: str, data: Any) -> None:
    """
    Атомарно записывает JSON-отчет (ensure_ascii=False, indent=2).

    numpy-значения приводятся к встроенным типам, неконечные числа пишутся как null.
    """
    _ensure_parent(path)
    temp_path = f"{path}.tmp"
    try:
        with open(temp_path, "w", encoding="utf-8") as f:
            json.dump(_jsonable(data), f, ensure_ascii=False, indent=2)
            f.write("\n")
        os.replace(temp_path, path)
    except Exception:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    logger.info("Отчет сохранен: %s", path)
