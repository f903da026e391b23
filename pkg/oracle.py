"""
Независимые эталоны перебором.

Точное математическое ожидание потерь после одного шага SGD (перебор
всех n^m упорядоченных батчей), его оценка Монте-Карло и константа PL
по сетке для функций одной или двух переменных.
"""
import itertools
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config import ENUMERATION_BUDGET
from numerics import as_vector, finite_difference_gradient
from objective import ErmObjective
from utils.errors import EnumerationTooLargeError, InsufficientProbesError, InvalidInputError

logger = logging.getLogger(__name__)

Batch = Tuple[int, ...]


def enumerate_batches(n: int, m: int, budget: int = ENUMERATION_BUDGET) -> List[Batch]:
    """
    Все n^m упорядоченных батчей с возвращением.

    Raises:
        EnumerationTooLargeError: n^m > budget
    """
    if n < 1 or m < 1:
        raise InvalidInputError(f"Нужно n >= 1 и m >= 1, получено n={n}, m={m}")
    total = n ** m
    if total > budget:
        raise EnumerationTooLargeError(f"Перебор {n}^{m} = {total} батчей превышает бюджет {budget}")
    return list(itertools.product(range(n), repeat=m))


def expected_loss_over_batches(obj: ErmObjective, w, eta: float, batches: Sequence[Batch]) -> float:
    """
    Среднее L(w - eta · batch_gradient) по равновероятным батчам.

    Сумма округляется корректно (math.fsum), поэтому результат не зависит
    от порядка батчей.
    """
    point = as_vector(w, obj.dim)
    values = [obj.value(point - eta * obj.batch_gradient(point, np.asarray(batch))) for batch in batches]
    return math.fsum(values) / len(values)


def exact_one_step_expectation(obj: ErmObjective, w, eta: float, m: int, budget: int = ENUMERATION_BUDGET) -> float:
    """
    E[L(w_1)] по всем n^m упорядоченным батчам.

    Args:
        obj: ERM-задача
        w: Текущая точка
        eta: Шаг
        m: Размер батча
        budget: Предельное число батчей

    Returns:
        Точное математическое ожидание потерь после одного шага

    Raises:
        EnumerationTooLargeError: n^m > budget
    """
    if not (np.isfinite(eta) and eta >= 0):
        raise InvalidInputError(f"Шаг eta={eta} должен быть неотрицательным")
    return expected_loss_over_batches(obj, w, eta, enumerate_batches(obj.n, m, budget))


def monte_carlo_one_step_expectation(
    obj: ErmObjective, w, eta: float, m: int, samples: int, seed: int = 0
) -> Tuple[float, float]:
    """
    Оценка E[L(w_1)] по случайным батчам.

    Для наименьших квадратов считается векторно по всем выборкам сразу.

    Returns:
        Кортеж (среднее, стандартная ошибка)
    """
    if samples < 2:
        raise InvalidInputError("Нужно хотя бы две выборки")
    point = as_vector(w, obj.dim)
    rng = np.random.default_rng(seed)
    batches = rng.integers(0, obj.n, size=(samples, m))
    x = obj.design
    if x is not None:
        y = obj.targets
        residuals = x @ point - y
        grads = (residuals[:, None] * x)[batches].mean(axis=1)
        moved = point[None, :] - eta * grads
        fitted = moved @ x.T - y[None, :]
        values = 0.5 * np.mean(fitted * fitted, axis=1)
    else:
        values = np.array([obj.value(point - eta * obj.batch_gradient(point, batch)) for batch in batches])
    return float(np.mean(values)), float(np.std(values, ddof=1) / np.sqrt(samples))


def grid_pl_constant(
    f: Callable[[np.ndarray], float],
    box: Sequence[Tuple[float, float]],
    resolution: int,
    loss_floor: float,
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> float:
    """
    min ||grad f||^2 / f по узлам равномерной сетки в box с f > loss_floor.

    Args:
        f: Функция одной или двух переменных (аргумент - вектор)
        box: Границы [(lo, hi)] по каждой координате
        resolution: Число узлов по каждой оси
        loss_floor: Порог по значению f
        grad: Аналитический градиент (по умолчанию центральные разности)

    Returns:
        Оценка константы PL на сетке

    Raises:
        InsufficientProbesError: Ни один узел не выше loss_floor
    """
    bounds = [tuple(map(float, b)) for b in box]
    if not 1 <= len(bounds) <= 2:
        raise InvalidInputError(f"Сетка поддерживает размерность 1 или 2, получено {len(bounds)}")
    if resolution < 2:
        raise InvalidInputError("Нужно не меньше двух узлов по оси")
    if any(not lo < hi for lo, hi in bounds):
        raise InvalidInputError(f"Некорректные границы {bounds}")

    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    best = np.inf
    qualifying = 0
    for node in itertools.product(*axes):
        point = np.array(node, dtype=float)
        value = float(f(point))
        if value <= loss_floor:
            continue
        g = grad(point) if grad is not None else finite_difference_gradient(f, point)
        qualifying += 1
        best = min(best, float(g @ g) / value)
    if qualifying == 0:
        raise InsufficientProbesError(f"Нет узлов сетки с f > {loss_floor:.3g}")
    logger.debug("Сетка %s: %d узлов выше порога, alpha_grid=%.6g", bounds, qualifying, best)
    return best
