"""
Задачи ERM в режиме интерполяции.

Потери по объектам, их среднее L(w) = (1/n) sum l_i(w), полный
и мини-батч градиенты, выбор батча с возвращением и проверки
интерполяции и оценки ||grad l_i||^2 <= 2 beta l_i.
"""
import logging
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from config import RATIO_LOSS_FLOOR, RATIO_SLACK
from numerics import as_matrix, as_vector, default_fd_step, finite_difference_gradient
from utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

# Индексы батча: одномерный массив целых из [0, n), повторы допустимы
BatchIndices = np.ndarray


class SampleLoss:
    """
    Неотрицательная дифференцируемая потеря одного объекта.

    Подклассы задают dim, beta (заявленная константа гладкости),
    value(w) и gradient(w).
    """

    dim: int
    beta: float

    def value(self, w: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class QuadraticLoss(SampleLoss):
    """l(w) = 1/2 (w - c)ᵀ H (w - c), H симметричная неотрицательно определенная."""

    def __init__(self, hessian, center, beta: Optional[float] = None) -> None:
        h = as_matrix(hessian)
        if h.shape[0] != h.shape[1] or not np.allclose(h, h.T):
            raise InvalidInputError("Гессиан квадратичной потери должен быть симметричной квадратной матрицей")
        eigenvalues = np.linalg.eigvalsh(h)
        if eigenvalues[0] < -1e-12 * max(1.0, abs(eigenvalues[-1])):
            raise InvalidInputError("Гессиан квадратичной потери должен быть неотрицательно определен")
        self.hessian = h
        self.center = as_vector(center, h.shape[0])
        self.dim = h.shape[0]
        self.beta = float(eigenvalues[-1]) if beta is None else float(beta)
        if not self.beta > 0:
            raise InvalidInputError("Константа гладкости должна быть положительной")

    def value(self, w: np.ndarray) -> float:
        diff = w - self.center
        return 0.5 * float(diff @ (self.hessian @ diff))

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return self.hessian @ (w - self.center)


class LeastSquaresLoss(SampleLoss):
    """l(w) = 1/2 (xᵀw - y)^2, beta = ||x||^2."""

    def __init__(self, x, y: float, beta: Optional[float] = None) -> None:
        self.x = as_vector(x)
        self.y = float(y)
        self.dim = self.x.shape[0]
        self.beta = float(self.x @ self.x) if beta is None else float(beta)
        if not self.beta > 0:
            raise InvalidInputError("Нулевой вектор признаков: beta = ||x||^2 должна быть положительной")

    def residual(self, w: np.ndarray) -> float:
        return float(self.x @ w) - self.y

    def value(self, w: np.ndarray) -> float:
        r = self.residual(w)
        return 0.5 * r * r

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return self.residual(w) * self.x


def scalar_quadratic_loss(beta: float, center: float) -> LeastSquaresLoss:
    """Одномерная потеря l(w) = 1/2 beta (w - c)^2 (равенство в оценке ||l'||^2 <= 2 beta l)."""
    root = float(np.sqrt(beta))
    return LeastSquaresLoss([root], root * float(center))


class ErmObjective:
    """
    Эмпирический риск: упорядоченный набор n потерь общей размерности.

    Объект неизменяем после создания. Для наборов, целиком состоящих из
    LeastSquaresLoss, значения и градиенты считаются через общую матрицу X.
    """

    def __init__(self, losses: Sequence[SampleLoss]) -> None:
        self.losses: tuple = tuple(losses)
        if not self.losses:
            raise InvalidInputError("ERM-задача должна содержать хотя бы одну потерю")
        dims = {loss.dim for loss in self.losses}
        if len(dims) != 1:
            raise InvalidInputError(f"Потери разной размерности: {sorted(dims)}")
        self.dim: int = dims.pop()
        self.n: int = len(self.losses)
        self.sample_betas: np.ndarray = np.array([loss.beta for loss in self.losses], dtype=float)

        self._design: Optional[np.ndarray] = None
        self._targets: Optional[np.ndarray] = None
        if all(isinstance(loss, LeastSquaresLoss) for loss in self.losses):
            self._design = np.vstack([loss.x for loss in self.losses])
            self._targets = np.array([loss.y for loss in self.losses])

    @property
    def design(self) -> Optional[np.ndarray]:
        """Матрица X, если все потери - наименьшие квадраты, иначе None."""
        return self._design

    @property
    def targets(self) -> Optional[np.ndarray]:
        """Метки y для задачи наименьших квадратов, иначе None."""
        return self._targets

    def _check(self, w) -> np.ndarray:
        return as_vector(w, self.dim)

    def sample_values(self, w) -> np.ndarray:
        """Значения всех l_i(w)."""
        point = self._check(w)
        if self._design is not None:
            r = self._design @ point - self._targets
            return 0.5 * r * r
        return np.array([loss.value(point) for loss in self.losses], dtype=float)

    def sample_gradient(self, i: int, w) -> np.ndarray:
        """Градиент i-й потери."""
        return self.losses[i].gradient(self._check(w))

    def value(self, w) -> float:
        return float(np.sum(self.sample_values(w)) / self.n)

    def gradient(self, w) -> np.ndarray:
        point = self._check(w)
        if self._design is not None:
            return self._design.T @ (self._design @ point - self._targets) / self.n
        total = np.zeros(self.dim)
        for loss in self.losses:
            total += loss.gradient(point)
        return total / self.n

    def batch_gradient(self, w, batch: BatchIndices) -> np.ndarray:
        """(1/m) sum_j grad l_{i_j}(w) в порядке индексов батча."""
        point = self._check(w)
        if self._design is not None:
            rows = self._design[batch]
            return rows.T @ (rows @ point - self._targets[batch]) / batch.shape[0]
        total = np.zeros(self.dim)
        for i in batch:
            total += self.losses[i].gradient(point)
        return total / batch.shape[0]


def erm_value(obj: ErmObjective, w) -> float:
    """
    Значение эмпирического риска L(w) = (1/n) sum l_i(w).

    Args:
        obj: ERM-задача
        w: Точка размерности obj.dim

    Returns:
        Неотрицательное среднее потерь
    """
    return obj.value(w)


def _as_batch(obj: ErmObjective, batch) -> BatchIndices:
    indices = np.asarray(batch, dtype=np.int64).reshape(-1)
    if indices.shape[0] == 0:
        raise InvalidInputError("Пустой батч")
    if np.any(indices < 0) or np.any(indices >= obj.n):
        raise InvalidInputError(f"Индексы батча вне диапазона [0, {obj.n})")
    return indices


def minibatch_gradient(obj: ErmObjective, w, batch) -> np.ndarray:
    """
    Мини-батч градиент (1/m) sum_j grad l_{i_j}(w).

    Args:
        obj: ERM-задача
        w: Точка
        batch: Индексы батча (повторы допустимы)

    Returns:
        Усредненный градиент батча
    """
    return obj.batch_gradient(w, _as_batch(obj, batch))


def sample_batch(n: int, m: int, rng: np.random.Generator) -> BatchIndices:
    """
    Выбирает m индексов равномерно с возвращением из {0, ..., n-1}.

    Args:
        n: Число объектов
        m: Размер батча
        rng: Собственный генератор потребителя

    Returns:
        Массив из m индексов
    """
    if n < 1:
        raise InvalidInputError("Число объектов n должно быть >= 1")
    if m < 1:
        raise InvalidInputError("Размер батча m должен быть >= 1")
    return rng.integers(0, n, size=m)


def check_interpolation(obj: ErmObjective, w, tol: float) -> Dict[str, Any]:
    """
    Проверяет, что все потери по объектам в точке w не больше tol.

    Args:
        obj: ERM-задача
        w: Точка
        tol: Порог

    Returns:
        Словарь:
        - max_residual: наибольшее l_i(w)
        - residuals: список всех l_i(w)
        - passed: max_residual <= tol
    """
    if not tol > 0:
        raise InvalidInputError("Порог интерполяции должен быть положительным")
    values = obj.sample_values(w)
    max_residual = float(np.max(values))
    return {
        "max_residual": max_residual,
        "residuals": values.tolist(),
        "passed": max_residual <= tol,
    }


def as_probe_list(probes: Iterable) -> List[np.ndarray]:
    """Приводит набор проб (список векторов или 2-D массив) к списку векторов."""
    if isinstance(probes, np.ndarray) and probes.ndim == 1:
        return [as_vector(probes)]
    return [as_vector(p) for p in probes]


def check_sample_gradient_bound(obj: ErmObjective, probes: Iterable) -> Dict[str, Any]:
    """
    Проверяет ||grad l_i(w)||^2 <= 2 beta_i l_i(w) во всех пробах.

    Точки, где l_i(w) не выше RATIO_LOSS_FLOOR, пропускаются: там отношение
    определяется округлением.

    Args:
        obj: ERM-задача с заданными beta_i
        probes: Непустой набор точек

    Returns:
        Словарь:
        - worst_ratio: наибольшее ||grad l_i||^2 / (2 beta_i l_i)
        - worst_sample, worst_probe: где достигнуто
        - checked: число проверенных пар (проба, объект)
        - passed: worst_ratio <= 1 + RATIO_SLACK
    """
    points = as_probe_list(probes)
    if not points:
        raise InvalidInputError("Набор проб пуст")

    worst_ratio = 0.0
    worst_sample: Optional[int] = None
    worst_probe: Optional[int] = None
    checked = 0
    for p_idx, point in enumerate(points):
        point = as_vector(point, obj.dim)
        for i, loss in enumerate(obj.losses):
            value = loss.value(point)
            if value <= RATIO_LOSS_FLOOR:
                continue
            grad = loss.gradient(point)
            ratio = float(grad @ grad) / (2.0 * loss.beta * value)
            checked += 1
            if ratio > worst_ratio:
                worst_ratio, worst_sample, worst_probe = ratio, i, p_idx

    passed = worst_ratio <= 1.0 + RATIO_SLACK
    if not passed:
        logger.debug("Оценка градиента нарушена: ratio=%.6g (объект %s, проба %s)", worst_ratio, worst_sample, worst_probe)
    return {
        "worst_ratio": worst_ratio,
        "worst_sample": worst_sample,
        "worst_probe": worst_probe,
        "checked": checked,
        "passed": passed,
    }


def check_gradients(obj: ErmObjective, probes: Iterable, rtol: float = 1e-6) -> Dict[str, Any]:
    """
    Сравнивает аналитический градиент L с центральными разностями.

    Args:
        obj: ERM-задача
        probes: Точки проверки
        rtol: Допустимая относительная ошибка

    Returns:
        Словарь с worst_relative_error, worst_probe и passed
    """
    worst = 0.0
    worst_probe: Optional[int] = None
    for p_idx, point in enumerate(as_probe_list(probes)):
        analytic = obj.gradient(point)
        numeric = finite_difference_gradient(obj.value, point, h=default_fd_step(point))
        denom = max(float(np.linalg.norm(analytic)), 1e-12)
        error = float(np.linalg.norm(numeric - analytic)) / denom
        if error > worst:
            worst, worst_probe = error, p_idx
    return {"worst_relative_error": worst, "worst_probe": worst_probe, "passed": worst <= rtol}
