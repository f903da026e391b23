"""
Плотная линейная алгебра и численное дифференцирование.

Содержит SVD с псевдообратной матрицей, проекцию на Range(A†),
центральные конечные разности и степенной метод для оценки
спектральной нормы гессиана. Все функции чистые и потокобезопасные.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from config import FD_RELATIVE_STEP, RANK_RTOL
from utils.errors import InvalidInputError, NumericalFailureError

logger = logging.getLogger(__name__)

Matrix = np.ndarray
ScalarFunction = Callable[[np.ndarray], float]
GradientFunction = Callable[[np.ndarray], np.ndarray]


def as_matrix(a) -> Matrix:
    """
    Приводит вход к вещественной матрице и проверяет инварианты типа Matrix.

    Args:
        a: Двумерный массив или вложенные списки

    Returns:
        Матрица float64 формы (rows, cols)

    Raises:
        InvalidInputError: Не двумерный вход, пустые измерения или неконечные элементы
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise InvalidInputError(f"Ожидалась матрица, получен массив размерности {arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"Пустая матрица формы {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("Матрица содержит неконечные элементы")
    return arr


def as_vector(w, dim: Optional[int] = None) -> np.ndarray:
    """
    Приводит вход к вещественному вектору.

    Args:
        w: Вектор
        dim: Ожидаемая размерность (если задана)

    Returns:
        Одномерный массив float64
    """
    vec = np.asarray(w, dtype=float).reshape(-1)
    if dim is not None and vec.shape[0] != dim:
        raise InvalidInputError(f"Размерность вектора {vec.shape[0]}, ожидалось {dim}")
    return vec


@dataclass(frozen=True)
class LinearFactorization:
    """SVD матрицы A (k×d) вместе с рангом, крайними сингулярными числами и A†."""

    a: Matrix
    u: Matrix
    singular_values: np.ndarray
    v: Matrix
    rank: int
    sigma_min_nonzero: float
    sigma_max: float
    pinv: Matrix

    @property
    def rows(self) -> int:
        return self.a.shape[0]

    @property
    def cols(self) -> int:
        return self.a.shape[1]

    def reconstruct(self) -> Matrix:
        """Собирает U Σ Vᵀ обратно."""
        sigma = np.zeros((self.rows, self.cols))
        p = self.singular_values.shape[0]
        sigma[:p, :p] = np.diag(self.singular_values)
        return self.u @ sigma @ self.v.T

    def range_basis(self) -> Matrix:
        """Ортонормированный базис Range(A†) = Range(Aᵀ) (первые rank столбцов V)."""
        return self.v[:, : self.rank]

    def null_basis(self) -> Matrix:
        """Ортонормированный базис Null(A)."""
        return self.v[:, self.rank:]


def svd(a) -> LinearFactorization:
    """
    Вычисляет полное SVD и псевдообратную матрицу Мура-Пенроуза.

    Ранг определяется по порогу tau_rank = RANK_RTOL * sigma_max * max(rows, cols).

    Args:
        a: Матрица k×d с конечными элементами

    Returns:
        LinearFactorization с U (k×k), V (d×d), сингулярными числами по убыванию и A† (d×k)
    """
    mat = as_matrix(a)
    rows, cols = mat.shape
    try:
        u, s, vt = np.linalg.svd(mat, full_matrices=True)
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"SVD не сошлось: {e}") from e

    sigma_max = float(s[0]) if s.size else 0.0
    tol = RANK_RTOL * sigma_max * max(rows, cols)
    rank = int(np.sum(s > tol))
    # Для нулевой матрицы ранг 0: псевдообратная тоже нулевая
    sigma_min_nonzero = float(s[rank - 1]) if rank > 0 else 0.0

    v = vt.T
    pinv = (v[:, :rank] / s[:rank]) @ u[:, :rank].T

    logger.debug("SVD %dx%d: rank=%d, sigma_max=%.6g, sigma_min=%.6g", rows, cols, rank, sigma_max, sigma_min_nonzero)
    return LinearFactorization(
        a=mat,
        u=u,
        singular_values=s,
        v=v,
        rank=rank,
        sigma_min_nonzero=sigma_min_nonzero,
        sigma_max=sigma_max,
        pinv=pinv,
    )


def project_range_pinv(f: LinearFactorization, w) -> np.ndarray:
    """
    Ортогональная проекция ŵ = A†A w на Range(A†).

    Args:
        f: Разложение матрицы A
        w: Вектор размерности cols(A)

    Returns:
        Проекция w
    """
    vec = as_vector(w, f.cols)
    return f.pinv @ (f.a @ vec)


def default_fd_step(w: np.ndarray) -> float:
    """Шаг конечных разностей по умолчанию: FD_RELATIVE_STEP * max(1, ||w||)."""
    return FD_RELATIVE_STEP * max(1.0, float(np.linalg.norm(w)))


def finite_difference_gradient(f: ScalarFunction, w, h: Optional[float] = None) -> np.ndarray:
    """
    Градиент по центральным разностям (f(w + h e_p) - f(w - h e_p)) / (2h).

    Args:
        f: Скалярная функция вектора
        w: Точка
        h: Шаг (по умолчанию default_fd_step)

    Returns:
        Приближение градиента

    Raises:
        NumericalFailureError: Функция вернула неконечное значение
    """
    point = as_vector(w)
    step = default_fd_step(point) if h is None else float(h)
    if not step > 0:
        raise InvalidInputError(f"Шаг конечных разностей должен быть положительным, получен {h}")

    grad = np.empty_like(point)
    for p in range(point.shape[0]):
        shifted = point.copy()
        shifted[p] += step
        f_plus = f(shifted)
        shifted[p] = point[p] - step
        f_minus = f(shifted)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalFailureError(f"Неконечное значение функции при разности по координате {p}")
        grad[p] = (f_plus - f_minus) / (2.0 * step)
    return grad


def hessian_spectral_norm_estimate(
    f: ScalarFunction,
    w,
    iters: int = 100,
    seed: int = 0,
    grad: Optional[GradientFunction] = None,
    h: Optional[float] = None,
    tol: float = 1e-10,
) -> Tuple[float, bool]:
    """
    Оценивает наибольшее по модулю собственное число гессиана степенным методом.

    Произведение гессиана на вектор: (grad(w + h v) - grad(w - h v)) / (2h).
    Если аналитический градиент не передан, он считается конечными разностями
    с более крупным шагом.

    Args:
        f: Скалярная функция
        w: Точка
        iters: Максимальное число итераций
        seed: Зерно начального вектора
        grad: Аналитический градиент (опционально)
        h: Шаг разности градиентов
        tol: Относительный порог сходимости отношения Рэлея

    Returns:
        Кортеж (оценка, флаг сходимости)
    """
    point = as_vector(w)
    scale = max(1.0, float(np.linalg.norm(point)))
    if grad is None:
        inner = 1e-4 * scale
        grad_fn: GradientFunction = lambda x: finite_difference_gradient(f, x, h=inner)
        step = 1e-3 * scale if h is None else float(h)
    else:
        grad_fn = grad
        step = default_fd_step(point) if h is None else float(h)

    def hvp(direction: np.ndarray) -> np.ndarray:
        product = (grad_fn(point + step * direction) - grad_fn(point - step * direction)) / (2.0 * step)
        if not np.all(np.isfinite(product)):
            raise NumericalFailureError("Неконечное произведение гессиана на вектор")
        return product

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(point.shape[0])
    v /= np.linalg.norm(v)

    estimate = 0.0
    for it in range(max(1, iters)):
        hv = hvp(v)
        rayleigh = abs(float(v @ hv))
        norm = float(np.linalg.norm(hv))
        if norm == 0.0:
            return 0.0, True
        if it > 0 and abs(rayleigh - estimate) <= tol * max(rayleigh, np.finfo(float).tiny):
            return rayleigh, True
        estimate = rayleigh
        v = hv / norm

    logger.debug("Степенной метод не сошелся за %d итераций, оценка %.6g", iters, estimate)
    return estimate, False


def random_orthogonal(n: int, rng: np.random.Generator) -> Matrix:
    """Случайная ортогональная матрица n×n (QR гауссовой матрицы с нормировкой знаков)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def matrix_with_spectrum(rows: int, cols: int, singular_values: Sequence[float], rng: np.random.Generator) -> Matrix:
    """
    Строит матрицу rows×cols с заданными сингулярными числами U diag(s) Vᵀ.

    Args:
        rows: Число строк
        cols: Число столбцов
        singular_values: Не более min(rows, cols) неотрицательных чисел
        rng: Генератор случайных чисел

    Returns:
        Матрица с предписанным спектром
    """
    spectrum = np.asarray(singular_values, dtype=float).reshape(-1)
    p = min(rows, cols)
    if spectrum.shape[0] > p or np.any(spectrum < 0) or not np.all(np.isfinite(spectrum)):
        raise InvalidInputError(f"Спектр {spectrum.tolist()} несовместим с формой {rows}x{cols}")
    sigma = np.zeros((rows, cols))
    sigma[: spectrum.shape[0], : spectrum.shape[0]] = np.diag(spectrum)
    return random_orthogonal(rows, rng) @ sigma @ random_orthogonal(cols, rng).T
