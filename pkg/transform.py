"""
Инвариантность PL относительно замены переменных.

Композиция ERM-задачи с гладким отображением Phi: R^k -> R^d,
перенос констант alpha' = a alpha, lambda' = b lambda (a, b - границы
спектра J_Phiᵀ J_Phi), шаг следствия eta_Phi = (a/b^2) eta* и численная
проверка переноса PL.
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, Optional, Tuple

import numpy as np

from numerics import as_matrix, as_vector, svd
from objective import ErmObjective, SampleLoss, as_probe_list
from utils.errors import InvalidInputError, NonContractiveError

logger = logging.getLogger(__name__)

# Допуски проверок отображения
SPECTRAL_SLACK: float = 1e-10
TRANSFER_SLACK: float = 1e-8


@dataclass(frozen=True)
class TransformSpec:
    """Гладкое отображение Phi с якобианом и глобальными границами a <= eig(JᵀJ) <= b."""

    name: str
    in_dim: int
    out_dim: int
    phi: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    a: float
    b: float
    vjp: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    image_note: str = "R^d"

    def __post_init__(self) -> None:
        if self.out_dim < self.in_dim:
            raise InvalidInputError(f"Нужно d >= k, получено d={self.out_dim}, k={self.in_dim}")
        if not (self.a > 0 and self.b >= self.a and np.isfinite(self.b)):
            raise InvalidInputError(f"Некорректные границы спектра a={self.a}, b={self.b}")

    def pullback(self, v: np.ndarray, g: np.ndarray) -> np.ndarray:
        """J_Phi(v)ᵀ g."""
        if self.vjp is not None:
            return self.vjp(v, g)
        return self.jacobian(v).T @ g


def identity_transform(k: int) -> TransformSpec:
    """Тождественное отображение, a = b = 1."""
    return TransformSpec(
        name="identity",
        in_dim=k,
        out_dim=k,
        phi=lambda v: np.array(v, dtype=float),
        jacobian=lambda v: np.eye(k),
        a=1.0,
        b=1.0,
        vjp=lambda v, g: np.array(g, dtype=float),
        inverse=lambda w: np.array(w, dtype=float),
    )


def linear_transform(matrix) -> TransformSpec:
    """
    Линейное отображение v -> M v, M размера d×k полного столбцового ранга.

    a = sigma_min(M)^2, b = sigma_max(M)^2. Образ - Range(M); при d > k
    обратное отображение корректно только на нем.
    """
    m = as_matrix(matrix)
    d, k = m.shape
    factor = svd(m)
    if factor.rank < k:
        raise InvalidInputError(f"Матрица отображения вырождена: ранг {factor.rank} < k={k}")
    note = "R^d" if d == k else f"Range(M): подпространство размерности {k} в R^{d}"
    return TransformSpec(
        name="linear",
        in_dim=k,
        out_dim=d,
        phi=lambda v: m @ v,
        jacobian=lambda v: m,
        a=factor.sigma_min_nonzero ** 2,
        b=factor.sigma_max ** 2,
        vjp=lambda v, g: m.T @ g,
        inverse=lambda w: factor.pinv @ w,
        image_note=note,
    )


def _solve_sine(w: np.ndarray, c: float, iters: int = 100) -> np.ndarray:
    """Поэлементно решает v + c sin v = w (Ньютон с защитой интервалом [w - c, w + c])."""
    lo, hi = w - c, w + c
    v = np.array(w, dtype=float)
    for _ in range(iters):
        g = v + c * np.sin(v) - w
        step = g / (1.0 + c * np.cos(v))
        v = np.clip(v - step, lo, hi)
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(v))):
            break
    return v


def sine_transform(k: int, c: float) -> TransformSpec:
    """
    Поэлементное отображение v -> v + c sin(v), c в (0, 1).

    Якобиан diag(1 + c cos v): a = (1 - c)^2, b = (1 + c)^2. Биекция R^k.
    """
    if not (0.0 < c < 1.0):
        raise InvalidInputError(f"Параметр c={c} должен лежать в (0, 1)")
    return TransformSpec(
        name="sine",
        in_dim=k,
        out_dim=k,
        phi=lambda v: v + c * np.sin(v),
        jacobian=lambda v: np.diag(1.0 + c * np.cos(v)),
        a=(1.0 - c) ** 2,
        b=(1.0 + c) ** 2,
        vjp=lambda v, g: (1.0 + c * np.cos(v)) * g,
        inverse=lambda w: _solve_sine(np.asarray(w, dtype=float), c),
    )


class TransformedLoss(SampleLoss):
    """v -> l(Phi(v)) с градиентом J_Phi(v)ᵀ grad l(Phi(v)) и beta' = b·beta."""

    def __init__(self, base: SampleLoss, transform: TransformSpec) -> None:
        if base.dim != transform.out_dim:
            raise InvalidInputError(f"Размерность потери {base.dim} != out_dim={transform.out_dim}")
        self.base = base
        self.transform = transform
        self.dim = transform.in_dim
        self.beta = transform.b * base.beta

    def value(self, v: np.ndarray) -> float:
        return self.base.value(self.transform.phi(v))

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return self.transform.pullback(v, self.base.gradient(self.transform.phi(v)))


def compose_objective(obj: ErmObjective, t: TransformSpec) -> ErmObjective:
    """
    Композиция ERM-задачи с отображением: l_i(Phi(·)) для всех i.

    Raises:
        InvalidInputError: obj.dim != t.out_dim
    """
    if obj.dim != t.out_dim:
        raise InvalidInputError(f"Размерность задачи {obj.dim} != out_dim={t.out_dim}")
    return ErmObjective([TransformedLoss(loss, t) for loss in obj.losses])


def _require_bounds(a: float, b: float) -> None:
    if not (np.isfinite(a) and np.isfinite(b) and a > 0 and b >= a):
        raise InvalidInputError(f"Нужно 0 < a <= b, получено a={a}, b={b}")


def composed_constants(alpha: float, lam: float, a: float, b: float) -> Tuple[float, float]:
    """
    Константы композиции: (alpha', lambda') = (a·alpha, b·lambda).
    """
    _require_bounds(a, b)
    if not (alpha > 0 and lam > 0):
        raise InvalidInputError("alpha и lambda должны быть положительными")
    return a * alpha, b * lam


def step_size_corollary(eta_star: float, a: float, b: float) -> float:
    """Шаг следствия eta_Phi = (a / b^2) · eta*."""
    _require_bounds(a, b)
    if not eta_star > 0:
        raise InvalidInputError("eta* должен быть положительным")
    return (a / b ** 2) * eta_star


def corollary_bound_factor(alpha: float, eta_star: float, a: float, b: float) -> float:
    """
    Множитель 1 - (a^2/b^2) · alpha eta* / 2.

    Raises:
        NonContractiveError: Множитель вне [0, 1]
    """
    _require_bounds(a, b)
    if not (alpha > 0 and eta_star > 0):
        raise InvalidInputError("alpha и eta* должны быть положительными")
    factor = 1.0 - (a ** 2 / b ** 2) * alpha * eta_star / 2.0
    if not (0.0 <= factor <= 1.0):
        raise NonContractiveError(f"Множитель следствия {factor:.6g} вне [0, 1]")
    return factor


def verify_pl_transfer(
    obj: ErmObjective, t: TransformSpec, alpha: float, probes: Iterable, loss_floor: float
) -> Dict[str, Any]:
    """
    Проверяет ||J_Phi(v)ᵀ grad L(Phi(v))||^2 >= a·alpha·L(Phi(v)) в пробах v из R^k.

    Args:
        obj: Исходная задача над R^d
        t: Отображение
        alpha: Константа PL исходной задачи
        probes: Пробы в R^k
        loss_floor: Порог по L(Phi(v))

    Returns:
        Словарь с passed, checked, worst_margin, failing_probe
    """
    if not alpha > 0:
        raise InvalidInputError("alpha должна быть положительной")
    target = t.a * alpha
    checked = 0
    worst_margin = np.inf
    failing_probe: Optional[int] = None
    for p_idx, v in enumerate(as_probe_list(probes)):
        v = as_vector(v, t.in_dim)
        w = t.phi(v)
        value = obj.value(w)
        if value <= loss_floor:
            continue
        g = t.pullback(v, obj.gradient(w))
        margin = (float(g @ g) - target * value) / max(1.0, target * value)
        checked += 1
        worst_margin = min(worst_margin, margin)
        if margin < -TRANSFER_SLACK and failing_probe is None:
            failing_probe = p_idx
    return {
        "passed": failing_probe is None,
        "alpha_prime": target,
        "checked": checked,
        "worst_margin": float(worst_margin),
        "failing_probe": failing_probe,
    }


def check_jacobian_bounds(t: TransformSpec, points: Iterable) -> Dict[str, Any]:
    """
    Проверяет a <= lambda_min(JᵀJ) и lambda_max(JᵀJ) <= b в заданных точках.

    Returns:
        Словарь с min_eigenvalue, max_eigenvalue и passed
    """
    lo, hi = np.inf, -np.inf
    for v in as_probe_list(points):
        jac = t.jacobian(as_vector(v, t.in_dim))
        eigenvalues = np.linalg.eigvalsh(jac.T @ jac)
        lo = min(lo, float(eigenvalues[0]))
        hi = max(hi, float(eigenvalues[-1]))
    passed = lo >= t.a - SPECTRAL_SLACK and hi <= t.b + SPECTRAL_SLACK
    return {"min_eigenvalue": lo, "max_eigenvalue": hi, "a": t.a, "b": t.b, "passed": passed}


def check_jacobian_fd(t: TransformSpec, points: Iterable, rtol: float = 1e-6) -> Dict[str, Any]:
    """Сравнивает якобиан с центральными разностями Phi."""
    worst = 0.0
    for v in as_probe_list(points):
        v = as_vector(v, t.in_dim)
        h = 1e-5 * max(1.0, float(np.linalg.norm(v)))
        numeric = np.empty((t.out_dim, t.in_dim))
        for p in range(t.in_dim):
            e = np.zeros(t.in_dim)
            e[p] = h
            numeric[:, p] = (t.phi(v + e) - t.phi(v - e)) / (2.0 * h)
        analytic = t.jacobian(v)
        error = float(np.linalg.norm(numeric - analytic)) / max(float(np.linalg.norm(analytic)), 1e-12)
        worst = max(worst, error)
    return {"worst_relative_error": worst, "passed": worst <= rtol}
