"""
Константы alpha (PL), beta (гладкость потерь по объектам) и lambda (гладкость риска).

Аналитические значения для сгенерированных задач и оценки по пробам
для задач-"черных ящиков". Происхождение каждой константы помечается
тегом analytic/estimated.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np

from config import LOSS_FLOOR_RELATIVE, PL_SLACK, PROBE_COUNT, PROBE_RADIUS_SCALES, PROBE_SEED
from numerics import LinearFactorization, as_vector, hessian_spectral_norm_estimate
from objective import ErmObjective, SampleLoss, as_probe_list
from utils.errors import InsufficientProbesError, InvalidInputError, NotInterpolatedError

logger = logging.getLogger(__name__)

SOURCE_ANALYTIC: str = "analytic"
SOURCE_ESTIMATED: str = "estimated"
SOURCE_TRANSFERRED: str = "transferred"

SMOOTHNESS_PROBES: int = 10


@dataclass(frozen=True)
class ConstantsReport:
    """Набор (alpha, beta, lambda) с тегами происхождения и метаданными оценки."""

    alpha: float
    beta: float
    lam: float
    alpha_source: str = SOURCE_ANALYTIC
    beta_source: str = SOURCE_ANALYTIC
    lam_source: str = SOURCE_ANALYTIC
    probe_count: int = 0
    alpha_worst_probe: Optional[np.ndarray] = field(default=None, compare=False)
    sample_betas: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "lam"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidInputError(f"Константа {name}={value} должна быть конечной и положительной")
        # ||grad L||^2 <= 2 lambda L для неотрицательной lambda-гладкой функции
        if self.alpha > 2.0 * self.lam * (1.0 + 1e-12):
            raise InvalidInputError(f"alpha={self.alpha:.6g} превышает 2*lambda={2.0 * self.lam:.6g}")

    def as_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "lambda": self.lam,
            "alpha_source": self.alpha_source,
            "beta_source": self.beta_source,
            "lambda_source": self.lam_source,
            "probe_count": self.probe_count,
            "alpha_worst_probe": None if self.alpha_worst_probe is None else self.alpha_worst_probe.tolist(),
        }


def standard_probes(center, count: int = PROBE_COUNT, seed: int = PROBE_SEED, scales=PROBE_RADIUS_SCALES) -> np.ndarray:
    """
    Стандартный набор проб: center + гауссовы возмущения на радиусах
    {0.1, 1, 10}·||center|| и чисто гауссовы точки.

    Args:
        center: Точка-минимизатор w*
        count: Общее число проб
        seed: Зерно генератора
        scales: Масштабы радиусов возмущений

    Returns:
        Массив проб формы (count, dim)
    """
    w_star = as_vector(center)
    dim = w_star.shape[0]
    if count < 1:
        raise InvalidInputError("Число проб должно быть >= 1")
    rng = np.random.default_rng(seed)
    radius = float(np.linalg.norm(w_star)) or 1.0
    groups = len(scales) + 1
    probes = np.empty((count, dim))
    for idx in range(count):
        group = idx % groups
        g = rng.standard_normal(dim)
        if group < len(scales):
            probes[idx] = w_star + scales[group] * radius * g / np.sqrt(dim)
        else:
            probes[idx] = g
    return probes


def default_loss_floor(obj: ErmObjective, w0) -> float:
    """Порог по потерям LOSS_FLOOR_RELATIVE * L(w0)."""
    return LOSS_FLOOR_RELATIVE * obj.value(w0)


def _resolve_floor(obj: ErmObjective, points: List[np.ndarray], loss_floor: Optional[float]) -> float:
    # без явного порога опорной точкой служит первая проба
    if loss_floor is not None:
        return loss_floor
    return default_loss_floor(obj, points[0]) if points else 0.0


def pl_ratio_scan(obj: ErmObjective, probes: Iterable, loss_floor: Optional[float] = None) -> Dict[str, Any]:
    """
    Вычисляет ||grad L(w)||^2 / L(w) во всех пробах с L(w) > loss_floor.

    loss_floor = None означает default_loss_floor относительно первой пробы.

    Returns:
        Словарь с min_ratio, worst_probe (индекс), worst_point, qualifying, total и loss_floor
    """
    points = as_probe_list(probes)
    loss_floor = _resolve_floor(obj, points, loss_floor)
    min_ratio = np.inf
    worst_probe: Optional[int] = None
    worst_point: Optional[np.ndarray] = None
    qualifying = 0
    for p_idx, point in enumerate(points):
        value = obj.value(point)
        if value <= loss_floor:
            continue
        grad = obj.gradient(point)
        ratio = float(grad @ grad) / value
        qualifying += 1
        if ratio < min_ratio:
            min_ratio, worst_probe, worst_point = ratio, p_idx, point
    return {
        "min_ratio": float(min_ratio),
        "worst_probe": worst_probe,
        "worst_point": worst_point,
        "qualifying": qualifying,
        "total": len(points),
        "loss_floor": loss_floor,
    }


def estimate_pl_constant(obj: ErmObjective, probes: Iterable, loss_floor: Optional[float] = None) -> float:
    """
    Оценка alpha как минимума ||grad L||^2 / L по пробам.

    Это верхняя граница для любой допустимой alpha в исследованной области.

    Raises:
        InsufficientProbesError: Все пробы ниже loss_floor
    """
    scan = pl_ratio_scan(obj, probes, loss_floor)
    if scan["qualifying"] == 0:
        raise InsufficientProbesError(f"Нет проб с L(w) > {scan['loss_floor']:.3g}")
    return scan["min_ratio"]


def analytic_constants_least_squares(f: LinearFactorization, y=None) -> ConstantsReport:
    """
    Аналитические константы для L(w) = (1/2n)||Xw - y||^2.

    lambda = sigma_max^2 / n, alpha = 2 sigma_min^2 / n (наименьшее ненулевое),
    beta_i = ||x_i||^2, beta = max beta_i.

    Args:
        f: SVD матрицы данных X (n×d)
        y: Метки; если заданы, проверяется y ∈ Range(X)

    Returns:
        ConstantsReport с тегами analytic

    Raises:
        NotInterpolatedError: y не лежит в Range(X)
    """
    n = f.rows
    if f.rank == 0:
        raise InvalidInputError("Матрица данных нулевая")
    if y is not None:
        labels = as_vector(y, n)
        off_range = labels - f.a @ (f.pinv @ labels)
        if float(np.linalg.norm(off_range)) > 1e-10 * max(1.0, float(np.linalg.norm(labels))):
            raise NotInterpolatedError("Метки не лежат в Range(X): точной интерполяции нет")
    sample_betas = np.einsum("ij,ij->i", f.a, f.a)
    return ConstantsReport(
        alpha=2.0 * f.sigma_min_nonzero ** 2 / n,
        beta=float(np.max(sample_betas)),
        lam=f.sigma_max ** 2 / n,
        sample_betas=sample_betas,
    )


def estimate_smoothness(obj: Union[ErmObjective, SampleLoss], probes: Iterable, iters: int = 200, seed: int = 0) -> float:
    """
    Оценка константы гладкости как максимума оценок ||Hess|| по пробам.

    Это нижняя граница для истинной глобальной константы.
    """
    points = as_probe_list(probes)
    if not points:
        raise InvalidInputError("Набор проб пуст")
    best = 0.0
    unconverged = 0
    for point in points:
        estimate, converged = hessian_spectral_norm_estimate(obj.value, point, iters=iters, seed=seed, grad=obj.gradient)
        unconverged += 0 if converged else 1
        best = max(best, estimate)
    if unconverged:
        logger.debug("Степенной метод не сошелся в %d из %d проб", unconverged, len(points))
    return best


def estimate_constants(
    obj: ErmObjective,
    probes: Iterable,
    loss_floor: Optional[float] = None,
    smoothness_probes: int = SMOOTHNESS_PROBES,
) -> ConstantsReport:
    """
    Константы по пробам для задач без аналитических значений.

    alpha - минимум ||grad L||^2 / L по пробам выше порога (с худшей пробой),
    lambda и beta_i - estimate_smoothness риска и каждой потери на первых
    smoothness_probes пробах.

    Args:
        obj: ERM-задача
        probes: Точки оценки
        loss_floor: Порог по потерям (None - default_loss_floor от первой пробы)
        smoothness_probes: Сколько проб брать для оценок гладкости

    Returns:
        ConstantsReport с тегами estimated

    Raises:
        InsufficientProbesError: Все пробы ниже loss_floor
    """
    points = as_probe_list(probes)
    scan = pl_ratio_scan(obj, points, loss_floor)
    if scan["qualifying"] == 0:
        raise InsufficientProbesError(f"Нет проб с L(w) > {scan['loss_floor']:.3g}")
    subset = points[:max(1, smoothness_probes)]
    sample_betas = np.array([estimate_smoothness(loss, subset) for loss in obj.losses])
    # гладкость оценивается снизу, alpha сверху; alpha <= 2 lambda <= 2 beta
    lam = max(estimate_smoothness(obj, subset), 0.5 * scan["min_ratio"])
    beta = max(float(np.max(sample_betas)), lam)
    report = ConstantsReport(
        alpha=scan["min_ratio"],
        beta=beta,
        lam=lam,
        alpha_source=SOURCE_ESTIMATED,
        beta_source=SOURCE_ESTIMATED,
        lam_source=SOURCE_ESTIMATED,
        probe_count=scan["qualifying"],
        alpha_worst_probe=np.array(scan["worst_point"]),
        sample_betas=sample_betas,
    )
    logger.info("Оценки по %d пробам: alpha=%.6g, beta=%.6g, lambda=%.6g", report.probe_count, report.alpha, beta, lam)
    return report


def verify_pl(obj: ErmObjective, alpha: float, probes: Iterable, loss_floor: Optional[float] = None) -> Dict[str, Any]:
    """
    Проверяет неравенство PL ||grad L(w)||^2 >= alpha L(w) во всех пробах выше loss_floor.

    Args:
        obj: ERM-задача
        alpha: Проверяемая константа (> 0)
        probes: Точки проверки
        loss_floor: Порог по значению потерь (None - default_loss_floor от первой пробы)

    Returns:
        Словарь:
        - passed: неравенство выполнено во всех подходящих пробах
        - checked: число подходящих проб
        - worst_margin: min (||grad L||^2 - alpha L) / max(1, alpha L)
        - failing_probe, failing_point: первая проба с нарушением (или None)
    """
    if not alpha > 0:
        raise InvalidInputError("alpha должна быть положительной")
    points = as_probe_list(probes)
    loss_floor = _resolve_floor(obj, points, loss_floor)
    checked = 0
    worst_margin = np.inf
    failing_probe: Optional[int] = None
    failing_point: Optional[list] = None
    for p_idx, point in enumerate(points):
        value = obj.value(point)
        if value <= loss_floor:
            continue
        grad = obj.gradient(point)
        scale = max(1.0, alpha * value)
        margin = (float(grad @ grad) - alpha * value) / scale
        checked += 1
        worst_margin = min(worst_margin, margin)
        if margin < -PL_SLACK and failing_probe is None:
            failing_probe, failing_point = p_idx, point.tolist()
    passed = failing_probe is None
    if not passed:
        logger.info("PL с alpha=%.6g нарушено в пробе %d", alpha, failing_probe)
    return {
        "passed": passed,
        "alpha": alpha,
        "checked": checked,
        "worst_margin": float(worst_margin),
        "failing_probe": failing_probe,
        "failing_point": failing_point,
    }
