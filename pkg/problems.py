"""
Генераторы синтетических задач с точными константами.

Интерполирующие наименьшие квадраты, композиции с линейным отображением
и нелинейные (невыпуклые) композиции. Каждый экземпляр перед возвратом
проходит набор проверок инвариантов; при нарушении генерация падает.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np

from config import PROBE_COUNT, PROBE_RADIUS_SCALES, PROBE_SEED
from constants import (
    SOURCE_TRANSFERRED,
    ConstantsReport,
    analytic_constants_least_squares,
    standard_probes,
    verify_pl,
)
from linmap import ComposedLinearProblem, build_composed_linear_problem, check_gradient_range
from numerics import as_matrix, as_vector, matrix_with_spectrum, svd
from objective import (
    ErmObjective,
    LeastSquaresLoss,
    check_gradients,
    check_interpolation,
    check_sample_gradient_bound,
)
from transform import (
    TransformSpec,
    check_jacobian_bounds,
    compose_objective,
    composed_constants,
    linear_transform,
    sine_transform,
)
from utils.errors import InvalidInputError, VerificationFailure

logger = logging.getLogger(__name__)

KIND_LEAST_SQUARES: str = "least_squares"
KIND_COMPOSED_LINEAR: str = "composed_linear"
KIND_COMPOSED_NONLINEAR: str = "composed_nonlinear"
KINDS = (KIND_LEAST_SQUARES, KIND_COMPOSED_LINEAR, KIND_COMPOSED_NONLINEAR)

INTERPOLATION_RTOL: float = 1e-12
# Число проб для проверок, которые дороже PL: разностный градиент и оценка по объектам
GRADIENT_PROBES: int = 100
SAMPLE_BOUND_PROBES: int = 200


@dataclass(frozen=True)
class ProblemInstance:
    """Сгенерированная задача: цель, аналитические константы и интерполирующая точка."""

    objective: ErmObjective
    constants: ConstantsReport
    w_star: np.ndarray
    kind: str
    transform: Optional[TransformSpec] = None
    linmap: Optional[ComposedLinearProblem] = None
    base: Optional["ProblemInstance"] = None
    parameters: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.objective.dim

    def interpolation_tolerance(self) -> float:
        """1e-12 · max(1, max beta_i · max(1, ||w*||^2))."""
        radius2 = max(1.0, float(self.w_star @ self.w_star))
        return INTERPOLATION_RTOL * max(1.0, float(np.max(self.objective.sample_betas)) * radius2)

    def alignment_probes(self) -> np.ndarray:
        """
        Пробы w* + s·v_min вдоль правого сингулярного вектора наименьшего
        ненулевого сингулярного числа X (только для наименьших квадратов).

        В этих точках ||grad L||^2 / L = alpha в точности.
        """
        if self.kind != KIND_LEAST_SQUARES or self.objective.design is None:
            return np.empty((0, self.dim))
        f = svd(self.objective.design)
        direction = f.v[:, f.rank - 1]
        radius = float(np.linalg.norm(self.w_star)) or 1.0
        return np.vstack([self.w_star + s * radius * direction for s in PROBE_RADIUS_SCALES])

    def probes(self, count: int = PROBE_COUNT, seed: int = PROBE_SEED) -> np.ndarray:
        """Стандартный набор проб вокруг w* вместе с пробами выравнивания."""
        return np.vstack([standard_probes(self.w_star, count, seed), self.alignment_probes()])

    def summary(self) -> Dict[str, Any]:
        info: Dict[str, Any] = {"kind": self.kind, "n": self.objective.n, "dim": self.dim}
        info.update(self.parameters)
        info["constants"] = self.constants.as_dict()
        if self.transform is not None:
            info["transform"] = {"name": self.transform.name, "a": self.transform.a, "b": self.transform.b,
                                 "image": self.transform.image_note}
        if self.linmap is not None:
            f = self.linmap.factorization
            info["linmap"] = {
                "rank": f.rank,
                "sigma_min": f.sigma_min_nonzero,
                "sigma_max": f.sigma_max,
                "tilde_alpha": self.linmap.tilde_alpha,
                "tilde_beta": self.linmap.tilde_beta,
                "tilde_lambda": self.linmap.tilde_lambda,
            }
        return info


def validate_instance(inst: ProblemInstance, probes: Optional[np.ndarray] = None, alpha: Optional[float] = None) -> Dict[str, Dict[str, Any]]:
    """
    Полный набор проверок инвариантов экземпляра.

    Args:
        inst: Экземпляр
        probes: Пробы (по умолчанию inst.probes())
        alpha: Проверяемая константа PL (по умолчанию inst.constants.alpha)

    Returns:
        Словарь отчетов по именам проверок; у каждого отчета есть ключ passed
    """
    points = inst.probes() if probes is None or len(probes) == 0 else probes
    reports: Dict[str, Dict[str, Any]] = {}
    interpolation = check_interpolation(inst.objective, inst.w_star, inst.interpolation_tolerance())
    interpolation.pop("residuals")
    reports["interpolation"] = interpolation
    reports["pl"] = verify_pl(inst.objective, inst.constants.alpha if alpha is None else alpha, points, loss_floor=0.0)
    reports["sample_gradient_bound"] = check_sample_gradient_bound(inst.objective, points[:SAMPLE_BOUND_PROBES])
    reports["gradients"] = check_gradients(inst.objective, points[:GRADIENT_PROBES])
    if inst.transform is not None:
        reports["jacobian_bounds"] = check_jacobian_bounds(inst.transform, points)
    if inst.linmap is not None:
        reports["gradient_range"] = check_gradient_range(inst.linmap, points[:SAMPLE_BOUND_PROBES])
    return reports


def _validated(inst: ProblemInstance) -> ProblemInstance:
    reports = validate_instance(inst)
    failed = sorted(name for name, report in reports.items() if not report["passed"])
    if failed:
        raise VerificationFailure(f"Экземпляр {inst.kind} не прошел проверки: {', '.join(failed)}")
    logger.info("Сгенерирован экземпляр %s: n=%d, dim=%d, alpha=%.6g, beta=%.6g, lambda=%.6g",
                inst.kind, inst.objective.n, inst.dim, inst.constants.alpha, inst.constants.beta, inst.constants.lam)
    return inst


def _unit_gaussian(dim: int, rng: np.random.Generator) -> np.ndarray:
    w = rng.standard_normal(dim)
    return w / np.linalg.norm(w)


def least_squares_instance(x, w_star, parameters: Optional[Dict[str, Any]] = None) -> ProblemInstance:
    """
    Экземпляр наименьших квадратов по явным данным: l_i(w) = 1/2 (x_iᵀw - y_i)^2, y = X w*.

    Args:
        x: Матрица данных n×d (без нулевых строк)
        w_star: Интерполирующая точка

    Returns:
        Проверенный ProblemInstance с аналитическими константами
    """
    data = as_matrix(x)
    w_star = as_vector(w_star, data.shape[1])
    labels = data @ w_star
    factorization = svd(data)
    constants = analytic_constants_least_squares(factorization, labels)
    objective = ErmObjective([LeastSquaresLoss(row, y) for row, y in zip(data, labels)])
    return _validated(ProblemInstance(
        objective=objective,
        constants=constants,
        w_star=w_star,
        kind=KIND_LEAST_SQUARES,
        parameters=dict(parameters or {}),
    ))


def gen_interpolated_least_squares(n: int, d: int, seed: int, spectrum: Optional[Sequence[float]] = None) -> ProblemInstance:
    """
    Интерполирующие наименьшие квадраты со случайными гауссовыми данными.

    Args:
        n: Число объектов
        d: Размерность (d >= n)
        seed: Зерно генератора
        spectrum: n положительных сингулярных чисел X (опционально)

    Returns:
        ProblemInstance вида least_squares
    """
    if n < 1 or d < 1:
        raise InvalidInputError(f"Нужно n >= 1 и d >= 1, получено n={n}, d={d}")
    if d < n:
        raise InvalidInputError(f"Нужно d >= n для точной интерполяции, получено n={n}, d={d}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    if spectrum is not None:
        values = np.asarray(spectrum, dtype=float).reshape(-1)
        if values.shape[0] != n:
            raise InvalidInputError(f"Длина спектра {values.shape[0]} не равна n={n}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InvalidInputError("Сингулярные числа спектра должны быть положительными")
        u, _, vt = np.linalg.svd(x, full_matrices=False)
        x = (u * values) @ vt
    w_star = _unit_gaussian(d, rng)
    parameters: Dict[str, Any] = {"n": n, "d": d, "seed": seed}
    if spectrum is not None:
        parameters["spectrum"] = [float(s) for s in spectrum]
    return least_squares_instance(x, w_star, parameters)


def default_linmap_spectrum(rank: int) -> np.ndarray:
    """Геометрический спектр от 1 до 0.5 длины rank."""
    return np.geomspace(1.0, 0.5, rank)


def gen_composed_linear(n: int, d: int, k: int, rank: int, seed: int, spectrum: Optional[Sequence[float]] = None) -> ProblemInstance:
    """
    Задача L(w) = L~(A w) с l~_i(z) = 1/2 (u_iᵀ(z - z*))^2.

    A (k×d) строится с предписанным спектром ранга rank, направления u_i
    гауссовы с дисперсией 1/k (n >= k, чтобы они порождали R^k).

    Args:
        n: Число объектов
        d: Размерность параметров
        k: Размерность образа A (k <= d)
        rank: Ранг A (1 <= rank <= k)
        seed: Зерно генератора
        spectrum: rank положительных сингулярных чисел A (опционально)

    Returns:
        ProblemInstance вида composed_linear
    """
    if not (1 <= rank <= k <= d):
        raise InvalidInputError(f"Нужно 1 <= rank <= k <= d, получено rank={rank}, k={k}, d={d}")
    if n < k:
        raise InvalidInputError(f"Нужно n >= k, чтобы L~ была сильно выпуклой, получено n={n}, k={k}")
    values = default_linmap_spectrum(rank) if spectrum is None else np.asarray(spectrum, dtype=float).reshape(-1)
    if values.shape[0] != rank or np.any(values <= 0):
        raise InvalidInputError(f"Спектр A должен содержать rank={rank} положительных чисел")

    rng = np.random.default_rng(seed)
    a = matrix_with_spectrum(k, d, values, rng)
    directions = rng.standard_normal((n, k)) / np.sqrt(k)
    w_star = _unit_gaussian(d, rng)
    problem = build_composed_linear_problem(a, directions, w_star)

    f = problem.factorization
    constants = ConstantsReport(
        alpha=problem.tilde_alpha * f.sigma_min_nonzero ** 2,
        beta=f.sigma_max ** 2 * problem.tilde_beta,
        lam=f.sigma_max ** 2 * problem.tilde_lambda,
        sample_betas=problem.objective.sample_betas,
    )
    return _validated(ProblemInstance(
        objective=problem.objective,
        constants=constants,
        w_star=problem.w_star,
        kind=KIND_COMPOSED_LINEAR,
        linmap=problem,
        parameters={"n": n, "d": d, "k": k, "rank": rank, "seed": seed, "spectrum": values.tolist()},
    ))


def gen_composed_transformed(base: ProblemInstance, t: TransformSpec) -> ProblemInstance:
    """
    Композиция экземпляра наименьших квадратов с отображением Phi.

    Константы: alpha' = a alpha, beta' = b beta, lambda' = b lambda. Сторона
    PL проверяется пробами, сторона гладкости записывается как перенесенная.

    Raises:
        InvalidInputError: base не вида least_squares или у Phi нет обратного
    """
    if base.kind != KIND_LEAST_SQUARES:
        raise InvalidInputError(f"Базовый экземпляр должен быть least_squares, получен {base.kind}")
    if t.inverse is None:
        raise InvalidInputError(f"У отображения {t.name} нет обратного: v* не определен")
    objective = compose_objective(base.objective, t)
    alpha, lam = composed_constants(base.constants.alpha, base.constants.lam, t.a, t.b)
    constants = ConstantsReport(
        alpha=alpha,
        beta=t.b * base.constants.beta,
        lam=lam,
        beta_source=SOURCE_TRANSFERRED,
        lam_source=SOURCE_TRANSFERRED,
        sample_betas=objective.sample_betas,
    )
    v_star = as_vector(t.inverse(base.w_star), t.in_dim)
    parameters = dict(base.parameters)
    parameters["transform"] = t.name
    return _validated(ProblemInstance(
        objective=objective,
        constants=constants,
        w_star=v_star,
        kind=KIND_COMPOSED_NONLINEAR,
        transform=t,
        base=base,
        parameters=parameters,
    ))


def gen_composed_nonlinear(base: ProblemInstance, c: float) -> ProblemInstance:
    """Композиция с Phi(v) = v + c sin(v), a = (1 - c)^2, b = (1 + c)^2."""
    instance = gen_composed_transformed(base, sine_transform(base.dim, c))
    instance.parameters["c"] = c
    return instance


def gen_composed_linear_transform(base: ProblemInstance, scale: float, seed: int) -> ProblemInstance:
    """
    Композиция с квадратной линейной заменой v -> M v.

    Сингулярные числа M убывают геометрически от 1 до scale, поэтому
    a = scale^2, b = 1.
    """
    if not (0.0 < scale <= 1.0):
        raise InvalidInputError(f"Параметр scale={scale} должен лежать в (0, 1]")
    rng = np.random.default_rng([seed, 1])
    matrix = matrix_with_spectrum(base.dim, base.dim, np.geomspace(1.0, scale, base.dim), rng)
    instance = gen_composed_transformed(base, linear_transform(matrix))
    instance.parameters["scale"] = scale
    return instance


def find_midpoint_convexity_violation(
    obj: ErmObjective, center, radius: float = 3.0, trials: int = 2000, seed: int = 0
) -> Optional[Dict[str, Any]]:
    """
    Ищет пару (v1, v2) с L((v1 + v2)/2) > (L(v1) + L(v2))/2.

    Пары строятся как c ± delta·u вокруг случайных центров c в шаре радиуса
    radius около center.

    Returns:
        Словарь с v1, v2 и превышением или None
    """
    origin = as_vector(center, obj.dim)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        mid = origin + radius * rng.uniform(-1.0, 1.0, size=obj.dim)
        direction = _unit_gaussian(obj.dim, rng)
        delta = rng.uniform(0.05, 1.0)
        v1, v2 = mid + delta * direction, mid - delta * direction
        chord = 0.5 * (obj.value(v1) + obj.value(v2))
        excess = obj.value(mid) - chord
        if excess > 1e-9 * max(1.0, chord):
            return {"v1": v1, "v2": v2, "excess": float(excess)}
    return None
