"""
Класс задач L(w) = L~(A w) с сильно выпуклой L~.

Шаг и скорость сжатия проекционного расстояния ||A†A(w_t - w*)||^2,
сильная выпуклость L над Range(A†) с константой alpha sigma_min^2
и прогон SGD с записью проекционных расстояний.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from config import PL_SLACK
from numerics import LinearFactorization, as_matrix, as_vector, project_range_pinv, svd
from objective import ErmObjective, LeastSquaresLoss, SampleLoss, as_probe_list
from sgd import ON_DIVERGENCE_RAISE, SgdConfig, Trajectory, aggregate_runs, run_sgd, step_size_theorem1
from utils.errors import InvalidInputError, NonContractiveError

logger = logging.getLogger(__name__)

CONVEXITY_SLACK: float = 1e-8


class LinearlyComposedLoss(SampleLoss):
    """l(w) = l~(A w), градиент Aᵀ grad l~(A w), beta = sigma_max^2 · beta~."""

    def __init__(self, tilde: SampleLoss, factorization: LinearFactorization) -> None:
        if tilde.dim != factorization.rows:
            raise InvalidInputError(f"Размерность l~ {tilde.dim} != числу строк A {factorization.rows}")
        self.tilde = tilde
        self.a = factorization.a
        self.dim = factorization.cols
        self.beta = factorization.sigma_max ** 2 * tilde.beta

    def value(self, w: np.ndarray) -> float:
        return self.tilde.value(self.a @ w)

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return self.a.T @ self.tilde.gradient(self.a @ w)


@dataclass(frozen=True)
class ComposedLinearProblem:
    """A с разложением, потери l~_i над R^k с точными константами, w* и задача над R^d."""

    factorization: LinearFactorization
    tilde_losses: Tuple[SampleLoss, ...]
    tilde_lambda: float
    tilde_alpha: float
    tilde_beta: float
    w_star: np.ndarray
    objective: ErmObjective


def build_composed_linear_problem(a, directions, w_star) -> ComposedLinearProblem:
    """
    Строит задачу l~_i(z) = 1/2 (u_iᵀ(z - z*))^2, z* = A w*.

    alpha~ = lambda_min((1/n) sum u_i u_iᵀ), lambda~ = lambda_max(...), beta~ = max ||u_i||^2.

    Args:
        a: Матрица A (k×d)
        directions: Направления u_i (n×k), должны порождать R^k
        w_star: Точка w* в R^d

    Returns:
        ComposedLinearProblem
    """
    factorization = svd(a)
    if factorization.rank == 0:
        raise InvalidInputError("Матрица A нулевая")
    u = as_matrix(directions)
    if u.shape[1] != factorization.rows:
        raise InvalidInputError(f"Направления размерности {u.shape[1]}, ожидалось k={factorization.rows}")
    w_star = as_vector(w_star, factorization.cols)
    z_star = factorization.a @ w_star

    gram = u.T @ u / u.shape[0]
    eigenvalues = np.linalg.eigvalsh(gram)
    if eigenvalues[0] <= 1e-12 * eigenvalues[-1]:
        raise InvalidInputError("Направления u_i не порождают R^k: L~ не сильно выпукла")

    tilde_losses = tuple(LeastSquaresLoss(row, float(row @ z_star)) for row in u)
    objective = ErmObjective([LinearlyComposedLoss(loss, factorization) for loss in tilde_losses])
    return ComposedLinearProblem(
        factorization=factorization,
        tilde_losses=tilde_losses,
        tilde_lambda=float(eigenvalues[-1]),
        tilde_alpha=float(eigenvalues[0]),
        tilde_beta=float(np.max(np.einsum("ij,ij->i", u, u))),
        w_star=w_star,
        objective=objective,
    )


def pl_constant_from_composition(alpha: float, sigma_min_nonzero: float) -> float:
    """Константа PL композиции: alpha · sigma_min^2."""
    if not (alpha > 0 and sigma_min_nonzero > 0):
        raise InvalidInputError("alpha и sigma_min должны быть положительными")
    return alpha * sigma_min_nonzero ** 2


def step_size_theorem2(beta: float, lam: float, sigma_max: float, m: int) -> float:
    """
    Шаг m / (sigma_max^2 (beta + (m - 1) lambda)).

    Args:
        beta: Гладкость l~_i
        lam: Гладкость L~
        sigma_max: Наибольшее сингулярное число A
        m: Размер батча
    """
    if not (beta > 0 and lam > 0 and sigma_max > 0):
        raise InvalidInputError("beta, lambda и sigma_max должны быть положительными")
    if int(m) != m or m < 1:
        raise InvalidInputError(f"Размер батча m={m} должен быть целым >= 1")
    return m / (sigma_max ** 2 * (beta + (m - 1) * lam))


def theorem2_rate_factor(alpha: float, sigma_min_nonzero: float, eta: float) -> float:
    """
    Множитель 1 - alpha sigma_min^2 eta.

    Raises:
        NonContractiveError: alpha sigma_min^2 eta вне (0, 1)
    """
    rate = alpha * sigma_min_nonzero ** 2 * eta
    if not (0.0 < rate < 1.0):
        raise NonContractiveError(f"alpha·sigma_min^2·eta = {rate:.6g} вне (0, 1)")
    return 1.0 - rate


def theorem2_loss_bound_curve(tilde_lambda: float, sigma_max: float, d0: float, factor: float, steps: int) -> np.ndarray:
    """Кривая (lambda~ sigma_max^2 / 2) · factor^t · ||ŵ0 - ŵ*||^2."""
    if not (0.0 <= factor <= 1.0):
        raise NonContractiveError(f"Множитель {factor:.6g} вне [0, 1]")
    return 0.5 * tilde_lambda * sigma_max ** 2 * d0 * np.power(factor, np.arange(steps + 1, dtype=float))


def projected_distance(p: ComposedLinearProblem, w) -> float:
    """||A†A (w - w*)||^2."""
    diff = project_range_pinv(p.factorization, as_vector(w) - p.w_star)
    return float(diff @ diff)


def null_space_component(p: ComposedLinearProblem, w) -> np.ndarray:
    """Компонента w в Null(A): w - A†A w."""
    point = as_vector(w, p.factorization.cols)
    return point - project_range_pinv(p.factorization, point)


@dataclass
class ProjectedTrajectory:
    """Траектория SGD вместе с проекционными расстояниями d_t по повторам."""

    trajectory: Trajectory
    distances: np.ndarray
    mean_distance: np.ndarray
    std_err_distance: np.ndarray
    distance_bound: Optional[np.ndarray]
    loss_bound: Optional[np.ndarray]
    worst_loss_excess: float
    loss_bound_passed: bool


def run_sgd_thm2(
    p: ComposedLinearProblem,
    w0,
    config: SgdConfig,
    bound_factor: float = 1.0,
    on_divergence: str = ON_DIVERGENCE_RAISE,
) -> ProjectedTrajectory:
    """
    Запускает SGD на задаче L~(A w) и записывает d_t = ||A†A(w_t - w*)||^2.

    Поточечно проверяется L(w_t) <= (lambda~ sigma_max^2 / 2) d_t.

    Args:
        p: Задача
        w0: Начальная точка
        config: Параметры прогона
        bound_factor: Множитель теоретической кривой потерь
        on_divergence: Режим обработки расхождения

    Returns:
        ProjectedTrajectory
    """
    trajectory = run_sgd(
        p.objective, w0, config, bound_factor=bound_factor, on_divergence=on_divergence,
        track=lambda w: projected_distance(p, w),
    )
    distances = trajectory.tracked
    alive = trajectory.alive_runs()
    mean_distance, std_err_distance = aggregate_runs(distances, alive)

    sigma_max = p.factorization.sigma_max
    coefficient = 0.5 * p.tilde_lambda * sigma_max ** 2
    scale = max(1.0, float(trajectory.losses[0, 0]))
    worst_excess = -np.inf
    for r in alive:
        excess = trajectory.losses[r] - coefficient * distances[r]
        worst_excess = max(worst_excess, float(np.max(excess)) / scale)
    loss_bound_passed = worst_excess <= PL_SLACK

    distance_bound: Optional[np.ndarray] = None
    loss_bound: Optional[np.ndarray] = None
    d0 = float(distances[0, 0])
    try:
        factor = theorem2_rate_factor(p.tilde_alpha, p.factorization.sigma_min_nonzero, config.eta)
        distance_bound = d0 * np.power(factor, np.arange(config.steps + 1, dtype=float))
        loss_bound = theorem2_loss_bound_curve(p.tilde_lambda, sigma_max, d0, factor, config.steps)
    except NonContractiveError as e:
        logger.warning("Кривая скорости не построена: %s", e)

    return ProjectedTrajectory(
        trajectory=trajectory,
        distances=distances,
        mean_distance=mean_distance,
        std_err_distance=std_err_distance,
        distance_bound=distance_bound,
        loss_bound=loss_bound,
        worst_loss_excess=float(worst_excess),
        loss_bound_passed=bool(loss_bound_passed),
    )


def check_strong_convexity_range(p: ComposedLinearProblem, pairs: Iterable[Sequence]) -> Dict[str, Any]:
    """
    Проверяет сильную выпуклость L над Range(A†) с константой alpha~ sigma_min^2.

    Обе точки пары проецируются на Range(A†), затем проверяется
    L(z1) >= L(z2) + <grad L(z2), z1 - z2> + (alpha~ sigma_min^2 / 2) ||z1 - z2||^2.

    Returns:
        Словарь:
        - passed: неравенство выполнено во всех парах с допуском
        - worst_gap: наименьший относительный запас
        - tightest_curvature: min 2 (L(z1) - L(z2) - <grad, dz>) / ||dz||^2
        - modulus: alpha~ sigma_min^2
        - failing_pair: индекс первой нарушающей пары
    """
    f = p.factorization
    modulus = pl_constant_from_composition(p.tilde_alpha, f.sigma_min_nonzero)
    obj = p.objective
    worst_gap = np.inf
    tightest = np.inf
    failing_pair: Optional[int] = None
    checked = 0
    for idx, pair in enumerate(pairs):
        z1 = project_range_pinv(f, pair[0])
        z2 = project_range_pinv(f, pair[1])
        diff = z1 - z2
        v1, v2 = obj.value(z1), obj.value(z2)
        linear_gap = v1 - v2 - float(obj.gradient(z2) @ diff)
        dist2 = float(diff @ diff)
        gap = linear_gap - 0.5 * modulus * dist2
        scale = max(1.0, abs(v1), abs(v2))
        checked += 1
        worst_gap = min(worst_gap, gap / scale)
        if dist2 > 0:
            tightest = min(tightest, 2.0 * linear_gap / dist2)
        if gap < -CONVEXITY_SLACK * scale and failing_pair is None:
            failing_pair = idx
    return {
        "passed": failing_pair is None,
        "checked": checked,
        "modulus": modulus,
        "worst_gap": float(worst_gap),
        "tightest_curvature": float(tightest),
        "failing_pair": failing_pair,
    }


def check_gradient_range(p: ComposedLinearProblem, probes: Iterable) -> Dict[str, Any]:
    """
    Проверяет, что градиенты grad l_i(w) = Aᵀ grad l~_i(A w) лежат в Range(A†).

    Returns:
        Словарь с worst_off_range (||(I - A†A) g|| / max(1, ||g||)) и passed
    """
    f = p.factorization
    worst = 0.0
    for point in as_probe_list(probes):
        for loss in p.objective.losses:
            g = loss.gradient(point)
            off = g - project_range_pinv(f, g)
            worst = max(worst, float(np.linalg.norm(off)) / max(1.0, float(np.linalg.norm(g))))
    return {"worst_off_range": worst, "passed": worst <= 1e-10}


def composed_linear_step_comparison(p: ComposedLinearProblem, alpha: float, beta: float, lam: float, m: int) -> Dict[str, float]:
    """
    Сравнивает шаг теоремы 2 со шагом, который дает только условие PL.

    Args:
        p: Задача
        alpha, beta, lam: Константы задачи над R^d (alpha = alpha~ sigma_min^2 и т.д.)
        m: Размер батча

    Returns:
        Словарь с eta_theorem2, eta_theorem1_pl и их отношением
    """
    eta2 = step_size_theorem2(p.tilde_beta, p.tilde_lambda, p.factorization.sigma_max, m)
    eta1 = step_size_theorem1(alpha, beta, lam, m)
    return {"eta_theorem2": eta2, "eta_theorem1_pl": eta1, "ratio": eta2 / eta1}
