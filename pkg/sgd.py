"""
Мини-батч SGD с постоянным шагом.

Формулы шага (напечатанная в теореме и минимизатор квадратичного
множителя), множитель сжатия за шаг, теоретические кривые, прогон
независимых повторов SGD и базовый полноградиентный спуск.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from config import DIVERGENCE_FACTOR
from objective import ErmObjective, sample_batch
from numerics import as_vector
from utils.errors import DivergenceError, InvalidInputError, PreconditionViolationError

logger = logging.getLogger(__name__)

# Правила выбора шага
ETA_EXPLICIT: str = "explicit"
ETA_THEOREM1: str = "theorem1"
ETA_QUADRATIC_OPT: str = "quadratic_opt"
ETA_THEOREM2: str = "theorem2"
ETA_COROLLARY: str = "corollary"
ETA_COROLLARY_QUADRATIC: str = "corollary_quadratic"
ETA_RULES: Tuple[str, ...] = (
    ETA_EXPLICIT,
    ETA_THEOREM1,
    ETA_QUADRATIC_OPT,
    ETA_THEOREM2,
    ETA_COROLLARY,
    ETA_COROLLARY_QUADRATIC,
)

# Правила, для которых вывод требует eta <= 2/lambda
THEOREM1_FAMILY: Tuple[str, ...] = (ETA_EXPLICIT, ETA_THEOREM1, ETA_QUADRATIC_OPT, ETA_COROLLARY, ETA_COROLLARY_QUADRATIC)

ON_DIVERGENCE_RAISE: str = "raise"
ON_DIVERGENCE_RECORD: str = "record"


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (np.isfinite(value) and value > 0):
            raise InvalidInputError(f"{name}={value} должно быть конечным и положительным")


def _require_batch_size(m: int) -> None:
    if int(m) != m or m < 1:
        raise InvalidInputError(f"Размер батча m={m} должен быть целым >= 1")


def step_size_theorem1(alpha: float, beta: float, lam: float, m: int) -> float:
    """
    Напечатанный шаг eta*(m) = alpha m / (lambda (beta + lambda (m - 1))).

    Args:
        alpha: Константа PL
        beta: Гладкость потерь по объектам
        lam: Гладкость риска
        m: Размер батча

    Returns:
        Шаг в точности по напечатанной формуле
    """
    _require_positive(alpha=alpha, beta=beta, lam=lam)
    _require_batch_size(m)
    return alpha * m / (lam * (beta + lam * (m - 1)))


def step_size_quadratic_opt(alpha: float, beta: float, lam: float, m: int) -> float:
    """
    Минимизатор квадратичного множителя сжатия: alpha m / (lambda (alpha (m - 1) + 2 beta)).

    Returns:
        Шаг, при котором множитель равен 1 - alpha eta / 2
    """
    _require_positive(alpha=alpha, beta=beta, lam=lam)
    _require_batch_size(m)
    return alpha * m / (lam * (alpha * (m - 1) + 2.0 * beta))


def contraction_factor(eta: float, alpha: float, beta: float, lam: float, m: int) -> float:
    """
    Множитель за шаг 1 - eta alpha + eta^2 (lambda/m) (alpha (m-1)/2 + beta).

    Args:
        eta: Шаг, 0 <= eta <= 2/lambda
        alpha: Константа PL
        beta: Гладкость потерь по объектам
        lam: Гладкость риска
        m: Размер батча

    Returns:
        Верхняя граница E[L(w_{t+1})] / L(w_t)

    Raises:
        PreconditionViolationError: eta > 2/lambda
    """
    _require_positive(alpha=alpha, beta=beta, lam=lam)
    _require_batch_size(m)
    if not (np.isfinite(eta) and eta >= 0):
        raise InvalidInputError(f"Шаг eta={eta} должен быть неотрицательным")
    if eta > (2.0 / lam) * (1.0 + 1e-12):
        raise PreconditionViolationError(f"eta={eta:.6g} > 2/lambda={2.0 / lam:.6g}: оценка не применима")
    return 1.0 - eta * alpha + eta * (eta * (lam / m) * (alpha * (m - 1) / 2.0 + beta))


def theoretical_bound_curve(l0: float, factor: float, steps: int) -> np.ndarray:
    """
    Кривая factor^t · l0 для t = 0..steps.

    Raises:
        InvalidInputError: factor вне [0, 1] (несжимающая конфигурация) или l0 < 0
    """
    if not (0.0 <= factor <= 1.0):
        raise InvalidInputError(f"Множитель {factor:.6g} вне [0, 1]: конфигурация не сжимающая")
    if not l0 >= 0:
        raise InvalidInputError("Начальные потери должны быть неотрицательными")
    if steps < 0:
        raise InvalidInputError("Число шагов должно быть >= 0")
    return l0 * np.power(factor, np.arange(steps + 1, dtype=float))


def gd_rate_factor(alpha: float, lam: float) -> float:
    """Множитель 1 - alpha/(2 lambda) для GD с шагом 1/lambda."""
    _require_positive(alpha=alpha, lam=lam)
    return 1.0 - alpha / (2.0 * lam)


@dataclass(frozen=True)
class SgdConfig:
    """Параметры прогона: батч m, шаг eta, число шагов T, повторов R, зерно и правило шага."""

    m: int
    eta: float
    steps: int
    runs: int = 1
    seed: int = 0
    eta_rule: str = ETA_EXPLICIT
    workers: int = 1

    def __post_init__(self) -> None:
        _require_batch_size(self.m)
        if not (np.isfinite(self.eta) and self.eta >= 0):
            raise InvalidInputError(f"Шаг eta={self.eta} должен быть конечным и неотрицательным")
        if self.steps < 0:
            raise InvalidInputError("Число шагов должно быть >= 0")
        if self.runs < 1:
            raise InvalidInputError("Число повторов должно быть >= 1")
        if self.seed < 0:
            raise InvalidInputError("Зерно должно быть неотрицательным")
        if self.eta_rule not in ETA_RULES:
            raise InvalidInputError(f"Неизвестное правило шага: {self.eta_rule}")
        if self.workers < 1:
            raise InvalidInputError("Число потоков должно быть >= 1")


@dataclass
class Trajectory:
    """Потери по повторам и шагам с агрегатами и теоретической кривой."""

    losses: np.ndarray
    mean_loss: np.ndarray
    std_err: np.ndarray
    bound: np.ndarray
    final_params: np.ndarray
    diverged: Dict[int, int] = field(default_factory=dict)
    tracked: Optional[np.ndarray] = None

    @property
    def runs(self) -> int:
        return self.losses.shape[0]

    @property
    def steps(self) -> int:
        return self.losses.shape[1] - 1

    def alive_runs(self) -> List[int]:
        return [r for r in range(self.runs) if r not in self.diverged]


def run_stream(seed: int, run_index: int) -> np.random.Generator:
    """Собственный поток случайных чисел повтора: stream(seed, run_index)."""
    return np.random.default_rng([seed, run_index])


def _run_single(
    obj: ErmObjective,
    w0: np.ndarray,
    config: SgdConfig,
    run_index: int,
    l0: float,
    track: Optional[Callable[[np.ndarray], float]],
) -> Tuple[np.ndarray, np.ndarray, Optional[int], Optional[np.ndarray]]:
    rng = run_stream(config.seed, run_index)
    losses = np.full(config.steps + 1, np.nan)
    tracked = np.full(config.steps + 1, np.nan) if track is not None else None
    limit = DIVERGENCE_FACTOR * l0 if l0 > 0 else np.inf

    w = w0.copy()
    losses[0] = l0
    if tracked is not None:
        tracked[0] = track(w)
    for t in range(1, config.steps + 1):
        batch = sample_batch(obj.n, config.m, rng)
        w = w - config.eta * obj.batch_gradient(w, batch)
        loss = obj.value(w)
        if not (np.isfinite(loss) and np.all(np.isfinite(w))) or loss > limit:
            return losses, w, t, tracked
        losses[t] = loss
        if tracked is not None:
            tracked[t] = track(w)
    return losses, w, None, tracked


def aggregate_runs(values: np.ndarray, alive: List[int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Среднее и стандартная ошибка по выжившим повторам.

    Суммирование идет в порядке возрастания индекса повтора, поэтому
    результат не зависит от порядка выполнения.
    """
    length = values.shape[1]
    if not alive:
        return np.full(length, np.nan), np.full(length, np.nan)
    total = np.zeros(length)
    for r in alive:
        total += values[r]
    mean = total / len(alive)
    if len(alive) < 2:
        return mean, np.zeros(length)
    squares = np.zeros(length)
    for r in alive:
        squares += (values[r] - mean) ** 2
    std_err = np.sqrt(squares / (len(alive) - 1)) / np.sqrt(len(alive))
    return mean, std_err


def run_sgd(
    obj: ErmObjective,
    w0,
    config: SgdConfig,
    bound_factor: float = 1.0,
    on_divergence: str = ON_DIVERGENCE_RAISE,
    track: Optional[Callable[[np.ndarray], float]] = None,
) -> Trajectory:
    """
    Запускает R независимых повторов мини-батч SGD с постоянным шагом.

    w_{t+1} = w_t - eta · minibatch_gradient(w_t, batch), батч из потока stream(seed, r).

    Args:
        obj: ERM-задача
        w0: Начальная точка
        config: Параметры прогона
        bound_factor: Множитель теоретической кривой (1.0 - без оценки)
        on_divergence: "raise" - исключение, "record" - исключить повтор из агрегатов
        track: Дополнительная величина, записываемая на каждом шаге

    Returns:
        Trajectory

    Raises:
        DivergenceError: Потери или параметры стали неконечными (режим raise)
    """
    start = as_vector(w0, obj.dim)
    if on_divergence not in (ON_DIVERGENCE_RAISE, ON_DIVERGENCE_RECORD):
        raise InvalidInputError(f"Неизвестный режим расхождения: {on_divergence}")
    l0 = obj.value(start)
    bound = theoretical_bound_curve(l0, bound_factor, config.steps)

    def job(run_index: int):
        return _run_single(obj, start, config, run_index, l0, track)

    if config.workers > 1 and config.runs > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            results = list(executor.map(job, range(config.runs)))
    else:
        results = [job(r) for r in range(config.runs)]

    losses = np.vstack([res[0] for res in results])
    final_params = np.vstack([res[1] for res in results])
    tracked = np.vstack([res[3] for res in results]) if track is not None else None
    diverged: Dict[int, int] = {r: res[2] for r, res in enumerate(results) if res[2] is not None}

    if diverged:
        first_run = min(diverged)
        if on_divergence == ON_DIVERGENCE_RAISE:
            raise DivergenceError(
                f"Run {first_run} diverged at step {diverged[first_run]}", run=first_run, step=diverged[first_run]
            )
        logger.warning("Разошлись повторы %d из %d: %s", len(diverged), config.runs, sorted(diverged))

    alive = [r for r in range(config.runs) if r not in diverged]
    mean_loss, std_err = aggregate_runs(losses, alive)
    logger.info(
        "SGD finished: m=%d eta=%.6g steps=%d runs=%d, mean loss %.6g -> %.6g",
        config.m, config.eta, config.steps, config.runs, l0, mean_loss[-1],
    )
    return Trajectory(
        losses=losses,
        mean_loss=mean_loss,
        std_err=std_err,
        bound=bound,
        final_params=final_params,
        diverged=diverged,
        tracked=tracked,
    )


def run_gd(obj: ErmObjective, w0, eta: float, steps: int) -> np.ndarray:
    """
    Полноградиентный спуск w_{t+1} = w_t - eta grad L(w_t).

    Returns:
        Кривая потерь длины steps + 1

    Raises:
        DivergenceError: Потери стали неконечными или выросли выше порога
    """
    if not (np.isfinite(eta) and eta >= 0):
        raise InvalidInputError(f"Шаг eta={eta} должен быть неотрицательным")
    if steps < 0:
        raise InvalidInputError("Число шагов должно быть >= 0")
    w = as_vector(w0, obj.dim).copy()
    curve = np.empty(steps + 1)
    curve[0] = obj.value(w)
    limit = DIVERGENCE_FACTOR * curve[0] if curve[0] > 0 else np.inf
    for t in range(1, steps + 1):
        w = w - eta * obj.gradient(w)
        curve[t] = obj.value(w)
        if not np.isfinite(curve[t]) or curve[t] > limit:
            raise DivergenceError(f"GD diverged at step {t}", run=0, step=t)
    return curve


def relative_std_err(mean: np.ndarray, std_err: np.ndarray) -> np.ndarray:
    """std_err / mean, 0 там, где среднее равно 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        rse = np.where(mean > 0, std_err / mean, 0.0)
    return rse


def statistical_bound_check(mean: np.ndarray, std_err: np.ndarray, bound: np.ndarray, sigmas: float = 3.0) -> Dict[str, Any]:
    """
    Проверяет mean[t] <= bound[t] · (1 + sigmas · rse[t]) на всех шагах.

    Returns:
        Словарь с passed, first_violation (шаг или None) и worst_excess (наибольшее mean/allowed)
    """
    allowed = bound * (1.0 + sigmas * relative_std_err(mean, std_err)) + 1e-300
    ratio = mean / allowed
    violations = np.nonzero(mean > allowed)[0]
    first = int(violations[0]) if violations.size else None
    return {
        "passed": first is None,
        "first_violation": first,
        "worst_excess": float(np.nanmax(ratio)) if ratio.size else 0.0,
    }
