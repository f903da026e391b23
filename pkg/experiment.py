"""
Эксперименты: разбор конфигурационного файла и сценарии run/verify/sweep/gd.

Конфиг - плоский текст key = value (как .env), разбирается парсером
python-dotenv, который сообщает номер строки каждой записи. Неизвестные
и повторяющиеся ключи - ошибка.
"""
import io
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv.parser import parse_stream

from config import PROBE_COUNT, PROBE_SEED, SWEEP_WINDOW, WORKERS, get_version
from constants import default_loss_floor, estimate_constants, estimate_smoothness
from linmap import (
    check_strong_convexity_range,
    composed_linear_step_comparison,
    run_sgd_thm2,
    step_size_theorem2,
    theorem2_rate_factor,
)
from problems import (
    KIND_COMPOSED_LINEAR,
    KIND_COMPOSED_NONLINEAR,
    KIND_LEAST_SQUARES,
    KINDS,
    ProblemInstance,
    find_midpoint_convexity_violation,
    gen_composed_linear,
    gen_composed_linear_transform,
    gen_composed_nonlinear,
    gen_interpolated_least_squares,
    validate_instance,
)
from sgd import (
    ETA_COROLLARY,
    ETA_COROLLARY_QUADRATIC,
    ETA_EXPLICIT,
    ETA_QUADRATIC_OPT,
    ETA_RULES,
    ETA_THEOREM1,
    ETA_THEOREM2,
    ON_DIVERGENCE_RECORD,
    THEOREM1_FAMILY,
    SgdConfig,
    Trajectory,
    contraction_factor,
    gd_rate_factor,
    run_gd,
    run_sgd,
    statistical_bound_check,
    step_size_quadratic_opt,
    step_size_theorem1,
)
from transform import corollary_bound_factor, step_size_corollary, verify_pl_transfer
from utils.errors import (
    ConfigError,
    DivergenceError,
    InsufficientProbesError,
    InvalidInputError,
    NonContractiveError,
    PreconditionViolationError,
    VerificationFailure,
)
from utils.report_io import write_csv_atomic, write_json_atomic

logger = logging.getLogger(__name__)

CURVE_HEADER: Tuple[str, ...] = ("step", "mean_loss", "std_err", "bound_theorem", "bound_quadratic")
DISTANCE_HEADER: Tuple[str, ...] = ("step", "mean_distance", "std_err_distance", "bound_distance")
SWEEP_HEADER: Tuple[str, ...] = ("m", "eta_theorem1", "eta_quadratic", "factor_theorem1", "factor_quadratic", "empirical_ratio")
GD_HEADER: Tuple[str, ...] = ("step", "loss", "bound_pl")

TRANSFORM_SINE: str = "sine"
TRANSFORM_LINEAR: str = "linear"

BOUND_PL_RATE: str = "pl_rate"
BOUND_COROLLARY: str = "corollary"
BOUND_THEOREM2_LOSS: str = "theorem2_loss"

REQUIRED_KEYS: Tuple[str, ...] = (
    "problem.kind", "problem.n", "problem.d", "problem.seed",
    "sgd.m", "sgd.eta_rule", "sgd.steps", "sgd.runs", "sgd.seed",
    "output.path",
)
OPTIONAL_KEYS: Tuple[str, ...] = (
    "problem.k", "problem.rank", "problem.c", "problem.spectrum", "problem.transform", "problem.scale",
    "sgd.eta", "sgd.workers",
    "probes.count", "probes.seed",
    "constants.alpha",
    "sweep.window",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Разобранный и проверенный конфиг эксперимента."""

    kind: str
    n: int
    d: int
    problem_seed: int
    m: int
    eta_rule: str
    steps: int
    runs: int
    sgd_seed: int
    output_path: str
    k: Optional[int] = None
    rank: Optional[int] = None
    c: Optional[float] = None
    spectrum: Optional[Tuple[float, ...]] = None
    transform: Optional[str] = None
    scale: Optional[float] = None
    eta: Optional[float] = None
    workers: int = WORKERS
    probe_count: int = PROBE_COUNT
    probe_seed: int = PROBE_SEED
    alpha_override: Optional[float] = None
    sweep_window: int = SWEEP_WINDOW
    lines: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("lines")
        return data


def _convert(raw: str, key: str, line: int, kind: Callable[[str], Any], what: str) -> Any:
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"Ожидалось {what}, получено {raw!r}", line=line, key=key) from None


def _parse_spectrum(raw: str) -> Tuple[float, ...]:
    values = tuple(float(part) for part in raw.split(",") if part.strip())
    if not values:
        raise ValueError("пустой спектр")
    return values


def read_bindings(text: str) -> Dict[str, Tuple[str, int]]:
    """
    Разбирает текст конфига в {ключ: (значение, номер строки)}.

    Raises:
        ConfigError: Ошибка разбора, строка без значения, неизвестный или повторный ключ
    """
    values: Dict[str, Tuple[str, int]] = {}
    known = set(REQUIRED_KEYS) | set(OPTIONAL_KEYS)
    for binding in parse_stream(io.StringIO(text)):
        line = binding.original.line
        if binding.error:
            raise ConfigError(f"Не удалось разобрать строку {binding.original.string.strip()!r}", line=line)
        if binding.key is None:
            continue
        key = binding.key
        if key not in known:
            raise ConfigError("Неизвестный ключ", line=line, key=key)
        if key in values:
            raise ConfigError(f"Повторный ключ (впервые в строке {values[key][1]})", line=line, key=key)
        if binding.value is None or binding.value.strip() == "":
            raise ConfigError("Пустое значение", line=line, key=key)
        values[key] = (binding.value.strip(), line)
    return values


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """
    Разбирает и проверяет конфиг эксперимента.

    Args:
        text: Содержимое файла
        source: Имя источника для сообщений

    Returns:
        ExperimentConfig

    Raises:
        ConfigError: С номером строки и ключом
    """
    raw = read_bindings(text)
    missing = [key for key in REQUIRED_KEYS if key not in raw]
    if missing:
        raise ConfigError(f"{source}: нет обязательных ключей {', '.join(missing)}", key=missing[0])

    def get(key: str, kind: Callable[[str], Any], what: str) -> Any:
        if key not in raw:
            return None
        value, line = raw[key]
        return _convert(value, key, line, kind, what)

    def line_of(key: str) -> Optional[int]:
        return raw[key][1] if key in raw else None

    fields: Dict[str, Any] = {
        "kind": get("problem.kind", str, "строка"),
        "n": get("problem.n", int, "целое"),
        "d": get("problem.d", int, "целое"),
        "problem_seed": get("problem.seed", int, "целое"),
        "m": get("sgd.m", int, "целое"),
        "eta_rule": get("sgd.eta_rule", str, "строка"),
        "steps": get("sgd.steps", int, "целое"),
        "runs": get("sgd.runs", int, "целое"),
        "sgd_seed": get("sgd.seed", int, "целое"),
        "output_path": get("output.path", str, "путь"),
        "k": get("problem.k", int, "целое"),
        "rank": get("problem.rank", int, "целое"),
        "c": get("problem.c", float, "число"),
        "spectrum": get("problem.spectrum", _parse_spectrum, "список чисел через запятую"),
        "transform": get("problem.transform", str, "строка"),
        "scale": get("problem.scale", float, "число"),
        "eta": get("sgd.eta", float, "число"),
        "alpha_override": get("constants.alpha", float, "число"),
    }
    for key, name, default in (
        ("sgd.workers", "workers", WORKERS),
        ("probes.count", "probe_count", PROBE_COUNT),
        ("probes.seed", "probe_seed", PROBE_SEED),
        ("sweep.window", "sweep_window", SWEEP_WINDOW),
    ):
        value = get(key, int, "целое")
        fields[name] = default if value is None else value

    def fail(message: str, key: str) -> None:
        raise ConfigError(message, line=line_of(key), key=key)

    if fields["kind"] not in KINDS:
        fail(f"Неизвестный вид задачи, ожидалось одно из {', '.join(KINDS)}", "problem.kind")
    for key, name in (("problem.n", "n"), ("problem.d", "d"), ("sgd.m", "m"), ("sgd.runs", "runs")):
        if fields[name] < 1:
            fail("Значение должно быть >= 1", key)
    for key, name in (("sgd.steps", "steps"), ("sgd.seed", "sgd_seed"), ("problem.seed", "problem_seed")):
        if fields[name] < 0:
            fail("Значение должно быть >= 0", key)
    if fields["workers"] < 1:
        fail("Значение должно быть >= 1", "sgd.workers")
    if fields["sweep_window"] < 1:
        fail("Значение должно быть >= 1", "sweep.window")
    if fields["probe_count"] < 0:
        fail("Значение должно быть >= 0", "probes.count")

    rule = fields["eta_rule"]
    if rule not in ETA_RULES:
        fail(f"Неизвестное правило шага, ожидалось одно из {', '.join(ETA_RULES)}", "sgd.eta_rule")
    if rule == ETA_EXPLICIT and fields["eta"] is None:
        fail("Правило explicit требует sgd.eta", "sgd.eta_rule")
    if rule != ETA_EXPLICIT and fields["eta"] is not None:
        fail("sgd.eta задается только при sgd.eta_rule = explicit", "sgd.eta")
    if fields["eta"] is not None and not (np.isfinite(fields["eta"]) and fields["eta"] >= 0):
        fail("Шаг должен быть конечным и неотрицательным", "sgd.eta")

    kind = fields["kind"]
    if kind == KIND_COMPOSED_LINEAR:
        for key, name in (("problem.k", "k"), ("problem.rank", "rank")):
            if fields[name] is None:
                fail(f"Вид {kind} требует {key}", "problem.kind")
    if kind == KIND_COMPOSED_NONLINEAR:
        transform = fields["transform"] or TRANSFORM_SINE
        if transform not in (TRANSFORM_SINE, TRANSFORM_LINEAR):
            fail(f"Неизвестное отображение, ожидалось {TRANSFORM_SINE} или {TRANSFORM_LINEAR}", "problem.transform")
        if transform == TRANSFORM_SINE and fields["c"] is None:
            fail("Отображение sine требует problem.c", "problem.kind")
        fields["transform"] = transform
    elif fields["transform"] is not None or fields["c"] is not None:
        fail(f"Отображение задается только для вида {KIND_COMPOSED_NONLINEAR}", "problem.transform" if fields["transform"] else "problem.c")
    if rule == ETA_THEOREM2 and kind != KIND_COMPOSED_LINEAR:
        fail(f"Правило {rule} применимо только к виду {KIND_COMPOSED_LINEAR}", "sgd.eta_rule")
    if rule in (ETA_COROLLARY, ETA_COROLLARY_QUADRATIC) and kind != KIND_COMPOSED_NONLINEAR:
        fail(f"Правило {rule} применимо только к виду {KIND_COMPOSED_NONLINEAR}", "sgd.eta_rule")

    fields["lines"] = {key: line for key, (_, line) in raw.items()}
    return ExperimentConfig(**fields)


def load_config(path: str) -> ExperimentConfig:
    """Читает и разбирает конфиг эксперимента из файла."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Не удалось прочитать конфиг {path}: {e}") from e
    cfg = parse_config_text(text, source=path)
    logger.info("Конфиг %s: вид %s, правило шага %s", path, cfg.kind, cfg.eta_rule)
    return cfg


def build_instance(cfg: ExperimentConfig) -> ProblemInstance:
    """Строит экземпляр задачи по (виду, параметрам, зерну) из конфига."""
    if cfg.kind == KIND_LEAST_SQUARES:
        return gen_interpolated_least_squares(cfg.n, cfg.d, cfg.problem_seed, cfg.spectrum)
    if cfg.kind == KIND_COMPOSED_LINEAR:
        return gen_composed_linear(cfg.n, cfg.d, cfg.k, cfg.rank, cfg.problem_seed, cfg.spectrum)
    base = gen_interpolated_least_squares(cfg.n, cfg.d, cfg.problem_seed, cfg.spectrum)
    if cfg.transform == TRANSFORM_LINEAR:
        return gen_composed_linear_transform(base, 0.5 if cfg.scale is None else cfg.scale, cfg.problem_seed)
    return gen_composed_nonlinear(base, cfg.c)


def initial_point(inst: ProblemInstance, seed: int) -> np.ndarray:
    """Начальная точка прогонов: гауссов вектор единичной нормы из потока seed."""
    w0 = np.random.default_rng(seed).standard_normal(inst.dim)
    return w0 / np.linalg.norm(w0)


def resolve_eta(inst: ProblemInstance, rule: str, m: int, eta: Optional[float] = None) -> float:
    """
    Вычисляет шаг по правилу для экземпляра.

    Для правил семейства теоремы 1 проверяется eta <= 2/lambda.

    Raises:
        PreconditionViolationError: eta > 2/lambda
        ConfigError: Правило неприменимо к виду задачи
    """
    consts = inst.constants
    if rule == ETA_EXPLICIT:
        if eta is None:
            raise ConfigError("Правило explicit требует sgd.eta", key="sgd.eta")
        value = float(eta)
    elif rule == ETA_THEOREM1:
        value = step_size_theorem1(consts.alpha, consts.beta, consts.lam, m)
    elif rule == ETA_QUADRATIC_OPT:
        value = step_size_quadratic_opt(consts.alpha, consts.beta, consts.lam, m)
    elif rule == ETA_THEOREM2:
        if inst.linmap is None:
            raise ConfigError(f"Правило {rule} требует вид {KIND_COMPOSED_LINEAR}", key="sgd.eta_rule")
        p = inst.linmap
        value = step_size_theorem2(p.tilde_beta, p.tilde_lambda, p.factorization.sigma_max, m)
    elif rule in (ETA_COROLLARY, ETA_COROLLARY_QUADRATIC):
        if inst.base is None or inst.transform is None:
            raise ConfigError(f"Правило {rule} требует вид {KIND_COMPOSED_NONLINEAR}", key="sgd.eta_rule")
        base = inst.base.constants
        formula = step_size_theorem1 if rule == ETA_COROLLARY else step_size_quadratic_opt
        value = step_size_corollary(formula(base.alpha, base.beta, base.lam, m), inst.transform.a, inst.transform.b)
    else:
        raise ConfigError(f"Неизвестное правило шага {rule}", key="sgd.eta_rule")

    if rule in THEOREM1_FAMILY and value > (2.0 / consts.lam) * (1.0 + 1e-12):
        raise PreconditionViolationError(f"eta={value:.6g} > 2/lambda={2.0 / consts.lam:.6g}: оценка теоремы 1 не применима")
    logger.info("Шаг по правилу %s при m=%d: eta=%.6g", rule, m, value)
    return value


def _safe_factor(compute: Callable[[], float]) -> float:
    try:
        factor = compute()
    except (PreconditionViolationError, NonContractiveError):
        return float("nan")
    return factor


def step_table(inst: ProblemInstance, m: int) -> Dict[str, float]:
    """
    Шаги семейства теоремы 1 и их множители сжатия для размера батча m.

    factor_* = contraction_factor(eta, alpha, beta, lambda, m); при m = 1
    напечатанный шаг дает множитель ровно 1.
    """
    c = inst.constants
    eta1 = step_size_theorem1(c.alpha, c.beta, c.lam, m)
    eta_q = step_size_quadratic_opt(c.alpha, c.beta, c.lam, m)
    return {
        "eta_theorem1": eta1,
        "eta_quadratic": eta_q,
        "factor_theorem1": _safe_factor(lambda: contraction_factor(eta1, c.alpha, c.beta, c.lam, m)),
        "factor_quadratic": _safe_factor(lambda: contraction_factor(eta_q, c.alpha, c.beta, c.lam, m)),
    }


def _is_contractive(factor: float) -> bool:
    return bool(np.isfinite(factor) and 0.0 <= factor <= 1.0)


def theorem_bound_factor(inst: ProblemInstance, rule: str, eta: float) -> Tuple[float, str]:
    """
    Множитель столбца bound_theorem и его вид для правила шага.

    - theorem2 на composed_linear: 1 - alpha~ sigma_min^2 eta, кривая потерь через d_t
    - corollary*: множитель следствия на константах базовой задачи
    - остальные: 1 - alpha eta / 2 на константах экземпляра
    """
    if rule == ETA_THEOREM2 and inst.linmap is not None:
        p = inst.linmap
        return (
            _safe_factor(lambda: theorem2_rate_factor(p.tilde_alpha, p.factorization.sigma_min_nonzero, eta)),
            BOUND_THEOREM2_LOSS,
        )
    if rule in (ETA_COROLLARY, ETA_COROLLARY_QUADRATIC) and inst.base is not None and inst.transform is not None:
        t = inst.transform
        base = inst.base.constants
        eta_star = eta * t.b ** 2 / t.a
        return _safe_factor(lambda: corollary_bound_factor(base.alpha, eta_star, t.a, t.b)), BOUND_COROLLARY
    return 1.0 - inst.constants.alpha * eta / 2.0, BOUND_PL_RATE


def _curve(l0: float, factor: float, steps: int) -> np.ndarray:
    if not _is_contractive(factor):
        return np.full(steps + 1, np.nan)
    return l0 * np.power(factor, np.arange(steps + 1, dtype=float))


def _check_or_none(mean: np.ndarray, std_err: np.ndarray, bound: np.ndarray) -> Optional[Dict[str, Any]]:
    if not np.all(np.isfinite(bound)) or not np.all(np.isfinite(mean)):
        return None
    return statistical_bound_check(mean, std_err, bound)


@dataclass
class RunResult:
    """Итог cmd_run: таблица кривых, сводка и сама траектория."""

    rows: List[Tuple[Any, ...]]
    summary: Dict[str, Any]
    trajectory: Trajectory
    distance_rows: Optional[List[Tuple[Any, ...]]] = None
    all_diverged: bool = False


def execute_run(cfg: ExperimentConfig, inst: Optional[ProblemInstance] = None) -> RunResult:
    """
    Строит задачу, вычисляет шаг и выполняет R прогонов SGD.

    Столбец bound_theorem берется по правилу шага (см. theorem_bound_factor);
    его вид записывается в сводку как bound_theorem_kind.

    Returns:
        RunResult с кривыми mean_loss, std_err, bound_theorem, bound_quadratic
    """
    inst = inst or build_instance(cfg)
    c = inst.constants
    eta = resolve_eta(inst, cfg.eta_rule, cfg.m, cfg.eta)
    sgd_config = SgdConfig(m=cfg.m, eta=eta, steps=cfg.steps, runs=cfg.runs, seed=cfg.sgd_seed,
                           eta_rule=cfg.eta_rule, workers=cfg.workers)
    w0 = initial_point(inst, cfg.sgd_seed)
    factor_quadratic = _safe_factor(lambda: contraction_factor(eta, c.alpha, c.beta, c.lam, cfg.m))
    factor_theorem, bound_kind = theorem_bound_factor(inst, cfg.eta_rule, eta)
    # кривая потерь теоремы 2 строится через d_t, а не через L(w0)
    loss_rate = bound_kind != BOUND_THEOREM2_LOSS and _is_contractive(factor_theorem)
    bound_factor = factor_theorem if loss_rate else 1.0

    summary: Dict[str, Any] = {
        "version": get_version(),
        "config": cfg.as_dict(),
        "instance": inst.summary(),
        "eta_rule": cfg.eta_rule,
        "eta": eta,
        "step_sizes": step_table(inst, cfg.m),
        "factor_quadratic": factor_quadratic,
        "factor_theorem": factor_theorem,
        "bound_theorem_kind": bound_kind,
    }
    distance_rows: Optional[List[Tuple[Any, ...]]] = None

    if inst.linmap is not None:
        projected = run_sgd_thm2(inst.linmap, w0, sgd_config, bound_factor=bound_factor, on_divergence=ON_DIVERGENCE_RECORD)
        trajectory = projected.trajectory
        summary["step_comparison"] = composed_linear_step_comparison(inst.linmap, c.alpha, c.beta, c.lam, cfg.m)
        summary["distance"] = {
            "initial": float(projected.distances[0, 0]),
            "final_mean": float(projected.mean_distance[-1]),
            "bound_check": (
                _check_or_none(projected.mean_distance, projected.std_err_distance, projected.distance_bound)
                if projected.distance_bound is not None else None
            ),
            "loss_bound_passed": projected.loss_bound_passed,
            "worst_loss_excess": projected.worst_loss_excess,
        }
        bound_dist = projected.distance_bound if projected.distance_bound is not None else np.full(cfg.steps + 1, np.nan)
        distance_rows = [
            (t, projected.mean_distance[t], projected.std_err_distance[t], bound_dist[t]) for t in range(cfg.steps + 1)
        ]
        theorem2_curve = projected.loss_bound if bound_kind == BOUND_THEOREM2_LOSS else None
    else:
        trajectory = run_sgd(inst.objective, w0, sgd_config, bound_factor=bound_factor, on_divergence=ON_DIVERGENCE_RECORD)
        theorem2_curve = None

    l0 = float(trajectory.losses[0, 0])
    if theorem2_curve is not None:
        bound_theorem = theorem2_curve
    elif loss_rate:
        bound_theorem = trajectory.bound
    else:
        bound_theorem = np.full(cfg.steps + 1, np.nan)
    bound_quadratic = _curve(l0, factor_quadratic, cfg.steps)

    summary["initial_loss"] = l0
    summary["final_mean_loss"] = float(trajectory.mean_loss[-1])
    summary["diverged_runs"] = {str(r): step for r, step in sorted(trajectory.diverged.items())}
    summary["bound_check"] = {
        "theorem": _check_or_none(trajectory.mean_loss, trajectory.std_err, bound_theorem),
        "quadratic": _check_or_none(trajectory.mean_loss, trajectory.std_err, bound_quadratic),
    }
    rows = [
        (t, trajectory.mean_loss[t], trajectory.std_err[t], bound_theorem[t], bound_quadratic[t])
        for t in range(cfg.steps + 1)
    ]
    return RunResult(
        rows=rows,
        summary=summary,
        trajectory=trajectory,
        distance_rows=distance_rows,
        all_diverged=len(trajectory.diverged) == trajectory.runs,
    )


def cmd_run(cfg: ExperimentConfig) -> RunResult:
    """
    Выполняет эксперимент и пишет <output.path> (кривые) и <output.path>.summary.json.

    Raises:
        DivergenceError: Разошлись все повторы (результаты уже записаны)
    """
    result = execute_run(cfg)
    write_csv_atomic(cfg.output_path, CURVE_HEADER, result.rows)
    if result.distance_rows is not None:
        write_csv_atomic(f"{cfg.output_path}.distance.csv", DISTANCE_HEADER, result.distance_rows)
    write_json_atomic(f"{cfg.output_path}.summary.json", result.summary)
    if result.all_diverged:
        first = min(int(r) for r in result.summary["diverged_runs"])
        raise DivergenceError("Все повторы разошлись", run=first, step=result.summary["diverged_runs"][str(first)])
    return result


def _verification_probes(cfg: ExperimentConfig, inst: ProblemInstance) -> np.ndarray:
    if cfg.probe_count == 0:
        return inst.probes()
    return inst.probes(cfg.probe_count, cfg.probe_seed)


def execute_verify(cfg: ExperimentConfig, inst: Optional[ProblemInstance] = None) -> Dict[str, Any]:
    """
    Полный набор проверок инвариантов настроенного экземпляра.

    Returns:
        Отчет с ключами passed, checks (отчеты по проверкам) и info (справочные измерения)
    """
    inst = inst or build_instance(cfg)
    probes = _verification_probes(cfg, inst)
    alpha = inst.constants.alpha if cfg.alpha_override is None else cfg.alpha_override
    checks = validate_instance(inst, probes, alpha=alpha)
    info: Dict[str, Any] = {}

    floor = default_loss_floor(inst.objective, initial_point(inst, cfg.sgd_seed))
    try:
        estimated = estimate_constants(inst.objective, probes, loss_floor=floor)
    except (InsufficientProbesError, InvalidInputError) as e:
        logger.warning("Оценить константы по пробам не удалось: %s", e)
        estimated = None
    info["estimated_constants"] = None if estimated is None else estimated.as_dict()

    if inst.transform is not None and inst.base is not None:
        checks["pl_transfer"] = verify_pl_transfer(inst.base.objective, inst.transform, inst.base.constants.alpha, probes, loss_floor=0.0)
        info["smoothness_estimate"] = estimate_smoothness(inst.objective, probes[:20]) if estimated is None else estimated.lam
        info["smoothness_claimed"] = inst.constants.lam
        witness = find_midpoint_convexity_violation(inst.objective, inst.w_star, seed=cfg.probe_seed)
        info["nonconvexity_witness"] = witness
    if inst.linmap is not None:
        rng = np.random.default_rng(cfg.probe_seed)
        count = len(probes)
        pairs = zip(
            inst.w_star + rng.standard_normal((count, inst.dim)),
            inst.w_star + rng.standard_normal((count, inst.dim)),
        )
        checks["strong_convexity_range"] = check_strong_convexity_range(inst.linmap, pairs)

    failed = sorted(name for name, report in checks.items() if not report["passed"])
    report = {
        "version": get_version(),
        "config": cfg.as_dict(),
        "instance": inst.summary(),
        "alpha_checked": alpha,
        "probe_count": len(probes),
        "passed": not failed,
        "failed": failed,
        "checks": checks,
        "info": info,
    }
    return report


def cmd_verify(cfg: ExperimentConfig) -> Dict[str, Any]:
    """
    Пишет <output.path>.verify.json.

    Raises:
        VerificationFailure: Хотя бы одна проверка не прошла (отчет уже записан)
    """
    report = execute_verify(cfg)
    write_json_atomic(f"{cfg.output_path}.verify.json", report)
    if not report["passed"]:
        details = []
        for name in report["failed"]:
            check = report["checks"][name]
            probe = check.get("failing_probe")
            details.append(f"{name} (проба {probe})" if probe is not None else name)
        raise VerificationFailure(f"Проверки не пройдены: {', '.join(details)}")
    return report


def empirical_ratio(mean_loss: np.ndarray, window: int) -> float:
    """(mean[W] / mean[0])^(1/W), W = min(window, T); 0 при нулевых потерях, nan при T = 0."""
    steps = mean_loss.shape[0] - 1
    w = min(window, steps)
    if w < 1 or not np.isfinite(mean_loss[w]) or mean_loss[0] <= 0:
        return float("nan")
    if mean_loss[w] <= 0:
        return 0.0
    return float((mean_loss[w] / mean_loss[0]) ** (1.0 / w))


def execute_sweep(cfg: ExperimentConfig, batch_sizes: Sequence[int], inst: Optional[ProblemInstance] = None) -> List[Tuple[Any, ...]]:
    """
    Для каждого m: шаги, множители и эмпирический множитель за шаг.

    Шаг прогона берется по sgd.eta_rule конфига при данном m.
    """
    sizes = list(batch_sizes) or [cfg.m]
    for m in sizes:
        if int(m) != m or m < 1:
            raise ConfigError(f"Размер батча {m} должен быть целым >= 1", key="--batch-sizes")
    inst = inst or build_instance(cfg)
    w0 = initial_point(inst, cfg.sgd_seed)
    rows: List[Tuple[Any, ...]] = []
    for m in sizes:
        table = step_table(inst, m)
        eta = resolve_eta(inst, cfg.eta_rule, m, cfg.eta)
        sgd_config = SgdConfig(m=m, eta=eta, steps=cfg.steps, runs=cfg.runs, seed=cfg.sgd_seed,
                               eta_rule=cfg.eta_rule, workers=cfg.workers)
        trajectory = run_sgd(inst.objective, w0, sgd_config, on_divergence=ON_DIVERGENCE_RECORD)
        rows.append((
            int(m), table["eta_theorem1"], table["eta_quadratic"],
            table["factor_theorem1"], table["factor_quadratic"],
            empirical_ratio(trajectory.mean_loss, cfg.sweep_window),
        ))
    return rows


def cmd_sweep(cfg: ExperimentConfig, batch_sizes: Sequence[int]) -> List[Tuple[Any, ...]]:
    """Пишет CSV по размерам батча в <output.path>."""
    rows = execute_sweep(cfg, batch_sizes)
    write_csv_atomic(cfg.output_path, SWEEP_HEADER, rows)
    return rows


def cmd_gd(cfg: ExperimentConfig) -> List[Tuple[Any, ...]]:
    """
    Полноградиентный спуск с шагом 1/lambda и кривой PL (1 - alpha/(2 lambda))^t L(w0).

    Пишет <output.path> со столбцами step, loss, bound_pl.
    """
    inst = build_instance(cfg)
    c = inst.constants
    curve = run_gd(inst.objective, initial_point(inst, cfg.sgd_seed), 1.0 / c.lam, cfg.steps)
    bound = _curve(float(curve[0]), gd_rate_factor(c.alpha, c.lam), cfg.steps)
    rows = [(t, curve[t], bound[t]) for t in range(cfg.steps + 1)]
    write_csv_atomic(cfg.output_path, GD_HEADER, rows)
    return rows
