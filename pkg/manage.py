"""
CLI для экспериментов с мини-батч SGD в условиях PL и интерполяции.

Предоставляет команды:
- run: прогон SGD, CSV кривых и сводка
- verify: проверка инвариантов экземпляра
- sweep: таблица шагов и множителей по размерам батча
- gd: полноградиентный спуск с шагом 1/lambda
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from config import LOG_DIR, LOG_FILE_NAME, LOG_LEVEL, get_version
from experiment import cmd_gd, cmd_run, cmd_sweep, cmd_verify, load_config
from utils.errors import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, PlSgdError

logger = logging.getLogger("manage")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def setup_logging(level: str = LOG_LEVEL) -> None:
    """
    Настраивает root logger: вывод в файл LOG_DIR/pl_sgd.log и в консоль.

    Args:
        level: Уровень логирования (DEBUG, INFO, WARNING, ...)
    """
    log_format = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers.clear()

    try:
        os.makedirs(LOG_DIR, exist_ok=True)
        file_handler = logging.FileHandler(os.path.join(LOG_DIR, LOG_FILE_NAME), encoding='utf-8')
        file_handler.setLevel(level)
        file_handler.setFormatter(log_format)
        root_logger.addHandler(file_handler)
    except OSError as e:
        print(f"Не удалось открыть лог-файл в {LOG_DIR}: {e}", file=sys.stderr)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(log_format)
    root_logger.addHandler(console_handler)


def _parse_batch_sizes(raw: str) -> List[int]:
    try:
        sizes = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Ожидался список целых через запятую: {raw!r}") from None
    if any(m < 1 for m in sizes):
        raise argparse.ArgumentTypeError("Размеры батча должны быть >= 1")
    return sizes


def handle_run(args: argparse.Namespace) -> int:
    """
    Запускает эксперимент по конфигу.

    Args:
        args: Аргументы командной строки с путем к конфигу
    """
    cfg = load_config(args.config)
    result = cmd_run(cfg)
    checks = result.summary["bound_check"]
    print(f"eta={result.summary['eta']:.6g}, final mean loss={result.summary['final_mean_loss']:.6g}")
    for name, check in checks.items():
        status = "n/a" if check is None else ("passed" if check["passed"] else f"violated at t={check['first_violation']}")
        print(f"bound_{name}: {status}")
    print(f"CSV: {cfg.output_path}")
    return EXIT_OK


def handle_verify(args: argparse.Namespace) -> int:
    """
    Проверяет инварианты экземпляра.

    Args:
        args: Аргументы командной строки с путем к конфигу
    """
    cfg = load_config(args.config)
    report = cmd_verify(cfg)
    print(f"Все проверки пройдены ({report['probe_count']} проб)")
    return EXIT_OK


def handle_sweep(args: argparse.Namespace) -> int:
    """
    Строит таблицу по размерам батча.

    Args:
        args: Аргументы командной строки с конфигом и --batch-sizes
    """
    cfg = load_config(args.config)
    rows = cmd_sweep(cfg, args.batch_sizes or [])
    print(f"Sweep: {len(rows)} строк -> {cfg.output_path}")
    return EXIT_OK


def handle_gd(args: argparse.Namespace) -> int:
    """Полноградиентный спуск по конфигу."""
    cfg = load_config(args.config)
    rows = cmd_gd(cfg)
    print(f"GD: loss {rows[0][1]:.6g} -> {rows[-1][1]:.6g}, CSV: {cfg.output_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Mini-batch SGD under PL: experiments and checks")
    parser.add_argument(
        "--log-level", default=LOG_LEVEL, type=str.upper, choices=LOG_LEVELS,
        help="Уровень логирования (по умолчанию из LOG_LEVEL)",
    )
    parser.add_argument("--version", action="version", version=get_version())
    subparsers = parser.add_subparsers(dest="cmd", required=True)

    sp = subparsers.add_parser("run", help="Прогон SGD и запись кривых")
    sp.add_argument("config", help="Путь к конфигу эксперимента")
    sp.set_defaults(func=handle_run)

    sp = subparsers.add_parser("verify", help="Проверка инвариантов экземпляра")
    sp.add_argument("config")
    sp.set_defaults(func=handle_verify)

    sp = subparsers.add_parser("sweep", help="Таблица шагов и множителей по размерам батча")
    sp.add_argument("config")
    sp.add_argument("--batch-sizes", type=_parse_batch_sizes, default=None, help="Например 1,2,4,8 (по умолчанию sgd.m)")
    sp.set_defaults(func=handle_sweep)

    sp = subparsers.add_parser("gd", help="Полноградиентный спуск с шагом 1/lambda")
    sp.add_argument("config")
    sp.set_defaults(func=handle_gd)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level not in LOG_LEVELS:
        # значение по умолчанию из .env argparse не проверяет
        print(f"Error: неизвестный уровень логирования {args.log_level!r}", file=sys.stderr)
        return EXIT_CONFIG
    setup_logging(args.log_level)
    try:
        return args.func(args)
    except PlSgdError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception("Непредвиденная ошибка: %s", e)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
