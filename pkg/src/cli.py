"""
Командная строка IFCDA

Команды:
- run <config>                  - прогон (или перебор, если в файле есть sweep.*)
- sweep <param> <grid> <config> - перебор одного параметра, grid через запятую
- synth [key=value ...]         - записать синтетическую пару доменов в CSV

Коды выхода: 0 успех, 2 конфигурация, 3 файлы, 4 данные, 5 численная ошибка.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from .config import Settings
from .pipeline.dataset import SyntheticSpec, make_synthetic, save_features
from .pipeline.errors import ConfigError, IFCDAError
from .pipeline.experiment import (
    ExperimentConfig,
    ExperimentRunner,
    load_experiment_config,
    split_grid,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FILE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ifcda",
        description="Importance-filtered cross-domain adaptation on pre-extracted features",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Seed (overrides config and synthetic seeds)")
    common.add_argument("--csv-header", action="store_true", default=None, help="CSV files carry a header row")
    common.add_argument("--out", type=Path, default=None, help="Output directory")
    common.add_argument("--dump-graph", action="store_true", default=None, help="Write graph edge lists per iteration")
    common.add_argument("--log-level", default=None, help="Logging level (default from IFCDA_LOG_LEVEL)")

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="Run an experiment config")
    run.add_argument("config", type=Path)

    sweep = sub.add_parser("sweep", parents=[common], help="Sweep one parameter over a grid")
    sweep.add_argument("param")
    sweep.add_argument("grid", help="Comma-separated values, e.g. 0.9,0.95,0.98")
    sweep.add_argument("config", type=Path)

    synth = sub.add_parser("synth", parents=[common], help="Write a synthetic domain pair as CSV")
    synth.add_argument("overrides", nargs="*", help="SyntheticSpec fields as key=value")

    return parser


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Флаги командной строки перекрывают значения файла конфигурации"""
    updates = {}
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.csv_header:
        updates["csv_header"] = True
    if args.dump_graph:
        updates["dump_graph"] = True
    if args.seed is not None:
        updates["adaptation"] = cfg.adaptation.model_copy(update={"seed": args.seed})
        if cfg.synthetic is not None:
            updates["synthetic"] = cfg.synthetic.model_copy(update={"seed": args.seed})
    return cfg.model_copy(update=updates) if updates else cfg


def _parse_synthetic(overrides: List[str], seed: Optional[int]) -> SyntheticSpec:
    values = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got '{item}'")
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = value
    if seed is not None:
        values["seed"] = seed
    unknown = set(values) - set(SyntheticSpec.model_fields)
    if unknown:
        raise ConfigError(f"unknown synthetic fields: {', '.join(sorted(unknown))}")
    return SyntheticSpec(**values)


def _print_outcome(outcome) -> None:
    for record in outcome.records:
        if record.report is None:
            print(f"{record.name}: no target labels, predictions written to {record.report_path.parent}")
            continue
        metrics = ", ".join(
            f"{key}={value:.4f}" for key, value in record.report.headline().items() if value is not None
        )
        print(f"{record.name}: {metrics}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = Settings.load()

    if args.log_level:
        settings.app.log_level = args.log_level
    logging.basicConfig(
        level=settings.app.log_level_value(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    try:
        if args.command == "synth":
            spec = _parse_synthetic(args.overrides, args.seed)
            out_dir = args.out or settings.app.out_dir
            header = bool(args.csv_header) or settings.app.csv_header
            source, target = make_synthetic(spec)
            save_features(source, out_dir / "source.csv", csv_header=header)
            save_features(target, out_dir / "target.csv", csv_header=header)
            print(f"synthetic domains written to {out_dir}")
            return EXIT_OK

        cfg = apply_overrides(load_experiment_config(args.config), args)
        runner = ExperimentRunner(settings)
        if args.command == "sweep":
            grid = split_grid(args.grid)
            table = runner.sweep(args.param, grid, cfg)
            print(table.to_frame().to_string(index=False))
        else:
            _print_outcome(runner.run(cfg))
        return EXIT_OK

    except IFCDAError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"File error: {e}")
        return EXIT_FILE


if __name__ == "__main__":
    sys.exit(main())
