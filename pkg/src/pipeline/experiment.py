"""
Experiment Component - прогоны, перебор параметров и артефакты

Функции:
- Разбор конфигурации эксперимента (плоский `key = value`, `#` комментарии)
- Загрузка доменов из файлов или синтетическая генерация
- Прогон адаптации и метрики
- Перебор одного параметра по сетке (опционально в пуле потоков)
- Запись отчёта `# ifcda-report v1`, траектории по итерациям и предсказаний
"""

from __future__ import annotations

import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError
from tqdm import tqdm

from ..config import Settings
from ..presets import get_preset
from .adaptation import AdaptationConfig, AdaptationResult, run_ifcda
from .dataset import DomainDataset, FeatureLoader, LoaderConfig, SyntheticSpec, make_synthetic
from .errors import ConfigError, DataFileError
from .evaluation import MetricsReport, compute_metrics, predict_hard, score_trajectory

logger = logging.getLogger(__name__)

REPORT_HEADER = "# ifcda-report v1"

SWEEP_PARAMETERS = ("T", "k", "p", "N", "tau", "alpha_set", "gamma", "beta", "lambda", "delta", "label_mode")

# значения, означающие None для необязательных параметров
NULL_WORDS = {"none", "all", "auto", ""}
NULLABLE = {"N", "tie_projections", "sigma", "class_count", "dense_solver_limit"}

EXPERIMENT_KEYS = {
    "name", "source", "target", "format", "csv_header", "standardize",
    "target_labeled", "out_dir", "dump_graph",
}


class ExperimentConfig(BaseModel):
    """Конфигурация эксперимента"""

    name: str = Field("ifcda", description="Имя прогона (префикс директорий артефактов)")

    # Данные: либо файлы source/target, либо синтетика
    source: Optional[Path] = Field(None, description="Файл признаков источника")
    target: Optional[Path] = Field(None, description="Файл признаков цели")
    format: Literal["csv", "raw", "mat"] = Field("csv", description="Формат файлов")
    csv_header: Optional[bool] = Field(None, description="CSV с заголовком; None - из окружения")
    standardize: Optional[bool] = Field(None, description="Стандартизация; None - из окружения")
    target_labeled: bool = Field(True, description="Файл цели содержит истинные метки")
    synthetic: Optional[SyntheticSpec] = Field(None, description="Синтетическая пара доменов")

    adaptation: AdaptationConfig = Field(default_factory=AdaptationConfig)
    sweep: Dict[str, List[str]] = Field(default_factory=dict, description="Параметр -> сетка значений")

    # Артефакты
    out_dir: Optional[Path] = Field(None, description="Директория артефактов; None - из окружения")
    dump_graph: Optional[bool] = Field(None, description="Писать графы; None - из окружения")


def split_grid(text: str) -> List[str]:
    """'0.9, 0.95,0.98' -> ['0.9', '0.95', '0.98']"""
    return [item.strip() for item in text.split(",") if item.strip()]


def _adaptation_key(key: str) -> Optional[str]:
    if key in ("lambda", "lambda_"):
        return "lambda"
    if key in AdaptationConfig.model_fields:
        return key
    return None


def update_adaptation(base: AdaptationConfig, updates: Dict[str, Any]) -> AdaptationConfig:
    """
    Новая AdaptationConfig с обновлёнными полями (значения могут быть строками).

    Raises:
        ConfigError: неизвестный параметр или значение вне ограничений
    """
    data = base.model_dump(by_alias=True)
    for key, value in updates.items():
        name = _adaptation_key(key)
        if name is None:
            raise ConfigError(f"unknown adaptation parameter '{key}'")
        if isinstance(value, str) and name in NULLABLE and value.strip().lower() in NULL_WORDS:
            value = None
        data[name] = value
    try:
        return AdaptationConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid adaptation parameters: {e}") from e


def parse_config_text(text: str) -> ExperimentConfig:
    """
    Разбирает текст конфигурации.

    Порядок применения: preset -> явные ключи адаптации.

    Raises:
        ConfigError: синтаксис, неизвестный или повторный ключ, неверное значение
    """
    entries: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {number}: empty key")
        if key in entries:
            raise ConfigError(f"line {number}: duplicate key '{key}'")
        entries[key] = value

    experiment: Dict[str, Any] = {}
    synthetic: Dict[str, Any] = {}
    sweep: Dict[str, List[str]] = {}
    adaptation: Dict[str, Any] = {}
    preset: Optional[str] = entries.pop("preset", None)

    for key, value in entries.items():
        if key.startswith("synthetic."):
            synthetic[key.split(".", 1)[1]] = value
        elif key.startswith("sweep."):
            sweep[key.split(".", 1)[1]] = split_grid(value)
        elif key in EXPERIMENT_KEYS:
            if key in ("csv_header", "standardize", "dump_graph", "out_dir") and value.lower() in NULL_WORDS:
                continue
            experiment[key] = value
        elif _adaptation_key(key) is not None:
            adaptation[key] = value
        else:
            raise ConfigError(f"unknown config key '{key}'")

    base = AdaptationConfig()
    if preset:
        base = update_adaptation(base, get_preset(preset))

    try:
        cfg = ExperimentConfig(
            **experiment,
            synthetic=SyntheticSpec(**synthetic) if synthetic else None,
            adaptation=update_adaptation(base, adaptation),
            sweep=sweep,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e

    check_experiment(cfg)
    return cfg


def check_experiment(cfg: ExperimentConfig) -> None:
    """Проверяет согласованность источников данных и перебора"""
    if cfg.synthetic is None and (cfg.source is None or cfg.target is None):
        raise ConfigError("config needs either synthetic.* keys or both source and target files")
    if cfg.synthetic is not None and (cfg.source is not None or cfg.target is not None):
        raise ConfigError("config mixes synthetic.* keys with source/target files")
    if len(cfg.sweep) > 1:
        raise ConfigError(f"only one parameter can be swept at a time, got {sorted(cfg.sweep)}")
    for param, grid in cfg.sweep.items():
        _check_sweep(param, grid)


def _check_sweep(param: str, grid: Sequence[Any]) -> None:
    if param not in SWEEP_PARAMETERS:
        raise ConfigError(f"cannot sweep '{param}', choose one of {', '.join(SWEEP_PARAMETERS)}")
    if len(grid) == 0:
        raise ConfigError(f"sweep grid for '{param}' is empty")


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Читает и разбирает файл конфигурации"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise DataFileError(f"config file not found: {path}") from e
    cfg = parse_config_text(text)

    # относительные пути данных - от директории файла конфигурации
    updates = {
        key: path.parent / value
        for key, value in (("source", cfg.source), ("target", cfg.target))
        if value is not None and not value.is_absolute()
    }
    if updates:
        cfg = cfg.model_copy(update=updates)
    logger.info(f"Experiment config loaded from {path}")
    return cfg


def format_value(value: Any) -> str:
    """Детерминированное текстовое представление значения отчёта"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, Path):
        return value.as_posix()
    return str(value)


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", text)


@dataclass(eq=False)
class RunRecord:
    """Итог одного прогона"""

    name: str
    adaptation: AdaptationConfig
    report: Optional[MetricsReport]
    predictions: np.ndarray
    result: AdaptationResult
    report_path: Optional[Path] = None
    sweep_value: Optional[str] = None


@dataclass(eq=False)
class SweepTable:
    """Таблица метрик по значениям перебираемого параметра (в порядке сетки)"""

    parameter: str
    records: List[RunRecord] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for record in self.records:
            row: Dict[str, Any] = {self.parameter: record.sweep_value}
            if record.report is not None:
                row.update(record.report.headline())
            rows.append(row)
        return pd.DataFrame(rows)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(eq=False)
class ExperimentOutcome:
    records: List[RunRecord]
    sweep: Optional[SweepTable] = None

    @property
    def reports(self) -> List[Optional[MetricsReport]]:
        return [record.report for record in self.records]


class ExperimentRunner:
    """
    Запускает эксперименты и пишет артефакты.

    Приоритет настроек: значение в ExperimentConfig (файл или CLI) ->
    переменные окружения IFCDA_* -> значения по умолчанию.
    """

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or Settings.load()
        self.stats = {
            "runs": 0,
            "reports_written": 0,
            "samples_loaded": 0,
        }
        # run_single и write_artifacts вызываются из потоков перебора
        self._stats_lock = threading.Lock()

    # ---------- данные ----------

    def load_domains(self, cfg: ExperimentConfig) -> Tuple[DomainDataset, DomainDataset]:
        """Загружает или генерирует пару доменов"""
        if cfg.synthetic is not None:
            source, target = make_synthetic(cfg.synthetic)
            logger.info(f"Synthetic domains generated: n_s={source.size}, n_t={target.size}, m={source.dimension}")
        else:
            app = self.settings.app
            loader_cfg = dict(
                format=cfg.format,
                csv_header=app.csv_header if cfg.csv_header is None else cfg.csv_header,
                standardize=app.standardize if cfg.standardize is None else cfg.standardize,
                class_count=cfg.adaptation.class_count,
            )
            source = FeatureLoader(LoaderConfig(**loader_cfg, has_labels=True)).load(cfg.source, role="source")
            target = FeatureLoader(LoaderConfig(**loader_cfg, has_labels=cfg.target_labeled)).load(
                cfg.target, role="target"
            )
        self._count("samples_loaded", source.size + target.size)
        return source, target

    def _out_dir(self, cfg: ExperimentConfig) -> Path:
        return cfg.out_dir if cfg.out_dir is not None else self.settings.app.out_dir

    def _dump_graph(self, cfg: ExperimentConfig) -> bool:
        return self.settings.app.dump_graph if cfg.dump_graph is None else cfg.dump_graph

    # ---------- прогоны ----------

    def run(self, cfg: ExperimentConfig) -> ExperimentOutcome:
        """Одиночный прогон или перебор, если в конфигурации есть sweep.*"""
        check_experiment(cfg)
        source, target = self.load_domains(cfg)
        if cfg.sweep:
            (param, grid), = cfg.sweep.items()
            table = self.sweep(param, grid, cfg, domains=(source, target))
            return ExperimentOutcome(records=table.records, sweep=table)
        record = self.run_single(cfg, cfg.adaptation, source, target, cfg.name)
        return ExperimentOutcome(records=[record])

    def run_single(
        self,
        cfg: ExperimentConfig,
        adaptation: AdaptationConfig,
        source: DomainDataset,
        target: DomainDataset,
        run_name: str,
        sweep_value: Optional[str] = None,
    ) -> RunRecord:
        """Адаптация + метрики + артефакты одного прогона"""
        run_dir = self._out_dir(cfg) / _safe_name(run_name)
        graph_dir = run_dir / "graphs" if self._dump_graph(cfg) else None
        if adaptation.dense_solver_limit is None:
            adaptation = adaptation.model_copy(update={"dense_solver_limit": self.settings.app.dense_solver_limit})

        result = run_ifcda(source, target, adaptation, graph_dir=graph_dir)
        C = adaptation.class_count or source.class_count or int(source.labels.max())
        predictions = predict_hard(result.target_labels, adaptation.scenario)

        report = None
        if target.labels is not None:
            report = compute_metrics(predictions, target.labels, C, adaptation.scenario)
            report.trajectory = score_trajectory(result.snapshots, target.labels, C, adaptation.scenario)
            logger.info(f"Run {run_name}: {report.headline()}")
        else:
            logger.info(f"Run {run_name}: target is unlabeled, metrics skipped")

        record = RunRecord(
            name=run_name,
            adaptation=adaptation,
            report=report,
            predictions=predictions,
            result=result,
            sweep_value=sweep_value,
        )
        record.report_path = self.write_artifacts(run_dir, record, source, target, C)
        self._count("runs")
        return record

    def sweep(
        self,
        param: str,
        grid: Sequence[Any],
        cfg: ExperimentConfig,
        domains: Optional[Tuple[DomainDataset, DomainDataset]] = None,
    ) -> SweepTable:
        """
        Один полный прогон на каждое значение сетки; остальные параметры фиксированы.

        Raises:
            ConfigError: неизвестный параметр или пустая сетка
        """
        _check_sweep(param, grid)
        values = [str(value) for value in grid]
        configs = [update_adaptation(cfg.adaptation, {param: value}) for value in values]
        source, target = domains or self.load_domains(cfg)

        app = self.settings.app
        workers = min(app.sweep_workers, len(values))
        logger.info(f"Sweep over {param}: {len(values)} points, {workers} worker(s)")

        def run_point(index: int) -> RunRecord:
            name = f"{cfg.name}_{param}={values[index]}"
            return self.run_single(cfg, configs[index], source, target, name, sweep_value=values[index])

        with tqdm(total=len(values), desc=f"sweep {param}", disable=not app.progress) as progress:
            if workers <= 1:
                records = []
                for index in range(len(values)):
                    records.append(run_point(index))
                    progress.update(1)
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    futures = [pool.submit(run_point, index) for index in range(len(values))]
                    for future in futures:
                        future.add_done_callback(lambda _: progress.update(1))
                    records = [future.result() for future in futures]

        table = SweepTable(parameter=param, records=records)
        out_dir = self._out_dir(cfg)
        out_dir.mkdir(parents=True, exist_ok=True)
        table.to_frame().to_csv(out_dir / f"{_safe_name(cfg.name)}_sweep_{param}.csv", index=False)
        return table

    # ---------- артефакты ----------

    def write_artifacts(
        self,
        run_dir: Path,
        record: RunRecord,
        source: DomainDataset,
        target: DomainDataset,
        class_count: int,
    ) -> Path:
        """Пишет report.txt, trajectory.csv (если есть метки цели) и predictions.csv"""
        run_dir.mkdir(parents=True, exist_ok=True)

        report_path = run_dir / "report.txt"
        report_path.write_text(
            render_report(record, source, target, class_count), encoding="utf-8"
        )
        write_predictions(record.predictions, run_dir / "predictions.csv")
        if record.report is not None:
            write_trajectory(record.report.trajectory, run_dir / "trajectory.csv")

        self._count("reports_written")
        logger.info(f"Report written to {report_path}")
        return report_path

    def _count(self, key: str, amount: int = 1) -> None:
        with self._stats_lock:
            self.stats[key] += amount

    def get_stats(self) -> Dict[str, Any]:
        """Возвращает статистику прогонов"""
        with self._stats_lock:
            return self.stats.copy()


def render_report(
    record: RunRecord,
    source: DomainDataset,
    target: DomainDataset,
    class_count: int,
) -> str:
    """Текст отчёта: заголовок и строки `key = value` в фиксированном порядке"""
    lines = [REPORT_HEADER, f"run = {record.name}"]
    fields: List[Tuple[str, Any]] = [
        ("class_count", class_count),
        ("dimension", source.dimension),
        ("n_source", source.size),
        ("n_target", target.size),
    ]
    params = record.adaptation.model_dump(by_alias=True)
    fields += [(f"param.{key}", params[key]) for key in sorted(params)]
    fields.append(("param.tied", record.adaptation.tied))

    report = record.report
    metric_keys = ("accuracy",) if record.adaptation.scenario == "csda" else ("accuracy", "OS", "OS_star", "UNK")
    for key in metric_keys:
        fields.append((key, getattr(report, key) if report is not None else None))
    if report is not None:
        fields += [(f"class_accuracy.{label}", acc) for label, acc in sorted(report.per_class.items())]
        for row in report.trajectory:
            for key, value in row.items():
                if key != "iter":
                    fields.append((f"iter{row['iter']}.{key}", value))

    lines += [f"{key} = {format_value(value)}" for key, value in fields]
    return "\n".join(lines) + "\n"


def write_trajectory(rows: List[Dict[str, Any]], path: Path) -> Path:
    """CSV iter,accuracy (CSDA) или iter,OS,OS_star,UNK (OSDA)"""
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.10g")
    return path


def write_predictions(predictions: np.ndarray, path: Path) -> Path:
    """CSV index,predicted с цифровыми метками цели"""
    frame = pd.DataFrame({"index": np.arange(predictions.size), "predicted": predictions})
    frame.to_csv(path, index=False)
    return path


def run_experiment(
    config: "Path | ExperimentConfig",
    settings: Optional[Settings] = None,
) -> ExperimentOutcome:
    """Функция совместимости: загружает конфигурацию (если передан путь) и запускает"""
    cfg = config if isinstance(config, ExperimentConfig) else load_experiment_config(Path(config))
    return ExperimentRunner(settings).run(cfg)


def sweep(
    param: str,
    grid: Sequence[Any],
    base: ExperimentConfig,
    settings: Optional[Settings] = None,
) -> SweepTable:
    """Перебирает param по grid, остальные параметры из base"""
    return ExperimentRunner(settings).sweep(param, grid, base)
