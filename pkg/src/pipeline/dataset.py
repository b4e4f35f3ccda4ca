"""
Dataset Component - модель данных и загрузка признаков

Функции:
- Чтение CSV / raw-binary / .mat файлов с заранее извлечёнными признаками
- Транспонирование в соглашение "столбец = объект" (m×n)
- Проверка конечности значений и диапазона меток
- Опциональная z-стандартизация по каждому измерению
- Перевод цифровых меток в one-hot матрицу (C+1 строк)
- Детерминированный синтетический генератор пары доменов

На диске CSV хранит объекты строками (последний столбец - метка),
в памяти матрица признаков всегда m×n: столбец j - объект j.
Метки везде 1-based, класс C+1 - новый (неизвестный) класс.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from sklearn.preprocessing import StandardScaler

from .errors import DataError, DataFileError, FormatError, LabelError

logger = logging.getLogger(__name__)

FeatureFormat = Literal["csv", "raw", "mat"]

# Заголовок raw-binary: два little-endian uint64 (m, n)
_RAW_HEADER = np.dtype("<u8")
_RAW_VALUES = np.dtype("<f8")


def _frozen_array(value: Any, dtype: Any) -> np.ndarray:
    arr = np.array(value, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def check_labels(labels: np.ndarray, class_count: Optional[int], role: str) -> None:
    """
    Проверяет цифровые метки: целые, >= 1, не выше C (источник) или C+1 (цель).

    Raises:
        LabelError
    """
    if labels.size == 0:
        return
    if labels.min() < 1:
        raise LabelError(f"label {int(labels.min())} is below 1")
    if class_count is not None:
        top = class_count if role == "source" else class_count + 1
        if labels.max() > top:
            raise LabelError(f"label {int(labels.max())} outside 1..{top} for {role} domain")


@dataclass(frozen=True, eq=False)
class DomainDataset:
    """Один домен: признаки m×n (столбец = объект) и опциональные цифровые метки 1..C+1"""

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    role: Literal["source", "target"] = "source"
    class_count: Optional[int] = None

    def __post_init__(self):
        features = _frozen_array(self.features, float)
        if features.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        object.__setattr__(self, "features", features)

        if self.labels is None:
            return
        raw = np.asarray(self.labels, dtype=float).ravel()
        if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
            raise LabelError("labels must be finite integers")
        if raw.shape[0] != features.shape[1]:
            raise LabelError(f"{raw.shape[0]} labels for {features.shape[1]} samples")
        labels = _frozen_array(raw, np.int64)
        check_labels(labels, self.class_count, self.role)
        object.__setattr__(self, "labels", labels)

    @property
    def dimension(self) -> int:
        return int(self.features.shape[0])

    @property
    def size(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True, eq=False)
class SoftLabelMatrix:
    """Матрица вероятностей классов (C+1)×n"""

    probs: np.ndarray
    class_count: int
    normalized: bool = False

    def __post_init__(self):
        probs = _frozen_array(self.probs, float)
        if probs.ndim != 2:
            raise DataError(f"probs must be a 2-D matrix, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)):
            raise DataError("probs contain non-finite values")
        if probs.shape[0] != self.class_count + 1:
            raise DataError(f"expected {self.class_count + 1} rows, got {probs.shape[0]}")
        # допускаем шум округления решателя
        if probs.size and probs.min() < -1e-12:
            raise DataError("soft labels must be nonnegative")
        if self.normalized and probs.size:
            if probs.max() > 1.0 + 1e-9:
                raise DataError("normalized soft labels exceed 1")
            if np.max(np.abs(probs.sum(axis=0) - 1.0)) > 1e-9:
                raise DataError("normalized soft label columns must sum to 1")
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return int(self.probs.shape[1])

    def columns(self, start: int, stop: Optional[int] = None) -> "SoftLabelMatrix":
        """Срез по объектам с сохранением флагов"""
        return SoftLabelMatrix(
            probs=self.probs[:, start:stop],
            class_count=self.class_count,
            normalized=self.normalized,
        )


class SyntheticSpec(BaseModel):
    """Параметры синтетической пары доменов"""

    class_count: int = Field(3, description="Число общих классов C", ge=1)
    novel_class_count: int = Field(0, description="Число новых кластеров в целевом домене", ge=0)
    source_samples_per_class: int = Field(60, description="Объектов на класс в источнике", ge=1)
    target_samples_per_class: int = Field(60, description="Объектов на класс в цели", ge=1)
    dimension: int = Field(10, description="Размерность признаков m", ge=2)
    mean_shift: float = Field(1.0, description="Длина сдвига целевого домена", ge=0.0)
    rotation_angle: float = Field(30.0, description="Угол поворота (градусы) в первых двух координатах")
    noise_scale: float = Field(1.0, description="СКО шума вокруг центров", ge=0.0)
    cluster_spread: float = Field(4.0, description="СКО положения центров кластеров", gt=0.0)
    seed: int = Field(0, description="Seed генератора")


class LoaderConfig(BaseModel):
    """Конфигурация чтения признаков"""

    format: FeatureFormat = Field("csv", description="Формат файла")
    csv_header: bool = Field(False, description="Первая строка CSV - заголовок")
    has_labels: bool = Field(True, description="Последний столбец (raw: последняя строка) - метка")
    standardize: bool = Field(True, description="z-стандартизация по измерениям")
    class_count: Optional[int] = Field(None, description="C для проверки диапазона меток", ge=1)
    mat_feature_key: str = Field("fts", description="Ключ признаков в .mat")
    mat_label_key: str = Field("labels", description="Ключ меток в .mat")


class FeatureLoader:
    """
    Загрузчик признаков доменов.

    Поддерживаемые форматы:
    - CSV (UTF-8, запятая, опциональный заголовок)
    - raw-binary: uint64 m, uint64 n, затем m·n float64 column-major
    - .mat (бенчмарки с SURF/DeCAF признаками)
    """

    def __init__(self, config: Optional[LoaderConfig] = None):
        self.config = config or LoaderConfig()
        self.stats = {
            "files_read": 0,
            "samples_loaded": 0,
            "files_written": 0,
            "errors": 0,
        }

    def load(self, path: Path, role: Literal["source", "target"] = "source") -> DomainDataset:
        """
        Читает файл и возвращает DomainDataset в соглашении m×n.

        Args:
            path: путь к файлу
            role: source или target

        Returns:
            DomainDataset
        """
        path = Path(path)
        logger.info(f"Loading {role} features from {path} ({self.config.format})")

        if not path.is_file():
            self.stats["errors"] += 1
            raise DataFileError(f"feature file not found: {path}")

        try:
            if self.config.format == "csv":
                features, labels = self._read_csv(path)
            elif self.config.format == "raw":
                features, labels = self._read_raw(path)
            else:
                features, labels = self._read_mat(path)

            if self.config.standardize:
                features = self._standardize(features)

            dataset = DomainDataset(
                features=features,
                labels=labels,
                role=role,
                class_count=self.config.class_count,
            )
        except Exception:
            self.stats["errors"] += 1
            raise

        self.stats["files_read"] += 1
        self.stats["samples_loaded"] += dataset.size
        logger.info(f"Loaded {dataset.size} samples of dimension {dataset.dimension}")
        return dataset

    def save(self, dataset: DomainDataset, path: Path) -> Path:
        """Записывает датасет в формате конфигурации (csv или raw)"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        if self.config.format == "csv":
            self._write_csv(dataset, path)
        elif self.config.format == "raw":
            self._write_raw(dataset, path)
        else:
            raise FormatError("writing .mat files is not supported")

        self.stats["files_written"] += 1
        logger.info(f"Saved {dataset.size} samples to {path}")
        return path

    # ---------- CSV ----------

    def _read_csv(self, path: Path) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        text = path.read_bytes().decode("utf-8-sig")
        lines = [line for line in text.splitlines() if line.strip()]
        if self.config.csv_header:
            lines = lines[1:]
        if not lines:
            raise FormatError(f"{path.name}: no data rows")

        # pandas молча дополняет короткие строки NaN, поэтому ширину проверяем сами
        widths = {line.count(",") + 1 for line in lines}
        if len(widths) != 1:
            raise FormatError(f"{path.name}: ragged rows with field counts {sorted(widths)}")

        try:
            table = pd.read_csv(
                io.StringIO("\n".join(lines)),
                header=None,
                dtype=float,
                float_precision="round_trip",
            )
        except ValueError as e:
            raise DataError(f"{path.name}: non-numeric value ({e})") from e

        values = table.to_numpy(dtype=float)
        return self._split_labels(values, path)

    def _write_csv(self, dataset: DomainDataset, path: Path) -> None:
        df = pd.DataFrame(
            dataset.features.T,
            columns=[f"f{i + 1}" for i in range(dataset.dimension)],
        )
        if dataset.labels is not None:
            df["label"] = dataset.labels.astype(np.int64)
        df.to_csv(path, index=False, header=self.config.csv_header, float_format="%.17g")

    # ---------- raw-binary ----------

    def _read_raw(self, path: Path) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        blob = path.read_bytes()
        if len(blob) < 2 * _RAW_HEADER.itemsize:
            raise FormatError(f"{path.name}: truncated header")

        rows, cols = (int(v) for v in np.frombuffer(blob, dtype=_RAW_HEADER, count=2))
        expected = 2 * _RAW_HEADER.itemsize + rows * cols * _RAW_VALUES.itemsize
        if len(blob) != expected:
            raise FormatError(
                f"{path.name}: header says {rows}x{cols} but payload has {len(blob)} bytes"
            )

        matrix = np.frombuffer(
            blob, dtype=_RAW_VALUES, count=rows * cols, offset=2 * _RAW_HEADER.itemsize
        ).reshape((rows, cols), order="F")
        # raw хранит объекты столбцами - транспонируем к виду "объект = строка"
        return self._split_labels(matrix.T.astype(float), path)

    def _write_raw(self, dataset: DomainDataset, path: Path) -> None:
        matrix = dataset.features
        if dataset.labels is not None:
            matrix = np.vstack([matrix, dataset.labels.astype(float)[None, :]])
        header = np.array(matrix.shape, dtype=_RAW_HEADER)
        payload = np.asarray(matrix, dtype=_RAW_VALUES).tobytes(order="F")
        path.write_bytes(header.tobytes() + payload)

    # ---------- .mat ----------

    def _read_mat(self, path: Path) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        from scipy.io import loadmat

        try:
            content = loadmat(path)
        except Exception as e:
            raise FormatError(f"{path.name}: cannot read .mat file ({e})") from e

        key = self.config.mat_feature_key
        if key not in content:
            raise FormatError(f"{path.name}: key '{key}' not found")
        rows = np.asarray(content[key], dtype=float)

        labels = None
        if self.config.has_labels:
            label_key = self.config.mat_label_key
            if label_key not in content:
                raise FormatError(f"{path.name}: label key '{label_key}' not found")
            labels = np.asarray(content[label_key], dtype=float).ravel()
            if labels.shape[0] != rows.shape[0]:
                raise FormatError(f"{path.name}: {labels.shape[0]} labels for {rows.shape[0]} rows")

        self._check_finite(rows, path)
        return rows.T.copy(), labels

    # ---------- общее ----------

    def _split_labels(
        self, rows: np.ndarray, path: Path
    ) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """rows - объекты строками; возвращает признаки m×n и метки"""
        self._check_finite(rows, path)
        if self.config.has_labels:
            if rows.shape[1] < 2:
                raise FormatError(f"{path.name}: label column requested but only one column present")
            return rows[:, :-1].T.copy(), rows[:, -1].copy()
        return rows.T.copy(), None

    @staticmethod
    def _check_finite(values: np.ndarray, path: Path) -> None:
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"{path.name}: non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")

    @staticmethod
    def _standardize(features: np.ndarray) -> np.ndarray:
        # StandardScaler ждёт объекты строками; нулевая дисперсия -> масштаб 1
        return StandardScaler().fit_transform(features.T).T

    def get_stats(self) -> Dict[str, Any]:
        """Возвращает статистику загрузки"""
        return self.stats.copy()


def load_features(
    path: Path,
    fmt: FeatureFormat = "csv",
    *,
    role: Literal["source", "target"] = "source",
    has_labels: bool = True,
    csv_header: bool = False,
    class_count: Optional[int] = None,
    standardize: bool = False,
) -> DomainDataset:
    """
    Обёртка над FeatureLoader для разовой загрузки.

    По умолчанию без стандартизации, чтобы сохранялось тождество
    load_features(save_features(d)) == d.
    """
    loader = FeatureLoader(LoaderConfig(
        format=fmt,
        csv_header=csv_header,
        has_labels=has_labels,
        standardize=standardize,
        class_count=class_count,
    ))
    return loader.load(Path(path), role=role)


def save_features(
    dataset: DomainDataset,
    path: Path,
    fmt: FeatureFormat = "csv",
    *,
    csv_header: bool = False,
) -> Path:
    """Записывает датасет в CSV или raw-binary"""
    loader = FeatureLoader(LoaderConfig(format=fmt, csv_header=csv_header))
    return loader.save(dataset, Path(path))


def to_one_hot(y: np.ndarray, class_count: int) -> SoftLabelMatrix:
    """
    Цифровые метки 1..C+1 -> one-hot матрица (C+1)×n.

    Raises:
        LabelError: метка вне диапазона
    """
    labels = np.asarray(y).ravel()
    if labels.size and (labels.min() < 1 or labels.max() > class_count + 1):
        raise LabelError(f"labels must lie in 1..{class_count + 1}")
    if np.any(labels != np.round(labels)):
        raise LabelError("labels must be integers")

    labels = labels.astype(np.int64)
    probs = np.zeros((class_count + 1, labels.size))
    probs[labels - 1, np.arange(labels.size)] = 1.0
    return SoftLabelMatrix(probs=probs, class_count=class_count, normalized=True)


def _rotation(angle_degrees: float) -> np.ndarray:
    theta = math.radians(angle_degrees)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def make_synthetic(spec: SyntheticSpec) -> Tuple[DomainDataset, DomainDataset]:
    """
    Генерирует пару доменов из изотропных гауссовых кластеров.

    Источник - C кластеров. Цель - те же кластеры, повёрнутые на
    rotation_angle в первых двух координатах и сдвинутые на mean_shift,
    плюс novel_class_count новых кластеров с меткой C+1.
    Результат полностью определяется seed.
    """
    rng = np.random.default_rng(spec.seed)
    C, m = spec.class_count, spec.dimension

    centers = rng.normal(0.0, spec.cluster_spread, size=(C + spec.novel_class_count, m))
    direction = rng.normal(size=m)
    direction /= np.linalg.norm(direction)
    shift = spec.mean_shift * direction
    rotation = _rotation(spec.rotation_angle)

    source_blocks, source_labels = [], []
    for c in range(C):
        noise = spec.noise_scale * rng.normal(size=(spec.source_samples_per_class, m))
        source_blocks.append(centers[c] + noise)
        source_labels.append(np.full(spec.source_samples_per_class, c + 1))

    target_blocks, target_labels = [], []
    for c in range(C):
        noise = spec.noise_scale * rng.normal(size=(spec.target_samples_per_class, m))
        points = centers[c] + noise
        points[:, :2] = points[:, :2] @ rotation.T
        target_blocks.append(points + shift)
        target_labels.append(np.full(spec.target_samples_per_class, c + 1))

    for j in range(spec.novel_class_count):
        noise = spec.noise_scale * rng.normal(size=(spec.target_samples_per_class, m))
        target_blocks.append(centers[C + j] + noise)
        target_labels.append(np.full(spec.target_samples_per_class, C + 1))

    source = DomainDataset(
        features=np.vstack(source_blocks).T,
        labels=np.concatenate(source_labels),
        role="source",
        class_count=C,
    )
    target = DomainDataset(
        features=np.vstack(target_blocks).T,
        labels=np.concatenate(target_labels),
        role="target",
        class_count=C,
    )

    logger.debug(
        f"Synthetic pair: C={C}, novel={spec.novel_class_count}, m={m}, "
        f"n_s={source.size}, n_t={target.size}"
    )
    return source, target
