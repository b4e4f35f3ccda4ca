"""
Importance Filter Component - фильтрация мягких меток по важности

Мягкие метки целевого домена делятся на два типа:
- уверенные: максимум вероятности > tau -> one-hot по argmax
- неоднозначные: остаются N наибольших вероятностей, остальные 0,
  затем нормировка на 1

Метки источника не фильтруются. Дополнительно - свёртка (C+1)-меток
в пару [масса общих классов, масса нового класса] для MMD.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from .dataset import SoftLabelMatrix
from .errors import DataError, FilterError

logger = logging.getLogger(__name__)

LabelMode = Literal["filtered", "soft", "hard"]

NORMALIZATION_TOL = 1e-9


class FilterConfig(BaseModel):
    """Конфигурация фильтра важности"""

    tau: float = Field(0.8, description="Порог уверенной метки", gt=0.0, lt=1.0)
    N: Optional[int] = Field(3, description="Сколько вероятностей оставить у неоднозначной метки (None - все)", ge=1)
    mode: LabelMode = Field(
        "filtered",
        description="filtered - фильтр важности, soft - без изменений, hard - one-hot по argmax",
    )


@dataclass(frozen=True, eq=False)
class CollapsedLabelMatrix:
    """Строка 1 - суммарная масса общих классов, строка 2 - масса нового класса"""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float, copy=True)
        if probs.ndim != 2 or probs.shape[0] != 2:
            raise DataError(f"collapsed labels must have 2 rows, got shape {probs.shape}")
        if probs.size and probs.min() < -1e-12:
            raise DataError("collapsed labels must be nonnegative")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def shared(self) -> np.ndarray:
        return self.probs[0]

    @property
    def novel(self) -> np.ndarray:
        return self.probs[1]

    @property
    def shared_mass(self) -> float:
        return float(self.probs[0].sum())


def _check_normalized(P: np.ndarray) -> None:
    if P.size and P.min() < -1e-12:
        raise FilterError("filter input has negative probabilities")
    deviation = np.abs(P.sum(axis=0) - 1.0)
    if deviation.size and deviation.max() > NORMALIZATION_TOL:
        raise FilterError(
            f"filter input is not normalized (column {int(deviation.argmax())} "
            f"sums to {1.0 + float(deviation.max()):.12g})"
        )


def _filter_columns(P: np.ndarray, cfg: FilterConfig) -> np.ndarray:
    """Векторная фильтрация столбцов матрицы вероятностей"""
    _check_normalized(P)
    rows, cols = P.shape
    if cols == 0 or cfg.mode == "soft":
        return P.copy()

    one_hot = np.zeros_like(P)
    one_hot[P.argmax(axis=0), np.arange(cols)] = 1.0
    if cfg.mode == "hard":
        return one_hot

    if cfg.N is None or cfg.N >= rows:
        kept = P.copy()
    else:
        # stable: при равенстве на N-й позиции выигрывает меньший индекс класса
        top = np.argsort(-P, axis=0, kind="stable")[: cfg.N]
        mask = np.zeros_like(P, dtype=bool)
        np.put_along_axis(mask, top, True, axis=0)
        kept = np.where(mask, P, 0.0)
    kept = kept / kept.sum(axis=0)

    confident = P.max(axis=0) > cfg.tau
    return np.where(confident[None, :], one_hot, kept)


def filter_label(f: np.ndarray, cfg: FilterConfig) -> np.ndarray:
    """
    Фильтрует один вектор вероятностей длины C+1.

    Raises:
        FilterError: вход не нормирован
    """
    column = np.asarray(f, dtype=float).reshape(-1, 1)
    return _filter_columns(column, cfg)[:, 0]


class ImportanceFilter:
    """
    Фильтр мягких меток целевого домена со статистикой.
    """

    def __init__(self, config: Optional[FilterConfig] = None):
        self.config = config or FilterConfig()
        self.stats = {
            "filtered_columns": 0,
            "confident": 0,
            "ambiguous": 0,
        }

    def filter_targets(self, F: SoftLabelMatrix, n_s: int) -> SoftLabelMatrix:
        """
        Фильтрует столбцы цели (после первых n_s столбцов источника).

        Args:
            F: нормированная матрица (C+1)×n_st
            n_s: число объектов источника

        Returns:
            SoftLabelMatrix с нетронутым блоком источника
        """
        if not F.normalized:
            raise FilterError("filter input must be column-normalized")

        target = F.probs[:, n_s:]
        filtered = _filter_columns(target, self.config)

        confident = int(np.sum(target.max(axis=0) > self.config.tau)) if target.size else 0
        self.stats["filtered_columns"] += target.shape[1]
        self.stats["confident"] += confident
        self.stats["ambiguous"] += target.shape[1] - confident

        logger.debug(
            f"Filtered {target.shape[1]} target labels ({self.config.mode}): "
            f"{confident} confident, {target.shape[1] - confident} ambiguous"
        )
        probs = np.hstack([F.probs[:, :n_s], filtered])
        return SoftLabelMatrix(probs=probs, class_count=F.class_count, normalized=True)

    def get_stats(self) -> Dict[str, Any]:
        """Возвращает статистику фильтра"""
        stats = self.stats.copy()
        if stats["filtered_columns"] > 0:
            stats["confident_rate"] = stats["confident"] / stats["filtered_columns"]
        return stats

    def reset_stats(self):
        """Сбрасывает статистику"""
        self.stats = {
            "filtered_columns": 0,
            "confident": 0,
            "ambiguous": 0,
        }


def filter_target_labels(F: SoftLabelMatrix, n_s: int, cfg: FilterConfig) -> SoftLabelMatrix:
    """Фильтрует целевые столбцы F; столбцы источника возвращаются без изменений"""
    return ImportanceFilter(cfg).filter_targets(F, n_s)


def collapse_shared_novel(F: SoftLabelMatrix) -> CollapsedLabelMatrix:
    """[f_1 + ... + f_C, f_{C+1}] для каждого столбца"""
    C = F.class_count
    return CollapsedLabelMatrix(probs=np.vstack([F.probs[:C].sum(axis=0), F.probs[C]]))
