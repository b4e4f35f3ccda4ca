"""
Evaluation Component - жёсткие метки и метрики качества адаптации

Функции:
- predict_hard: argmax по строкам мягких меток (CSDA без строки C+1)
- compute_metrics: точность для CSDA, OS / OS* / UNK для OSDA
- score_trajectory: метрики по итерациям цикла адаптации

"Нормированная" точность - невзвешенное среднее точностей по классам,
присутствующим в истинной разметке.
"""

from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from sklearn.metrics import confusion_matrix

from .dataset import SoftLabelMatrix
from .errors import MetricsError
from .label_propagation import Scenario

logger = logging.getLogger(__name__)


class MetricsReport(BaseModel):
    """Метрики одного прогона"""

    scenario: Scenario
    class_count: int
    sample_count: int
    accuracy: Optional[float] = None
    OS: Optional[float] = None
    OS_star: Optional[float] = None
    UNK: Optional[float] = None

    # ключ - цифровая метка 1..C+1, только присутствующие классы
    per_class: Dict[int, float] = Field(default_factory=dict)
    confusion: List[List[int]] = Field(default_factory=list)
    trajectory: List[Dict[str, Any]] = Field(default_factory=list)

    def headline(self) -> Dict[str, Optional[float]]:
        """Основные метрики сценария"""
        if self.scenario == "csda":
            return {"accuracy": self.accuracy}
        return {"OS": self.OS, "OS_star": self.OS_star, "UNK": self.UNK}


def predict_hard(F: SoftLabelMatrix, scenario: Scenario) -> np.ndarray:
    """
    Цифровые метки 1..C (CSDA) или 1..C+1 (OSDA); при равенстве - меньший индекс.
    """
    rows = F.probs if scenario == "osda" else F.probs[: F.class_count]
    if F.size == 0:
        return np.zeros(0, dtype=np.int64)
    return rows.argmax(axis=0).astype(np.int64) + 1


def compute_metrics(
    predicted: Sequence[int],
    truth: Sequence[int],
    class_count: int,
    scenario: Scenario,
) -> MetricsReport:
    """
    Считает метрики по предсказанным и истинным цифровым меткам.

    Raises:
        MetricsError: пустая разметка, разные длины или метки вне 1..C+1
    """
    pred = np.asarray(predicted).ravel()
    true = np.asarray(truth).ravel()
    if true.size == 0:
        raise MetricsError("ground truth is empty")
    if pred.size != true.size:
        raise MetricsError(f"{pred.size} predictions for {true.size} ground-truth labels")

    labels = np.arange(1, class_count + 2)
    for name, values in (("ground truth", true), ("predictions", pred)):
        if values.min() < 1 or values.max() > class_count + 1:
            raise MetricsError(f"{name} must lie in 1..{class_count + 1}")

    cm = confusion_matrix(true, pred, labels=labels)
    counts = cm.sum(axis=1)
    correct = np.diag(cm)
    present = counts > 0
    per_class = {
        int(label): float(correct[i] / counts[i])
        for i, label in enumerate(labels)
        if present[i]
    }

    report = MetricsReport(
        scenario=scenario,
        class_count=class_count,
        sample_count=int(true.size),
        accuracy=float(correct.sum() / true.size),
        per_class=per_class,
        confusion=cm.tolist(),
    )
    if scenario == "osda":
        known = [per_class[c] for c in range(1, class_count + 1) if c in per_class]
        report.OS = float(np.mean(list(per_class.values())))
        report.OS_star = float(np.mean(known)) if known else None
        report.UNK = per_class.get(class_count + 1)

    logger.debug(f"Metrics computed: {report.headline()}")
    return report


def score_trajectory(
    snapshots: Sequence[Any],
    truth: Sequence[int],
    class_count: int,
    scenario: Scenario,
) -> List[Dict[str, Any]]:
    """Строки iter + метрики сценария для каждого снимка меток"""
    rows = []
    for snapshot in snapshots:
        report = compute_metrics(predict_hard(snapshot.target_labels, scenario), truth, class_count, scenario)
        rows.append({"iter": snapshot.iteration, **report.headline()})
    return rows
