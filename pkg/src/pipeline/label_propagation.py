"""
Label Propagation Component - общее распространение меток по графу

Задача: min_F* sum_ij W_ij ||f*_i - f*_j||^2 + sum_l u_l h_l ||f*_l - f_l||^2,
alpha_l = 1/(1+u_l). Условие стационарности:

    L F* + U H (F* - F) = 0

Решение: F* = (I - I_alpha H^-1 W)^-1 (I - I_alpha) F.
Узлы с alpha = 0 (источник) закреплены как жёсткие ограничения и
исключаются из системы; свободные узлы решаются плотной LU-факторизацией
(n <= dense_limit) или стационарной итерацией.

Матрицы меток хранятся (C+1)×n, внутри решатель работает с F^T (n×(C+1)).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .dataset import SoftLabelMatrix
from .errors import DataError, NormalizationError, ParameterError, PropagationError
from .graph import SimilarityGraph, laplacian_parts

logger = logging.getLogger(__name__)

Scenario = Literal["csda", "osda"]

DENSE_LIMIT = 3000
MAX_CONDITION = 1e12
ITERATIVE_TOL = 1e-10
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class AnchorVector:
    """Сила "отпускания" метки для каждого узла: 0 - закреплён, 1 - свободен"""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float, copy=True).ravel()
        if alpha.size and (alpha.min() < 0.0 or alpha.max() > 1.0):
            raise ParameterError("anchor strengths must lie in [0, 1]")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def regularizers(self) -> np.ndarray:
        """u_l = 1/alpha_l - 1 (inf для закреплённых узлов)"""
        with np.errstate(divide="ignore"):
            return np.where(self.alpha > 0, 1.0 / self.alpha - 1.0, np.inf)


def init_labels(
    F_s: SoftLabelMatrix,
    n_t: int,
    scenario: Scenario = "csda",
    alpha_set: float = 0.98,
) -> Tuple[SoftLabelMatrix, AnchorVector]:
    """
    Начальная матрица меток F = [F_s, F_t] и вектор alpha.

    CSDA: F_t = 0, alpha_t = 1.
    OSDA: последняя строка F_t = 1 (объект "новый" до распространения), alpha_t = alpha_set.
    В обоих случаях alpha_s = 0.
    """
    if scenario == "osda" and not (0.0 < alpha_set < 1.0):
        raise ParameterError(f"alpha_set must lie in (0, 1) for open-set propagation, got {alpha_set}")
    if F_s.probs.size and np.any(F_s.probs[-1] != 0):
        raise DataError("source labels must not carry novel-class mass")

    C = F_s.class_count
    F_t = np.zeros((C + 1, n_t))
    if scenario == "osda":
        F_t[-1] = 1.0
        alpha_t = np.full(n_t, alpha_set)
    else:
        alpha_t = np.ones(n_t)

    F = SoftLabelMatrix(probs=np.hstack([F_s.probs, F_t]), class_count=C)
    anchors = AnchorVector(alpha=np.concatenate([np.zeros(F_s.size), alpha_t]))
    return F, anchors


def propagate(
    g: SimilarityGraph,
    F: SoftLabelMatrix,
    a: AnchorVector,
    *,
    dense_limit: int = DENSE_LIMIT,
    features: Optional[np.ndarray] = None,
) -> SoftLabelMatrix:
    """
    Распространяет метки по графу.

    Args:
        features: признаки узлов (столбцы), по которым строился граф. Если заданы,
            компонента без якоря получает метки ближайшего закреплённого узла
            (её решение - любая постоянная, выбирается ближайшая)

    Raises:
        PropagationError: система вырождена (компонента без якоря и features не заданы)
    """
    n = g.size
    if F.size != n or a.alpha.size != n:
        raise DataError(f"graph has {n} nodes, labels {F.size}, anchors {a.alpha.size}")

    alpha = a.alpha
    free = np.flatnonzero(alpha > 0)
    fixed = np.flatnonzero(alpha == 0)
    labels = F.probs.T

    result = labels.copy()
    if free.size == 0:
        return SoftLabelMatrix(probs=result.T, class_count=F.class_count)

    detached = _unanchored_components(g, alpha)
    if detached:
        if features is None:
            raise _unanchored_error(detached[0])
        return _propagate_detached(g, F, a, detached, features, dense_limit)

    W = g.weights
    h = g.degrees
    alpha_free = alpha[free]

    # (H_ff - diag(alpha) W_ff) X = diag(alpha) W_fa F_a + (1 - alpha) H_ff F_f
    W_ff = W[free][:, free]
    W_fa = W[free][:, fixed]
    rhs = alpha_free[:, None] * (W_fa @ labels[fixed]) + ((1.0 - alpha_free) * h[free])[:, None] * labels[free]

    if free.size <= dense_limit:
        # строки нормированы на степень: I - diag(alpha/h) W_ff
        h_free = h[free]
        system = np.eye(free.size) - (alpha_free / h_free)[:, None] * W_ff.toarray()
        solution = _solve_dense(system, rhs / h_free[:, None])
    else:
        solution = _solve_iterative(W_ff, h[free], alpha_free, rhs)

    result[free] = solution
    _check_residual(g, alpha, labels, result)

    return SoftLabelMatrix(probs=np.clip(result, 0.0, None).T, class_count=F.class_count)


def _solve_dense(system: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        condition = np.linalg.cond(system, 1)
    except np.linalg.LinAlgError:
        condition = np.inf
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise PropagationError(f"propagation system is singular (condition estimate {condition:.3g})")
    lu = scipy.linalg.lu_factor(system, check_finite=False)
    return scipy.linalg.lu_solve(lu, rhs, check_finite=False)


def _solve_iterative(
    W_ff: sp.csr_matrix,
    h_free: np.ndarray,
    alpha_free: np.ndarray,
    rhs: np.ndarray,
    max_iter: int = 100_000,
) -> np.ndarray:
    # X_{k+1} = diag(alpha/h) W_ff X_k + rhs / h
    scale = (alpha_free / h_free)[:, None]
    offset = rhs / h_free[:, None]
    current = offset.copy()
    for step in range(1, max_iter + 1):
        updated = scale * (W_ff @ current) + offset
        change = np.max(np.abs(updated - current))
        norm = max(np.max(np.abs(updated)), 1e-300)
        current = updated
        if change <= ITERATIVE_TOL * norm:
            logger.debug(f"Iterative propagation converged in {step} steps")
            return current
    raise PropagationError(f"iterative propagation did not converge in {max_iter} steps")


def _check_residual(
    g: SimilarityGraph, alpha: np.ndarray, labels: np.ndarray, result: np.ndarray
) -> None:
    """Невязка L F* + U H (F* - F) на свободных узлах"""
    _, L = laplacian_parts(g)
    free = alpha > 0
    u = 1.0 / alpha[free] - 1.0
    h = g.degrees[free]
    residual = (L @ result)[free] + (u * h)[:, None] * (result[free] - labels[free])
    worst = float(np.max(np.abs(residual))) if residual.size else 0.0
    tolerance = RESIDUAL_TOL * max(1.0, float(h.max())) * max(1.0, float(u.max()))
    if worst > tolerance:
        raise PropagationError(f"propagation residual {worst:.3g} exceeds {tolerance:.3g}")


def column_normalize(F: SoftLabelMatrix) -> SoftLabelMatrix:
    """
    Делит каждый столбец на его сумму.

    Raises:
        NormalizationError: столбец с нулевой суммой (недостижимый узел)
    """
    sums = F.probs.sum(axis=0)
    empty = np.flatnonzero(sums <= 0)
    if empty.size:
        raise NormalizationError(
            f"{empty.size} label columns sum to zero (first at index {int(empty[0])})"
        )
    return SoftLabelMatrix(probs=F.probs / sums, class_count=F.class_count, normalized=True)
