"""
Adaptation Component - обучение проекций и чередующийся цикл адаптации

Функции:
- Обобщённая задача на собственные значения blockdiag(N_sb, N_tb) P = D P Phi
- Вложение Z = A^T X с нормировкой столбцов
- Цикл: граф -> распространение -> фильтр -> потери -> проекции -> новый граф
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

from .dataset import DomainDataset, SoftLabelMatrix, check_labels, to_one_hot
from .errors import (
    DataError,
    IFCDAError,
    LabelError,
    ParameterError,
    SolverError,
    annotate_iteration,
)
from .graph import build_graph, dump_edge_list
from .importance_filter import FilterConfig, ImportanceFilter, LabelMode
from .label_propagation import DENSE_LIMIT, Scenario, column_normalize, init_labels, propagate
from .losses import LossMatrices, assemble_losses

logger = logging.getLogger(__name__)

REGULARIZATION = 1e-6
RESIDUAL_TOL = 1e-6


class AdaptationConfig(BaseModel):
    """Гиперпараметры адаптации"""

    model_config = ConfigDict(populate_by_name=True)

    scenario: Scenario = Field("csda", description="csda - общие классы, osda - есть новый класс C+1")
    k: int = Field(20, description="Размерность подпространства", ge=1)
    p: int = Field(20, description="Число соседей в графе", ge=1)
    T: int = Field(5, description="Число итераций", ge=1)
    N: Optional[int] = Field(3, description="Сколько вероятностей оставить у неоднозначной метки", ge=1)
    tau: float = Field(0.8, description="Порог уверенной метки", gt=0.0, lt=1.0)
    alpha_set: float = Field(0.98, description="Сила отпускания меток цели в OSDA", gt=0.0, le=1.0)
    gamma: float = Field(0.1, description="Вес масштаба проекций", ge=0.0)
    beta: float = Field(1.0, description="Вес сдвига подпространств", ge=0.0)
    lambda_: float = Field(0.01, alias="lambda", description="Вес внутриклассового разброса", ge=0.0)
    delta: float = Field(1.0, description="Вес MMD-слагаемых", ge=0.0)
    tie_projections: Optional[bool] = Field(None, description="A_s = A_t; None - только для OSDA")
    normalize_embeddings: bool = Field(True, description="L2-нормировка столбцов вложения")
    label_mode: LabelMode = Field("filtered", description="filtered | soft | hard")
    sigma: Optional[float] = Field(None, description="Ширина ядра графа; None - медиана длин рёбер", gt=0.0)
    dense_solver_limit: Optional[int] = Field(
        None, description="Порог плотного решателя распространения; None - DENSE_LIMIT", ge=1
    )
    class_count: Optional[int] = Field(None, description="Число общих классов C; None - по меткам источника", ge=1)
    # алгоритм детерминирован и seed не читает: это метка прогона для отчёта
    seed: int = Field(0, description="Метка прогона в отчёте (param.seed); на вычисления не влияет")

    @property
    def tied(self) -> bool:
        if self.tie_projections is None:
            return self.scenario == "osda"
        return self.tie_projections

    def filter_config(self) -> FilterConfig:
        return FilterConfig(tau=self.tau, N=self.N, mode=self.label_mode)


@dataclass(frozen=True, eq=False)
class ProjectionPair:
    """Проекции доменов A_s, A_t (m×k) и собственные значения по убыванию"""

    A_s: np.ndarray
    A_t: np.ndarray
    eigvals: np.ndarray

    def __post_init__(self):
        if self.A_s.shape != self.A_t.shape:
            raise DataError(f"projection shapes differ: {self.A_s.shape} vs {self.A_t.shape}")
        if self.eigvals.shape != (self.A_s.shape[1],):
            raise DataError("one eigenvalue per projection column expected")

    @property
    def P(self) -> np.ndarray:
        return np.vstack([self.A_s, self.A_t])

    @property
    def k(self) -> int:
        return int(self.A_s.shape[1])


def _fold(M: np.ndarray, m: int) -> np.ndarray:
    """Для A_s = A_t: tr(P^T M P) = tr(A^T (M_ss + M_st + M_ts + M_tt) A)"""
    return M[:m, :m] + M[:m, m:] + M[m:, :m] + M[m:, m:]


def _pencil(L: LossMatrices, lambda_: float, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    m = L.dimension
    zeros = np.zeros((m, m))
    numerator = np.block([[L.Nsb, zeros], [zeros, L.Ntb]])
    denominator = lambda_ * np.block([[L.Nsw, zeros], [zeros, L.Ntw]]) + L.V
    if delta != 0 and L.M1 is not None and L.M2 is not None:
        denominator = denominator + delta * (L.M1 + L.M2)
    return numerator, (denominator + denominator.T) / 2.0


def solve_projection(
    L: LossMatrices,
    lambda_: float,
    delta: float,
    k: int,
    *,
    tied: bool = False,
) -> ProjectionPair:
    """
    Решает blockdiag(N_sb, N_tb) P = D P Phi для k наибольших собственных значений.

    D = lambda * blockdiag(N_sw, N_tw) + delta * (M1 + M2) + V + eps * I,
    eps = 1e-6 * tr(D) / dim. При tied задача сворачивается до m×m.

    Raises:
        ParameterError: k > m
        SolverError: неконечные матрицы или сбой решателя
    """
    m = L.dimension
    if k < 1 or k > m:
        raise ParameterError(f"subspace dimension k={k} must satisfy 1 <= k <= m={m}")

    S, D = _pencil(L, lambda_, delta)
    if tied:
        S, D = _fold(S, m), _fold(D, m)
    if not (np.all(np.isfinite(S)) and np.all(np.isfinite(D))):
        raise SolverError("loss matrices contain non-finite values")

    dim = S.shape[0]
    trace = float(np.trace(D))
    eps = REGULARIZATION * trace / dim if trace > 0 else REGULARIZATION
    D = D + eps * np.eye(dim)

    try:
        values, vectors = scipy.linalg.eigh(S, D, subset_by_index=[dim - k, dim - 1])
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SolverError(f"generalized eigensolver failed: {e}") from e

    values = values[::-1]
    vectors = vectors[:, ::-1]
    # знак: наибольшая по модулю компонента столбца положительна
    pivots = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[pivots, np.arange(k)])
    signs[signs == 0] = 1.0
    vectors = vectors * signs

    _check_solution(S, D, vectors, values)
    logger.debug(f"Eigensolve: dim={dim}, k={k}, top eigenvalue={values[0]:.6g}")

    if tied:
        return ProjectionPair(A_s=vectors, A_t=vectors.copy(), eigvals=values)
    return ProjectionPair(A_s=vectors[:m], A_t=vectors[m:], eigvals=values)


def _check_solution(S: np.ndarray, D: np.ndarray, P: np.ndarray, values: np.ndarray) -> None:
    SP = S @ P
    residual = np.linalg.norm(SP - (D @ P) * values)
    floor = RESIDUAL_TOL * (np.linalg.norm(S) + np.linalg.norm(D)) * np.linalg.norm(P)
    scale = max(float(np.linalg.norm(SP)), floor, np.finfo(float).tiny)
    if not np.isfinite(residual) or residual > RESIDUAL_TOL * scale:
        raise SolverError(f"eigensolver residual {residual:.3g} exceeds tolerance {RESIDUAL_TOL * scale:.3g}")


def embed(X: np.ndarray, A: np.ndarray, normalize: bool = True) -> np.ndarray:
    """Z = A^T X (k×n); при normalize каждый ненулевой столбец имеет единичную норму"""
    X = np.asarray(X, dtype=float)
    if A.shape[0] != X.shape[0]:
        raise DataError(f"projection has {A.shape[0]} rows, features have dimension {X.shape[0]}")
    Z = A.T @ X
    if normalize:
        norms = np.linalg.norm(Z, axis=0)
        Z = np.divide(Z, norms, out=np.zeros_like(Z), where=norms > 0)
    return Z


@dataclass(frozen=True, eq=False)
class IterationSnapshot:
    """Отфильтрованные метки цели после итерации (0 - до адаптации)"""

    iteration: int
    target_labels: SoftLabelMatrix
    sigma: float
    eigvals: Optional[np.ndarray] = None


@dataclass(eq=False)
class AdaptationResult:
    projections: Optional[ProjectionPair]
    target_labels: SoftLabelMatrix
    snapshots: List[IterationSnapshot] = field(default_factory=list)
    stats: Dict[str, Any] = field(default_factory=dict)


class IFCDAAdapter:
    """
    Чередующийся цикл: распространение меток по графу и обучение проекций.

    Граф строится на исходных признаках, затем на каждой итерации
    перестраивается на вложениях [Z_s, Z_t]. Матрицы потерь всегда
    считаются на исходных признаках.
    """

    def __init__(self, config: Optional[AdaptationConfig] = None, graph_dir: Optional[Path] = None):
        self.config = config or AdaptationConfig()
        self.graph_dir = Path(graph_dir) if graph_dir else None
        self.filter = ImportanceFilter(self.config.filter_config())
        self.stats = self._empty_stats()

    @staticmethod
    def _empty_stats() -> Dict[str, Any]:
        return {
            "iterations": 0,
            "propagations": 0,
            "eigensolves": 0,
            "skipped_classes": 0,
        }

    def fit(self, source: DomainDataset, target: DomainDataset) -> AdaptationResult:
        """
        Запускает адаптацию.

        Returns:
            AdaptationResult с проекциями последней итерации, финальными
            отфильтрованными метками цели и снимками по итерациям
        """
        cfg = self.config
        if source.labels is None:
            raise LabelError("source domain must be labeled")
        if source.dimension != target.dimension:
            raise DataError(
                f"source dimension {source.dimension} differs from target dimension {target.dimension}"
            )

        C = cfg.class_count or source.class_count or int(source.labels.max())
        check_labels(source.labels, C, "source")
        if np.any(source.labels == C + 1):
            raise LabelError("source labels must lie in 1..C")
        F_s = to_one_hot(source.labels, C)

        scenario = cfg.scenario
        if scenario == "osda" and cfg.alpha_set >= 1.0:
            logger.info("alpha_set = 1: novel row held at zero, target-only components take the nearest anchored labels")

        m = source.dimension
        k = cfg.k
        if k > m:
            logger.warning(f"k={k} exceeds feature dimension m={m}, using k={m}")
            k = m

        Xs, Xt = source.features, target.features
        logger.info(
            f"Adaptation started: scenario={cfg.scenario}, C={C}, m={m}, "
            f"n_s={source.size}, n_t={target.size}, k={k}, T={cfg.T}"
        )

        F_t, sigma = self._label_step(np.hstack([Xs, Xt]), F_s, target.size, scenario, 0)
        snapshots = [IterationSnapshot(iteration=0, target_labels=F_t, sigma=sigma)]
        projections: Optional[ProjectionPair] = None

        for iteration in range(1, cfg.T + 1):
            try:
                losses = assemble_losses(
                    Xs, Xt, F_s, F_t, beta=cfg.beta, gamma=cfg.gamma, delta=cfg.delta
                )
                self.stats["skipped_classes"] += len(losses.skipped_classes)
                projections = solve_projection(losses, cfg.lambda_, cfg.delta, k, tied=cfg.tied)
                self.stats["eigensolves"] += 1

                Z = np.hstack([
                    embed(Xs, projections.A_s, cfg.normalize_embeddings),
                    embed(Xt, projections.A_t, cfg.normalize_embeddings),
                ])
                F_t, sigma = self._label_step(Z, F_s, target.size, scenario, iteration)
            except IFCDAError as e:
                raise annotate_iteration(e, iteration) from e

            snapshots.append(IterationSnapshot(
                iteration=iteration, target_labels=F_t, sigma=sigma, eigvals=projections.eigvals
            ))
            self.stats["iterations"] += 1
            logger.info(f"Iteration {iteration}/{cfg.T} done: sigma={sigma:.4g}, top eigenvalue={projections.eigvals[0]:.4g}")

        return AdaptationResult(
            projections=projections,
            target_labels=F_t,
            snapshots=snapshots,
            stats=self.get_stats(),
        )

    def _label_step(
        self,
        Z: np.ndarray,
        F_s: SoftLabelMatrix,
        n_t: int,
        scenario: Scenario,
        iteration: int,
    ) -> Tuple[SoftLabelMatrix, float]:
        """Граф -> распространение -> нормировка -> фильтр; возвращает метки цели"""
        cfg = self.config
        graph = build_graph(Z, cfg.p, cfg.sigma)
        if self.graph_dir is not None:
            dump_edge_list(graph, self.graph_dir / f"graph_iter{iteration}.txt")

        dense_limit = cfg.dense_solver_limit or DENSE_LIMIT
        if scenario == "osda" and cfg.alpha_set >= 1.0:
            # alpha = 1: начальные метки цели не участвуют, строка C+1 структурно нулевая
            F, anchors = init_labels(F_s, n_t, "csda")
            propagated = propagate(graph, F, anchors, dense_limit=dense_limit, features=Z)
        else:
            F, anchors = init_labels(F_s, n_t, scenario, cfg.alpha_set)
            propagated = propagate(graph, F, anchors, dense_limit=dense_limit)
        F_star = column_normalize(propagated)
        self.stats["propagations"] += 1

        filtered = self.filter.filter_targets(F_star, F_s.size)
        return filtered.columns(F_s.size), graph.sigma

    def get_stats(self) -> Dict[str, Any]:
        """Возвращает статистику адаптации вместе со статистикой фильтра"""
        stats = self.stats.copy()
        stats.update({f"filter_{key}": value for key, value in self.filter.get_stats().items()})
        return stats

    def reset_stats(self):
        """Сбрасывает статистику"""
        self.stats = self._empty_stats()
        self.filter.reset_stats()


def run_ifcda(
    source: DomainDataset,
    target: DomainDataset,
    cfg: AdaptationConfig,
    graph_dir: Optional[Path] = None,
) -> AdaptationResult:
    """Запускает полный цикл адаптации с конфигурацией cfg"""
    return IFCDAAdapter(cfg, graph_dir=graph_dir).fit(source, target)
