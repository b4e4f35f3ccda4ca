"""
Graph Component - граф сходства по p ближайшим соседям

Строит симметричный граф над объединением [X_s, X_t]:
ребро (i, j) есть, если i среди p ближайших к j ИЛИ j среди p ближайших к i;
вес ребра exp(-||x_i - x_j||^2 / sigma^2). Петель нет.
Расстояния считаются точно (brute force), равные расстояния
упорядочиваются по меньшему индексу объекта.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.spatial.distance import pdist, squareform

from .errors import DataError, ParameterError

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    """Симметричная разреженная матрица сходства W и использованная sigma"""

    weights: sp.csr_matrix
    sigma: float
    neighbors: int

    def __post_init__(self):
        W = sp.csr_matrix(self.weights, dtype=float)
        if W.shape[0] != W.shape[1]:
            raise DataError(f"affinity matrix must be square, got {W.shape}")
        if (W != W.T).nnz:
            raise DataError("affinity matrix must be symmetric")
        if np.any(W.diagonal() != 0):
            raise DataError("affinity matrix must have a zero diagonal")
        if np.any(np.asarray(W.sum(axis=1)).ravel() <= 0):
            raise DataError("graph has isolated nodes")
        object.__setattr__(self, "weights", W)

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()


def build_graph(X: np.ndarray, p: int, sigma: Optional[float] = None) -> SimilarityGraph:
    """
    Строит граф p ближайших соседей с гауссовыми весами.

    Args:
        X: матрица m×n_st, столбец = объект
        p: число соседей
        sigma: ширина ядра; None - медиана длин сохранённых рёбер

    Returns:
        SimilarityGraph
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    if p < 1 or p >= n:
        raise ParameterError(f"neighbor count p={p} must satisfy 1 <= p < n_st={n}")
    if not np.all(np.isfinite(X)):
        raise DataError("graph input contains non-finite values")
    if sigma is not None and sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")

    sq = squareform(pdist(X.T, metric="sqeuclidean"))
    np.fill_diagonal(sq, np.inf)

    # stable sort: при равных расстояниях выигрывает меньший индекс
    nearest = np.argsort(sq, axis=1, kind="stable")[:, :p]
    rows = np.repeat(np.arange(n), p)
    directed = sp.csr_matrix(
        (np.ones(rows.size, dtype=bool), (rows, nearest.ravel())), shape=(n, n)
    )
    upper = sp.triu(directed + directed.T, k=1).tocoo()
    i, j = upper.row, upper.col

    dist_sq = sq[i, j]
    if sigma is None:
        sigma = _median_edge_length(np.sqrt(dist_sq))

    weights = np.exp(-dist_sq / sigma ** 2)
    # ребро существует структурно, даже если вес ушёл в underflow
    weights = np.maximum(weights, _TINY)

    W = sp.csr_matrix(
        (np.concatenate([weights, weights]), (np.concatenate([i, j]), np.concatenate([j, i]))),
        shape=(n, n),
    )
    logger.debug(f"Graph built: n={n}, p={p}, edges={i.size}, sigma={sigma:.6g}")
    return SimilarityGraph(weights=W, sigma=float(sigma), neighbors=p)


def _median_edge_length(lengths: np.ndarray) -> float:
    sigma = float(np.median(lengths))
    if sigma > 0:
        return sigma
    positive = lengths[lengths > 0]
    fallback = float(positive.mean()) if positive.size else 1.0
    logger.warning(f"Median edge length is 0 (duplicate points), using sigma={fallback:.6g}")
    return fallback


def laplacian_parts(g: SimilarityGraph) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Возвращает (H, L): диагональ степеней и лапласиан L = H - W"""
    H = sp.diags(g.degrees).tocsr()
    L = (H - g.weights).tocsr()
    return H, L


def dump_edge_list(g: SimilarityGraph, path: Path) -> Path:
    """Пишет рёбра графа в текстовый файл `i j weight` (0-based, i < j)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    upper = sp.triu(g.weights, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    df = pd.DataFrame({
        "i": upper.row[order],
        "j": upper.col[order],
        "weight": upper.data[order],
    })
    df.to_csv(path, sep=" ", header=False, index=False, float_format="%.17g")
    logger.debug(f"Graph edge list written to {path}")
    return path
