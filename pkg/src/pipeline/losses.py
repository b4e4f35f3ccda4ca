"""
Loss Matrices Component - матрицы потерь для обучения проекций

Все потери записываются как квадратичные формы tr(P^T M P), P = [A_s; A_t]:
- M1: MMD по массе общих классов (свёрнутые метки [shared, novel])
- M2: поклассовый MMD по отфильтрованным мягким меткам
- N_b, N_w: межклассовый и внутриклассовый разброс каждого домена
- V: сдвиг подпространств beta*||A_s - A_t||^2 + масштаб gamma*(||A_s||^2 + ||A_t||^2)

Блок MMD для весов w_s, w_t:
    q_s = w_s / sum(w_s),  q_t = w_t / sum(w_t)
    M = [X_s q_s; -X_t q_t] [X_s q_s; -X_t q_t]^T
т.е. M_ss = X_s Q_ss X_s^T, M_st = -X_s Q_st X_t^T, M_ts = -X_t Q_ts X_s^T, M_tt = X_t Q_tt X_t^T.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .dataset import SoftLabelMatrix
from .errors import DataError, DegenerateWeightsError, EmptyLossError, ParameterError
from .importance_filter import CollapsedLabelMatrix

logger = logging.getLogger(__name__)

# масса класса ниже порога считается нулевой
MIN_CLASS_MASS = 1e-12


@dataclass(frozen=True, eq=False)
class LossMatrices:
    """Блоки целевой функции; M1/M2 = None, если MMD-слагаемые отключены (delta = 0)"""

    V: np.ndarray
    Nsb: np.ndarray
    Nsw: np.ndarray
    Ntb: np.ndarray
    Ntw: np.ndarray
    M1: Optional[np.ndarray] = None
    M2: Optional[np.ndarray] = None
    skipped_classes: Tuple[int, ...] = ()

    @property
    def dimension(self) -> int:
        return int(self.Nsb.shape[0])


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def _weighted_mmd(Xs: np.ndarray, Xt: np.ndarray, ws: np.ndarray, wt: np.ndarray) -> np.ndarray:
    mass_s, mass_t = ws.sum(), wt.sum()
    mu_s = Xs @ (ws / mass_s)
    mu_t = Xt @ (wt / mass_t)
    M = np.block([
        [np.outer(mu_s, mu_s), -np.outer(mu_s, mu_t)],
        [-np.outer(mu_t, mu_s), np.outer(mu_t, mu_t)],
    ])
    return _symmetrize(M)


def _check_domains(Xs: np.ndarray, Xt: np.ndarray) -> None:
    if Xs.shape[0] != Xt.shape[0]:
        raise DataError(f"domains differ in dimension: {Xs.shape[0]} vs {Xt.shape[0]}")


def mmd_shared(
    Xs: np.ndarray,
    Xt: np.ndarray,
    Fhat_s: CollapsedLabelMatrix,
    Fhat_t: CollapsedLabelMatrix,
) -> np.ndarray:
    """
    MMD между взвешенными средними доменов; вес объекта - его масса общих классов.

    Raises:
        DegenerateWeightsError: нулевая масса общих классов в одном из доменов
    """
    _check_domains(Xs, Xt)
    if Fhat_s.shared_mass <= MIN_CLASS_MASS or Fhat_t.shared_mass <= MIN_CLASS_MASS:
        raise DegenerateWeightsError(
            f"shared-class mass is zero (source {Fhat_s.shared_mass:.3g}, target {Fhat_t.shared_mass:.3g})"
        )
    return _weighted_mmd(Xs, Xt, Fhat_s.shared, Fhat_t.shared)


def active_classes(Fs: SoftLabelMatrix, Ft: SoftLabelMatrix) -> Tuple[List[int], List[int]]:
    """Классы 1..C (0-based индексы) с положительной массой в обоих доменах и пропущенные"""
    C = Fs.class_count
    mass_s = Fs.probs[:C].sum(axis=1)
    mass_t = Ft.probs[:C].sum(axis=1)
    active = [c for c in range(C) if mass_s[c] > MIN_CLASS_MASS and mass_t[c] > MIN_CLASS_MASS]
    skipped = [c for c in range(C) if c not in active]
    return active, skipped


def mmd_classwise(
    Xs: np.ndarray,
    Xt: np.ndarray,
    Fs: SoftLabelMatrix,
    Ft: SoftLabelMatrix,
) -> np.ndarray:
    """
    Сумма блоков MMD по общим классам c = 1..C с весами из строки c меток.

    Raises:
        EmptyLossError: ни у одного класса нет массы в обоих доменах
    """
    _check_domains(Xs, Xt)
    active, skipped = active_classes(Fs, Ft)
    if skipped:
        logger.debug(f"Class-wise MMD skips empty classes {[c + 1 for c in skipped]}")
    if not active:
        raise EmptyLossError("every class has zero mass in at least one domain")

    m = Xs.shape[0]
    M2 = np.zeros((2 * m, 2 * m))
    for c in active:
        M2 += _weighted_mmd(Xs, Xt, Fs.probs[c], Ft.probs[c])
    return _symmetrize(M2)


def scatter_matrices(X: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Взвешенные межклассовый N_b и внутриклассовый N_w разбросы.

    Args:
        X: признаки домена m×n
        weights: C×n веса классов (строки 1..C мягких меток)

    Returns:
        (N_b, N_w), оба m×m; N_b + N_w - полный взвешенный разброс
    """
    X = np.asarray(X, dtype=float)
    F = np.asarray(weights, dtype=float)
    if F.shape[1] != X.shape[1]:
        raise DataError(f"{F.shape[1]} label columns for {X.shape[1]} samples")

    class_mass = F.sum(axis=1)
    total = float(class_mass.sum())
    if total <= MIN_CLASS_MASS:
        raise DegenerateWeightsError("all class weights are zero")

    # K_cc = 1 / n_c, для пустых классов 0
    K = np.divide(1.0, class_mass, out=np.zeros_like(class_mass), where=class_mass > MIN_CLASS_MASS)
    b = F.sum(axis=0)

    # разбросы инвариантны к сдвигу: центрируем ради точности
    Xc = X - (X @ b / total)[:, None]
    class_sums = Xc @ F.T
    between = (class_sums * K) @ class_sums.T
    within = (Xc * b) @ Xc.T - between

    # после центрирования X B 1 = 0, слагаемое (1/n) B 1 1^T B исчезает
    N_b = _symmetrize(between / total)
    N_w = _symmetrize(within / total)
    return N_b, N_w


def build_V(beta: float, gamma: float, m: int) -> np.ndarray:
    """V = [(beta+gamma) I, -beta I; -beta I, (beta+gamma) I]"""
    if beta < 0 or gamma < 0:
        raise ParameterError(f"beta and gamma must be nonnegative, got beta={beta}, gamma={gamma}")
    eye = np.eye(m)
    return np.block([
        [(beta + gamma) * eye, -beta * eye],
        [-beta * eye, (beta + gamma) * eye],
    ])


def assemble_losses(
    Xs: np.ndarray,
    Xt: np.ndarray,
    Fs: SoftLabelMatrix,
    Ft: SoftLabelMatrix,
    *,
    beta: float,
    gamma: float,
    delta: float,
) -> LossMatrices:
    """
    Собирает все матрицы одной итерации.

    Разброс источника - по истинным one-hot меткам, разброс цели - по
    отфильтрованным меткам; используются только строки общих классов.
    """
    C = Fs.class_count
    m = Xs.shape[0]

    Nsb, Nsw = scatter_matrices(Xs, Fs.probs[:C])
    Ntb, Ntw = scatter_matrices(Xt, Ft.probs[:C])
    V = build_V(beta, gamma, m)

    if delta == 0:
        return LossMatrices(V=V, Nsb=Nsb, Nsw=Nsw, Ntb=Ntb, Ntw=Ntw)

    from .importance_filter import collapse_shared_novel

    M1 = mmd_shared(Xs, Xt, collapse_shared_novel(Fs), collapse_shared_novel(Ft))
    M2 = mmd_classwise(Xs, Xt, Fs, Ft)
    _, skipped = active_classes(Fs, Ft)
    return LossMatrices(
        V=V, Nsb=Nsb, Nsw=Nsw, Ntb=Ntb, Ntw=Ntw, M1=M1, M2=M2,
        skipped_classes=tuple(c + 1 for c in skipped),
    )
