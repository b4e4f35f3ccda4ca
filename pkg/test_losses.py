"""
Тесты матриц потерь.

Каждая матрица сверяется с прямым вычислением соответствующей величины
на случайных проекциях и с классическими конструкциями для one-hot меток.
"""

import numpy as np
import pytest

from conftest import random_soft_labels
from src.pipeline.dataset import SoftLabelMatrix, to_one_hot
from src.pipeline.errors import DegenerateWeightsError, EmptyLossError, ParameterError
from src.pipeline.importance_filter import CollapsedLabelMatrix, collapse_shared_novel
from src.pipeline.losses import (
    assemble_losses,
    build_V,
    mmd_classwise,
    mmd_shared,
    scatter_matrices,
)


def _trace(P, M):
    return float(np.trace(P.T @ M @ P))


def _weighted_mean(X, w):
    return (X * w).sum(axis=1) / w.sum()


def _direct_mmd(Xs, Xt, ws, wt, A_s, A_t):
    """||A_s^T mu_s - A_t^T mu_t||^2 по взвешенным средним"""
    diff = A_s.T @ _weighted_mean(Xs, ws) - A_t.T @ _weighted_mean(Xt, wt)
    return float(diff @ diff)


def _direct_scatters(X, F, A):
    """tr(A^T N_b A), tr(A^T N_w A), tr(A^T N_total A) суммированием по объектам"""
    total = F.sum()
    mu = sum(F[c, l] * X[:, l] for c in range(F.shape[0]) for l in range(X.shape[1])) / total
    between = within = overall = 0.0
    for c in range(F.shape[0]):
        mass = F[c].sum()
        if mass == 0:
            continue
        mu_c = (X * F[c]).sum(axis=1) / mass
        d = A.T @ (mu - mu_c)
        between += mass / total * float(d @ d)
        for l in range(X.shape[1]):
            dw = A.T @ (X[:, l] - mu_c)
            do = A.T @ (X[:, l] - mu)
            within += F[c, l] / total * float(dw @ dw)
            overall += F[c, l] / total * float(do @ do)
    return between, within, overall


def _domains(rng, m=5, n_s=8, n_t=6):
    return rng.normal(size=(m, n_s)), rng.normal(size=(m, n_t))


def test_mmd_shared_trace_identity(rng):
    for _ in range(100):
        Xs, Xt = _domains(rng)
        ws, wt = rng.random(8), rng.random(6)
        Fs = CollapsedLabelMatrix(probs=np.vstack([ws, 1 - ws]))
        Ft = CollapsedLabelMatrix(probs=np.vstack([wt, 1 - wt]))
        P = rng.normal(size=(10, 3))

        M1 = mmd_shared(Xs, Xt, Fs, Ft)
        expected = _direct_mmd(Xs, Xt, ws, wt, P[:5], P[5:])
        assert _trace(P, M1) == pytest.approx(expected, rel=1e-9)


def test_mmd_classwise_trace_identity(rng):
    for _ in range(100):
        Xs, Xt = _domains(rng)
        Fs = SoftLabelMatrix(probs=random_soft_labels(rng, 3, 8, novel=False), class_count=3)
        Ft = SoftLabelMatrix(probs=random_soft_labels(rng, 3, 6), class_count=3)
        P = rng.normal(size=(10, 3))

        M2 = mmd_classwise(Xs, Xt, Fs, Ft)
        expected = sum(
            _direct_mmd(Xs, Xt, Fs.probs[c], Ft.probs[c], P[:5], P[5:]) for c in range(3)
        )
        assert _trace(P, M2) == pytest.approx(expected, rel=1e-9)


def test_scatter_trace_identities(rng):
    for _ in range(100):
        X = rng.normal(size=(4, 9))
        F = random_soft_labels(rng, 3, 9)[:3]
        A = rng.normal(size=(4, 2))

        N_b, N_w = scatter_matrices(X, F)
        between, within, _ = _direct_scatters(X, F, A)
        assert _trace(A, N_b) == pytest.approx(between, rel=1e-9)
        assert _trace(A, N_w) == pytest.approx(within, rel=1e-9)


def test_scatter_decomposition(rng):
    for _ in range(50):
        X = rng.normal(size=(4, 12)) + 3.0
        F = random_soft_labels(rng, 2, 12)[:2]
        N_b, N_w = scatter_matrices(X, F)

        total = F.sum()
        mu = X @ F.sum(axis=0) / total
        centered = X - mu[:, None]
        expected = (centered * F.sum(axis=0)) @ centered.T / total
        np.testing.assert_allclose(N_b + N_w, expected, rtol=1e-9, atol=1e-12)


def test_v_trace_identity(rng):
    for _ in range(100):
        beta, gamma = rng.random(2)
        A_s, A_t = rng.normal(size=(2, 6, 3))
        V = build_V(beta, gamma, 6)
        expected = beta * np.sum((A_s - A_t) ** 2) + gamma * (np.sum(A_s ** 2) + np.sum(A_t ** 2))
        assert _trace(np.vstack([A_s, A_t]), V) == pytest.approx(expected, rel=1e-12)


def _classical_mmd(Xs, Xt, ys, yt, classes=None):
    """Классическая конструкция через вектор e над n_s + n_t объектами"""
    m = Xs.shape[0]
    X = np.zeros((2 * m, Xs.shape[1] + Xt.shape[1]))
    X[:m, : Xs.shape[1]] = Xs
    X[m:, Xs.shape[1]:] = Xt
    groups = [None] if classes is None else classes
    M = np.zeros((X.shape[1], X.shape[1]))
    for c in groups:
        in_s = np.ones(ys.size) if c is None else (ys == c).astype(float)
        in_t = np.ones(yt.size) if c is None else (yt == c).astype(float)
        e = np.concatenate([in_s / in_s.sum(), -in_t / in_t.sum()])
        M += np.outer(e, e)
    return X @ M @ X.T


def _classical_lda(X, y):
    n = X.shape[1]
    mu = X.mean(axis=1)
    S_b = np.zeros((X.shape[0], X.shape[0]))
    S_w = np.zeros_like(S_b)
    for c in np.unique(y):
        Xc = X[:, y == c]
        mu_c = Xc.mean(axis=1)
        S_b += Xc.shape[1] * np.outer(mu_c - mu, mu_c - mu)
        S_w += (Xc - mu_c[:, None]) @ (Xc - mu_c[:, None]).T
    return S_b / n, S_w / n


def test_hard_label_reductions(rng):
    for _ in range(20):
        Xs, Xt = _domains(rng, n_s=12, n_t=10)
        ys = np.concatenate([[1, 2, 3], rng.integers(1, 4, size=9)])
        yt = np.concatenate([[1, 2, 3], rng.integers(1, 4, size=7)])
        Fs, Ft = to_one_hot(ys, 3), to_one_hot(yt, 3)

        M1 = mmd_shared(Xs, Xt, collapse_shared_novel(Fs), collapse_shared_novel(Ft))
        np.testing.assert_allclose(M1, _classical_mmd(Xs, Xt, ys, yt), rtol=1e-10, atol=1e-12)

        M2 = mmd_classwise(Xs, Xt, Fs, Ft)
        np.testing.assert_allclose(M2, _classical_mmd(Xs, Xt, ys, yt, [1, 2, 3]), rtol=1e-10, atol=1e-12)

        N_b, N_w = scatter_matrices(Xs, Fs.probs[:3])
        S_b, S_w = _classical_lda(Xs, ys)
        np.testing.assert_allclose(N_b, S_b, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(N_w, S_w, rtol=1e-10, atol=1e-12)


def test_matrices_psd_and_symmetric(rng):
    Xs, Xt = _domains(rng)
    Fs = SoftLabelMatrix(probs=random_soft_labels(rng, 3, 8, novel=False), class_count=3)
    Ft = SoftLabelMatrix(probs=random_soft_labels(rng, 3, 6), class_count=3)
    losses = assemble_losses(Xs, Xt, Fs, Ft, beta=0.5, gamma=0.1, delta=1.0)

    for M in (losses.M1, losses.M2, losses.Nsb, losses.Nsw, losses.Ntb, losses.Ntw, losses.V):
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() >= -1e-8 * max(np.trace(M), 1e-300)


def test_identical_domains_have_zero_mmd(rng):
    X = rng.normal(size=(4, 7))
    w = rng.random(7)
    F = CollapsedLabelMatrix(probs=np.vstack([w, 1 - w]))
    A = rng.normal(size=(4, 2))
    assert _trace(np.vstack([A, A]), mmd_shared(X, X, F, F)) == pytest.approx(0.0, abs=1e-12)


def test_zero_shared_mass():
    X = np.ones((2, 3))
    novel_only = CollapsedLabelMatrix(probs=[[0, 0, 0], [1, 1, 1]])
    shared = CollapsedLabelMatrix(probs=[[1, 1, 1], [0, 0, 0]])
    with pytest.raises(DegenerateWeightsError):
        mmd_shared(X, X, shared, novel_only)


def test_single_class_classwise_equals_shared(rng):
    Xs, Xt = _domains(rng)
    Fs = SoftLabelMatrix(probs=random_soft_labels(rng, 1, 8), class_count=1)
    Ft = SoftLabelMatrix(probs=random_soft_labels(rng, 1, 6), class_count=1)
    M1 = mmd_shared(Xs, Xt, collapse_shared_novel(Fs), collapse_shared_novel(Ft))
    np.testing.assert_allclose(mmd_classwise(Xs, Xt, Fs, Ft), M1, rtol=1e-12, atol=1e-15)


def test_classwise_skips_empty_classes(rng):
    Xs, Xt = _domains(rng, n_s=4, n_t=4)
    Fs, Ft = to_one_hot([1, 1, 2, 2], 3), to_one_hot([1, 2, 2, 1], 3)
    M2 = mmd_classwise(Xs, Xt, Fs, Ft)
    expected = _classical_mmd(Xs, Xt, np.array([1, 1, 2, 2]), np.array([1, 2, 2, 1]), [1, 2])
    np.testing.assert_allclose(M2, expected, rtol=1e-10, atol=1e-12)

    losses = assemble_losses(Xs, Xt, Fs, Ft, beta=1.0, gamma=0.1, delta=1.0)
    assert losses.skipped_classes == (3,)


def test_classwise_all_classes_empty(rng):
    Xs, Xt = _domains(rng, n_s=3, n_t=3)
    with pytest.raises(EmptyLossError):
        mmd_classwise(Xs, Xt, to_one_hot([1, 1, 1], 2), to_one_hot([2, 2, 3], 2))


def test_single_class_has_no_between_scatter(rng):
    X = rng.normal(size=(3, 10))
    N_b, _ = scatter_matrices(X, rng.random((1, 10)))
    np.testing.assert_allclose(N_b, 0.0, atol=1e-12)


def test_scatter_all_zero_weights():
    with pytest.raises(DegenerateWeightsError):
        scatter_matrices(np.ones((2, 3)), np.zeros((2, 3)))


def test_build_v_examples(rng):
    np.testing.assert_array_equal(build_V(0.0, 0.3, 4), 0.3 * np.eye(8))

    A = rng.normal(size=(4, 2))
    V = build_V(0.7, 0.3, 4)
    assert _trace(np.vstack([A, A]), V) == pytest.approx(2 * 0.3 * np.sum(A ** 2), rel=1e-12)

    A_s, A_t = rng.normal(size=(2, 4, 2))
    assert _trace(np.vstack([A_s, A_t]), build_V(1.0, 0.0, 4)) == pytest.approx(
        np.sum((A_s - A_t) ** 2), rel=1e-12
    )

    with pytest.raises(ParameterError):
        build_V(-1.0, 0.0, 2)


def test_zero_delta_skips_mmd(rng):
    Xs, Xt = _domains(rng)
    losses = assemble_losses(Xs, Xt, to_one_hot(rng.integers(1, 3, 8), 2), to_one_hot(rng.integers(1, 3, 6), 2),
                             beta=1.0, gamma=0.1, delta=0.0)
    assert losses.M1 is None and losses.M2 is None
