"""Общие фикстуры тестов"""

from pathlib import Path

import numpy as np
import pytest

from src.config import AppConfig, Settings
from src.pipeline.dataset import SyntheticSpec, make_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def csda_pair():
    spec = SyntheticSpec(
        class_count=3,
        dimension=6,
        source_samples_per_class=20,
        target_samples_per_class=20,
        cluster_spread=3.0,
        seed=1,
    )
    return make_synthetic(spec)


@pytest.fixture
def osda_pair():
    spec = SyntheticSpec(
        class_count=3,
        novel_class_count=1,
        dimension=6,
        source_samples_per_class=20,
        target_samples_per_class=20,
        cluster_spread=3.0,
        seed=2,
    )
    return make_synthetic(spec)


@pytest.fixture
def settings(tmp_path):
    return Settings(AppConfig(out_dir=tmp_path / "out", progress=False, sweep_workers=1))


@pytest.fixture
def write_config(tmp_path):
    def _write(text: str, name: str = "experiment.cfg") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write


def random_soft_labels(rng, class_count: int, n: int, novel: bool = True) -> np.ndarray:
    """Нормированные столбцы (C+1)×n; без novel строка C+1 нулевая"""
    probs = rng.dirichlet(np.full(class_count + 1, 0.5), size=n).T
    if not novel:
        probs[-1] = 0.0
        probs /= probs.sum(axis=0)
    return probs
