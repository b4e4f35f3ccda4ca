"""
IFCDA Pipeline Components

Компоненты:
- Dataset: модель данных, загрузка/запись признаков, синтетика
- Graph: граф p ближайших соседей с гауссовыми весами
- LabelPropagation: общее распространение меток с якорями alpha
- ImportanceFilter: фильтрация мягких меток цели
- Losses: MMD, поклассовый MMD, разбросы, регуляризатор V
- Adaptation: обобщённая задача на собственные значения и цикл адаптации
- Evaluation: жёсткие метки, точность, OS / OS* / UNK

Flow одной итерации:
1. Graph - граф на [X_s, X_t] (итерация 0) или на вложениях [Z_s, Z_t]
2. LabelPropagation - распространение и нормировка по столбцам
3. ImportanceFilter - фильтр меток цели
4. Losses - матрицы по отфильтрованным меткам
5. Adaptation - проекции A_s, A_t и новые вложения

Прогоны, перебор параметров и артефакты - в модуле experiment.
"""

from .errors import IFCDAError
from .dataset import (
    DomainDataset,
    SoftLabelMatrix,
    SyntheticSpec,
    LoaderConfig,
    FeatureLoader,
    load_features,
    save_features,
    to_one_hot,
    make_synthetic,
)
from .graph import SimilarityGraph, build_graph, laplacian_parts, dump_edge_list
from .label_propagation import AnchorVector, init_labels, propagate, column_normalize
from .importance_filter import (
    FilterConfig,
    ImportanceFilter,
    CollapsedLabelMatrix,
    filter_label,
    filter_target_labels,
    collapse_shared_novel,
)
from .losses import LossMatrices, mmd_shared, mmd_classwise, scatter_matrices, build_V
from .adaptation import (
    AdaptationConfig,
    ProjectionPair,
    IFCDAAdapter,
    solve_projection,
    embed,
    run_ifcda,
)
from .evaluation import MetricsReport, predict_hard, compute_metrics

__all__ = [
    "IFCDAError",
    "DomainDataset",
    "SoftLabelMatrix",
    "SyntheticSpec",
    "LoaderConfig",
    "FeatureLoader",
    "load_features",
    "save_features",
    "to_one_hot",
    "make_synthetic",
    "SimilarityGraph",
    "build_graph",
    "laplacian_parts",
    "dump_edge_list",
    "AnchorVector",
    "init_labels",
    "propagate",
    "column_normalize",
    "FilterConfig",
    "ImportanceFilter",
    "CollapsedLabelMatrix",
    "filter_label",
    "filter_target_labels",
    "collapse_shared_novel",
    "LossMatrices",
    "mmd_shared",
    "mmd_classwise",
    "scatter_matrices",
    "build_V",
    "AdaptationConfig",
    "ProjectionPair",
    "IFCDAAdapter",
    "solve_projection",
    "embed",
    "run_ifcda",
    "MetricsReport",
    "predict_hard",
    "compute_metrics",
]
