"""Discriminative pooling toolkit.

Supervised Fisher-style projection, one-versus-rest KL ranking, a
multipartite pooling operator for convolutional activations, the max /
average / stochastic baselines, and a small deterministic CPU training
engine plus experiment CLI to compare them.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .data import Dataset, load_cifar10, load_mnist, subset, synthetic_blobs
from .linalg import (
    EigenResult,
    LabeledMatrix,
    ScatterPair,
    compute_scatters,
    generalized_eigen,
)
from .nn import LayerSpec, Network, TrainConfig, TrainReport, preset_small_net, train
from .pooling import (
    PoolForward,
    PoolSpec,
    compute_score_maps,
    pool_average,
    pool_backward,
    pool_max,
    pool_multipartite,
    pool_stochastic,
)
from .projection import FitConfig, Projection, fit_projection, gradient, objective, project
from .ranking import (
    HistogramDensity,
    RankingModel,
    estimate_density,
    fit_ranking,
    kl_divergence,
    rank_instances,
    score_instances,
)
from .tensor import flatten_stack, unflatten_scores

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "Dataset",
    "load_cifar10",
    "load_mnist",
    "subset",
    "synthetic_blobs",
    "EigenResult",
    "LabeledMatrix",
    "ScatterPair",
    "compute_scatters",
    "generalized_eigen",
    "LayerSpec",
    "Network",
    "TrainConfig",
    "TrainReport",
    "preset_small_net",
    "train",
    "PoolForward",
    "PoolSpec",
    "compute_score_maps",
    "pool_average",
    "pool_backward",
    "pool_max",
    "pool_multipartite",
    "pool_stochastic",
    "FitConfig",
    "Projection",
    "fit_projection",
    "gradient",
    "objective",
    "project",
    "HistogramDensity",
    "RankingModel",
    "estimate_density",
    "fit_ranking",
    "kl_divergence",
    "rank_instances",
    "score_instances",
    "flatten_stack",
    "unflatten_scores",
    "__version__",
]
