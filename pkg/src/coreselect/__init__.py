"""coreselect: cluster-aware coreset selection for labeled embedding datasets.

Pipeline: per-class PCA-reduced embeddings -> K-Medoids (PAM) intraclass
clustering with silhouette-selected k -> cluster-stratified Intelligent
Sampling, with a Random Sampling baseline and a k-NN evaluation harness
for comparing the two.
"""

from . import data_model, evaluate, kmedoids, pca, sampler, synthetic
from .errors import ConfigError, CoreselectError, DataError, FormatError, NumericError

__all__ = [
    "data_model", "synthetic", "pca", "kmedoids", "sampler", "evaluate",
    "CoreselectError", "ConfigError", "DataError", "FormatError", "NumericError",
]

__version__ = "0.1.0"
