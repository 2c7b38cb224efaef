"""Log-linear salience prior over difference clusters."""
from __future__ import annotations

import numpy as np

from .errors import EmptyClusterSetError
from .clustering import ClusterSet


def _feature_matrix(clusters) -> np.ndarray:
    if isinstance(clusters, ClusterSet):
        g = clusters.feature_matrix()
    else:
        g = np.asarray(clusters, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
    if g.shape[0] == 0:
        raise EmptyClusterSetError("no clusters to score")
    return g


def prior_distribution(w: np.ndarray, clusters) -> np.ndarray:
    """Probability of each cluster: softmax over the logits w . g(k).

    Computed with max-shifted exponentials for stability; sums to 1.
    """
    g = _feature_matrix(clusters)
    logits = g @ np.asarray(w, dtype=np.float64)
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def prior_log_grad(w: np.ndarray, clusters, k: int) -> np.ndarray:
    """Gradient of log p_k with respect to the weights: g_k - E_p[g]."""
    g = _feature_matrix(clusters)
    p = prior_distribution(w, g)
    return g[k] - p @ g
