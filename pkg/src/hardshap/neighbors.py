"""Euclidean neighbor ranking shared by valuation, Data-IQ, SMOTE, and eval.

All rankings break distance ties by ascending row id, giving every consumer
the same total order and making results independent of row storage order.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import Dataset


def check_same_dimension(a: Dataset, b: Dataset) -> None:
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")


def id_sorted_view(ds: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(features, labels, original positions) with rows reordered by ascending id.

    In this view a stable sort over distances breaks ties by ascending id
    for free.
    """
    order = np.argsort(ds.ids)
    return ds.features[order], ds.labels[order], order


def rank_all(train_features: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Training-row order by increasing distance to each query row.

    Returns an (n_query, n_train) index matrix; ties keep the input row
    order (pass id-sorted features for id tie-breaking).
    """
    dist = cdist(query, train_features)
    return np.argsort(dist, axis=1, kind="stable")


def k_nearest(train_features: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest training rows per query row, tie-stable."""
    if not 1 <= k <= train_features.shape[0]:
        raise ValueError(f"K={k} out of range for {train_features.shape[0]} training rows")
    return rank_all(train_features, query)[:, :k]
