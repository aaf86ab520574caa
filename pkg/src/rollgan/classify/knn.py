from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidHyperparam
from .base import Classifier

_CHUNK = 512


@dataclass(frozen=True)
class KNNParams:
    k: int = 1
    metric: str = "euclidean"  # or "manhattan"


def pairwise_distances(A: np.ndarray, B: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if metric == "euclidean":
        sq = (A ** 2).sum(1)[:, None] + (B ** 2).sum(1)[None, :] - 2.0 * A @ B.T
        return np.sqrt(np.maximum(sq, 0.0))
    if metric == "manhattan":
        return np.abs(A[:, None, :] - B[None, :, :]).sum(-1)
    raise InvalidHyperparam(f"unknown metric {metric!r}")


def neighbor_order(train: np.ndarray, query: np.ndarray, k: int, metric: str) -> np.ndarray:
    """Indices of the ``k`` nearest training points per query.

    Equal distances keep training order, so ties go to the smaller index.
    """
    out = np.empty((len(query), k), dtype=np.int64)
    for start in range(0, len(query), _CHUNK):
        d = pairwise_distances(query[start:start + _CHUNK], train, metric)
        out[start:start + _CHUNK] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


class KNN(Classifier):
    kind = "knn"

    def __init__(self, params: KNNParams = KNNParams()):
        if params.k < 1:
            raise InvalidHyperparam(f"k must be >= 1, got {params.k}")
        if params.metric not in ("euclidean", "manhattan"):
            raise InvalidHyperparam(f"unknown metric {params.metric!r}")
        super().__init__(params)

    def _fit(self, X, y):
        if self.params.k > len(X):
            raise InvalidHyperparam(f"k={self.params.k} exceeds the {len(X)} training samples")
        self.X = np.asarray(X, dtype=np.float32)
        self.y = y

    def predict_scores(self, X) -> np.ndarray:
        """Fraction of the k neighbors voting for each label."""
        self._check_fitted()
        order = neighbor_order(self.X, self._as_matrix(X), self.params.k, self.params.metric)
        votes = self.y[order]
        jazz = votes.sum(axis=1) / self.params.k
        return np.stack([1.0 - jazz, jazz], axis=1)

    def get_state(self):
        return {}, {"X": self.X, "y": self.y}

    def set_state(self, meta, arrays):
        self.X, self.y = arrays["X"], arrays["y"]
        self.n_features = self.X.shape[1]
