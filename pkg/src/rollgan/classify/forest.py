"""Random forest of Gini decision trees, majority-vote aggregation.

Every node draws its candidate features from a generator seeded by
``(forest seed, tree index, heap position of the node)``. A node's split
therefore never depends on how deep the rest of the tree grows, so the tree
fitted with ``max_depth=d`` is a prefix of the one fitted with ``d + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidHyperparam
from .base import Classifier

LEAF = -1
_ROW_CHUNK = 2048


@dataclass(frozen=True)
class RandomForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    max_features: str | int = "sqrt"  # "sqrt", "all" or an explicit count
    bootstrap: bool = True
    seed: int = 0


@dataclass
class Tree:
    feature: np.ndarray  # int32, LEAF marks leaves
    threshold: np.ndarray  # float64; go left when x <= threshold
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2) class counts of the training rows reaching the node

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] != LEAF
        while active.any():
            r, n = rows[active], node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return node

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.counts[self.apply(X)], axis=1)

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for i in range(len(self.feature)):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


def _gini_children(cum1: np.ndarray, n: int, n1: int) -> np.ndarray:
    """Weighted child Gini impurity (times n) for every split position and feature."""
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    l1 = cum1[:-1]
    r1 = n1 - l1
    gini_l = 2.0 * l1 * (n_left - l1) / n_left
    gini_r = 2.0 * r1 * (n_right - r1) / n_right
    return gini_l + gini_r


def _nonconstant_features(X: np.ndarray, idx: np.ndarray) -> np.ndarray:
    lo = np.full(X.shape[1], np.inf)
    hi = np.full(X.shape[1], -np.inf)
    for start in range(0, len(idx), _ROW_CHUNK):
        block = X[idx[start:start + _ROW_CHUNK]]
        lo = np.minimum(lo, block.min(axis=0))
        hi = np.maximum(hi, block.max(axis=0))
    return np.flatnonzero(hi > lo)


def _best_split(X, y, idx, features):
    vals = X[np.ix_(idx, features)].astype(np.float64)
    order = np.argsort(vals, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(vals, order, axis=0)
    cum1 = np.cumsum(y[idx][order], axis=0)
    n, n1 = len(idx), int(cum1[-1, 0])
    cost = _gini_children(cum1, n, n1)
    cost[sorted_vals[1:] == sorted_vals[:-1]] = np.inf
    flat = int(np.argmin(cost))
    pos, col = divmod(flat, len(features))
    if not np.isfinite(cost[pos, col]):
        return None
    threshold = 0.5 * (sorted_vals[pos, col] + sorted_vals[pos + 1, col])
    return int(features[col]), threshold


def build_tree(X: np.ndarray, y: np.ndarray, rows: np.ndarray, max_depth: int | None,
               n_candidates: int, seed: tuple[int, ...]) -> Tree:
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        c1 = int(y[idx].sum())
        counts.append((len(idx) - c1, c1))
        return len(feature) - 1

    stack = [(new_node(rows), rows, 0, 1)]
    while stack:
        node, idx, depth, heap_pos = stack.pop()
        c0, c1 = counts[node]
        if c0 == 0 or c1 == 0 or len(idx) < 2 or (max_depth is not None and depth >= max_depth):
            continue
        candidates = _nonconstant_features(X, idx)
        if len(candidates) == 0:
            continue
        rng = np.random.default_rng(seed + (heap_pos,))
        if n_candidates < len(candidates):
            candidates = np.sort(rng.choice(candidates, size=n_candidates, replace=False))
        split = _best_split(X, y, idx, candidates)
        if split is None:
            continue
        f, t = split
        go_left = X[idx, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, t
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1, 2 * heap_pos + 1))
        stack.append((left[node], li, depth + 1, 2 * heap_pos))
    return Tree(np.asarray(feature, dtype=np.int32), np.asarray(threshold, dtype=np.float64),
                np.asarray(left, dtype=np.int32), np.asarray(right, dtype=np.int32),
                np.asarray(counts, dtype=np.int64).reshape(-1, 2))


class RandomForest(Classifier):
    kind = "rf"

    def __init__(self, params: RandomForestParams = RandomForestParams()):
        if params.n_trees < 1:
            raise InvalidHyperparam("n_trees must be >= 1")
        if params.max_depth is not None and params.max_depth < 1:
            raise InvalidHyperparam("max_depth must be >= 1")
        if isinstance(params.max_features, str) and params.max_features not in ("sqrt", "all"):
            raise InvalidHyperparam(f"unknown max_features {params.max_features!r}")
        if isinstance(params.max_features, int) and params.max_features < 1:
            raise InvalidHyperparam("max_features must be >= 1")
        super().__init__(params)
        self.trees: list[Tree] = []

    def _n_candidates(self, n_features: int) -> int:
        mf = self.params.max_features
        if mf == "sqrt":
            return max(1, int(np.sqrt(n_features)))
        if mf == "all":
            return n_features
        return min(int(mf), n_features)

    def _fit(self, X, y):
        n = len(X)
        n_candidates = self._n_candidates(X.shape[1])
        self.trees = []
        for t in range(self.params.n_trees):
            if self.params.bootstrap:
                rows = np.random.default_rng((self.params.seed, t)).integers(0, n, size=n)
            else:
                rows = np.arange(n)
            self.trees.append(build_tree(X, y, rows, self.params.max_depth, n_candidates,
                                         (self.params.seed, t)))

    def tree_votes(self, X) -> np.ndarray:
        """Predicted class index of every tree, shape ``(n_trees, n_samples)``."""
        self._check_fitted()
        X = self._as_matrix(X)
        return np.stack([tree.predict_index(X) for tree in self.trees])

    def predict_scores(self, X) -> np.ndarray:
        """Fraction of trees voting for each label."""
        votes = self.tree_votes(X)
        jazz = votes.mean(axis=0)
        return np.stack([1.0 - jazz, jazz], axis=1)

    def get_state(self):
        sizes = [len(t.feature) for t in self.trees]
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees])
        return {}, {"tree_sizes": np.asarray(sizes, dtype=np.int64), "feature": cat("feature"),
                    "threshold": cat("threshold"), "left": cat("left"), "right": cat("right"),
                    "counts": cat("counts"), "n_features": np.asarray([self.n_features])}

    def set_state(self, meta, arrays):
        bounds = np.concatenate([[0], np.cumsum(arrays["tree_sizes"])])
        self.trees = [Tree(*(arrays[k][a:b] for k in ("feature", "threshold", "left", "right", "counts")))
                      for a, b in zip(bounds[:-1], bounds[1:])]
        self.n_features = int(arrays["n_features"][0])

