"""Genre classifiers: Naive Bayes, k-NN, random forest and MLP, plus sweeps."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .. import container
from ..dataset import GenreLabel
from ..errors import CorruptCheckpoint, InvalidHyperparam
from .base import (
    LABELS,
    N_FEATURES,
    AccuracyReport,
    Classifier,
    accuracy_report,
    decode_labels,
    encode_labels,
    evaluate,
    featurize,
    unfeaturize,
)
from .forest import RandomForest, RandomForestParams
from .knn import KNN, KNNParams, neighbor_order
from .mlp import MLP, MLPParams
from .naive_bayes import NaiveBayes, NaiveBayesParams

CLASSIFIERS = {"nb": (NaiveBayes, NaiveBayesParams), "knn": (KNN, KNNParams),
               "rf": (RandomForest, RandomForestParams), "mlp": (MLP, MLPParams)}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    params: object = None

    def __post_init__(self):
        if self.kind not in CLASSIFIERS:
            raise InvalidHyperparam(f"unknown classifier {self.kind!r}; choose from {sorted(CLASSIFIERS)}")
        if self.params is None:
            object.__setattr__(self, "params", CLASSIFIERS[self.kind][1]())
        elif isinstance(self.params, dict):
            object.__setattr__(self, "params", CLASSIFIERS[self.kind][1](**self.params))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dataclasses.asdict(self.params)}


# strongest setting on the real corpus: one hidden layer of 1000 ReLU units trained with Adam
REFERENCE_MLP = ClassifierSpec("mlp", MLPParams(hidden_layers=1, neurons=1000, activation="relu",
                                                optimizer="adam", schedule="adaptive",
                                                max_iterations=1000))


def build(spec: ClassifierSpec) -> Classifier:
    cls, _ = CLASSIFIERS[spec.kind]
    return cls(spec.params)


def fit(spec: ClassifierSpec, X, y) -> Classifier:
    return build(spec).fit(X, y)


class BandOracle(Classifier):
    """Fixed rule for the synthetic corpus: more active cells in the upper pitch band means Classic.

    Rolls with equal counts in both bands (including empty rolls) get ``tie_label``.
    """

    kind = "oracle"

    def __init__(self, split_row: int = 42, tie_label: GenreLabel = GenreLabel.CLASSIC):
        super().__init__({"split_row": split_row, "tie_label": GenreLabel(tie_label).value})
        self.split_row = split_row
        self.tie_label = GenreLabel(tie_label)
        self.n_features = N_FEATURES

    def fit(self, X, y):
        return self

    def predict_scores(self, X) -> np.ndarray:
        rolls = unfeaturize(self._as_matrix(X))
        low = rolls[..., :self.split_row].sum(axis=(1, 2))
        high = rolls[..., self.split_row:].sum(axis=(1, 2))
        jazz = np.where(low > high, 1.0, np.where(low < high, 0.0, np.nan))
        tie = 1.0 if self.tie_label is GenreLabel.JAZZ else 0.0
        jazz = np.where(np.isnan(jazz), tie, jazz)
        return np.stack([1.0 - jazz, jazz], axis=1)

    def get_state(self):
        return {}, {}

    def set_state(self, meta, arrays):
        pass


def predict(classifier: Classifier, X) -> tuple[list[GenreLabel], np.ndarray]:
    """Labels and per-class scores (columns follow :data:`LABELS`)."""
    scores = classifier.predict_scores(X)
    return decode_labels(np.argmax(scores, axis=1)), scores


@dataclass(frozen=True)
class KNNCurve:
    points: tuple[tuple[int, float], ...]

    @property
    def best(self) -> tuple[int, float]:
        # first maximum, i.e. the smallest k among ties
        return max(self.points, key=lambda p: (p[1], -p[0]))


def tune_knn(X_train, y_train, X_test, y_test, k_range: Iterable[int] = range(1, 51),
             metric: str = "euclidean") -> KNNCurve:
    """Test accuracy for every k, sharing one neighbor ordering across the sweep.

    ``best`` picks on these test accuracies, so it reports the best reachable
    score rather than a held-out estimate.
    """
    ks = list(k_range)
    if not ks:
        raise InvalidHyperparam("k_range is empty")
    if min(ks) < 1:
        raise InvalidHyperparam("k must be >= 1")
    probe = fit(ClassifierSpec("knn", KNNParams(k=max(ks), metric=metric)), X_train, y_train)
    y_test = encode_labels(y_test)
    order = neighbor_order(probe.X, np.asarray(X_test), max(ks), metric)
    jazz_votes = np.cumsum(probe.y[order], axis=1)
    points = []
    for k in ks:
        jazz = jazz_votes[:, k - 1]
        pred = (jazz > k - jazz).astype(np.int64)
        points.append((k, 100.0 * float((pred == y_test).mean())))
    return KNNCurve(tuple(points))


@dataclass(frozen=True)
class RFCurve:
    points: tuple[tuple[int, float, float], ...]  # (depth, train accuracy, test accuracy)

    @property
    def best(self) -> tuple[int, float, float]:
        return max(self.points, key=lambda p: (p[2], -p[0]))


def tune_rf(X_train, y_train, X_test, y_test, depth_range: Iterable[int] = range(1, 41),
            params: RandomForestParams = RandomForestParams()) -> RFCurve:
    """Train and test accuracy of one forest per ``max_depth``; ``best`` ranks by test."""
    depths = list(depth_range)
    if not depths:
        raise InvalidHyperparam("depth_range is empty")
    points = []
    for depth in depths:
        model = fit(ClassifierSpec("rf", dataclasses.replace(params, max_depth=depth)), X_train, y_train)
        points.append((depth, evaluate(model, X_train, y_train).overall,
                       evaluate(model, X_test, y_test).overall))
    return RFCurve(tuple(points))


def write_knn_csv(curve: KNNCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "accuracy"])
        w.writerows(curve.points)


def write_rf_csv(curve: RFCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["depth", "train_acc", "test_acc"])
        w.writerows(curve.points)


def save_classifier(classifier: Classifier, path) -> None:
    classifier._check_fitted()
    if isinstance(classifier, BandOracle):
        spec = {"kind": "oracle", "params": classifier.params}
    else:
        spec = ClassifierSpec(classifier.kind, classifier.params).to_dict()
    meta, arrays = classifier.get_state()
    container.save(path, "classifier", {"spec": spec, "n_features": classifier.n_features, **meta}, arrays)


def load_classifier(path) -> Classifier:
    meta, arrays = container.load(path, kind="classifier")
    spec = meta["spec"]
    if spec["kind"] == "oracle":
        return BandOracle(spec["params"]["split_row"], GenreLabel(spec["params"]["tie_label"]))
    try:
        model = build(ClassifierSpec(spec["kind"], spec["params"]))
    except (TypeError, InvalidHyperparam) as exc:
        raise CorruptCheckpoint(f"bad classifier spec in {path}") from exc
    model.set_state(meta, arrays)
    return model


__all__ = [
    "LABELS", "N_FEATURES", "REFERENCE_MLP", "AccuracyReport", "BandOracle", "Classifier",
    "ClassifierSpec", "KNN", "KNNCurve", "KNNParams", "MLP", "MLPParams", "NaiveBayes",
    "NaiveBayesParams", "RFCurve", "RandomForest", "RandomForestParams", "accuracy_report",
    "build", "decode_labels", "encode_labels", "evaluate", "featurize", "fit", "load_classifier",
    "predict", "save_classifier", "tune_knn", "tune_rf", "unfeaturize", "write_knn_csv",
    "write_rf_csv",
]
