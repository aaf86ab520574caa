from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..dataset import GenreLabel
from ..errors import EmptyClass, EmptyTestSet, UnfittedModel
from ..pianoroll_io import ROLL_SHAPE

N_FEATURES = ROLL_SHAPE[0] * ROLL_SHAPE[1]

# Class index order is lexicographic, so argmax ties resolve to the first label.
LABELS: tuple[GenreLabel, ...] = tuple(sorted(GenreLabel, key=lambda g: g.value))
_INDEX = {label: i for i, label in enumerate(LABELS)}


def featurize(roll) -> np.ndarray:
    """Flatten a roll (or a batch) time-major: cell ``(t, p)`` lands at ``t * 84 + p``."""
    arr = np.asarray(roll, dtype=np.float32)
    if arr.shape[-2:] != ROLL_SHAPE:
        raise ValueError(f"expected trailing shape {ROLL_SHAPE}, got {arr.shape}")
    return arr.reshape(arr.shape[:-2] + (N_FEATURES,))


def unfeaturize(features) -> np.ndarray:
    arr = np.asarray(features)
    return arr.reshape(arr.shape[:-1] + ROLL_SHAPE)


def encode_labels(labels: Iterable) -> np.ndarray:
    out = []
    for label in labels:
        if not isinstance(label, GenreLabel):
            label = GenreLabel.parse(str(label))
        out.append(_INDEX[label])
    return np.asarray(out, dtype=np.int64)


def decode_labels(indices: Iterable[int]) -> list[GenreLabel]:
    return [LABELS[int(i)] for i in indices]


class Classifier:
    """Common surface of the genre classifiers.

    Subclasses implement ``_fit`` and ``predict_scores`` (one column per entry
    of :data:`LABELS`) plus ``get_state``/``set_state`` for serialization.
    """

    kind: str = ""

    def __init__(self, params):
        self.params = params
        self.n_features: int | None = None

    @property
    def fitted(self) -> bool:
        return self.n_features is not None

    def _check_fitted(self):
        if not self.fitted:
            raise UnfittedModel(f"{type(self).__name__} has not been fitted")

    def _as_matrix(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None]
        if X.ndim != 2:
            raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
        return X

    def fit(self, X, y) -> "Classifier":
        X = self._as_matrix(X)
        y = encode_labels(y)
        if len(X) != len(y):
            raise ValueError("feature and label counts differ")
        for i, label in enumerate(LABELS):
            if not (y == i).any():
                raise EmptyClass(f"no training samples for {label.value}")
        self._fit(X, y)
        self.n_features = X.shape[1]
        return self

    def _fit(self, X: np.ndarray, y: np.ndarray) -> None:
        raise NotImplementedError

    def predict_scores(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_index(self, X) -> np.ndarray:
        return np.argmax(self.predict_scores(X), axis=1)

    def predict(self, X) -> list[GenreLabel]:
        return decode_labels(self.predict_index(X))

    def get_state(self) -> tuple[dict, dict[str, np.ndarray]]:
        raise NotImplementedError

    def set_state(self, meta: dict, arrays: dict[str, np.ndarray]) -> None:
        raise NotImplementedError


@dataclass
class AccuracyReport:
    """Overall and per-genre accuracy in percent, with ``confusion[true, predicted]``."""

    overall: float
    per_genre: dict[GenreLabel, float]
    confusion: np.ndarray
    labels: tuple[GenreLabel, ...] = field(default=LABELS)

    @property
    def n(self) -> int:
        return int(self.confusion.sum())


def accuracy_report(y_true: Sequence, y_pred: Sequence) -> AccuracyReport:
    t, p = encode_labels(y_true), encode_labels(y_pred)
    if len(t) == 0:
        raise EmptyTestSet("cannot evaluate on an empty test set")
    confusion = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    np.add.at(confusion, (t, p), 1)
    per_genre = {label: 100.0 * confusion[i, i] / confusion[i].sum()
                 for i, label in enumerate(LABELS) if confusion[i].sum()}
    return AccuracyReport(100.0 * np.trace(confusion) / confusion.sum(), per_genre, confusion)


def evaluate(classifier: Classifier, X, y) -> AccuracyReport:
    X = np.asarray(X)
    if len(X) == 0:
        raise EmptyTestSet("cannot evaluate on an empty test set")
    return accuracy_report(y, classifier.predict(X))
