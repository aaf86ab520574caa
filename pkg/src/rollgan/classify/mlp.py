from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidHyperparam, NonFiniteLoss
from .base import Classifier

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MLPParams:
    hidden_layers: int = 1
    neurons: int = 1000
    activation: str = "relu"  # relu | tanh | logistic
    optimizer: str = "adam"  # adam | sgd
    learning_rate: float = 1e-3
    schedule: str = "adaptive"  # adaptive | constant
    max_iterations: int = 1000  # epochs
    batch_size: int = 200
    l2: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    momentum: float = 0.9  # sgd only
    plateau_patience: int = 2
    plateau_factor: float = 5.0
    tol: float = 1e-4
    n_iter_no_change: int = 10
    min_learning_rate: float = 1e-6
    seed: int = 0


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0)
    if name == "tanh":
        return np.tanh(z)
    return 1.0 / (1.0 + np.exp(-z))


def _act_grad(name, a):
    """Derivative of the activation expressed through its output ``a``."""
    if name == "relu":
        return (a > 0).astype(a.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return a * (1.0 - a)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class MLP(Classifier):
    """Fully connected network with a softmax output trained on cross-entropy.

    ``max_iterations`` counts epochs. With the adaptive schedule the learning
    rate is divided by ``plateau_factor`` whenever the epoch training loss has
    not improved by ``tol`` for ``plateau_patience`` epochs. Training stops early
    after ``n_iter_no_change`` epochs without improvement or once the learning
    rate falls below ``min_learning_rate``.
    """

    kind = "mlp"

    def __init__(self, params: MLPParams = MLPParams()):
        if params.hidden_layers < 1 or params.neurons < 1:
            raise InvalidHyperparam("need at least one hidden layer with at least one neuron")
        if params.activation not in ("relu", "tanh", "logistic"):
            raise InvalidHyperparam(f"unknown activation {params.activation!r}")
        if params.optimizer not in ("adam", "sgd"):
            raise InvalidHyperparam(f"unknown optimizer {params.optimizer!r}")
        if params.schedule not in ("adaptive", "constant"):
            raise InvalidHyperparam(f"unknown learning-rate schedule {params.schedule!r}")
        if not params.learning_rate > 0 or params.max_iterations < 1 or params.batch_size < 1:
            raise InvalidHyperparam("learning_rate, max_iterations and batch_size must be positive")
        super().__init__(params)
        self.loss_curve: list[float] = []

    def _init_weights(self, n_in, rng):
        p = self.params
        sizes = [n_in] + [p.neurons] * p.hidden_layers + [2]
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            if p.activation == "logistic":
                bound *= np.sqrt(2.0)
            self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(np.float32))
            self.biases.append(rng.uniform(-bound, bound, fan_out).astype(np.float32))

    def _forward(self, X):
        acts = [X]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(_act(self.params.activation, acts[-1] @ W + b))
        return acts, _softmax(acts[-1] @ self.weights[-1] + self.biases[-1])

    def _fit(self, X, y):
        p = self.params
        rng = np.random.default_rng(p.seed)
        X = np.asarray(X, dtype=np.float32)
        n = len(X)
        onehot = np.eye(2, dtype=np.float32)[y]
        self._init_weights(X.shape[1], rng)
        params = self.weights + self.biases
        m = [np.zeros_like(q) for q in params]
        v = [np.zeros_like(q) for q in params]
        lr, t = p.learning_rate, 0
        best, stall, plateau = np.inf, 0, 0
        batch = min(p.batch_size, n)
        self.loss_curve = []
        for epoch in range(p.max_iterations):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                xb, yb = X[idx], onehot[idx]
                acts, prob = self._forward(xb)
                nb = len(idx)
                ce = -np.log(np.clip((prob * yb).sum(axis=1), 1e-12, None)).sum() / nb
                reg = 0.5 * p.l2 * sum(float((W * W).sum()) for W in self.weights) / nb
                total += (ce + reg) * nb

                delta = (prob - yb) / nb
                gW, gb = [None] * len(self.weights), [None] * len(self.biases)
                for layer in range(len(self.weights) - 1, -1, -1):
                    gW[layer] = acts[layer].T @ delta + p.l2 * self.weights[layer] / nb
                    gb[layer] = delta.sum(axis=0)
                    if layer:
                        delta = (delta @ self.weights[layer].T) * _act_grad(p.activation, acts[layer])
                grads = gW + gb
                t += 1
                for i, (q, g) in enumerate(zip(params, grads)):
                    if p.optimizer == "adam":
                        m[i] = p.beta1 * m[i] + (1 - p.beta1) * g
                        v[i] = p.beta2 * v[i] + (1 - p.beta2) * g * g
                        step = lr * np.sqrt(1 - p.beta2 ** t) / (1 - p.beta1 ** t)
                        q -= (step * m[i] / (np.sqrt(v[i]) + 1e-8)).astype(q.dtype)
                    else:
                        m[i] = p.momentum * m[i] - lr * g
                        q += m[i].astype(q.dtype)

            loss = total / n
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"MLP training loss became {loss} at epoch {epoch + 1}")
            self.loss_curve.append(float(loss))
            if loss < best - p.tol:
                best, stall, plateau = loss, 0, 0
            else:
                stall += 1
                plateau += 1
            if p.schedule == "adaptive" and plateau >= p.plateau_patience:
                lr /= p.plateau_factor
                plateau = 0
                logger.debug("epoch %d: learning rate reduced to %g", epoch + 1, lr)
            if stall >= p.n_iter_no_change or lr < p.min_learning_rate:
                break
        self.n_epochs = len(self.loss_curve)

    def predict_scores(self, X) -> np.ndarray:
        """Softmax class probabilities."""
        self._check_fitted()
        return self._forward(self._as_matrix(X).astype(np.float32))[1]

    def get_state(self):
        arrays = {f"W{i}": W for i, W in enumerate(self.weights)}
        arrays.update({f"b{i}": b for i, b in enumerate(self.biases)})
        arrays["loss_curve"] = np.asarray(self.loss_curve, dtype=np.float64)
        return {}, arrays

    def set_state(self, meta, arrays):
        n = self.params.hidden_layers + 1
        self.weights = [arrays[f"W{i}"] for i in range(n)]
        self.biases = [arrays[f"b{i}"] for i in range(n)]
        self.loss_curve = arrays["loss_curve"].tolist()
        self.n_features = self.weights[0].shape[0]
