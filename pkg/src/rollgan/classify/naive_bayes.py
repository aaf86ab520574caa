from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidHyperparam
from .base import Classifier


@dataclass(frozen=True)
class NaiveBayesParams:
    event_model: str = "bernoulli"  # or "gaussian"
    alpha: float = 1.0  # Laplace/Lidstone smoothing for the Bernoulli model
    var_smoothing: float = 1e-9  # fraction of the largest feature variance added to all variances


class NaiveBayes(Classifier):
    kind = "nb"

    def __init__(self, params: NaiveBayesParams = NaiveBayesParams()):
        if params.event_model not in ("bernoulli", "gaussian"):
            raise InvalidHyperparam(f"unknown event model {params.event_model!r}")
        if params.event_model == "bernoulli" and not params.alpha > 0:
            raise InvalidHyperparam("alpha must be positive")
        if params.var_smoothing < 0:
            raise InvalidHyperparam("var_smoothing must be non-negative")
        super().__init__(params)

    def _fit(self, X, y):
        X = X.astype(np.float64)
        counts = np.bincount(y, minlength=2).astype(np.float64)
        self.log_prior = np.log(counts / counts.sum())
        if self.params.event_model == "bernoulli":
            a = self.params.alpha
            sums = np.stack([X[y == c].sum(axis=0) for c in range(2)])
            self.theta = (sums + a) / (counts[:, None] + 2 * a)
        else:
            self.mean = np.stack([X[y == c].mean(axis=0) for c in range(2)])
            var = np.stack([X[y == c].var(axis=0) for c in range(2)])
            var_max = float(X.var(axis=0).max())
            eps = self.params.var_smoothing * (var_max if var_max > 0 else 1.0)
            self.var = var + eps

    def joint_log_likelihood(self, X) -> np.ndarray:
        self._check_fitted()
        X = self._as_matrix(X).astype(np.float64)
        if self.params.event_model == "bernoulli":
            log_p, log_q = np.log(self.theta), np.log1p(-self.theta)
            return self.log_prior + X @ log_p.T + (1 - X) @ log_q.T
        ll = -0.5 * self._gauss_terms(X)
        return self.log_prior + ll

    def _gauss_terms(self, X):
        # sum_j [log(2 pi var_cj) + (x_j - mu_cj)^2 / var_cj], expanded to avoid an n x c x d tensor
        inv = 1.0 / self.var
        quad = (X ** 2) @ inv.T - 2 * X @ (self.mean * inv).T + (self.mean ** 2 * inv).sum(axis=1)
        return np.log(2 * np.pi * self.var).sum(axis=1) + quad

    def predict_scores(self, X) -> np.ndarray:
        """Log posterior probabilities (finite for every input)."""
        jll = self.joint_log_likelihood(X)
        return jll - np.logaddexp.reduce(jll, axis=1, keepdims=True)

    def get_state(self):
        if self.params.event_model == "bernoulli":
            return {}, {"log_prior": self.log_prior, "theta": self.theta}
        return {}, {"log_prior": self.log_prior, "mean": self.mean, "var": self.var}

    def set_state(self, meta, arrays):
        self.log_prior = arrays["log_prior"]
        if self.params.event_model == "bernoulli":
            self.theta = arrays["theta"]
            self.n_features = self.theta.shape[1]
        else:
            self.mean, self.var = arrays["mean"], arrays["var"]
            self.n_features = self.mean.shape[1]
