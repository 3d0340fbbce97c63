"""One-vs-rest linear SVM trained by stochastic subgradient descent (Pegasos schedule)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numba
import numpy as np

from .base import ModelError, check_training_data, check_width

N_CLASSES = 3


@dataclass(frozen=True)
class SvmConfig:
    kernel: str = "linear"
    C: float = 1.0
    epochs: int = 50
    seed: int = 0

    kind = "svm"

    def __post_init__(self):
        if self.kernel != "linear":
            raise ModelError(f"unsupported kernel {self.kernel!r}")
        if not self.C > 0:
            raise ModelError("C must be positive")
        if self.epochs < 1:
            raise ModelError("epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@numba.njit(cache=True, nogil=True)
def _pegasos_epoch(X, y, order, W, lam, t0):
    """One pass in ``order``; W is (classes, d + 1), last column the bias weight."""
    d = X.shape[1]
    radius = 1.0 / np.sqrt(lam)
    t = t0
    for r in order:
        t += 1
        eta = 1.0 / (lam * t)
        shrink = 1.0 - eta * lam
        for c in range(W.shape[0]):
            target = 1.0 if y[r] == c else -1.0
            score = W[c, d]
            for j in range(d):
                score += W[c, j] * X[r, j]
            for j in range(d + 1):
                W[c, j] *= shrink
            if target * score < 1.0:
                for j in range(d):
                    W[c, j] += eta * target * X[r, j]
                W[c, d] += eta * target
            # optional Pegasos projection onto the ball of radius 1/sqrt(lambda)
            norm = 0.0
            for j in range(d + 1):
                norm += W[c, j] * W[c, j]
            norm = np.sqrt(norm)
            if norm > radius:
                for j in range(d + 1):
                    W[c, j] *= radius / norm
    return t


class LinearSvm:
    kind = "svm"

    def __init__(self, config: SvmConfig, n_features: int, weights: np.ndarray, classes=(0, 1, 2)):
        self.config = config
        self.n_features = n_features
        self.weights = weights  # (3, d + 1)
        self.classes = tuple(classes)

    @classmethod
    def fit(cls, config: SvmConfig, X, y) -> "LinearSvm":
        X, y = check_training_data(X, y)
        n, d = X.shape
        lam = 1.0 / (config.C * n)
        rng = np.random.default_rng(config.seed)
        W = np.zeros((N_CLASSES, d + 1))
        t = 0
        for _ in range(config.epochs):
            t = _pegasos_epoch(X, y, rng.permutation(n), W, lam, t)
        return cls(config, d, W, tuple(int(c) for c in np.unique(y)))

    def decision_function(self, X) -> np.ndarray:
        X = check_width(X, self.n_features)
        return X @ self.weights[:, :-1].T + self.weights[:, -1]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def params(self) -> dict:
        return {"weights": self.weights}

    @classmethod
    def from_params(cls, config: SvmConfig, n_features: int, params: dict, classes) -> "LinearSvm":
        return cls(config, n_features, np.asarray(params["weights"]), classes)
