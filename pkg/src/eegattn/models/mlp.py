"""ReLU multilayer perceptrons (DNN_4, DNN_6) trained with Adam on softmax cross-entropy."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .base import ModelError, check_training_data, check_width

N_CLASSES = 3

ARCHITECTURES = {
    # hidden widths, indices of hidden layers followed by dropout
    "dnn4": ((64, 64), ()),
    "dnn6": ((64, 128, 128, 64), (1, 2)),
}


@dataclass(frozen=True)
class MlpConfig:
    architecture: str = "dnn4"
    hidden: tuple[int, ...] | None = None  # overrides the architecture's widths, same depth
    dropout: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ModelError(f"unknown architecture {self.architecture!r}")
        if self.hidden is not None:
            object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
            if len(self.hidden) != len(ARCHITECTURES[self.architecture][0]):
                raise ModelError(f"{self.architecture} needs {len(ARCHITECTURES[self.architecture][0])} hidden widths")
        if any(h <= 0 for h in self.hidden_sizes):
            raise ModelError("layer sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ModelError("batch_size must be >= 1 and epochs >= 0")

    @property
    def kind(self) -> str:
        return self.architecture

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.hidden if self.hidden is not None else ARCHITECTURES[self.architecture][0]

    @property
    def dropout_after(self) -> tuple[int, ...]:
        return ARCHITECTURES[self.architecture][1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden_sizes)
        return d


def init_params(layer_sizes, rng) -> list[tuple[np.ndarray, np.ndarray]]:
    """He-normal weights, zero biases."""
    params = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        W = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        params.append((W, np.zeros(fan_out)))
    return params


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, X, dropout_after=(), p=0.0, rng=None):
    """Return (logits, cache). Dropout applies only when ``rng`` is given and p > 0."""
    h = X
    cache = []
    last = len(params) - 1
    for i, (W, b) in enumerate(params):
        z = h @ W + b
        if i == last:
            cache.append((h, None, None))
            return z, cache
        a = np.maximum(z, 0.0)
        mask = None
        if rng is not None and p > 0.0 and i in dropout_after:
            # inverted dropout: inference needs no rescaling
            mask = (rng.random(a.shape) >= p) / (1.0 - p)
            a = a * mask
        cache.append((h, z, mask))
        h = a
    raise AssertionError("unreachable")


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def backward(params, logits, cache, y):
    """Gradients of the mean cross-entropy, one (dW, db) pair per layer."""
    n = len(y)
    delta = softmax(logits)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        h, _, _ = cache[i]
        W, _ = params[i]
        grads[i] = (h.T @ delta, delta.sum(axis=0))
        if i == 0:
            break
        delta = delta @ W.T
        _, z_prev, mask_prev = cache[i - 1]
        if mask_prev is not None:
            delta = delta * mask_prev
        delta = delta * (z_prev > 0)
    return grads


class Mlp:
    def __init__(self, config: MlpConfig, n_features: int, params, classes=(0, 1, 2), history=None):
        self.config = config
        self.n_features = n_features
        self.layers = params
        self.classes = tuple(classes)
        self.history = list(history or [])

    @property
    def kind(self) -> str:
        return self.config.architecture

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.n_features,) + self.config.hidden_sizes + (N_CLASSES,)

    @classmethod
    def fit(cls, config: MlpConfig, X, y) -> "Mlp":
        X, y = check_training_data(X, y)
        n, d = X.shape
        rng = np.random.default_rng(config.seed)
        sizes = (d,) + config.hidden_sizes + (N_CLASSES,)
        params = init_params(sizes, rng)
        m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        history = [cross_entropy(forward(params, X)[0], y)]
        b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.adam_eps
        step = 0
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                batch = order[start : start + config.batch_size]
                logits, cache = forward(params, X[batch], config.dropout_after, config.dropout, rng)
                grads = backward(params, logits, cache, y[batch])
                step += 1
                c1 = 1.0 - b1**step
                c2 = 1.0 - b2**step
                for i, ((W, b), (gW, gb)) in enumerate(zip(params, grads)):
                    mW, mb = m[i]
                    vW, vb = v[i]
                    for p_, g, m_, v_ in ((W, gW, mW, vW), (b, gb, mb, vb)):
                        m_ *= b1
                        m_ += (1.0 - b1) * g
                        v_ *= b2
                        v_ += (1.0 - b2) * g * g
                        p_ -= lr * (m_ / c1) / (np.sqrt(v_ / c2) + eps)
            history.append(cross_entropy(forward(params, X)[0], y))
        return cls(config, d, params, tuple(int(c) for c in np.unique(y)), history)

    def predict_proba(self, X) -> np.ndarray:
        X = check_width(X, self.n_features)
        return softmax(forward(self.layers, X)[0])

    def predict(self, X) -> np.ndarray:
        X = check_width(X, self.n_features)
        return np.argmax(forward(self.layers, X)[0], axis=1)

    def params(self) -> dict:
        out = {}
        for i, (W, b) in enumerate(self.layers):
            out[f"W{i}"] = W
            out[f"b{i}"] = b
        out["history"] = np.asarray(self.history)
        return out

    @classmethod
    def from_params(cls, config: MlpConfig, n_features: int, params: dict, classes) -> "Mlp":
        n_layers = len(config.hidden_sizes) + 1
        layers = [(np.asarray(params[f"W{i}"]), np.asarray(params[f"b{i}"])) for i in range(n_layers)]
        return cls(config, n_features, layers, classes, np.asarray(params.get("history", [])).tolist())


def gradient_check(config: MlpConfig, X, y, seed: int = 0, h: float = 1e-5, only: str | None = None) -> float:
    """Max relative error of backprop against central differences over every parameter.

    ``only`` restricts the comparison to ``"W"`` or ``"b"`` parameters. Relative
    error is |a - n| / max(|a|, |n|, 1e-6); the floor keeps zero gradients from
    dividing roundoff by zero.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) > 10 or X.shape[1] > 8 or max(config.hidden_sizes) > 8:
        raise ModelError("gradient_check is meant for <= 10 rows, <= 8 features, hidden widths <= 8")
    rng = np.random.default_rng(seed)
    sizes = (X.shape[1],) + config.hidden_sizes + (N_CLASSES,)
    params = init_params(sizes, rng)
    for _, b in params:
        b[:] = 0.1 * rng.standard_normal(b.shape)
    logits, cache = forward(params, X)
    grads = backward(params, logits, cache, y)

    worst = 0.0
    for (W, b), (gW, gb) in zip(params, grads):
        for name, p_, g in (("W", W, gW), ("b", b, gb)):
            if only is not None and name != only:
                continue
            flat = p_.reshape(-1)
            gflat = g.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                up = cross_entropy(forward(params, X)[0], y)
                flat[k] = orig - h
                down = cross_entropy(forward(params, X)[0], y)
                flat[k] = orig
                num = (up - down) / (2.0 * h)
                err = abs(gflat[k] - num) / max(abs(gflat[k]), abs(num), 1e-6)
                worst = max(worst, err)
    return worst
