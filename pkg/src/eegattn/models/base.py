from __future__ import annotations

import numpy as np


class ModelError(ValueError):
    pass


def check_width(X, n_features: int) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        width = X.shape[1] if X.ndim == 2 else None
        raise ModelError(f"width mismatch: model expects {n_features} features, got {width}")
    return X


def check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ModelError("training matrix and labels disagree in length")
    if len(y) == 0:
        raise ModelError("empty training set")
    if not np.all(np.isfinite(X)):
        raise ModelError("non-finite feature values in training data")
    if np.any((y < 0) | (y > 2)):
        raise ModelError("labels must be class codes 0, 1 or 2")
    if len(np.unique(y)) < 2:
        raise ModelError(f"single-class training set (only class {int(y[0])})")
    return X, y
