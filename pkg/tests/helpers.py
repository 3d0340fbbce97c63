import numpy as np

from eegattn.features import FeatureMatrix


def make_matrix(labels, subjects=None, n_features=4, seed=0) -> FeatureMatrix:
    labels = np.asarray(labels)
    n = len(labels)
    rng = np.random.default_rng(seed)
    if subjects is None:
        subjects = np.array(["s1"] * n)
    return FeatureMatrix(
        rng.standard_normal((n, n_features)),
        labels,
        np.asarray(subjects),
        np.ones(n, dtype=int),
        np.arange(n, dtype=float),
        [f"f{i}" for i in range(n_features)],
    )


def blobs(n_per_class=200, sep=4.0, sigma=1.0, seed=0):
    """Three Gaussian blobs on a triangle with side ``2 * sep * sigma``."""
    rng = np.random.default_rng(seed)
    centers = sep * sigma * np.array([[0.0, 0.0], [2.0, 0.0], [1.0, np.sqrt(3.0)]])
    X = np.concatenate([c + sigma * rng.standard_normal((n_per_class, 2)) for c in centers])
    y = np.repeat(np.arange(3), n_per_class)
    return X, y, centers
