"""Random forest of CART trees: bootstrap resamples, Gini splits, sqrt feature subsets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba
import numpy as np

from .base import ModelError, check_training_data, check_width

N_CLASSES = 3


@dataclass(frozen=True)
class RfConfig:
    num_trees: int = 200
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: str = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    kind = "rf"

    def __post_init__(self):
        if self.num_trees < 1:
            raise ModelError("num_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ModelError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ModelError("max_depth must be >= 0 or None")
        if self.features_per_split not in ("sqrt", "all"):
            raise ModelError(f"features_per_split must be 'sqrt' or 'all', got {self.features_per_split!r}")

    def n_split_features(self, n_features: int) -> int:
        if self.features_per_split == "all":
            return n_features
        return max(1, int(math.sqrt(n_features)))

    def to_dict(self) -> dict:
        return asdict(self)


@numba.njit(cache=True, nogil=True, inline="always")
def _children_gini(lcounts, counts, nl, nr):
    """Size-weighted Gini impurity of a split, times the node size."""
    sl = 0.0
    sr = 0.0
    for c in range(N_CLASSES):
        sl += lcounts[c] * lcounts[c]
        rc = counts[c] - lcounts[c]
        sr += rc * rc
    return (nl - sl / nl) + (nr - sr / nr)


@numba.njit(cache=True, nogil=True, inline="always")
def _midpoint(v, v_next):
    t = 0.5 * (v + v_next)
    if t >= v_next:
        t = v
    return t


@numba.njit(cache=True, nogil=True)
def _build_tree(X, y, presorted, idx, max_features, max_depth, min_leaf, seed):
    np.random.seed(seed)
    n_feat = X.shape[1]
    n_total = X.shape[0]
    weight = np.zeros(n_total, np.int64)
    cap = 2 * len(idx) + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    leaf_class = np.zeros(cap, np.int8)

    stack_node = np.empty(cap, np.int64)
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = len(idx)
    stack_depth[0] = 0
    sp = 1
    n_nodes = 1

    feats = np.arange(n_feat)
    vals = np.empty(len(idx), np.float64)
    counts = np.zeros(N_CLASSES, np.int64)
    lcounts = np.zeros(N_CLASSES, np.int64)

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        nn = hi - lo

        counts[:] = 0
        for i in range(lo, hi):
            counts[y[idx[i]]] += 1
        best_c = 0
        for c in range(1, N_CLASSES):
            if counts[c] > counts[best_c]:
                best_c = c
        leaf_class[node] = best_c

        n_present = 0
        for c in range(N_CLASSES):
            if counts[c] > 0:
                n_present += 1
        if n_present <= 1 or nn < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        if nn * 16 >= n_total:
            for i in range(lo, hi):
                weight[idx[i]] += 1

        # visit features in random order until max_features non-constant ones were scored
        best_f = -1
        best_t = 0.0
        best_score = np.inf
        visited = 0
        for j in range(n_feat):
            r = j + np.random.randint(n_feat - j)
            tmp = feats[j]
            feats[j] = feats[r]
            feats[r] = tmp
            f = feats[j]
            if nn * 16 < n_total:
                for i in range(nn):
                    vals[i] = X[idx[lo + i], f]
                order = np.argsort(vals[:nn])
                if vals[order[0]] == vals[order[nn - 1]]:
                    continue
                visited += 1
                lcounts[:] = 0
                for i in range(nn - 1):
                    lcounts[y[idx[lo + order[i]]]] += 1
                    nl = i + 1
                    nr = nn - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    v = vals[order[i]]
                    v_next = vals[order[i + 1]]
                    if v == v_next:
                        continue
                    score = _children_gini(lcounts, counts, nl, nr)
                    if score < best_score:
                        best_score = score
                        best_f = f
                        best_t = _midpoint(v, v_next)
            else:
                # large node: walk the forest-wide presorted column, weighting by membership
                col = presorted[f]
                first = -1
                last = -1
                for q in range(n_total):
                    if weight[col[q]] > 0:
                        if first < 0:
                            first = col[q]
                        last = col[q]
                if X[first, f] == X[last, f]:
                    continue
                visited += 1
                lcounts[:] = 0
                nl = 0
                prev = -1
                for q in range(n_total):
                    r = col[q]
                    wr = weight[r]
                    if wr == 0:
                        continue
                    if prev >= 0 and X[r, f] != X[prev, f]:
                        nr = nn - nl
                        if nl >= min_leaf and nr >= min_leaf:
                            score = _children_gini(lcounts, counts, nl, nr)
                            if score < best_score:
                                best_score = score
                                best_f = f
                                best_t = _midpoint(X[prev, f], X[r, f])
                    lcounts[y[r]] += wr
                    nl += wr
                    prev = r
            if visited >= max_features and best_f >= 0:
                break
        if nn * 16 >= n_total:
            for i in range(lo, hi):
                weight[idx[i]] = 0
        if best_f < 0:
            continue

        # partition idx[lo:hi] so rows with x <= t come first
        i = lo
        k = hi - 1
        while i <= k:
            if X[idx[i], best_f] <= best_t:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[k]
                idx[k] = tmp
                k -= 1
        mid = i
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[sp] = n_nodes + 1
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = n_nodes
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        leaf_class[:n_nodes].copy(),
    )


@numba.njit(cache=True, nogil=True)
def _forest_votes(X, offsets, feature, threshold, left, right, leaf_class):
    n = X.shape[0]
    votes = np.zeros((n, N_CLASSES), np.int64)
    for r in range(n):
        for t in range(len(offsets) - 1):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if X[r, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            votes[r, leaf_class[base + node]] += 1
    return votes


def _tree_seeds(seed: int, n_trees: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n_trees)


class RandomForest:
    kind = "rf"

    def __init__(self, config: RfConfig, n_features: int, trees: dict, classes=(0, 1, 2)):
        self.config = config
        self.n_features = n_features
        self.trees = trees  # concatenated node arrays plus offsets
        self.classes = tuple(classes)

    @classmethod
    def fit(cls, config: RfConfig, X, y) -> "RandomForest":
        X, y = check_training_data(X, y)
        n, d = X.shape
        m = config.n_split_features(d)
        max_depth = -1 if config.max_depth is None else config.max_depth
        presorted = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))
        parts = []
        for ss in _tree_seeds(config.seed, config.num_trees):
            rng = np.random.default_rng(ss)
            if config.bootstrap:
                idx = rng.integers(0, n, n)
            else:
                idx = np.arange(n)
            node_seed = int(rng.integers(0, 2**31 - 1))
            parts.append(_build_tree(X, y, presorted, idx.astype(np.int64), m, max_depth, config.min_samples_leaf, node_seed))
        offsets = np.zeros(len(parts) + 1, np.int64)
        offsets[1:] = np.cumsum([len(p[0]) for p in parts])
        trees = {
            "offsets": offsets,
            "feature": np.concatenate([p[0] for p in parts]),
            "threshold": np.concatenate([p[1] for p in parts]),
            "left": np.concatenate([p[2] for p in parts]),
            "right": np.concatenate([p[3] for p in parts]),
            "leaf_class": np.concatenate([p[4] for p in parts]),
        }
        return cls(config, d, trees, tuple(int(c) for c in np.unique(y)))

    def votes(self, X) -> np.ndarray:
        X = check_width(X, self.n_features)
        t = self.trees
        return _forest_votes(X, t["offsets"], t["feature"], t["threshold"], t["left"], t["right"], t["leaf_class"])

    def predict(self, X) -> np.ndarray:
        # argmax resolves ties to the smallest class code
        return np.argmax(self.votes(X), axis=1)

    @property
    def num_nodes(self) -> int:
        return int(self.trees["offsets"][-1])

    def params(self) -> dict:
        return dict(self.trees)

    @classmethod
    def from_params(cls, config: RfConfig, n_features: int, params: dict, classes) -> "RandomForest":
        return cls(config, n_features, {k: np.asarray(v) for k, v in params.items()}, classes)
