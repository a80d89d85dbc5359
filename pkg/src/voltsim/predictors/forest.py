"""Regression forest built from variance-minimising CART trees.

Tree growth uses presorted sample orders per feature, so each node costs
O(n_node * n_features) instead of re-sorting.  The inner loops are compiled
with numba.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np


class EmptyTrainingSet(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyper-parameters.

    ``max_features`` of None means ceil(d / 3); ``max_depth`` of None grows
    trees until leaves are pure.  ``aggregation`` is ``"mean"`` or ``"mode"``;
    the mode is taken over tree outputs rounded to ``mode_resolution`` (in
    target units).
    """

    tree_count: int = 100
    max_features: Optional[int] = None
    min_samples_leaf: int = 1
    max_depth: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0
    aggregation: str = "mean"
    mode_resolution: float = 1.0

    def __post_init__(self):
        if self.tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.aggregation not in ("mean", "mode"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")

    def features_per_split(self, d: int) -> int:
        k = math.ceil(d / 3) if self.max_features is None else self.max_features
        if not 1 <= k <= d:
            raise ValueError(f"max_features must lie in [1, {d}], got {k}")
        return k


@numba.njit(cache=True)
def _grow(X, y, presorted, counts, max_features, min_leaf, max_depth, seed):
    """Grow one tree on the multiset of rows given by ``counts``.

    ``presorted[f]`` lists row indices of X ordered by feature f.  Repeated
    rows are carried once with an integer weight, which yields the same
    tree as expanding them.
    """
    np.random.seed(seed)
    d = X.shape[1]
    n = 0
    for r in range(counts.shape[0]):
        if counts[r] > 0:
            n += 1
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    # per feature: row ids, feature values, targets and weights in sorted order
    order = np.empty((d, n), np.int64)
    xs = np.empty((d, n))
    ys = np.empty((d, n))
    ws = np.empty((d, n))
    for f in range(d):
        i = 0
        for r in presorted[f]:
            if counts[r] > 0:
                order[f, i] = r
                xs[f, i] = X[r, f]
                ys[f, i] = y[r]
                ws[f, i] = counts[r]
                i += 1
    goes_left = np.zeros(counts.shape[0], np.bool_)
    perm = np.arange(d)
    buf_o = np.empty(n, np.int64)
    buf_x = np.empty(n)
    buf_y = np.empty(n)
    buf_w = np.empty(n)

    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0], st_lo[0], st_hi[0], st_depth[0] = 0, 0, n, 0
    top = 1
    count = 1

    while top > 0:
        top -= 1
        node, lo, hi, depth = st_node[top], st_lo[top], st_hi[top], st_depth[top]
        m = 0.0
        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(lo, hi):
            v = ys[0, i]
            m += ws[0, i]
            total += ws[0, i] * v
            ymin = min(ymin, v)
            ymax = max(ymax, v)
        value[node] = total / m
        if ymin == ymax or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        for j in range(d - 1, 0, -1):
            k = np.random.randint(0, j + 1)
            perm[j], perm[k] = perm[k], perm[j]
        best_score = -np.inf
        best_f = -1
        best_pos = -1
        best_thr = 0.0
        tried = 0
        for j in range(d):
            if tried >= max_features and best_f >= 0:
                break
            f = perm[j]
            if xs[f, lo] == xs[f, hi - 1]:
                continue
            tried += 1
            acc = 0.0
            nl = 0.0
            for i in range(lo, hi - 1):
                acc += ws[f, i] * ys[f, i]
                nl += ws[f, i]
                nr = m - nl
                x0 = xs[f, i]
                x1 = xs[f, i + 1]
                if x0 == x1 or nl < min_leaf or nr < min_leaf:
                    continue
                rest = total - acc
                score = acc * acc / nl + rest * rest / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_pos = i - lo + 1
                    thr = 0.5 * (x0 + x1)
                    if thr >= x1:
                        thr = x0
                    best_thr = thr
        if best_f < 0:
            continue

        for i in range(lo, hi):
            goes_left[order[best_f, i]] = i - lo < best_pos
        for f in range(d):
            if f == best_f:
                continue
            a = lo
            b = 0
            for i in range(lo, hi):
                s = order[f, i]
                if goes_left[s]:
                    order[f, a] = s
                    xs[f, a] = xs[f, i]
                    ys[f, a] = ys[f, i]
                    ws[f, a] = ws[f, i]
                    a += 1
                else:
                    buf_o[b] = s
                    buf_x[b] = xs[f, i]
                    buf_y[b] = ys[f, i]
                    buf_w[b] = ws[f, i]
                    b += 1
            for i in range(b):
                order[f, a + i] = buf_o[i]
                xs[f, a + i] = buf_x[i]
                ys[f, a + i] = buf_y[i]
                ws[f, a + i] = buf_w[i]

        mid = lo + best_pos
        lc, rc = count, count + 1
        count += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lc
        right[node] = rc
        st_node[top], st_lo[top], st_hi[top], st_depth[top] = rc, mid, hi, depth + 1
        top += 1
        st_node[top], st_lo[top], st_hi[top], st_depth[top] = lc, lo, mid, depth + 1
        top += 1

    return feature[:count], threshold[:count], left[:count], right[:count], value[:count]


@numba.njit(cache=True)
def _apply(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature < 0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _apply(self.feature, self.threshold, self.left, self.right,
                      self.value, np.ascontiguousarray(X, dtype=np.float64))


def presort(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def fit_tree(X, y, max_features: int, min_samples_leaf: int = 1,
             max_depth: Optional[int] = None, seed: int = 0,
             counts: Optional[np.ndarray] = None,
             presorted: Optional[np.ndarray] = None) -> RegressionTree:
    """Grow a single tree; ``counts`` gives per-row multiplicities (default all 1)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if counts is None:
        counts = np.ones(len(X), dtype=np.int64)
    if presorted is None:
        presorted = presort(X)
    depth = -1 if max_depth is None else int(max_depth)
    return RegressionTree(*_grow(X, y, presorted, np.asarray(counts, dtype=np.int64),
                                 int(max_features), int(min_samples_leaf),
                                 depth, int(seed) % (2**32)))


def aggregate(per_tree: np.ndarray, rule: str = "mean", resolution: float = 1.0) -> np.ndarray:
    """Combine per-tree predictions of shape (n_trees, n_rows).

    ``mode`` returns the most frequent value after rounding to
    ``resolution``; ties go to the smaller value.
    """
    per_tree = np.atleast_2d(np.asarray(per_tree, dtype=float))
    if rule == "mean":
        return per_tree.mean(axis=0)
    if rule != "mode":
        raise ValueError(f"unknown aggregation {rule!r}")
    rounded = np.round(per_tree / resolution) * resolution
    out = np.empty(per_tree.shape[1])
    for j in range(per_tree.shape[1]):
        vals, counts = np.unique(rounded[:, j], return_counts=True)
        out[j] = vals[np.argmax(counts)]
    return out


class ForestRegressor:
    """Bagged regression trees with random feature subsets at each split."""

    def __init__(self, config: ForestConfig = ForestConfig()):
        self.config = config
        self.trees_: list[RegressionTree] = []
        self.n_features_: Optional[int] = None

    def fit(self, X, y) -> "ForestRegressor":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
            raise EmptyTrainingSet(f"need matching non-empty X, y; got {X.shape}, {y.shape}")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("training data must be finite")
        cfg = self.config
        n, d = X.shape
        k = cfg.features_per_split(d)
        seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.tree_count, dtype=np.uint64)
        order = presort(X)
        self.trees_ = []
        for s in seeds:
            rng = np.random.default_rng(int(s))
            if cfg.bootstrap:
                counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
            else:
                counts = np.ones(n, dtype=np.int64)
            self.trees_.append(fit_tree(X, y, k, cfg.min_samples_leaf, cfg.max_depth,
                                        int(rng.integers(0, 2**31)), counts, order))
        self.n_features_ = d
        return self

    def per_tree(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features_:
            raise DimensionMismatch(f"expected {self.n_features_} features, got {X.shape[1]}")
        return np.vstack([t.predict(X) for t in self.trees_])

    def predict(self, X) -> np.ndarray:
        cfg = self.config
        return aggregate(self.per_tree(X), cfg.aggregation, cfg.mode_resolution)
