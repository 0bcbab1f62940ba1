"""Internal CART trees and bagged forests (histogram-split variant).

Features are quantile-binned once per fit; each node then scores every
(feature, bin-boundary) split from class-count prefix sums, which keeps the
per-node cost linear in the node size. Zero-gain splits are allowed while a
node is still impure so small lookup-table datasets (e.g. XOR) can be
shattered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_BINS = 32


def quantile_bin_edges(X: np.ndarray, max_bins: int = MAX_BINS) -> list[np.ndarray]:
    """Per-feature split thresholds (midpoints between distinct quantiles)."""
    edges = []
    for j in range(X.shape[1]):
        v = np.unique(X[:, j])
        if v.size <= 1:
            edges.append(np.empty(0))
            continue
        if v.size > max_bins:
            qs = np.quantile(X[:, j], np.linspace(0, 1, max_bins + 1)[1:-1])
            v = np.unique(qs)
            edges.append(v)
        else:
            edges.append((v[:-1] + v[1:]) / 2.0)
    return edges


def bin_codes(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    """Integer bin index per cell; code b means value > edges[b-1]."""
    out = np.empty(X.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        out[:, j] = np.searchsorted(e, X[:, j], side="left") if e.size else 0
    return out


@dataclass
class CartTree:
    feature: np.ndarray  # -1 for leaves
    threshold: np.ndarray  # bin code; go left when code < threshold
    left: np.ndarray
    right: np.ndarray
    proba: np.ndarray  # (n_nodes, n_classes); valid at leaves

    def predict_proba_codes(self, codes: np.ndarray) -> np.ndarray:
        node = np.zeros(codes.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = codes[idx, self.feature[nd]] < self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.proba[node]


def _gini_best_split(codes, y, idx, n_classes, features, n_bins_per_feature):
    """Best (feature, threshold, gain) over candidate features, or None."""
    best = None
    y_node = y[idx]
    total = np.bincount(y_node, minlength=n_classes).astype(float)
    n = y_node.size
    parent_gini = 1.0 - float(((total / n) ** 2).sum())
    for f in features:
        nb = n_bins_per_feature[f]
        if nb < 2:
            continue
        c = codes[idx, f]
        counts = np.zeros((nb, n_classes))
        np.add.at(counts, c, _onehot_rows(y_node, n_classes))
        left = np.cumsum(counts, axis=0)[:-1]  # splits between bin b and b+1
        nl = left.sum(axis=1)
        nr = n - nl
        valid = (nl > 0) & (nr > 0)
        if not np.any(valid):
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gl = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
            right = total[None, :] - left
            gr = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
        child = (nl * gl + nr * gr) / n
        child[~valid] = np.inf
        b = int(np.argmin(child))
        gain = parent_gini - float(child[b])
        if best is None or gain > best[2] + 1e-15:
            best = (f, b + 1, gain)
    return best


def _onehot_rows(y: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((y.size, k))
    out[np.arange(y.size), y] = 1.0
    return out


def build_tree(
    codes: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    max_depth: int | None,
    min_leaf: int,
    max_features: int | None,
    gen: np.random.Generator | None,
) -> CartTree:
    n_features = codes.shape[1]
    n_bins = codes.max(axis=0) + 1
    feat_list, thr_list, left_list, right_list, proba_list = [], [], [], [], []

    def new_node():
        feat_list.append(-1)
        thr_list.append(0)
        left_list.append(-1)
        right_list.append(-1)
        proba_list.append(None)
        return len(feat_list) - 1

    root = new_node()
    stack = [(root, np.arange(codes.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        y_node = y[idx]
        counts = np.bincount(y_node, minlength=n_classes).astype(float)
        proba_list[node] = counts / counts.sum()
        impure = np.count_nonzero(counts) > 1
        depth_ok = max_depth is None or depth < max_depth
        if not impure or not depth_ok or idx.size < 2 * min_leaf:
            continue
        if max_features is not None and max_features < n_features and gen is not None:
            features = gen.choice(n_features, size=max_features, replace=False)
        else:
            features = np.arange(n_features)
        split = _gini_best_split(codes, y, idx, n_classes, features, n_bins)
        if split is None:
            continue
        f, thr, gain = split
        go_left = codes[idx, f] < thr
        li, ri = idx[go_left], idx[~go_left]
        if li.size < min_leaf or ri.size < min_leaf:
            continue
        feat_list[node] = f
        thr_list[node] = thr
        lnode, rnode = new_node(), new_node()
        left_list[node], right_list[node] = lnode, rnode
        stack.append((lnode, li, depth + 1))
        stack.append((rnode, ri, depth + 1))

    return CartTree(
        feature=np.asarray(feat_list, dtype=np.int64),
        threshold=np.asarray(thr_list, dtype=np.int64),
        left=np.asarray(left_list, dtype=np.int64),
        right=np.asarray(right_list, dtype=np.int64),
        proba=np.asarray(proba_list, dtype=float),
    )


@dataclass
class ForestModel:
    edges: list[np.ndarray]
    trees: list[CartTree]
    classes: np.ndarray

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        codes = bin_codes(X, self.edges)
        acc = np.zeros((X.shape[0], self.classes.size))
        for t in self.trees:
            acc += t.predict_proba_codes(codes)
        return acc / len(self.trees)


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    classes: np.ndarray,
    n_trees: int,
    max_depth: int | None,
    min_leaf: int,
    seed: int,
    bootstrap: bool = True,
    feature_subsample: bool = True,
) -> ForestModel:
    """Bagged CART trees with per-node sqrt feature subsampling."""
    gen = np.random.Generator(np.random.Philox(key=seed & ((1 << 64) - 1)))
    y_idx = np.searchsorted(classes, y)
    edges = quantile_bin_edges(X)
    codes = bin_codes(X, edges)
    n = X.shape[0]
    max_features = (
        max(1, int(math.ceil(math.sqrt(X.shape[1])))) if feature_subsample else None
    )
    trees = []
    for _ in range(n_trees):
        idx = gen.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            build_tree(
                codes[idx],
                y_idx[idx],
                classes.size,
                max_depth=max_depth,
                min_leaf=min_leaf,
                max_features=max_features,
                gen=gen,
            )
        )
    return ForestModel(edges=edges, trees=trees, classes=classes)


def fit_single_tree(
    X: np.ndarray,
    y: np.ndarray,
    classes: np.ndarray,
    max_depth: int | None,
    min_leaf: int,
) -> ForestModel:
    y_idx = np.searchsorted(classes, y)
    edges = quantile_bin_edges(X)
    codes = bin_codes(X, edges)
    tree = build_tree(
        codes, y_idx, classes.size, max_depth=max_depth, min_leaf=min_leaf,
        max_features=None, gen=None,
    )
    return ForestModel(edges=edges, trees=[tree], classes=classes)
