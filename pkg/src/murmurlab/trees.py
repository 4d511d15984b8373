"""CART-style binary decision trees used by all three ensembles.

Split search runs over per-node presorted sample indices (one column per
feature), so no re-sorting happens below the root; the hot loops are
numba-compiled.  Two criteria are provided: weighted Gini for classification
trees, and the regularized second-order gain used by Newton boosting.

Ties are broken deterministically: lowest feature index first, then lowest
threshold.  Thresholds are midpoints between consecutive distinct values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit


@njit(cache=True)
def _best_split_gini(values, idx, feats, y, w, counts, min_leaf):
    """Best weighted-Gini split over the candidate features.

    values: (n_total, F) float64, idx: (n, F) int32 node rows sorted per
    column, feats: int64 candidate feature ids (ascending), counts: (K,)
    weighted class totals for this node.  Returns (feature, n_left,
    threshold, found); any valid split is accepted (zero-improvement splits
    included), so impure nodes keep splitting while a distinct boundary
    exists.
    """
    n = idx.shape[0]
    K = counts.shape[0]
    w_total = 0.0
    for k in range(K):
        w_total += counts[k]
    best_score = -1.0
    best_feat = -1
    best_nl = -1
    best_thr = 0.0
    wl = np.zeros(K)
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for k in range(K):
            wl[k] = 0.0
        w_left = 0.0
        for i in range(n - 1):
            s = idx[i, f]
            wl[y[s]] += w[s]
            w_left += w[s]
            v0 = values[s, f]
            v1 = values[idx[i + 1, f], f]
            if v1 <= v0:
                continue
            if i + 1 < min_leaf or n - i - 1 < min_leaf:
                continue
            w_right = w_total - w_left
            if w_left <= 0.0 or w_right <= 0.0:
                continue
            sl = 0.0
            sr = 0.0
            for k in range(K):
                sl += wl[k] * wl[k]
                d = counts[k] - wl[k]
                sr += d * d
            score = sl / w_left + sr / w_right
            if score > best_score:
                best_score = score
                best_feat = f
                best_nl = i + 1
                best_thr = 0.5 * (v0 + v1)
                if best_thr >= v1:  # midpoint of adjacent floats can round up
                    best_thr = v0
    return best_feat, best_nl, best_thr, best_feat >= 0


@njit(cache=True)
def _best_split_newton(values, idx, g, h, g_total, h_total, lam, gamma, min_leaf):
    """Best second-order gain split; splits only when the gain is positive."""
    n, F = idx.shape
    parent = g_total * g_total / (h_total + lam)
    best_gain = 0.0
    best_feat = -1
    best_nl = -1
    best_thr = 0.0
    for f in range(F):
        gl = 0.0
        hl = 0.0
        for i in range(n - 1):
            s = idx[i, f]
            gl += g[s]
            hl += h[s]
            v0 = values[s, f]
            v1 = values[idx[i + 1, f], f]
            if v1 <= v0:
                continue
            if i + 1 < min_leaf or n - i - 1 < min_leaf:
                continue
            gr = g_total - gl
            hr = h_total - hl
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - gamma
            if gain > best_gain:
                best_gain = gain
                best_feat = f
                best_nl = i + 1
                best_thr = 0.5 * (v0 + v1)
                if best_thr >= v1:  # midpoint of adjacent floats can round up
                    best_thr = v0
    return best_feat, best_nl, best_thr, best_gain > 0.0


@njit(cache=True)
def _partition(values, idx, feat, thr):
    """Split the node's presorted index columns by the chosen test,
    preserving each column's sort order."""
    n, F = idx.shape
    n_left = 0
    for i in range(n):  # count from the test itself, not the scan position
        if values[idx[i, 0], feat] <= thr:
            n_left += 1
    left = np.empty((n_left, F), np.int32)
    right = np.empty((n - n_left, F), np.int32)
    for f in range(F):
        a = 0
        b = 0
        for i in range(n):
            s = idx[i, f]
            if values[s, feat] <= thr:
                left[a, f] = s
                a += 1
            else:
                right[b, f] = s
                b += 1
    return left, right


@njit(cache=True)
def _apply(feature, threshold, left, right, X):
    """Leaf index reached by every row of X."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while left[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass
class DecisionTree:
    """Flat-array binary tree.  Internal nodes test x[feature] <= threshold;
    leaves carry a payload vector (class distribution, or a single boosting
    weight)."""

    feature: np.ndarray  # int32, -1 at leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32, -1 at leaves
    right: np.ndarray  # int32
    value: np.ndarray  # (n_nodes, payload_dim) float64; zeros at internal nodes
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _apply(self.feature, self.threshold, self.left, self.right,
                      np.ascontiguousarray(X, dtype=np.float64))

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        """Leaf payloads for every row of X."""
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
            max_depth=int(d["max_depth"]),
        )


class _TreeAccumulator:
    """Collects nodes during growth and freezes them into a DecisionTree."""

    def __init__(self, payload_dim: int):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []
        self.payload_dim = payload_dim

    def add_leaf(self, payload: np.ndarray) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(payload)
        return node

    def add_internal(self, feat: int, thr: float) -> int:
        node = len(self.feature)
        self.feature.append(feat)
        self.threshold.append(thr)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(np.zeros(self.payload_dim))
        return node

    def freeze(self, max_depth: int) -> DecisionTree:
        return DecisionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.vstack(self.value) if self.value else np.zeros((0, self.payload_dim)),
            max_depth=max_depth,
        )


def _presort(X: np.ndarray) -> np.ndarray:
    """Stable per-feature argsort of all rows: the root node's index matrix."""
    return np.argsort(X, axis=0, kind="stable").astype(np.int32)


def _class_counts(idx_col: np.ndarray, y: np.ndarray, w: np.ndarray, K: int) -> np.ndarray:
    counts = np.zeros(K)
    np.add.at(counts, y[idx_col], w[idx_col])
    return counts


def fit_tree(X: np.ndarray, y: np.ndarray, weights: Optional[np.ndarray] = None,
             max_depth: int = 12, min_leaf: int = 1, feature_subsample: bool = False,
             n_classes: Optional[int] = None,
             rng: Optional[np.random.Generator] = None,
             root_idx: Optional[np.ndarray] = None) -> DecisionTree:
    """Grow a classification tree minimizing weighted Gini impurity.

    Leaves hold the normalized weighted class distribution.  With
    ``feature_subsample`` on, each node considers a random subset of
    ceil(sqrt(F)) features drawn from ``rng``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int32)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if weights is None:
        weights = np.ones(X.shape[0])
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative and not all zero")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    F = X.shape[1]
    n_sub = int(np.ceil(np.sqrt(F)))
    if feature_subsample and rng is None:
        rng = np.random.default_rng(0)

    acc = _TreeAccumulator(payload_dim=K)
    root = root_idx if root_idx is not None else _presort(X)
    stack = [(root, 0, -1, "left")]
    while stack:
        idx, depth, parent, side = stack.pop()
        counts = _class_counts(idx[:, 0], y, w, K)
        total = counts.sum()
        pure = np.count_nonzero(counts) <= 1
        node_id: int
        if pure or depth >= max_depth or idx.shape[0] < 2 * min_leaf or total <= 0:
            node_id = acc.add_leaf(counts / total if total > 0 else np.full(K, 1.0 / K))
        else:
            if feature_subsample and n_sub < F:
                feats = np.sort(rng.choice(F, size=n_sub, replace=False)).astype(np.int64)
            else:
                feats = np.arange(F, dtype=np.int64)
            feat, n_left, thr, found = _best_split_gini(X, idx, feats, y, w, counts, min_leaf)
            if not found:
                node_id = acc.add_leaf(counts / total)
            else:
                node_id = acc.add_internal(int(feat), float(thr))
                left_idx, right_idx = _partition(X, idx, int(feat), float(thr))
                # push right first so the left subtree is numbered first
                stack.append((right_idx, depth + 1, node_id, "right"))
                stack.append((left_idx, depth + 1, node_id, "left"))
        if parent >= 0:
            if side == "left":
                acc.left[parent] = node_id
            else:
                acc.right[parent] = node_id
    return acc.freeze(max_depth)


def fit_newton_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, max_depth: int = 4,
                    reg_lambda: float = 1.0, gamma: float = 0.0, min_leaf: int = 1,
                    root_idx: Optional[np.ndarray] = None) -> DecisionTree:
    """Grow a regression tree on gradient/Hessian statistics.

    Split gain is the regularized second-order improvement; a node splits
    only when that gain is positive.  Leaves hold -G/(H+lambda).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    acc = _TreeAccumulator(payload_dim=1)
    root = root_idx if root_idx is not None else _presort(X)
    stack = [(root, 0, -1, "left")]
    while stack:
        idx, depth, parent, side = stack.pop()
        col = idx[:, 0]
        g_total = float(g[col].sum())
        h_total = float(h[col].sum())
        node_id: int
        if depth >= max_depth or idx.shape[0] < 2 * min_leaf:
            node_id = acc.add_leaf(np.array([-g_total / (h_total + reg_lambda)]))
        else:
            feat, n_left, thr, take = _best_split_newton(
                X, idx, g, h, g_total, h_total, reg_lambda, gamma, min_leaf)
            if not take:
                node_id = acc.add_leaf(np.array([-g_total / (h_total + reg_lambda)]))
            else:
                node_id = acc.add_internal(int(feat), float(thr))
                left_idx, right_idx = _partition(X, idx, int(feat), float(thr))
                stack.append((right_idx, depth + 1, node_id, "right"))
                stack.append((left_idx, depth + 1, node_id, "left"))
        if parent >= 0:
            if side == "left":
                acc.left[parent] = node_id
            else:
                acc.right[parent] = node_id
    return acc.freeze(max_depth)
