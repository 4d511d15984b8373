"""Tree-ensemble classifiers: Random Forest, multiclass AdaBoost (SAMME),
and Newton-boosted trees with softmax cross-entropy.

All three are deterministic functions of (data, params, seed): per-tree RNG
streams are derived from the seed and the tree index, so parallel and
sequential construction would agree.  Models serialize to a versioned JSON
document and round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .trees import DecisionTree, _presort, fit_newton_tree, fit_tree

FORMAT_VERSION = "murmurlab-ensemble/1"

_EPS = 1e-16


class ModelError(Exception):
    pass


@dataclass
class EnsembleModel:
    """A trained forest or boosted ensemble.

    ``classes`` holds the original label values in sorted order; predictions
    return those values, and probability columns follow the same order.
    """

    kind: str  # "random_forest" | "adaboost" | "gradient_boost"
    trees: list[DecisionTree]
    tree_weights: list[float]
    classes: list
    hyperparams: dict
    seed: int
    n_features: int
    tree_class: Optional[list[int]] = None  # gradient boost: score stream per tree
    training_loss: list[float] = field(default_factory=list)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(f"expected {self.n_features} features, got "
                             f"{X.shape[1] if X.ndim == 2 else X.shape}")
        return X

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Per-class probabilities; rows sum to 1."""
        X = self._check(X)
        K = len(self.classes)
        if self.kind == "random_forest":
            dist = np.zeros((X.shape[0], K))
            for tree in self.trees:
                dist += tree.predict_value(X)
            return dist / len(self.trees)
        if self.kind == "adaboost":
            votes = np.zeros((X.shape[0], K))
            for tree, alpha in zip(self.trees, self.tree_weights):
                pred = np.argmax(tree.predict_value(X), axis=1)
                votes[np.arange(X.shape[0]), pred] += alpha
            total = votes.sum(axis=1, keepdims=True)
            degenerate = (total <= 0).ravel()
            votes[degenerate] = 1.0 / K  # no effective votes: uniform
            total[degenerate] = 1.0
            return votes / total
        if self.kind == "gradient_boost":
            return _softmax(self.decision_scores(X))
        raise ModelError(f"unknown ensemble kind {self.kind!r}")

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        """Accumulated boosting scores (gradient_boost only)."""
        if self.kind != "gradient_boost":
            raise ModelError("decision_scores is only defined for gradient_boost models")
        X = self._check(X)
        scores = np.zeros((X.shape[0], len(self.classes)))
        for tree, lr, k in zip(self.trees, self.tree_weights, self.tree_class):
            scores[:, k] += lr * tree.predict_value(X)[:, 0]
        return scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Class predictions; ties resolve to the lowest class index."""
        proba = self.predict_proba(X)
        return np.asarray(self.classes)[np.argmax(proba, axis=1)]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_VERSION,
            "kind": self.kind,
            "classes": [c.item() if isinstance(c, np.generic) else c for c in self.classes],
            "hyperparams": self.hyperparams,
            "seed": self.seed,
            "n_features": self.n_features,
            "tree_weights": self.tree_weights,
            "tree_class": self.tree_class,
            "training_loss": self.training_loss,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        if d.get("format") != FORMAT_VERSION:
            raise ModelError(f"unsupported model format {d.get('format')!r}")
        return cls(
            kind=d["kind"],
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            tree_weights=list(d["tree_weights"]),
            classes=list(d["classes"]),
            hyperparams=dict(d["hyperparams"]),
            seed=int(d["seed"]),
            n_features=int(d["n_features"]),
            tree_class=list(d["tree_class"]) if d.get("tree_class") is not None else None,
            training_loss=list(d.get("training_loss", [])),
        )


def save_model(model: EnsembleModel, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path) -> EnsembleModel:
    return EnsembleModel.from_dict(json.loads(Path(path).read_text()))


def model_bytes(model: EnsembleModel) -> bytes:
    return json.dumps(model.to_dict()).encode()


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_gradients(scores: np.ndarray, y: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample gradient and Hessian of softmax cross-entropy w.r.t. the
    class-k score: g = p_k - 1[y=k], h = p_k (1 - p_k)."""
    p = _softmax(scores)[:, k]
    g = p - (y == k).astype(np.float64)
    h = p * (1.0 - p)
    return g, h


def _encode_labels(y) -> tuple[np.ndarray, list]:
    values = np.asarray(y)
    classes, encoded = np.unique(values, return_inverse=True)
    return encoded.astype(np.int32), [c.item() if isinstance(c, np.generic) else c
                                      for c in classes]


def _class_weights(y_enc: np.ndarray, K: int, class_weight: Optional[str]) -> np.ndarray:
    if class_weight is None:
        return np.ones(y_enc.size)
    if class_weight == "balanced":  # n / (K * n_k), the usual prevalence correction
        counts = np.bincount(y_enc, minlength=K).astype(np.float64)
        counts[counts == 0] = 1.0
        return (y_enc.size / (K * counts))[y_enc]
    raise ModelError(f"unknown class_weight {class_weight!r}")


def _validate(X, y) -> tuple[np.ndarray, np.ndarray, list]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ModelError("X must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ModelError("feature matrix contains non-finite values")
    y_enc, classes = _encode_labels(y)
    if y_enc.size != X.shape[0]:
        raise ModelError("X and y lengths differ")
    if len(classes) < 2:
        raise ModelError("training data must contain at least 2 classes")
    return X, y_enc, classes


def fit_random_forest(X, y, n_trees: int = 500, max_depth: int = 12, min_leaf: int = 2,
                      seed: int = 0, bootstrap: bool = True,
                      class_weight: Optional[str] = "balanced") -> EnsembleModel:
    """Bootstrap-aggregated trees with sqrt-feature subsampling at each node.

    Prediction averages the per-tree leaf class distributions.
    """
    X, y_enc, classes = _validate(X, y)
    K = len(classes)
    w = _class_weights(y_enc, K, class_weight)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        if bootstrap:
            rows = rng.integers(0, X.shape[0], size=X.shape[0])
        else:
            rows = np.arange(X.shape[0])
        trees.append(fit_tree(X[rows], y_enc[rows], weights=w[rows], max_depth=max_depth,
                              min_leaf=min_leaf, feature_subsample=True, n_classes=K, rng=rng))
    return EnsembleModel(
        kind="random_forest", trees=trees, tree_weights=[1.0] * n_trees, classes=classes,
        hyperparams={"n_trees": n_trees, "max_depth": max_depth, "min_leaf": min_leaf,
                     "bootstrap": bootstrap, "class_weight": class_weight},
        seed=seed, n_features=X.shape[1],
    )


def fit_adaboost(X, y, n_rounds: int = 200, stump_depth: int = 2, learning_rate: float = 0.5,
                 seed: int = 0, class_weight: Optional[str] = "balanced") -> EnsembleModel:
    """Multiclass AdaBoost (SAMME) over shallow classification trees.

    Round weight is lr * (ln((1-err)/err) + ln(K-1)); sample weights of
    misclassified points are multiplied by exp(alpha) and renormalized.  A
    degenerate round (err >= 1 - 1/K) resets the weights to uniform and
    refits on a bootstrap resample; a perfect round stops training early.
    """
    X, y_enc, classes = _validate(X, y)
    K = len(classes)
    n = X.shape[0]
    w = _class_weights(y_enc, K, class_weight)
    w = w / w.sum()
    trees: list[DecisionTree] = []
    alphas: list[float] = []
    rng = np.random.default_rng([seed, 0])
    rows = np.arange(n)
    resample_budget = 10  # guards against endless degenerate rounds
    t = 0
    while t < n_rounds:
        tree = fit_tree(X[rows], y_enc[rows], weights=w[rows], max_depth=stump_depth,
                        min_leaf=1, n_classes=K)
        pred = np.argmax(tree.predict_value(X), axis=1)
        miss = pred != y_enc
        err = float(w[miss].sum() / w.sum())
        if err <= 0.0:
            # perfect fit: keep this tree with a large, finite vote and stop
            alpha = learning_rate * (np.log((1.0 - _EPS) / _EPS) + np.log(K - 1.0))
            trees.append(tree)
            alphas.append(float(alpha))
            break
        if err >= 1.0 - 1.0 / K:
            if resample_budget == 0:
                break
            resample_budget -= 1
            w = np.full(n, 1.0 / n)
            rows = rng.integers(0, n, size=n)
            continue
        alpha = learning_rate * (np.log((1.0 - err) / err) + np.log(K - 1.0))
        trees.append(tree)
        alphas.append(float(alpha))
        w = w * np.exp(alpha * miss)
        w = w / w.sum()
        rows = np.arange(n)
        t += 1
    if not trees:
        raise ModelError("boosting produced no usable rounds")
    return EnsembleModel(
        kind="adaboost", trees=trees, tree_weights=alphas, classes=classes,
        hyperparams={"n_rounds": n_rounds, "stump_depth": stump_depth,
                     "learning_rate": learning_rate, "class_weight": class_weight},
        seed=seed, n_features=X.shape[1],
    )


def fit_gradient_boost(X, y, n_rounds: int = 300, max_depth: int = 4,
                       learning_rate: float = 0.1, reg_lambda: float = 1.0,
                       gamma: float = 0.0, min_leaf: int = 1, seed: int = 0,
                       class_weight: Optional[str] = "balanced") -> EnsembleModel:
    """Newton-boosted trees on softmax cross-entropy, one score stream per class.

    Each round fits K regression trees to the per-class gradients/Hessians;
    leaf values are -G/(H+lambda) and contribute through the learning rate.
    The per-round training loss is recorded on the model.
    """
    X, y_enc, classes = _validate(X, y)
    K = len(classes)
    n = X.shape[0]
    w = _class_weights(y_enc, K, class_weight)
    scores = np.zeros((n, K))
    onehot = np.zeros((n, K))
    onehot[np.arange(n), y_enc] = 1.0
    root_idx = _presort(X)  # shared by every tree: boosting never resamples rows
    trees: list[DecisionTree] = []
    tree_class: list[int] = []
    losses: list[float] = []
    for _ in range(n_rounds):
        p = _softmax(scores)
        for k in range(K):
            g = w * (p[:, k] - onehot[:, k])
            h = w * p[:, k] * (1.0 - p[:, k])
            tree = fit_newton_tree(X, g, h, max_depth=max_depth, reg_lambda=reg_lambda,
                                   gamma=gamma, min_leaf=min_leaf, root_idx=root_idx)
            scores[:, k] += learning_rate * tree.predict_value(X)[:, 0]
            trees.append(tree)
            tree_class.append(k)
        logp = np.log(np.maximum(_softmax(scores)[np.arange(n), y_enc], 1e-300))
        losses.append(float(-(w * logp).sum() / w.sum()))
    return EnsembleModel(
        kind="gradient_boost", trees=trees, tree_weights=[learning_rate] * len(trees),
        classes=classes,
        hyperparams={"n_rounds": n_rounds, "max_depth": max_depth,
                     "learning_rate": learning_rate, "reg_lambda": reg_lambda,
                     "gamma": gamma, "min_leaf": min_leaf, "class_weight": class_weight},
        seed=seed, n_features=X.shape[1], tree_class=tree_class, training_loss=losses,
    )


def predict(model: EnsembleModel, X) -> np.ndarray:
    return model.predict(np.asarray(X))


def predict_proba(model: EnsembleModel, X) -> np.ndarray:
    return model.predict_proba(np.asarray(X))
