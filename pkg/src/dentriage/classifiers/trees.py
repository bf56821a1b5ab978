"""CART trees and the two ensembles built from them.

Classification and regression trees share one grower: the node target is a
matrix ``Y`` (one-hot class indicators, or a residual column), and a split
maximises ``sum(L**2)/n_left + sum(R**2)/n_right`` over the per-side target
sums. For one-hot targets that is exactly minimum weighted Gini impurity;
for a residual column it is minimum squared error.
"""

from __future__ import annotations

import math

import numpy as np

from .base import register, softmax

# relative slack for treating two split scores as tied
_TIE_TOL = 1e-9


def gini_impurity(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini impurity is undefined for an empty node")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _best_split(Xs: np.ndarray, Ys: np.ndarray):
    """Best boundary given columns sorted ascending.

    ``Xs`` is ``(m, f)`` feature values, ``Ys`` is ``(m, f, k)`` targets in the
    same per-column order. Returns ``(column, position, score)`` or ``None``;
    the split falls between sorted positions ``position`` and ``position + 1``.
    """
    m = Xs.shape[0]
    if m < 2:
        return None
    n_left = np.arange(1, m, dtype=float)[:, None]
    if Ys.shape[-1] == 1:
        cum = np.cumsum(Ys[..., 0], axis=0)
        left = cum[:-1]
        score = left * left / n_left + (cum[-1] - left) ** 2 / (m - n_left)
    else:
        cum = np.cumsum(Ys, axis=0)
        left = cum[:-1]
        score = (left * left).sum(-1) / n_left + ((cum[-1] - left) ** 2).sum(-1) / (m - n_left)
    valid = Xs[1:] > Xs[:-1]
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    best = score.max()
    tied = score.T >= best - _TIE_TOL * max(1.0, abs(best))
    col, pos = np.unravel_index(np.argmax(tied), tied.shape)  # first in (column, position) order
    return int(col), int(pos), float(score[pos, col])


class _Builder:
    def __init__(self, X, Y, max_depth, min_samples_split, max_features=None, rng=None, presorted=None):
        self.X = X
        self.Y = Y
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.rng = rng
        self.presorted = presorted
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def _new_node(self, idx) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(self.Y[idx].mean(axis=0))
        return len(self.feature) - 1

    def build(self, idx: np.ndarray):
        d = self.X.shape[1]
        root_sorted = None
        if self.max_features is None:
            if self.presorted is not None and len(idx) == self.X.shape[0]:
                root_sorted = self.presorted
            else:
                root_sorted = idx[np.argsort(self.X[idx], axis=0, kind="stable")]
        # explicit stack keeps node numbering pre-order (left subtree first)
        root = self._new_node(idx)
        stack = [(root, idx, root_sorted, 0)]
        while stack:
            node, idx, sorted_idx, depth = stack.pop()
            if depth >= self.max_depth or len(idx) < self.min_samples_split:
                continue
            Yn = self.Y[idx]
            if (Yn == Yn[0]).all():
                continue
            if self.max_features is None:
                # columns constant inside the node cannot split it
                lo = self.X[sorted_idx[0], np.arange(d)]
                hi = self.X[sorted_idx[-1], np.arange(d)]
                feats = np.flatnonzero(hi > lo)
                if len(feats) == 0:
                    continue
                order = sorted_idx[:, feats]
            else:
                feats = np.sort(self.rng.choice(d, size=min(self.max_features, d), replace=False))
                sub = self.X[np.ix_(idx, feats)]
                order = idx[np.argsort(sub, axis=0, kind="stable")]
            Xs = self.X[order, feats[None, :]]
            found = _best_split(Xs, self.Y[order])
            if found is None:
                continue
            col, pos, _ = found
            f = int(feats[col])
            thr = 0.5 * (Xs[pos, col] + Xs[pos + 1, col])
            if not Xs[pos, col] <= thr < Xs[pos + 1, col]:
                thr = Xs[pos, col]  # midpoint rounded onto the upper value
            go_left = self.X[idx, f] <= thr
            left_idx, right_idx = idx[go_left], idx[~go_left]
            left_sorted = right_sorted = None
            if self.max_features is None:
                mask = np.zeros(self.X.shape[0], dtype=bool)
                mask[left_idx] = True
                in_left = mask[sorted_idx]
                left_sorted = sorted_idx.T[in_left.T].reshape(d, len(left_idx)).T
                right_sorted = sorted_idx.T[~in_left.T].reshape(d, len(right_idx)).T
            self.feature[node] = f
            self.threshold[node] = float(thr)
            lnode = self._new_node(left_idx)
            rnode = self._new_node(right_idx)
            self.left[node], self.right[node] = lnode, rnode
            stack.append((rnode, right_idx, right_sorted, depth + 1))
            stack.append((lnode, left_idx, left_sorted, depth + 1))
        return {
            "feature": np.array(self.feature, dtype=np.int64),
            "threshold": np.array(self.threshold, dtype=float),
            "left": np.array(self.left, dtype=np.int64),
            "right": np.array(self.right, dtype=np.int64),
            "value": np.array(self.value, dtype=float),
        }


def grow_tree(X, Y, max_depth=20, min_samples_split=2, max_features=None, rng=None, idx=None, presorted=None):
    """Grow one CART tree; ``value`` holds the mean target per node."""
    if idx is None:
        idx = np.arange(X.shape[0])
    builder = _Builder(X, Y, max_depth, min_samples_split, max_features, rng, presorted)
    return builder.build(np.asarray(idx))


def apply_tree(tree: dict, X: np.ndarray) -> np.ndarray:
    """Leaf node id reached by every row of ``X``."""
    feature, threshold = tree["feature"], tree["threshold"]
    left, right = tree["left"], tree["right"]
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    while True:
        f = feature[node]
        internal = f >= 0
        if not internal.any():
            return node
        go_left = X[rows, np.where(internal, f, 0)] <= threshold[node]
        node = np.where(internal, np.where(go_left, left[node], right[node]), node)


def _one_hot(y, k):
    Y = np.zeros((len(y), k))
    Y[np.arange(len(y)), y] = 1.0
    return Y


# --- decision tree ---------------------------------------------------------

def _fit_tree(X, y, k, hp, seed):
    tree = grow_tree(X, _one_hot(y, k), hp["max_depth"], hp["min_samples_split"])
    return {"tree": tree}


def _proba_tree(params, X, hp):
    tree = params["tree"]
    return tree["value"][apply_tree(tree, X)].copy()


# --- random forest ---------------------------------------------------------

def _n_split_features(max_features, d):
    if max_features is None:
        return None
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    return min(int(max_features), d)


def _fit_forest(X, y, k, hp, seed):
    n, d = X.shape
    Y = _one_hot(y, k)
    m = _n_split_features(hp["max_features"], d)
    presorted = np.argsort(X, axis=0, kind="stable") if m is None else None
    trees = []
    for t in range(hp["n_trees"]):
        rng = np.random.default_rng([seed, t])
        idx = np.sort(rng.integers(0, n, size=n)) if hp["bootstrap"] else np.arange(n)
        trees.append(
            grow_tree(X, Y, hp["max_depth"], hp["min_samples_split"], m, rng, idx,
                      presorted if not hp["bootstrap"] else None)
        )
    return {"trees": trees}


def _proba_forest(params, X, hp):
    trees = params["trees"]
    k = trees[0]["value"].shape[1]
    votes = np.zeros((X.shape[0], k))
    rows = np.arange(X.shape[0])
    for tree in trees:
        votes[rows, np.argmax(tree["value"][apply_tree(tree, X)], axis=1)] += 1.0
    return votes / len(trees)


# --- gradient boosting -----------------------------------------------------

def _boost_raw(params, X, n_rounds=None):
    F = np.tile(params["init"], (X.shape[0], 1))
    lr = params["learning_rate"]
    rounds = params["trees"] if n_rounds is None else params["trees"][:n_rounds]
    for per_class in rounds:
        for c, tree in enumerate(per_class):
            F[:, c] += lr * tree["value"][apply_tree(tree, X), 0]
    return F


def log_loss(P: np.ndarray, y: np.ndarray) -> float:
    return float(-np.mean(np.log(np.clip(P[np.arange(len(y)), y], 1e-300, None))))


def _fit_boosting(X, y, k, hp, seed):
    """Softmax gradient boosting; leaf value = mean residual of the leaf.

    Using the plain residual mean (a first-order step) keeps training
    log-loss non-increasing for learning rates below 4.
    """
    Y = _one_hot(y, k)
    prior = Y.mean(axis=0)
    init = np.log(prior)
    F = np.tile(init, (len(y), 1))
    presorted = np.argsort(X, axis=0, kind="stable")
    rounds = []
    for _ in range(hp["n_rounds"]):
        R = Y - softmax(F)
        per_class = []
        for c in range(k):
            tree = grow_tree(X, R[:, c:c + 1], hp["max_depth"], hp["min_samples_split"], presorted=presorted)
            F[:, c] += hp["learning_rate"] * tree["value"][apply_tree(tree, X), 0]
            per_class.append(tree)
        rounds.append(per_class)
    return {"init": init, "learning_rate": float(hp["learning_rate"]), "trees": rounds}


def _proba_boosting(params, X, hp):
    return softmax(_boost_raw(params, X))


def staged_log_loss(params, X, y) -> list[float]:
    """Training log-loss after 0, 1, ..., n_rounds boosting rounds."""
    F = np.tile(params["init"], (X.shape[0], 1))
    out = [log_loss(softmax(F), y)]
    for per_class in params["trees"]:
        for c, tree in enumerate(per_class):
            F[:, c] += params["learning_rate"] * tree["value"][apply_tree(tree, X), 0]
        out.append(log_loss(softmax(F), y))
    return out


register("DecisionTree", _fit_tree, _proba_tree)
register("RandomForest", _fit_forest, _proba_forest)
register("GradientBoosting", _fit_boosting, _proba_boosting)
