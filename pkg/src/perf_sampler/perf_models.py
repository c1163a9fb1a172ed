"""Downstream performance models: boosted regression trees and an L1-regularized MLP.

Both follow the scikit-learn regressor API so they can be cloned, grid
searched and used in pipelines. :func:`model_to_json` / :func:`model_from_json`
round-trip fitted models exactly.
"""

from __future__ import annotations

import json
import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


def rmse(predictions, truth) -> float:
    """Root mean squared error."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if len(p) != len(t):
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(t)} targets")
    if len(p) == 0:
        raise ValueError("rmse of empty input")
    return float(np.sqrt(np.mean((p - t) ** 2)))


class _Tree:
    """Array-backed binary tree; leaves have feature == -1."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    def apply(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_json(self, i=0):
        if self.feature[i] < 0:
            return {"value": float(self.value[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "left": self.to_json(int(self.left[i])),
            "right": self.to_json(int(self.right[i])),
        }

    @classmethod
    def from_json(cls, obj):
        feature, threshold, left, right, value = [], [], [], [], []

        def add(node):
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "value" in node:
                value[i] = node["value"]
            else:
                feature[i] = node["feature"]
                threshold[i] = node["threshold"]
                left[i] = add(node["left"])
                right[i] = add(node["right"])
            return i

        add(obj)
        return cls(feature, threshold, left, right, value)


def _best_split(X, y, min_leaf):
    n = len(y)
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]
    csum = np.cumsum(ys, axis=0)[:-1]
    total = ys.sum(axis=0)
    nl = np.arange(1, n)[:, None].astype(float)
    gain = csum**2 / nl + (total - csum) ** 2 / (n - nl) - total**2 / n
    valid = xs[1:] > xs[:-1]
    valid &= (nl >= min_leaf) & (n - nl >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    pos, feat = np.unravel_index(int(np.argmax(gain)), gain.shape)
    if not np.isfinite(gain[pos, feat]) or gain[pos, feat] <= 1e-12 * max(1.0, float(np.sum(y * y))):
        return None
    threshold = 0.5 * (xs[pos, feat] + xs[pos + 1, feat])
    return int(feat), float(threshold)


def build_tree(X, y, max_depth, min_samples_leaf=1) -> _Tree:
    """Greedy CART regression tree minimizing squared error."""
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(rows, depth):
        i = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[rows])))
        if depth >= max_depth or len(rows) < 2 * min_samples_leaf:
            return i
        split = _best_split(X[rows], y[rows], min_samples_leaf)
        if split is None:
            return i
        f, t = split
        mask = X[rows, f] <= t
        feature[i], threshold[i] = f, t
        left[i] = grow(rows[mask], depth + 1)
        right[i] = grow(rows[~mask], depth + 1)
        return i

    grow(np.arange(len(y)), 0)
    return _Tree(feature, threshold, left, right, value)


class RegressionTree(RegressorMixin, BaseEstimator):
    """Depth-bounded CART regression tree (squared error)."""

    def __init__(self, max_depth=4, min_samples_leaf=1):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        self.tree_ = build_tree(X, y, self.max_depth, self.min_samples_leaf)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = _check_query(X, self.n_features_in_)
        return self.tree_.predict(X)


def _check_query(X, n_features):
    X = check_array(X, dtype=float, ensure_min_samples=0)
    if X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, model expects {n_features}")
    return X


class GBTRegressor(RegressorMixin, BaseEstimator):
    """Squared-loss gradient boosting over CART trees.

    Prediction is ``base_score + learning_rate * sum(tree outputs)`` with
    ``base_score`` the training-target mean. ``train_rmse_[r]`` is the training
    RMSE after ``r`` rounds (index 0 is the base score alone).
    """

    def __init__(self, n_rounds=100, max_depth=4, learning_rate=0.1, min_samples_leaf=2):
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        self.base_score_ = float(np.mean(y))
        pred = np.full(len(y), self.base_score_)
        self.trees_ = []
        self.train_rmse_ = [rmse(pred, y)]
        for _ in range(self.n_rounds):
            tree = build_tree(X, y - pred, self.max_depth, self.min_samples_leaf)
            pred = pred + self.learning_rate * tree.predict(X)
            self.trees_.append(tree)
            self.train_rmse_.append(rmse(pred, y))
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = _check_query(X, self.n_features_in_)
        out = np.full(len(X), self.base_score_)
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(X)
        return out


def _init_layers(sizes, rng):
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        layers.append([rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)])
    return layers


def mlp_forward(layers, X):
    """Activations of every layer (input first); hidden layers use ReLU, output is linear."""
    acts = [X]
    h = X
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        h = z if i == len(layers) - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def mlp_loss_and_grad(layers, X, y, l1=0.0, include_l1_grad=True):
    """Mean squared error plus ``l1 * sum|W|`` and its (sub)gradient w.r.t. every parameter."""
    acts = mlp_forward(layers, X)
    out = acts[-1][:, 0]
    resid = out - y
    n = len(y)
    loss = float(np.mean(resid**2)) + l1 * sum(float(np.abs(W).sum()) for W, _ in layers)
    delta = (2.0 / n) * resid[:, None]
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        gW = acts[i].T @ delta
        if include_l1_grad and l1:
            gW = gW + l1 * np.sign(W)
        grads[i] = [gW, delta.sum(axis=0)]
        if i:
            delta = (delta @ W.T) * (acts[i] > 0)
    return loss, grads


def _soft_threshold(W, t):
    return np.sign(W) * np.maximum(np.abs(W) - t, 0.0)


def _train_mlp(X, y, hidden, l1, lr, epochs, seed, record=False):
    rng = np.random.default_rng(seed)
    layers = _init_layers([X.shape[1], *hidden, 1], rng)
    curve = []
    for _ in range(epochs):
        loss, grads = mlp_loss_and_grad(layers, X, y, l1, include_l1_grad=False)
        if record:
            curve.append(loss)
        for (W, b), (gW, gb) in zip(layers, grads):
            W -= lr * gW
            if l1:
                W[:] = _soft_threshold(W, lr * l1)
            b -= lr * gb
    if record:
        curve.append(mlp_loss_and_grad(layers, X, y, l1)[0])
    return layers, curve


def _content_order(X, y, seed):
    """Row permutation that depends on row contents only, not on their order."""
    keys = np.lexsort(np.column_stack([X, y]).T[::-1])
    perm = np.random.default_rng(seed).permutation(len(y))
    return keys[perm]


class FNNRegressor(RegressorMixin, BaseEstimator):
    """Feedforward ReLU network trained by full-batch proximal gradient descent.

    The objective is mean squared error on standardized targets plus
    ``l1 * sum(|weights|)``; biases are not penalized. With ``l1=None`` the
    coefficient is chosen from ``l1_grid`` on a seeded 20% validation split and
    the network is refit on all rows.
    """

    def __init__(self, hidden=(64, 64), l1=None, l1_grid=(1e-3, 1e-2, 1e-1), learning_rate=1e-2,
                 epochs=2000, validation_fraction=0.2, random_state=0):
        self.hidden = hidden
        self.l1 = l1
        self.l1_grid = l1_grid
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if len(y) < 2:
            raise ValueError("FNNRegressor needs at least two training rows")
        self.n_features_in_ = X.shape[1]
        self.x_mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.x_scale_ = np.where(sd > 0, sd, 1.0)
        self.y_mean_ = float(y.mean())
        ysd = float(y.std())
        self.y_scale_ = ysd if ysd > 0 else 1.0
        Xs = (X - self.x_mean_) / self.x_scale_
        ys = (y - self.y_mean_) / self.y_scale_
        hidden = tuple(self.hidden)
        seed = self.random_state

        if self.l1 is not None:
            self.l1_ = float(self.l1)
        else:
            grid = list(self.l1_grid)
            n_val = int(round(self.validation_fraction * len(y)))
            if len(grid) == 1 or n_val < 1 or len(y) - n_val < 2:
                self.l1_ = float(grid[len(grid) // 2])
            else:
                order = _content_order(Xs, ys, seed)
                val, tr = order[:n_val], order[n_val:]
                scores = []
                for lam in grid:
                    layers, _ = _train_mlp(Xs[tr], ys[tr], hidden, lam, self.learning_rate, self.epochs, seed)
                    pred = mlp_forward(layers, Xs[val])[-1][:, 0]
                    scores.append(float(np.mean((pred - ys[val]) ** 2)))
                self.validation_scores_ = scores
                self.l1_ = float(grid[int(np.argmin(scores))])
        self.layers_, self.loss_curve_ = _train_mlp(
            Xs, ys, hidden, self.l1_, self.learning_rate, self.epochs, seed, record=True
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "layers_")
        X = _check_query(X, self.n_features_in_)
        if len(X) == 0:
            return np.zeros(0)
        out = mlp_forward(self.layers_, (X - self.x_mean_) / self.x_scale_)[-1][:, 0]
        return self.y_mean_ + self.y_scale_ * out


MODEL_FACTORIES = {"gbt": GBTRegressor, "fnn": FNNRegressor}


def train_gbt(X, y, params=None) -> GBTRegressor:
    params = dict(params or {})
    renames = {"rounds": "n_rounds", "depth": "max_depth", "eta": "learning_rate", "min_leaf": "min_samples_leaf"}
    params = {renames.get(k, k): v for k, v in params.items()}
    X, y = check_X_y(X, y, dtype=float, y_numeric=True, ensure_all_finite=True)
    return GBTRegressor(**params).fit(X, y)


def train_fnn(X, y, params=None) -> FNNRegressor:
    params = dict(params or {})
    renames = {"seed": "random_state", "lambda": "l1", "lr": "learning_rate"}
    params = {renames.get(k, k): v for k, v in params.items()}
    X, y = check_X_y(X, y, dtype=float, y_numeric=True, ensure_all_finite=True)
    return FNNRegressor(**params).fit(X, y)


def predict(model, X) -> np.ndarray:
    return model.predict(X)


def model_to_json(model) -> dict:
    if isinstance(model, GBTRegressor):
        check_is_fitted(model, "trees_")
        return {
            "type": "gbt",
            "params": model.get_params(),
            "n_features": model.n_features_in_,
            "base_score": model.base_score_,
            "trees": [t.to_json() for t in model.trees_],
        }
    if isinstance(model, FNNRegressor):
        check_is_fitted(model, "layers_")
        params = model.get_params()
        params["hidden"] = list(params["hidden"])
        params["l1_grid"] = list(params["l1_grid"])
        return {
            "type": "fnn",
            "params": params,
            "n_features": model.n_features_in_,
            "l1": model.l1_,
            "x_mean": model.x_mean_.tolist(),
            "x_scale": model.x_scale_.tolist(),
            "y_mean": model.y_mean_,
            "y_scale": model.y_scale_,
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in model.layers_],
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_json(obj) -> GBTRegressor | FNNRegressor:
    kind = obj.get("type")
    if kind == "gbt":
        model = GBTRegressor(**obj["params"])
        model.n_features_in_ = obj["n_features"]
        model.base_score_ = obj["base_score"]
        model.trees_ = [_Tree.from_json(t) for t in obj["trees"]]
        return model
    if kind == "fnn":
        params = dict(obj["params"])
        params["hidden"] = tuple(params["hidden"])
        params["l1_grid"] = tuple(params["l1_grid"])
        model = FNNRegressor(**params)
        model.n_features_in_ = obj["n_features"]
        model.l1_ = obj["l1"]
        model.x_mean_ = np.array(obj["x_mean"])
        model.x_scale_ = np.array(obj["x_scale"])
        model.y_mean_ = obj["y_mean"]
        model.y_scale_ = obj["y_scale"]
        model.layers_ = [[np.array(layer["W"]).reshape(-1, len(layer["b"])), np.array(layer["b"])]
                         for layer in obj["layers"]]
        return model
    raise ValueError(f"unknown model type {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
