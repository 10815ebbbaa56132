"""Prediction-only model boundary and built-in trainable models.

Every model maps full schema rows (all feature columns, dataset order) to
one real output per row. Built-ins read only the columns listed in
``uses``; the rest are never touched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, UnlearningTarget
from .errors import EmptyTargetError, ModelError
from .sem import irls_logistic, least_squares

LINEAR = "linear-regression"
LOGISTIC = "logistic-regression"
TREES = "tree-ensemble"
NETWORK = "feed-forward"
KINDS = (LINEAR, LOGISTIC, TREES, NETWORK)
_SHORT = {"linear": LINEAR, "logistic": LOGISTIC, "trees": TREES, "forest": TREES,
          "mlp": NETWORK, "network": NETWORK}


def resolve_kind(kind: str) -> str:
    kind = _SHORT.get(kind, kind)
    if kind not in KINDS:
        raise ModelError(f"unknown model kind {kind!r}; choose from {', '.join(KINDS)}")
    return kind


class PredictionModel:
    """Black-box model: ``predict`` over rows in the order of ``features``."""

    features: tuple[str, ...]

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_label(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict(X) >= threshold).astype(int)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise ModelError(f"expected rows of {len(self.features)} features, got shape {X.shape}")
        return X


class FunctionModel(PredictionModel):
    """Wraps a vectorised callable; used for oracle and test models."""

    def __init__(self, features: Sequence[str], fn, uses: Sequence[str] | None = None):
        self.features = tuple(features)
        self.fn = fn
        self.uses = tuple(uses) if uses is not None else self.features

    def predict(self, X):
        X = self._check(X)
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])


# ---------------------------------------------------------------------------
# regression trees, stored as flat arrays so they serialise and predict
# without the library that grew them


@dataclass
class Tree:
    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = self.left[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.left[node] >= 0
        return self.value[node]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("left", "right", "feature", "threshold", "value")}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["left"], dtype=np.intp), np.asarray(d["right"], dtype=np.intp),
                   np.asarray(d["feature"], dtype=np.intp), np.asarray(d["threshold"], dtype=float),
                   np.asarray(d["value"], dtype=float))


def _grow_tree(X, y, depth, seed) -> Tree:
    from sklearn.tree import DecisionTreeRegressor

    t = DecisionTreeRegressor(max_depth=depth, random_state=seed).fit(X, y).tree_
    feature = np.where(t.children_left >= 0, t.feature, 0)
    return Tree(t.children_left.astype(np.intp), t.children_right.astype(np.intp),
                feature.astype(np.intp), t.threshold.astype(float), t.value[:, 0, 0].astype(float))


@dataclass
class BuiltinModel(PredictionModel):
    kind: str
    features: tuple[str, ...]
    uses: tuple[str, ...]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = tuple(self.features)
        self.uses = tuple(self.uses)
        missing = set(self.uses) - set(self.features)
        if missing:
            raise ModelError(f"model reads unknown features {sorted(missing)}")
        self._cols = np.array([self.features.index(f) for f in self.uses], dtype=np.intp)
        if self.kind == TREES:
            self._trees = [t if isinstance(t, Tree) else Tree.from_dict(t) for t in self.params["trees"]]

    def predict(self, X) -> np.ndarray:
        X = self._check(X)[:, self._cols]
        p = self.params
        if self.kind == LINEAR:
            return p["coef"][0] + X @ np.asarray(p["coef"][1:])
        if self.kind == LOGISTIC:
            eta = np.clip(p["coef"][0] + X @ np.asarray(p["coef"][1:]), -30.0, 30.0)
            return 1.0 / (1.0 + np.exp(-eta))
        if self.kind == TREES:
            return np.mean([t.predict(X) for t in self._trees], axis=0)
        Z = (X - p["mu"]) / p["sd"]
        H = np.tanh(Z @ p["W1"] + p["b1"])
        return (H @ p["W2"] + p["b2"]) * p["y_sd"] + p["y_mu"]

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        params = {}
        for k, v in self.params.items():
            if k == "trees":
                params[k] = [t.to_dict() for t in self._trees]
            elif isinstance(v, np.ndarray):
                params[k] = v.tolist()
            else:
                params[k] = v
        return {"kind": self.kind, "features": list(self.features), "uses": list(self.uses),
                "params": params}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "BuiltinModel":
        params = dict(d["params"])
        for k, v in params.items():
            if k != "trees" and isinstance(v, list):
                params[k] = np.asarray(v, dtype=float)
        return cls(d["kind"], tuple(d["features"]), tuple(d["uses"]), params)

    @classmethod
    def load(cls, path) -> "BuiltinModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _fit_network(X, y, seed, hidden=16, iterations=2000, lr=0.05):
    rng = np.random.default_rng(seed)
    mu, sd = X.mean(axis=0), X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    y_mu, y_sd = float(y.mean()), float(y.std()) or 1.0
    Z, t = (X - mu) / sd, (y - y_mu) / y_sd
    n, k = Z.shape
    W1 = rng.normal(0.0, 1.0 / np.sqrt(k), size=(k, hidden))
    b1 = np.zeros(hidden)
    W2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden)
    b2 = 0.0
    for _ in range(iterations):
        H = np.tanh(Z @ W1 + b1)
        err = H @ W2 + b2 - t
        gW2 = H.T @ err / n
        gb2 = err.mean()
        dH = np.outer(err, W2) * (1.0 - H ** 2)
        gW1 = Z.T @ dH / n
        gb1 = dH.mean(axis=0)
        W1 -= lr * gW1
        b1 -= lr * gb1
        W2 -= lr * gW2
        b2 -= lr * gb2
    return {"mu": mu, "sd": sd, "W1": W1, "b1": b1, "W2": W2, "b2": float(b2),
            "y_mu": y_mu, "y_sd": y_sd, "hidden": hidden, "iterations": iterations, "lr": lr}


def train(kind: str, ds: Dataset, features: Sequence[str] | None = None,
          hyperparams: dict | None = None, seed: int = 0) -> BuiltinModel:
    """Fit a built-in model on ``features`` (default: every feature column)."""
    kind = resolve_kind(kind)
    hp = dict(hyperparams or {})
    if not ds.has_outcome:
        raise ModelError("training needs an outcome column")
    uses = tuple(ds.columns if features is None else features)
    if not uses:
        raise ModelError("model must read at least one feature")
    for f in uses:
        ds.col(f)
    X = ds.X[:, [ds.col(f) for f in uses]]
    y = ds.y
    if len(y) < len(uses) + 2:
        raise ModelError(f"{len(y)} rows is too few to train on {len(uses)} features")
    if kind == LINEAR:
        coef, ridged = least_squares(X, y)
        params = {"coef": coef, "ridged": ridged}
    elif kind == LOGISTIC:
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ModelError("logistic regression needs a 0/1 outcome")
        coef, converged = irls_logistic(X, y)
        params = {"coef": coef, "converged": converged}
    elif kind == TREES:
        n_trees, depth = int(hp.get("trees", 50)), int(hp.get("depth", 6))
        rng = np.random.default_rng(seed)
        trees = []
        for i in range(n_trees):
            boot = rng.integers(0, len(y), size=len(y))
            trees.append(_grow_tree(X[boot], y[boot], depth, seed + i))
        params = {"trees": trees, "depth": depth}
    else:
        params = _fit_network(X, y, seed, int(hp.get("hidden", 16)),
                              int(hp.get("iterations", 2000)), float(hp.get("lr", 0.05)))
    return BuiltinModel(kind, ds.columns, uses, params)


def simulate_unlearning(kind: str, ds: Dataset, target: UnlearningTarget, seed: int = 0,
                        drop_features: bool = True, drop_rows: bool = False,
                        hyperparams: dict | None = None) -> BuiltinModel:
    """Retrain without the target: the reference an unlearned model should match."""
    target.validate(ds, ds.outcome)
    if not (drop_features or drop_rows):
        raise ModelError("simulate_unlearning needs drop_features and/or drop_rows")
    uses = [f for f in ds.columns if not (drop_features and f in target.features)]
    if not uses:
        raise ModelError("unlearning would drop every feature")
    train_ds = ds
    if drop_rows:
        if target.selector.is_all_rows:
            raise EmptyTargetError("dropping target rows with an all-rows selector leaves nothing to train on")
        keep = ~target.selector.mask(ds)
        if not keep.any():
            raise EmptyTargetError("target covers every row")
        if keep.all():
            raise EmptyTargetError(f"predicate {str(target.selector)!r} selects no rows")
        train_ds = ds.take(np.flatnonzero(keep))
    return train(kind, train_ds, uses, hyperparams, seed)
