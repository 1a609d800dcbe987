"""Reference predictors: threshold rules, persistence, majority, logistic
regression and an isolation forest trained on Normal samples only."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import MissingInput, SingleClassInput
from ..features import LabeledDataset
from ..labeling import ThresholdSet, binarize
from .base import feature_matrix, label_from_score, require_dataset, sigmoid
from .tree import LEAF, Tree

BASELINES = ("fixed_rule", "adaptive_rule", "persistence", "majority", "logistic_regression", "isolation_forest")


@dataclass(frozen=True)
class RuleBaseline:
    """Positive iff any sensor's latest raw value exceeds its limit."""

    limit: str  # "fixed" or "adaptive"
    thresholds: ThresholdSet

    @property
    def kind(self) -> str:
        return f"{self.limit}_rule"

    def predict(self, data, feature_names=None):
        ds = require_dataset(data, self.kind)
        last = ds.last_values
        if np.isnan(last).any():
            raise MissingInput(f"{self.kind} needs the raw record at every anchor (synthetic rows have none)")
        limits = np.asarray(self.thresholds.fixed if self.limit == "fixed" else self.thresholds.adaptive)
        labels = (last > limits).any(axis=1).astype(np.int8)
        return labels, labels.astype(np.float64)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "limit": self.limit, "thresholds": self.thresholds.to_dict()}


class PersistenceBaseline:
    """The condition at the horizon equals the condition now."""

    kind = "persistence"

    def predict(self, data, feature_names=None):
        ds = require_dataset(data, self.kind)
        if (ds.current_label < 0).any():
            raise MissingInput("persistence needs the current label at every anchor")
        labels = binarize(ds.current_label)
        return labels, labels.astype(np.float64)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class MajorityBaseline:
    """Always predicts Normal."""

    kind = "majority"

    def predict(self, data, feature_names=None):
        n = len(data) if isinstance(data, LabeledDataset) else np.atleast_2d(data).shape[0]
        return np.zeros(n, dtype=np.int8), np.zeros(n)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class LogisticConfig:
    epochs: int = 500
    learning_rate: float = 0.1
    l2: float = 1e-4


@dataclass(frozen=True, eq=False)
class LogisticRegressionModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray
    feature_names: tuple[str, ...]
    config: LogisticConfig = LogisticConfig()

    kind = "logistic_regression"

    def predict(self, data, feature_names=None):
        X = feature_matrix(data, self.feature_names, feature_names)
        scores = sigmoid(((X - self.mean) / self.scale) @ self.weights + self.bias)
        return label_from_score(scores), scores

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": asdict(self.config),
            "feature_names": list(self.feature_names),
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }


def train_logistic(dataset: LabeledDataset, config: LogisticConfig = LogisticConfig()) -> LogisticRegressionModel:
    """Full-batch gradient descent on mean log-loss + (l2/2)|w|^2, standardised inputs."""
    X, y = dataset.X, dataset.y.astype(np.float64)
    if np.unique(y).size < 2:
        raise SingleClassInput("logistic regression needs both classes")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    n, d = Z.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(config.epochs):
        r = sigmoid(Z @ w + b) - y
        w -= config.learning_rate * (Z.T @ r / n + config.l2 * w)
        b -= config.learning_rate * float(r.mean())
    return LogisticRegressionModel(w, b, mean, scale, tuple(dataset.feature_names), config)


EULER_GAMMA = 0.5772156649015329


def average_path_length(n) -> np.ndarray:
    """Expected unsuccessful-search path length in a BST of ``n`` nodes."""
    n = np.asarray(n, dtype=np.float64)
    out = np.zeros_like(n)
    big = n > 2
    out[n == 2] = 1.0
    nb = n[big]
    out[big] = 2.0 * (np.log(nb - 1.0) + EULER_GAMMA) - 2.0 * (nb - 1.0) / nb
    return out


@dataclass(frozen=True)
class IsolationConfig:
    n_trees: int = 100
    subsample: int = 256
    seed: int = 0


def _isolation_tree(X: np.ndarray, depth_limit: int, rng: np.random.Generator) -> Tree:
    nodes: list[list] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        nid = len(nodes)
        nodes.append([LEAF, 0.0, LEAF, LEAF, 0.0, float(rows.size), 0.0])
        if depth >= depth_limit or rows.size <= 1:
            nodes[nid][4] = depth + float(average_path_length(rows.size))
            return nid
        sub = X[rows]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if splittable.size == 0:
            nodes[nid][4] = depth + float(average_path_length(rows.size))
            return nid
        f = int(splittable[rng.integers(splittable.size)])
        thr = float(rng.uniform(lo[f], hi[f]))
        go_left = sub[:, f] <= thr
        left = grow(rows[go_left], depth + 1)
        right = grow(rows[~go_left], depth + 1)
        nodes[nid][:4] = [f, thr, left, right]
        return nid

    grow(np.arange(X.shape[0]), 0)
    cols = list(zip(*nodes))
    return Tree(
        feature=np.asarray(cols[0], dtype=np.int64),
        threshold=np.asarray(cols[1], dtype=np.float64),
        left=np.asarray(cols[2], dtype=np.int64),
        right=np.asarray(cols[3], dtype=np.int64),
        value=np.asarray(cols[4], dtype=np.float64),
        weight=np.asarray(cols[5], dtype=np.float64),
        gain=np.asarray(cols[6], dtype=np.float64),
    )


@dataclass(frozen=True, eq=False)
class IsolationForestModel:
    """Leaf ``value`` stores the path length (depth + c(leaf size))."""

    trees: tuple[Tree, ...]
    sample_size: int
    threshold: float
    feature_names: tuple[str, ...]
    config: IsolationConfig = IsolationConfig()

    kind = "isolation_forest"

    def anomaly_score(self, X: np.ndarray) -> np.ndarray:
        depth = np.mean([t.predict_value(X) for t in self.trees], axis=0)
        return 2.0 ** (-depth / float(average_path_length(self.sample_size)))

    def predict(self, data, feature_names=None):
        X = feature_matrix(data, self.feature_names, feature_names)
        scores = self.anomaly_score(X)
        return (scores > self.threshold).astype(np.int8), scores

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": asdict(self.config),
            "feature_names": list(self.feature_names),
            "sample_size": self.sample_size,
            "threshold": self.threshold,
            "trees": [t.to_dict() for t in self.trees],
        }


def fit_isolation_forest(
    X_normal: np.ndarray,
    feature_names: tuple[str, ...],
    flag_rate: float,
    config: IsolationConfig = IsolationConfig(),
) -> IsolationForestModel:
    """Fit on Normal rows only; the threshold flags ``flag_rate`` of them."""
    X_normal = np.asarray(X_normal, dtype=np.float64)
    n = X_normal.shape[0]
    if n < 2:
        raise MissingInput("isolation forest needs at least 2 Normal training samples")
    psi = min(config.subsample, n)
    depth_limit = max(1, math.ceil(math.log2(psi)))
    trees = []
    for i in range(config.n_trees):
        rng = np.random.default_rng([config.seed, i])
        rows = rng.choice(n, size=psi, replace=False)
        trees.append(_isolation_tree(X_normal[rows], depth_limit, rng))
    model = IsolationForestModel(tuple(trees), psi, float("inf"), tuple(feature_names), config)
    scores = model.anomaly_score(X_normal)
    thr = float(np.quantile(scores, 1.0 - flag_rate)) if flag_rate > 0 else float(scores.max())
    return IsolationForestModel(tuple(trees), psi, thr, tuple(feature_names), config)


def train_isolation_forest(dataset: LabeledDataset, config: IsolationConfig = IsolationConfig()) -> IsolationForestModel:
    """Select the Normal, non-synthetic training rows and fit on those alone.

    The flag rate is the positive rate among the original (pre-SMOTE) rows.
    """
    real = ~dataset.synthetic
    normal = real & (dataset.y == 0)
    flag_rate = float(dataset.y[real].mean()) if real.any() else 0.0
    return fit_isolation_forest(dataset.X[normal], tuple(dataset.feature_names), flag_rate, config)
