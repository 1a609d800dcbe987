"""Bagged Gini trees with per-node feature subsampling and majority vote."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import SingleClassInput
from ..features import LabeledDataset
from .base import feature_matrix, label_from_score
from .tree import LEAF, Tree, TreeConfig, presort, train_gini_tree


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 12
    min_samples_leaf: int = 2
    max_features: int | str = "sqrt"  # int, "sqrt" (ceil) or "all"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return math.ceil(math.sqrt(n_features))
        if self.max_features == "all":
            return n_features
        return min(int(self.max_features), n_features)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[Tree, ...]
    config: ForestConfig
    feature_names: tuple[str, ...]

    kind = "random_forest"

    def votes(self, X: np.ndarray) -> np.ndarray:
        """(n_trees, n_samples) matrix of 0/1 tree votes."""
        return np.stack([label_from_score(t.predict_value(X)) for t in self.trees])

    def predict(self, data, feature_names=None):
        X = feature_matrix(data, self.feature_names, feature_names)
        scores = self.votes(X).mean(axis=0)
        return label_from_score(scores), scores

    def feature_importance(self) -> list[tuple[str, float]]:
        return feature_importance(self)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": asdict(self.config),
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ForestModel:
        return cls(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            config=ForestConfig(**d["config"]),
            feature_names=tuple(d["feature_names"]),
        )


def train_forest(dataset: LabeledDataset, config: ForestConfig = ForestConfig()) -> ForestModel:
    """Each tree sees its own bootstrap resample; RNG per tree is seeded by (seed, tree index)."""
    X, y = dataset.X, dataset.y
    if np.unique(y).size < 2:
        raise SingleClassInput("random forest needs both classes in the training data")
    n, d = X.shape
    tree_cfg = TreeConfig(
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        max_features=config.features_per_split(d),
    )
    order = presort(X)
    trees = []
    for i in range(config.n_trees):
        rng = np.random.default_rng([config.seed, i])
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n) if config.bootstrap else None
        trees.append(train_gini_tree(X, y, tree_cfg, sample_weight=weights, rng=rng, order=order))
    return ForestModel(tuple(trees), config, tuple(dataset.feature_names))


def feature_importance(model: ForestModel) -> list[tuple[str, float]]:
    """Mean decrease in impurity, averaged over trees and normalised to sum to 1.

    Ranked descending; ties keep canonical feature order.
    """
    d = len(model.feature_names)
    total = np.zeros(d)
    for t in model.trees:
        internal = t.feature != LEAF
        contrib = t.weight[internal] / t.weight[0] * t.gain[internal]
        total += np.bincount(t.feature[internal], weights=contrib, minlength=d)
    total /= len(model.trees)
    s = total.sum()
    if s > 0:
        total = total / s
    order = sorted(range(d), key=lambda i: (-total[i], i))
    return [(model.feature_names[i], float(total[i])) for i in order]
