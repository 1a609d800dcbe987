"""Second-order gradient boosting with logistic loss and a regularised tree objective.

Per round: ``g = p - y``, ``h = p(1 - p)``; fit a Newton tree to (g, h) and
add ``learning_rate * tree`` to the margin. Leaf weights and split gains
include the leaf-count penalty ``gamma`` and the L2 penalty ``reg_lambda``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DivergenceDetected, SingleClassInput
from ..features import LabeledDataset
from .base import feature_matrix, label_from_score, sigmoid
from .tree import Tree, TreeConfig, presort, train_newton_tree

logger = logging.getLogger(__name__)

LOSS_TOL = 1e-9


@dataclass(frozen=True)
class BoostConfig:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 4
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be >= 0")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ValueError("reg_lambda and gamma must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def logistic_loss(y: np.ndarray, margin: np.ndarray) -> float:
    """Mean negative log-likelihood of labels ``y`` under ``sigmoid(margin)``."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


@dataclass(frozen=True, eq=False)
class BoostedModel:
    trees: tuple[Tree, ...]
    base_score: float
    config: BoostConfig
    feature_names: tuple[str, ...]
    loss_history: tuple[float, ...] = ()

    kind = "boosted"

    def margin(self, X: np.ndarray) -> np.ndarray:
        m = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            m += self.config.learning_rate * t.predict_value(X)
        return m

    def predict(self, data, feature_names=None):
        X = feature_matrix(data, self.feature_names, feature_names)
        scores = sigmoid(self.margin(X))
        return label_from_score(scores), scores

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": asdict(self.config),
            "feature_names": list(self.feature_names),
            "base_score": self.base_score,
            "loss_history": list(self.loss_history),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> BoostedModel:
        return cls(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            base_score=float(d["base_score"]),
            config=BoostConfig(**d["config"]),
            feature_names=tuple(d["feature_names"]),
            loss_history=tuple(d.get("loss_history", ())),
        )


def train_boosted(dataset: LabeledDataset, config: BoostConfig = BoostConfig()) -> BoostedModel:
    X = dataset.X
    y = dataset.y.astype(np.float64)
    if np.unique(y).size < 2:
        raise SingleClassInput("boosting needs both classes in the training data")
    rate = y.mean()
    base = float(np.log(rate / (1.0 - rate)))
    tree_cfg = TreeConfig(
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        reg_lambda=config.reg_lambda,
        gamma=config.gamma,
    )
    rng = np.random.default_rng(config.seed)
    order = presort(X)
    margin = np.full(X.shape[0], base)
    losses = [logistic_loss(y, margin)]
    trees = []
    rising = 0
    for _ in range(config.n_rounds):
        p = sigmoid(margin)
        tree = train_newton_tree(X, p - y, p * (1.0 - p), tree_cfg, rng, order)
        margin = margin + config.learning_rate * tree.predict_value(X)
        trees.append(tree)
        losses.append(logistic_loss(y, margin))
        rising = rising + 1 if losses[-1] > losses[-2] + LOSS_TOL else 0
        if rising >= 3:
            raise DivergenceDetected(
                f"training loss rose for 3 consecutive rounds (last {losses[-1]:.6g}); lower the learning rate"
            )
    return BoostedModel(tuple(trees), base, config, tuple(dataset.feature_names), tuple(losses))
