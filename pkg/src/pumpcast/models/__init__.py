"""From-scratch classifiers behind one ``predict(data) -> (labels, scores)`` contract."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..labeling import ThresholdSet
from .baselines import (
    BASELINES,
    IsolationConfig,
    IsolationForestModel,
    LogisticConfig,
    LogisticRegressionModel,
    MajorityBaseline,
    PersistenceBaseline,
    RuleBaseline,
    train_isolation_forest,
    train_logistic,
)
from .boosting import BoostConfig, BoostedModel, logistic_loss, train_boosted
from .forest import ForestConfig, ForestModel, feature_importance, train_forest
from .tree import Tree, TreeConfig, train_gini_tree, train_newton_tree

MODEL_FORMAT = "pumpcast.model"
MODEL_FORMAT_VERSION = 1

__all__ = [
    "BASELINES",
    "BoostConfig",
    "BoostedModel",
    "ForestConfig",
    "ForestModel",
    "IsolationConfig",
    "IsolationForestModel",
    "LogisticConfig",
    "LogisticRegressionModel",
    "MajorityBaseline",
    "PersistenceBaseline",
    "RuleBaseline",
    "Tree",
    "TreeConfig",
    "dumps_model",
    "feature_importance",
    "load_model",
    "loads_model",
    "logistic_loss",
    "predict",
    "save_model",
    "train_boosted",
    "train_forest",
    "train_isolation_forest",
    "train_logistic",
    "train_tree",
]


def train_tree(X, y=None, *, grad=None, hess=None, config: TreeConfig | None = None, rng=None) -> Tree:
    """Gini tree when ``y`` is given, Newton (boosting) tree when ``grad``/``hess`` are."""
    if y is not None:
        return train_gini_tree(X, y, config or TreeConfig(), rng=rng)
    if grad is None or hess is None:
        raise ValueError("train_tree needs labels, or gradients and hessians")
    return train_newton_tree(X, grad, hess, config or TreeConfig(max_depth=4, min_samples_leaf=1), rng=rng)


def predict(model, data, feature_names=None) -> tuple[np.ndarray, np.ndarray]:
    return model.predict(data, feature_names)


def dumps_model(model) -> str:
    payload = {"format": MODEL_FORMAT, "version": MODEL_FORMAT_VERSION, "model": model.to_dict()}
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def loads_model(text: str):
    payload = json.loads(text)
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError("not a serialized pumpcast model")
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {payload.get('version')}")
    d = payload["model"]
    kind = d["kind"]
    if kind == ForestModel.kind:
        return ForestModel.from_dict(d)
    if kind == BoostedModel.kind:
        return BoostedModel.from_dict(d)
    if kind in ("fixed_rule", "adaptive_rule"):
        return RuleBaseline(d["limit"], ThresholdSet.from_dict(d["thresholds"]))
    if kind == "persistence":
        return PersistenceBaseline()
    if kind == "majority":
        return MajorityBaseline()
    if kind == LogisticRegressionModel.kind:
        return LogisticRegressionModel(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            mean=np.asarray(d["mean"], dtype=np.float64),
            scale=np.asarray(d["scale"], dtype=np.float64),
            feature_names=tuple(d["feature_names"]),
            config=LogisticConfig(**d["config"]),
        )
    if kind == IsolationForestModel.kind:
        return IsolationForestModel(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            sample_size=int(d["sample_size"]),
            threshold=float(d["threshold"]),
            feature_names=tuple(d["feature_names"]),
            config=IsolationConfig(**d["config"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")


def load_model(path: str | Path):
    return loads_model(Path(path).read_text(encoding="utf-8"))
