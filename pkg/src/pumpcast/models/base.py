"""Shared predict contract.

Every model exposes ``predict(data) -> (labels, scores)`` where ``labels`` is
an int8 array of {0, 1}, ``scores`` a float array in [0, 1] of positive-class
confidence, and ``data`` is a :class:`LabeledDataset` or, for feature-based
models, a raw feature matrix.
"""

from __future__ import annotations

import numpy as np

from ..errors import FeatureOrderMismatch, MissingInput
from ..features import LabeledDataset


def label_from_score(scores: np.ndarray) -> np.ndarray:
    # a score of exactly 0.5 counts as positive: misses cost more than false alarms
    return (scores >= 0.5).astype(np.int8)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def feature_matrix(data, feature_names: tuple[str, ...], given_names=None) -> np.ndarray:
    """Extract the feature matrix, checking the column order matches training."""
    if isinstance(data, LabeledDataset):
        given_names = data.feature_names
        X = data.X
    else:
        X = np.asarray(data, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
    if given_names is not None and tuple(given_names) != tuple(feature_names):
        raise FeatureOrderMismatch(
            f"model expects features {list(feature_names)[:3]}... but got {list(given_names)[:3]}..."
        )
    if X.shape[1] != len(feature_names):
        raise FeatureOrderMismatch(f"model expects {len(feature_names)} features, got {X.shape[1]}")
    return X


def require_dataset(data, what: str) -> LabeledDataset:
    if not isinstance(data, LabeledDataset):
        raise MissingInput(f"{what} needs a LabeledDataset (raw records at each anchor)")
    return data
