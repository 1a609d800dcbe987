"""Small constructors shared by the test modules."""

from __future__ import annotations

import numpy as np

from pumpcast.features import WindowConfig, LabeledDataset


def make_dataset(X, y, split="train", names=None, last_values=None, current_label=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    names = tuple(names) if names is not None else tuple(f"f{i}" for i in range(d))
    anchors = np.datetime64("2024-01-01T00:00", "m") + np.arange(n).astype("timedelta64[m]")
    if last_values is None:
        last_values = np.zeros((n, 5))
    if current_label is None:
        current_label = np.zeros(n, dtype=np.int64)
    return LabeledDataset(
        X=X,
        y=y,
        anchors=anchors,
        feature_names=names,
        config=WindowConfig(2, 1),
        last_values=np.asarray(last_values, dtype=float),
        current_label=np.asarray(current_label, dtype=np.int64),
        split=split,
    )


def blobs(n_neg, n_pos, d=3, shift=2.0, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(size=(n_neg, d)), rng.normal(size=(n_pos, d)) + shift])
    y = np.concatenate([np.zeros(n_neg, dtype=np.int64), np.ones(n_pos, dtype=np.int64)])
    return X, y
