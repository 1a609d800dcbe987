"""SMOTE oversampling of the minority class in a training split."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import AppliedToTestSplit, MinorityTooSmall
from .features import NAT, LabeledDataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0
    standardize_before_knn: bool = True

    def __post_init__(self) -> None:
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ValueError("target_ratio must be in (0, 1]")


def nearest_neighbors(points: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """Indices of the ``k`` nearest other points (Euclidean), ties by index."""
    m = points.shape[0]
    sq = np.einsum("ij,ij->i", points, points)
    out = np.empty((m, k), dtype=np.int64)
    for a in range(0, m, chunk):
        b = min(a + chunk, m)
        d2 = sq[a:b, None] + sq[None, :] - 2.0 * points[a:b] @ points.T
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(b - a), np.arange(a, b)] = np.inf
        out[a:b] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def smote(dataset: LabeledDataset, config: SmoteConfig = SmoteConfig()) -> LabeledDataset:
    """Append synthetic minority samples until minority/majority reaches the target.

    Each synthetic row is ``x + u * (x' - x)`` for a random minority sample
    ``x``, one of its k nearest minority neighbours ``x'`` and ``u ~ U(0, 1)``.
    Neighbours are searched in z-scored space when
    ``standardize_before_knn`` is set; interpolation always happens in the
    original feature space.
    """
    if dataset.split == "test":
        raise AppliedToTestSplit("SMOTE must only be applied to a training split")
    y = dataset.y
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    minority_label = 1 if n_pos <= n_neg else 0
    n_min, n_maj = min(n_pos, n_neg), max(n_pos, n_neg)
    target = int(round(config.target_ratio * n_maj))
    n_new = target - n_min
    if n_new <= 0:
        return dataset
    if n_min < 2:
        raise MinorityTooSmall(f"SMOTE needs >= 2 minority samples, got {n_min}")

    minority_idx = np.flatnonzero(y == minority_label)
    X_min = dataset.X[minority_idx]
    space = X_min
    if config.standardize_before_knn:
        mu = dataset.X.mean(axis=0)
        sd = dataset.X.std(axis=0)
        sd[sd == 0] = 1.0
        space = (X_min - mu) / sd
    k = min(config.k_neighbors, n_min - 1)
    nbrs = nearest_neighbors(space, k)

    rng = np.random.default_rng(config.seed)
    base = rng.integers(0, n_min, size=n_new)
    pick = rng.integers(0, k, size=n_new)
    u = rng.random(n_new)
    other = nbrs[base, pick]
    X_a, X_b = X_min[base], X_min[other]
    X_new = X_a + u[:, None] * (X_b - X_a)

    n_feat = dataset.last_values.shape[1]
    logger.debug("smote: %d synthetic samples (k=%d) for %d minority rows", n_new, k, n_min)
    out = replace(
        dataset,
        X=np.vstack([dataset.X, X_new]),
        y=np.concatenate([y, np.full(n_new, minority_label, dtype=y.dtype)]),
        anchors=np.concatenate([dataset.anchors, np.full(n_new, NAT)]),
        last_values=np.vstack([dataset.last_values, np.full((n_new, n_feat), np.nan)]),
        current_label=np.concatenate([dataset.current_label, np.full(n_new, -1, dtype=dataset.current_label.dtype)]),
        synthetic=np.concatenate([dataset.synthetic, np.ones(n_new, dtype=bool)]),
        parents=np.vstack([dataset.parents, np.column_stack([minority_idx[base], minority_idx[other]])]),
        interp=np.concatenate([dataset.interp, u]),
        meta={**dataset.meta, "smote": {"k_neighbors": k, "n_synthetic": n_new}},
    )
    return out


def audit_log(dataset: LabeledDataset, path: str | Path | None = None) -> str:
    """CSV of (synthetic_index, parent_a, parent_b, u) for every synthetic row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["synthetic_index", "parent_a", "parent_b", "u"])
    for i in np.flatnonzero(dataset.synthetic):
        a, b = dataset.parents[i]
        w.writerow([int(i), int(a), int(b), repr(float(dataset.interp[i]))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
