"""Sliding-window statistics and horizon-shifted supervised samples."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateWindow, SeriesTooShort
from .labeling import LabeledSeries, binarize
from .telemetry import SENSORS, SensorId, parse_sensor

STATS: tuple[str, ...] = ("mean", "std", "min", "max", "trend")
FEATURE_NAMES: tuple[str, ...] = tuple(f"{s.value}_{st}" for s in SENSORS for st in STATS)

NAT = np.datetime64("NaT", "m")


@dataclass(frozen=True)
class WindowConfig:
    window: int = 60
    horizon: int = 5
    stride: int = 1
    exclude_abnormal_history: bool = False

    def __post_init__(self) -> None:
        if self.window < 2:
            raise ValueError(f"window length must be >= 2, got {self.window}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix plus everything the evaluators and baselines need.

    ``last_values`` and ``current_label`` describe the raw record at each
    anchor (used by the rule and persistence baselines). Synthetic rows from
    SMOTE have NaT anchors, NaN last values, ``current_label == -1`` and
    record their two parents and interpolation weight.
    """

    X: np.ndarray
    y: np.ndarray
    anchors: np.ndarray
    feature_names: tuple[str, ...]
    config: WindowConfig
    last_values: np.ndarray
    current_label: np.ndarray
    synthetic: np.ndarray = None  # type: ignore[assignment]
    parents: np.ndarray = None  # type: ignore[assignment]
    interp: np.ndarray = None  # type: ignore[assignment]
    split: str = "full"
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.X.shape[0]
        if self.synthetic is None:
            object.__setattr__(self, "synthetic", np.zeros(n, dtype=bool))
        if self.parents is None:
            object.__setattr__(self, "parents", np.full((n, 2), -1, dtype=np.int64))
        if self.interp is None:
            object.__setattr__(self, "interp", np.full(n, np.nan))
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature matrix width does not match feature names")
        for name in ("y", "anchors", "last_values", "current_label", "synthetic", "parents", "interp"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} length does not match feature matrix")

    def __len__(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_positive(self) -> int:
        return int(self.y.sum())

    def take(self, idx: np.ndarray, split: str | None = None) -> LabeledDataset:
        return replace(
            self,
            X=self.X[idx],
            y=self.y[idx],
            anchors=self.anchors[idx],
            last_values=self.last_values[idx],
            current_label=self.current_label[idx],
            synthetic=self.synthetic[idx],
            parents=self.parents[idx],
            interp=self.interp[idx],
            split=self.split if split is None else split,
            meta=dict(self.meta),
        )

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.feature_names) + ["label", "anchor_ts"])
        for row, label, ts in zip(self.X, self.y, self.anchors):
            stamp = "" if np.isnat(ts) else str(np.datetime_as_string(ts, unit="m"))
            w.writerow([repr(float(v)) for v in row] + [int(label), stamp])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def window_stats(values: Sequence[float]) -> tuple[float, float, float, float, float]:
    """Return (mean, population std, min, max, OLS slope per minute) of a window."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise DegenerateWindow(f"window needs at least 2 values, got {v.size}")
    stats = _window_stats_batch(v[None, :, None])[0, 0]
    return tuple(float(x) for x in stats)  # type: ignore[return-value]


def _window_stats_batch(w: np.ndarray) -> np.ndarray:
    """Stats over axis 1 of ``w`` shaped (n_windows, L, n_sensors).

    Returns (n_windows, n_sensors, 5).
    """
    L = w.shape[1]
    lo = w.min(axis=1)
    hi = w.max(axis=1)
    mean = w.mean(axis=1)
    dev = w - mean[:, None, :]
    std = np.sqrt((dev * dev).mean(axis=1))
    t = np.arange(L, dtype=np.float64) - (L - 1) / 2.0
    slope = np.einsum("i,nis->ns", t, dev) / float(t @ t)

    flat = lo == hi
    mean = np.clip(mean, lo, hi)
    mean[flat] = lo[flat]
    std[flat] = 0.0
    slope[flat] = 0.0
    return np.stack([mean, std, lo, hi, slope], axis=-1)


def anchor_indices(n: int, config: WindowConfig) -> np.ndarray:
    """Valid anchor positions: the window [t-L+1, t] and target t+horizon fit."""
    last = n - 1 - config.horizon
    first = config.window - 1
    if last < first:
        return np.zeros(0, dtype=np.int64)
    return np.arange(first, last + 1, config.stride, dtype=np.int64)


def build_dataset(labeled: LabeledSeries, config: WindowConfig) -> LabeledDataset:
    """Turn a labeled series into (25 window features, label at t+horizon) samples."""
    n = len(labeled)
    if n < config.window + config.horizon:
        raise SeriesTooShort(
            f"series of {n} records too short for window {config.window} + horizon {config.horizon}"
        )
    anchors = anchor_indices(n, config)
    values = labeled.series.values
    windows = sliding_window_view(values, config.window, axis=0)  # (n-L+1, 5, L)
    starts = anchors - (config.window - 1)
    stats = _window_stats_batch(np.swapaxes(windows[starts], 1, 2))
    X = stats.reshape(len(anchors), -1)
    y = binarize(labeled.overall[anchors + config.horizon]).astype(np.int8)

    if config.exclude_abnormal_history:
        windows_lab = sliding_window_view(labeled.overall, config.window)[starts]
        keep = windows_lab.max(axis=1) == 0
        anchors, X, y = anchors[keep], X[keep], y[keep]

    return LabeledDataset(
        X=np.ascontiguousarray(X),
        y=y,
        anchors=labeled.series.timestamps[anchors],
        feature_names=FEATURE_NAMES,
        config=config,
        last_values=values[anchors],
        current_label=labeled.overall[anchors].astype(np.int8),
        meta={"label_scheme": labeled.scheme},
    )


def select_features(
    dataset: LabeledDataset,
    stats: Sequence[str] | None = None,
    sensors: Sequence[SensorId | str] | None = None,
) -> LabeledDataset:
    """Restrict to a subset of statistics and/or sensors, keeping canonical order."""
    stat_set = set(STATS if stats is None else stats)
    unknown = stat_set - set(STATS)
    if unknown:
        raise ValueError(f"unknown statistic(s) {sorted(unknown)}")
    sensor_set = set(SENSORS if sensors is None else (parse_sensor(s) for s in sensors))
    cols = [
        i
        for i, name in enumerate(dataset.feature_names)
        if name.rsplit("_", 1)[1] in stat_set and parse_sensor(name.rsplit("_", 1)[0]) in sensor_set
    ]
    if not cols:
        raise ValueError("feature selection left no features")
    return replace(
        dataset,
        X=np.ascontiguousarray(dataset.X[:, cols]),
        feature_names=tuple(dataset.feature_names[i] for i in cols),
        meta=dict(dataset.meta),
    )
