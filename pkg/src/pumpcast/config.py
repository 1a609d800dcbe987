"""Pipeline configuration: nested dataclasses parsed strictly from JSON.

Unknown keys anywhere raise :class:`ConfigError` naming the dotted key path.
Defaults are the canonical experiment settings: windows 60/120, horizons
5/15/30, a chronological 75/25 split, the reference threshold table and the
95th percentile.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

MODEL_NAMES = ("random_forest", "boosted")
BASELINE_NAMES = ("fixed_rule", "adaptive_rule", "persistence", "majority", "logistic_regression", "isolation_forest")
ABLATION_TAGS = (
    "no_smote",
    "mean_std_only",
    "sensor_subset",
    "simplified_labels",
    "window_sweep",
    "horizon_sweep",
    "no_standardize_knn",
    "exclude_abnormal_history",
)


def derive_seed(seed: int, *names: object) -> int:
    """Mix the global seed with stage names into a 63-bit seed (SHA-256 based)."""
    key = ":".join([str(int(seed))] + [str(n) for n in names]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


@dataclass
class DataConfig:
    source: str = "synthetic"  # "synthetic" | "csv"
    csv_path: str | None = None
    max_gap: int = 5
    synthetic: dict | None = None  # SyntheticProfile mapping; None -> built-in profile


@dataclass
class ThresholdConfig:
    mode: str = "table"  # "table" | "percentile" | "explicit"
    percentile: float = 0.95
    scope: str = "train"  # "train" (chronological training prefix) | "full"
    fixed: dict[str, float] | None = None  # overrides the table fixed limits
    adaptive: dict[str, float] | None = None  # only for mode == "explicit"


@dataclass
class ForestSection:
    n_trees: int = 200
    max_depth: int = 12
    min_samples_leaf: int = 2
    max_features: int | str = "sqrt"
    bootstrap: bool = True


@dataclass
class BoostSection:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 4
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_samples_leaf: int = 1


@dataclass
class LogisticSection:
    epochs: int = 500
    learning_rate: float = 0.1
    l2: float = 1e-4


@dataclass
class IsolationSection:
    n_trees: int = 100
    subsample: int = 256


@dataclass
class SmoteSection:
    enabled: bool = True
    k_neighbors: int = 5
    target_ratio: float = 1.0
    standardize_before_knn: bool = True


@dataclass
class SplitSection:
    train_fraction: float = 0.75
    shuffle: bool = False
    purge_gap: int = 0


@dataclass
class EvalSection:
    n_resamples: int = 2000
    ci_level: float = 0.95


@dataclass
class AblationSection:
    model: str = "random_forest"
    window: int = 60
    horizon: int = 5
    variants: list[str] = field(default_factory=lambda: list(ABLATION_TAGS))
    sensor_subset: list[str] = field(default_factory=lambda: ["flow", "pressure", "temperature"])


@dataclass
class PipelineConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    windows: list[int] = field(default_factory=lambda: [60, 120])
    horizons: list[int] = field(default_factory=lambda: [5, 15, 30])
    stride: int = 1
    exclude_abnormal_history: bool = False
    models: list[str] = field(default_factory=lambda: list(MODEL_NAMES))
    baselines: list[str] = field(default_factory=lambda: list(BASELINE_NAMES))
    forest: ForestSection = field(default_factory=ForestSection)
    boosted: BoostSection = field(default_factory=BoostSection)
    logistic: LogisticSection = field(default_factory=LogisticSection)
    isolation_forest: IsolationSection = field(default_factory=IsolationSection)
    smote: SmoteSection = field(default_factory=SmoteSection)
    split: SplitSection = field(default_factory=SplitSection)
    eval: EvalSection = field(default_factory=EvalSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    output_dir: str = "out"

    def validate(self) -> None:
        if self.data.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source: expected 'synthetic' or 'csv', got {self.data.source!r}")
        if self.data.source == "csv" and not self.data.csv_path:
            raise ConfigError("data.csv_path is required when data.source is 'csv'")
        if self.thresholds.mode not in ("table", "percentile", "explicit"):
            raise ConfigError(f"thresholds.mode: unknown mode {self.thresholds.mode!r}")
        if self.thresholds.scope not in ("train", "full"):
            raise ConfigError(f"thresholds.scope: unknown scope {self.thresholds.scope!r}")
        if self.thresholds.mode == "explicit" and not self.thresholds.adaptive:
            raise ConfigError("thresholds.adaptive is required when thresholds.mode is 'explicit'")
        if not 0.0 < self.thresholds.percentile < 1.0:
            raise ConfigError("thresholds.percentile must be in (0, 1)")
        for name in self.models:
            if name not in MODEL_NAMES:
                raise ConfigError(f"models: unknown model {name!r}")
        for name in self.baselines:
            if name not in BASELINE_NAMES:
                raise ConfigError(f"baselines: unknown baseline {name!r}")
        for v in self.ablation.variants:
            if v not in ABLATION_TAGS:
                raise ConfigError(f"ablation.variants: unknown variant {v!r}")
        if self.ablation.model not in MODEL_NAMES + BASELINE_NAMES:
            raise ConfigError(f"ablation.model: unknown model {self.ablation.model!r}")
        if any(w < 2 for w in self.windows) or any(h < 1 for h in self.horizons) or self.stride < 1:
            raise ConfigError("windows must be >= 2, horizons >= 1, stride >= 1")
        if not 0.0 < self.split.train_fraction < 1.0:
            raise ConfigError("split.train_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def _strict(cls, data: Any, path: str):
    if not dataclasses.is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown config key '{where}'", key=where)
        kwargs[key] = _strict(hints[key], value, where) if dataclasses.is_dataclass(hints[key]) else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = _strict(PipelineConfig, data, "")
    cfg.validate()
    return cfg


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Merge ``dotted.key=value`` strings into a raw config mapping.

    Values are parsed as JSON when possible (``3``, ``true``, ``[5, 15]``)
    and kept as plain strings otherwise.
    """
    data = json.loads(json.dumps(data))
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override {key!r}: '{part}' is not a section", key=key)
            node = child
        node[parts[-1]] = value
    return data


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> PipelineConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


def dump_config(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
