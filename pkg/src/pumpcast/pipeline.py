"""Glue between the config and the stage modules: data source and thresholds."""

from __future__ import annotations

import json
import logging
import math
from importlib import resources

from .config import PipelineConfig
from .errors import ConfigError
from .labeling import REFERENCE_ADAPTIVE, REFERENCE_FIXED, ThresholdSet, compute_adaptive_thresholds
from .telemetry import SyntheticProfile, TelemetrySeries, generate_synthetic, ingest_csv, repair_gaps

logger = logging.getLogger(__name__)


def default_profile_dict() -> dict:
    """The built-in synthetic pump profile (shipped as package data)."""
    text = resources.files("pumpcast").joinpath("data/synthetic_pump.json").read_text(encoding="utf-8")
    return json.loads(text)


def min_duration(cfg: PipelineConfig) -> int:
    return max(cfg.windows + [cfg.ablation.window]) + max(cfg.horizons + [cfg.ablation.horizon])


def load_series(cfg: PipelineConfig) -> TelemetrySeries:
    if cfg.data.source == "csv":
        series, report = ingest_csv(cfg.data.csv_path)
        logger.info("ingested %d rows, dropped %d", report.rows_read, report.dropped_invalid)
        series, _ = repair_gaps(series, cfg.data.max_gap)
        return series
    profile_dict = cfg.data.synthetic if cfg.data.synthetic is not None else default_profile_dict()
    profile = SyntheticProfile.from_dict(profile_dict, min_duration=min_duration(cfg))
    return generate_synthetic(profile)


def resolve_thresholds(cfg: PipelineConfig, series: TelemetrySeries) -> ThresholdSet:
    """Fixed limits from the table (or overrides); adaptive from the table, data or config.

    Percentile thresholds use the chronological training prefix unless
    ``thresholds.scope`` is ``"full"``.
    """
    tc = cfg.thresholds
    fixed = dict(REFERENCE_FIXED)
    if tc.fixed:
        fixed.update(tc.fixed)
    if tc.mode == "table":
        return ThresholdSet.build(fixed, REFERENCE_ADAPTIVE)
    if tc.mode == "explicit":
        try:
            return ThresholdSet.build(fixed, tc.adaptive)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"thresholds.adaptive: {exc}") from None
    basis = series
    if tc.scope == "train":
        n_prefix = math.ceil(round(cfg.split.train_fraction * len(series), 9))
        basis = series.slice(0, n_prefix)
    return ThresholdSet.build(fixed, compute_adaptive_thresholds(basis, tc.percentile))
