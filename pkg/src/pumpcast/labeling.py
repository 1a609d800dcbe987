"""Dual-threshold condition labels (fixed engineering limit + adaptive percentile)."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping

import numpy as np

from .errors import IncompleteThresholds, SeriesTooShort
from .telemetry import SENSORS, SensorId, TelemetrySeries, parse_sensor

logger = logging.getLogger(__name__)


class ConditionLabel(IntEnum):
    NORMAL = 0
    EARLY_WARNING = 1
    CRITICAL_ALERT = 2

    @property
    def display(self) -> str:
        return {0: "Normal", 1: "EarlyWarning", 2: "CriticalAlert"}[int(self)]


NEGATIVE = 0
POSITIVE = 1

# Reference limits for the studied pump (fixed engineering limit, 95th percentile).
REFERENCE_FIXED = {
    SensorId.VIBRATION: 5.00,
    SensorId.TEMPERATURE: 80.00,
    SensorId.FLOW: 2800.00,
    SensorId.PRESSURE: 6.00,
    SensorId.CURRENT: 240.00,
}
REFERENCE_ADAPTIVE = {
    SensorId.VIBRATION: 1.65,
    SensorId.TEMPERATURE: 55.23,
    SensorId.FLOW: 2668.05,
    SensorId.PRESSURE: 4.77,
    SensorId.CURRENT: 231.89,
}


@dataclass(frozen=True)
class ThresholdSet:
    """Per-sensor (fixed, adaptive) limits in canonical sensor order."""

    fixed: tuple[float, ...]
    adaptive: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.fixed) != len(SENSORS) or len(self.adaptive) != len(SENSORS):
            raise IncompleteThresholds("thresholds needed for all five sensors")
        if not all(np.isfinite(self.fixed)) or not all(np.isfinite(self.adaptive)):
            raise IncompleteThresholds("thresholds must be finite")
        if any(a > f for a, f in zip(self.adaptive, self.fixed)):
            raise ValueError("adaptive limit exceeds fixed limit; build with ThresholdSet.build to clamp")

    @classmethod
    def build(cls, fixed: Mapping, adaptive: Mapping) -> ThresholdSet:
        """Construct from sensor-keyed mappings, clamping adaptive to fixed."""
        fixed = {parse_sensor(k): float(v) for k, v in fixed.items()}
        adaptive = {parse_sensor(k): float(v) for k, v in adaptive.items()}
        missing = [s.value for s in SENSORS if s not in fixed or s not in adaptive]
        if missing:
            raise IncompleteThresholds(f"no thresholds for sensor(s) {missing}")
        adapt = []
        for s in SENSORS:
            a, f = adaptive[s], fixed[s]
            if a > f:
                logger.warning("adaptive limit %.6g for %s exceeds fixed %.6g; clamping", a, s.value, f)
                a = f
            adapt.append(a)
        return cls(tuple(fixed[s] for s in SENSORS), tuple(adapt))

    @classmethod
    def table_defaults(cls) -> ThresholdSet:
        return cls.build(REFERENCE_FIXED, REFERENCE_ADAPTIVE)

    def fixed_limit(self, sensor: SensorId | str) -> float:
        return self.fixed[parse_sensor(sensor).index]

    def adaptive_limit(self, sensor: SensorId | str) -> float:
        return self.adaptive[parse_sensor(sensor).index]

    def to_dict(self) -> dict:
        return {
            "fixed": {s.value: v for s, v in zip(SENSORS, self.fixed)},
            "adaptive": {s.value: v for s, v in zip(SENSORS, self.adaptive)},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ThresholdSet:
        try:
            return cls.build(d["fixed"], d["adaptive"])
        except KeyError as exc:
            raise IncompleteThresholds(f"threshold mapping lacks {exc}") from None


def empirical_percentile(values: np.ndarray, q: float) -> float:
    """Percentile by linear interpolation between order statistics at rank q*(n-1)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    r = q * (v.size - 1)
    lo = int(np.floor(r))
    hi = min(lo + 1, v.size - 1)
    frac = r - lo
    return float(v[lo] + frac * (v[hi] - v[lo]))


def compute_adaptive_thresholds(series: TelemetrySeries, percentile: float = 0.95) -> dict[SensorId, float]:
    if len(series) < 20:
        raise SeriesTooShort(f"need at least 20 records for a percentile, got {len(series)}")
    if not 0.0 < percentile < 1.0:
        raise ValueError(f"percentile must be in (0, 1), got {percentile}")
    return {s: empirical_percentile(series.values[:, s.index], percentile) for s in SENSORS}


def label_value(value: float, thresholds: ThresholdSet, sensor: SensorId | str) -> ConditionLabel:
    i = parse_sensor(sensor).index
    if value > thresholds.fixed[i]:
        return ConditionLabel.CRITICAL_ALERT
    if value > thresholds.adaptive[i]:
        return ConditionLabel.EARLY_WARNING
    return ConditionLabel.NORMAL


def label_matrix(values: np.ndarray, thresholds: ThresholdSet, fixed_only: bool = False) -> np.ndarray:
    """Vectorised :func:`label_value` over an ``(n, 5)`` value matrix."""
    fixed = np.asarray(thresholds.fixed)
    out = np.zeros(values.shape, dtype=np.int8)
    if not fixed_only:
        out[values > np.asarray(thresholds.adaptive)] = ConditionLabel.EARLY_WARNING
    out[values > fixed] = ConditionLabel.CRITICAL_ALERT
    return out


@dataclass(frozen=True, eq=False)
class LabeledSeries:
    series: TelemetrySeries
    sensor_labels: np.ndarray  # (n, 5) int8 ConditionLabel values
    overall: np.ndarray  # (n,) int8
    thresholds: ThresholdSet
    scheme: str = "dual"

    def __len__(self) -> int:
        return len(self.series)

    def overall_label(self, i: int) -> ConditionLabel:
        return ConditionLabel(int(self.overall[i]))


def label_series(series: TelemetrySeries, thresholds: ThresholdSet, scheme: str = "dual") -> LabeledSeries:
    """Label every record per sensor; the overall label is the most severe one.

    ``scheme="fixed_only"`` drops the adaptive band, so only CriticalAlert and
    Normal are produced.
    """
    if not isinstance(thresholds, ThresholdSet):
        raise IncompleteThresholds("label_series needs a complete ThresholdSet")
    if scheme not in ("dual", "fixed_only"):
        raise ValueError(f"unknown label scheme {scheme!r}")
    per_sensor = label_matrix(series.values, thresholds, fixed_only=scheme == "fixed_only")
    overall = per_sensor.max(axis=1) if len(series) else np.zeros(0, dtype=np.int8)
    per_sensor.flags.writeable = False
    overall.flags.writeable = False
    return LabeledSeries(series, per_sensor, overall, thresholds, scheme)


def binarize(label: ConditionLabel | int | np.ndarray):
    """Normal -> 0 (negative); EarlyWarning and CriticalAlert -> 1 (positive)."""
    if isinstance(label, np.ndarray):
        return (label > ConditionLabel.NORMAL).astype(np.int8)
    return POSITIVE if int(label) > ConditionLabel.NORMAL else NEGATIVE
