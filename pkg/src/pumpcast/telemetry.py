"""Pump telemetry: CSV ingestion, gap repair and a synthetic generator.

A series is stored column-wise: one ``datetime64[m]`` timestamp vector and a
``(n, 5)`` float matrix whose columns follow :data:`SENSORS`.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import EmptyAfterCleaning, InvalidProfile, MissingColumn

logger = logging.getLogger(__name__)

ONE_MINUTE = np.timedelta64(1, "m")


class SensorId(str, Enum):
    VIBRATION = "vibration"
    TEMPERATURE = "temperature"
    FLOW = "flow"
    PRESSURE = "pressure"
    CURRENT = "current"

    @property
    def unit(self) -> str:
        return _UNITS[self]

    @property
    def index(self) -> int:
        return SENSORS.index(self)


_UNITS = {
    SensorId.VIBRATION: "mm/s",
    SensorId.TEMPERATURE: "°C",
    SensorId.FLOW: "m³/h",
    SensorId.PRESSURE: "bar",
    SensorId.CURRENT: "A",
}

SENSORS: tuple[SensorId, ...] = tuple(SensorId)
CSV_HEADER: tuple[str, ...] = ("timestamp",) + tuple(s.value for s in SENSORS)


def parse_sensor(name: str | SensorId) -> SensorId:
    if isinstance(name, SensorId):
        return name
    try:
        return SensorId(str(name).lower())
    except ValueError:
        raise KeyError(f"unknown sensor {name!r}; expected one of {[s.value for s in SENSORS]}") from None


@dataclass(frozen=True)
class TelemetryRecord:
    timestamp: np.datetime64
    values: tuple[float, ...]

    def __getitem__(self, sensor: SensorId | str) -> float:
        return self.values[parse_sensor(sensor).index]


@dataclass(frozen=True, eq=False)
class TelemetrySeries:
    """Immutable one-minute multivariate series."""

    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype="datetime64[m]")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != len(SENSORS):
            raise ValueError(f"values must have shape (n, {len(SENSORS)}), got {vals.shape}")
        if ts.shape != (vals.shape[0],):
            raise ValueError("timestamps and values disagree on length")
        if not np.all(np.isfinite(vals)):
            raise ValueError("telemetry values must be finite")
        if ts.size > 1 and not np.all(np.diff(ts) > np.timedelta64(0, "m")):
            raise ValueError("timestamps must be strictly increasing")
        ts = ts.copy()
        vals = vals.copy()
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __iter__(self) -> Iterator[TelemetryRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TelemetrySeries):
            return NotImplemented
        return np.array_equal(self.timestamps, other.timestamps) and np.array_equal(self.values, other.values)

    def record(self, i: int) -> TelemetryRecord:
        return TelemetryRecord(self.timestamps[i], tuple(float(v) for v in self.values[i]))

    def column(self, sensor: SensorId | str) -> np.ndarray:
        return self.values[:, parse_sensor(sensor).index]

    def slice(self, start: int, stop: int) -> TelemetrySeries:
        return TelemetrySeries(self.timestamps[start:stop], self.values[start:stop])

    def is_contiguous(self) -> bool:
        return bool(np.all(np.diff(self.timestamps) == ONE_MINUTE))


@dataclass(frozen=True)
class IngestReport:
    rows_read: int
    dropped_invalid: int
    duplicates_collapsed: int


@dataclass(frozen=True)
class RepairReport:
    filled_minutes: int
    discarded_spans: tuple[tuple[str, str], ...] = ()


def _format_ts(ts: np.datetime64) -> str:
    return str(np.datetime_as_string(ts, unit="m"))


def _parse_ts(raw: str) -> np.datetime64 | None:
    try:
        dt = datetime.fromisoformat(raw.strip())
    except ValueError:
        return None
    if dt.second or dt.microsecond:
        return None
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt, "m")


def _parse_value(raw: str) -> float | None:
    try:
        v = float(raw)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def ingest_csv(path: str | Path) -> tuple[TelemetrySeries, IngestReport]:
    """Read telemetry CSV, dropping invalid rows and sorting by timestamp.

    Rows with an unparseable timestamp (or non-zero seconds) or any non-finite
    sensor value are dropped. Duplicate timestamps keep the last occurrence in
    file order.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MissingColumn(f"{path}: empty file, expected header {','.join(CSV_HEADER)}")
        header = [h.strip().lower() for h in header]
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {missing}")
        cols = [header.index(c) for c in CSV_HEADER]

        stamps: list[np.datetime64] = []
        rows: list[list[float]] = []
        n_read = 0
        dropped = 0
        for raw in reader:
            if not raw:
                continue
            n_read += 1
            if len(raw) < len(header):
                dropped += 1
                continue
            ts = _parse_ts(raw[cols[0]])
            vals = [_parse_value(raw[c]) for c in cols[1:]]
            if ts is None or any(v is None for v in vals):
                dropped += 1
                continue
            stamps.append(ts)
            rows.append(vals)  # type: ignore[arg-type]

    if not rows:
        raise EmptyAfterCleaning(f"{path}: no valid rows ({dropped} dropped)")

    ts_arr = np.array(stamps, dtype="datetime64[m]")
    vals_arr = np.array(rows, dtype=np.float64)
    order = np.argsort(ts_arr, kind="stable")
    ts_arr, vals_arr = ts_arr[order], vals_arr[order]
    # stable sort keeps file order within equal stamps; the last one wins
    keep = np.ones(ts_arr.size, dtype=bool)
    keep[:-1] = ts_arr[:-1] != ts_arr[1:]
    dupes = int(ts_arr.size - keep.sum())
    series = TelemetrySeries(ts_arr[keep], vals_arr[keep])
    if dropped or dupes:
        logger.info("%s: dropped %d invalid rows, collapsed %d duplicates", path, dropped, dupes)
    return series, IngestReport(n_read, dropped, dupes)


def to_csv(series: TelemetrySeries, path: str | Path | None = None) -> str:
    """Serialize ``series`` in the canonical CSV format; optionally write it."""
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for ts, row in zip(series.timestamps, series.values):
        fields = [_format_ts(ts)] + [np.format_float_positional(v, unique=True, trim="0") for v in row]
        buf.write(",".join(fields) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def repair_gaps(series: TelemetrySeries, max_gap: int = 5) -> tuple[TelemetrySeries, RepairReport]:
    """Fill gaps of at most ``max_gap`` missing minutes by linear interpolation.

    Larger gaps split the series; the longest contiguous segment is kept
    (earliest on ties) and the others are reported as discarded spans.
    """
    n = len(series)
    if n <= 1:
        return series, RepairReport(0)
    steps = (np.diff(series.timestamps) // ONE_MINUTE).astype(np.int64)
    breaks = np.flatnonzero(steps - 1 > max_gap)
    bounds = np.concatenate(([0], breaks + 1, [n]))
    segments = [(int(bounds[i]), int(bounds[i + 1])) for i in range(len(bounds) - 1)]

    def span_minutes(seg: tuple[int, int]) -> int:
        a, b = seg
        return int((series.timestamps[b - 1] - series.timestamps[a]) // ONE_MINUTE) + 1

    best = max(range(len(segments)), key=lambda i: (span_minutes(segments[i]), -i))
    a, b = segments[best]
    discarded = tuple(
        (_format_ts(series.timestamps[s]), _format_ts(series.timestamps[e - 1]))
        for j, (s, e) in enumerate(segments)
        if j != best
    )
    if discarded:
        logger.warning("repair_gaps: discarded %d segment(s) separated by gaps > %d min", len(discarded), max_gap)

    ts = series.timestamps[a:b]
    vals = series.values[a:b]
    minutes = ((ts - ts[0]) // ONE_MINUTE).astype(np.int64)
    full = np.arange(minutes[-1] + 1)
    filled = int(full.size - minutes.size)
    if filled == 0 and not discarded:
        return series, RepairReport(0)
    if filled:
        vals = np.column_stack([np.interp(full, minutes, vals[:, j]) for j in range(vals.shape[1])])
        ts = ts[0] + full.astype("timedelta64[m]")
    return TelemetrySeries(ts, vals), RepairReport(filled, discarded)


@dataclass(frozen=True)
class FaultEpisode:
    """Degradation: the baseline of ``sensors`` ramps to ``severity`` x baseline
    over ``ramp`` minutes, then holds for ``hold`` minutes and recovers."""

    start: int
    ramp: int
    hold: int
    sensors: tuple[SensorId, ...]
    severity: float

    @classmethod
    def from_dict(cls, d: dict) -> FaultEpisode:
        allowed = {"start", "ramp", "hold", "sensors", "severity"}
        extra = set(d) - allowed
        if extra:
            raise InvalidProfile(f"unknown fault episode key(s) {sorted(extra)}")
        try:
            return cls(
                start=int(d["start"]),
                ramp=int(d["ramp"]),
                hold=int(d.get("hold", 0)),
                sensors=tuple(parse_sensor(s) for s in d["sensors"]),
                severity=float(d["severity"]),
            )
        except KeyError as exc:
            raise InvalidProfile(f"fault episode missing or bad key: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "ramp": self.ramp,
            "hold": self.hold,
            "sensors": [s.value for s in self.sensors],
            "severity": self.severity,
        }


def _per_sensor(value: float | dict, name: str) -> tuple[float, ...]:
    if isinstance(value, dict):
        unknown = set(value) - {s.value for s in SENSORS}
        if unknown:
            raise InvalidProfile(f"{name}: unknown sensor(s) {sorted(unknown)}")
        try:
            return tuple(float(value[s.value]) for s in SENSORS)
        except KeyError as exc:
            raise InvalidProfile(f"{name}: missing sensor {exc}") from None
    return (float(value),) * len(SENSORS)


@dataclass(frozen=True)
class SyntheticProfile:
    duration: int
    baseline: tuple[float, ...]
    noise_std: tuple[float, ...]
    period: tuple[float, ...]
    amplitude: tuple[float, ...]
    faults: tuple[FaultEpisode, ...] = ()
    seed: int = 0
    start: str = "2024-01-01T00:00"
    min_duration: int = field(default=150, compare=False)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.duration < self.min_duration:
            raise InvalidProfile(f"duration {self.duration} shorter than required {self.min_duration}")
        for name in ("baseline", "noise_std", "period", "amplitude"):
            vals = getattr(self, name)
            if len(vals) != len(SENSORS) or not all(math.isfinite(v) for v in vals):
                raise InvalidProfile(f"{name} needs {len(SENSORS)} finite values")
        if any(v < 0 for v in self.noise_std):
            raise InvalidProfile("noise_std must be non-negative")
        if any(p <= 0 for p in self.period):
            raise InvalidProfile("period must be positive")
        for ep in self.faults:
            if ep.severity < 1.0:
                raise InvalidProfile(f"fault severity must be >= 1, got {ep.severity}")
            if ep.start < 0 or ep.ramp < 0 or ep.hold < 0:
                raise InvalidProfile("fault start/ramp/hold must be non-negative")
        if _parse_ts(self.start) is None:
            raise InvalidProfile(f"bad start timestamp {self.start!r}")

    @classmethod
    def from_dict(cls, d: dict, min_duration: int = 150) -> SyntheticProfile:
        allowed = {"duration", "baseline", "noise_std", "period", "amplitude", "faults", "seed", "start"}
        extra = set(d) - allowed
        if extra:
            raise InvalidProfile(f"unknown profile key(s) {sorted(extra)}")
        try:
            return cls(
                duration=int(d["duration"]),
                baseline=_per_sensor(d["baseline"], "baseline"),
                noise_std=_per_sensor(d.get("noise_std", 0.0), "noise_std"),
                period=_per_sensor(d.get("period", 1440.0), "period"),
                amplitude=_per_sensor(d.get("amplitude", 0.0), "amplitude"),
                faults=tuple(FaultEpisode.from_dict(f) for f in d.get("faults", [])),
                seed=int(d.get("seed", 0)),
                start=str(d.get("start", "2024-01-01T00:00")),
                min_duration=min_duration,
            )
        except KeyError as exc:
            raise InvalidProfile(f"profile missing key {exc}") from None

    def to_dict(self) -> dict:
        def named(vals: Sequence[float]) -> dict:
            return {s.value: v for s, v in zip(SENSORS, vals)}

        return {
            "duration": self.duration,
            "start": self.start,
            "seed": self.seed,
            "baseline": named(self.baseline),
            "noise_std": named(self.noise_std),
            "period": named(self.period),
            "amplitude": named(self.amplitude),
            "faults": [f.to_dict() for f in self.faults],
        }


def severity_envelope(profile: SyntheticProfile) -> np.ndarray:
    """Per-minute, per-sensor baseline multiplier implied by the fault list."""
    t = np.arange(profile.duration, dtype=np.float64)
    env = np.ones((profile.duration, len(SENSORS)))
    for ep in profile.faults:
        end = ep.start + ep.ramp + ep.hold
        inside = (t >= ep.start) & (t < end)
        if ep.ramp > 0:
            progress = np.clip((t - ep.start) / ep.ramp, 0.0, 1.0)
        else:
            progress = np.ones_like(t)
        mult = np.where(inside, 1.0 + (ep.severity - 1.0) * progress, 1.0)
        for s in ep.sensors:
            # overlapping episodes: the stronger one wins
            env[:, s.index] = np.maximum(env[:, s.index], mult)
    return env


def generate_synthetic(profile: SyntheticProfile) -> TelemetrySeries:
    """Seasonal baseline + gaussian noise, with faults scaling the baseline."""
    profile.validate()
    rng = np.random.default_rng(profile.seed)
    t = np.arange(profile.duration, dtype=np.float64)
    base = np.asarray(profile.baseline)
    amp = np.asarray(profile.amplitude)
    period = np.asarray(profile.period)
    noise_std = np.asarray(profile.noise_std)

    env = severity_envelope(profile)
    seasonal = amp * np.sin(2.0 * np.pi * t[:, None] / period)
    noise = rng.standard_normal((profile.duration, len(SENSORS))) * noise_std
    values = base * env + seasonal + noise

    start = _parse_ts(profile.start)
    ts = start + np.arange(profile.duration).astype("timedelta64[m]")
    return TelemetrySeries(ts, values)
