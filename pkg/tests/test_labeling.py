import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pumpcast.errors import IncompleteThresholds, SeriesTooShort
from pumpcast.labeling import (
    ConditionLabel,
    ThresholdSet,
    binarize,
    compute_adaptive_thresholds,
    empirical_percentile,
    label_series,
    label_value,
)
from pumpcast.telemetry import SENSORS, SensorId, TelemetrySeries

N, EW, CA = ConditionLabel.NORMAL, ConditionLabel.EARLY_WARNING, ConditionLabel.CRITICAL_ALERT
TABLE = ThresholdSet.table_defaults()


def series_of(values):
    values = np.asarray(values, dtype=float)
    ts = np.datetime64("2024-01-01T00:00", "m") + np.arange(len(values)).astype("timedelta64[m]")
    return TelemetrySeries(ts, values)


def test_table_defaults():
    assert TABLE.fixed_limit("vibration") == 5.00
    assert TABLE.adaptive_limit(SensorId.VIBRATION) == 1.65
    assert TABLE.adaptive_limit("flow") == 2668.05
    assert TABLE.fixed_limit("current") == 240.00


def test_percentile_1_to_100():
    # oracle: sort, rank r = 0.95 * 99 = 94.05, interpolate order stats 95 and 96
    v = np.arange(1, 101, dtype=float)
    r = 0.95 * 99
    expected = 95 + (r - 94) * (96 - 95)
    assert empirical_percentile(v, 0.95) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(95.05)


def test_adaptive_constant_series():
    s = series_of(np.tile([2.0, 40.0, 2500.0, 4.0, 200.0], (30, 1)))
    th = compute_adaptive_thresholds(s, 0.37)
    assert th[SensorId.FLOW] == 2500.0
    assert th[SensorId.VIBRATION] == 2.0


def test_adaptive_too_short():
    with pytest.raises(SeriesTooShort):
        compute_adaptive_thresholds(series_of(np.ones((19, 5))))


def test_adaptive_permutation_invariant():
    rng = np.random.default_rng(1)
    vals = rng.normal(size=(200, 5))
    a = compute_adaptive_thresholds(series_of(vals))
    b = compute_adaptive_thresholds(series_of(vals[rng.permutation(200)]))
    assert a == b


def test_label_value_reference_limits():
    assert label_value(5.5, TABLE, "vibration") is CA
    assert label_value(3.0, TABLE, "vibration") is EW
    assert label_value(1.65, TABLE, "vibration") is N
    assert label_value(5.0, TABLE, "vibration") is EW  # fixed limit itself is still EarlyWarning


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(0, 1e6, allow_nan=False))
def test_label_value_monotone(x, dx):
    for s in SENSORS:
        assert label_value(x, TABLE, s) <= label_value(x + dx, TABLE, s)


def test_clamp_adaptive_above_fixed(caplog):
    th = ThresholdSet.build({s: 1.0 for s in SENSORS}, {s: 2.0 for s in SENSORS})
    assert th.adaptive == th.fixed
    assert "clamping" in caplog.text


def test_incomplete_thresholds():
    with pytest.raises(IncompleteThresholds):
        ThresholdSet.build({"vibration": 5.0}, {"vibration": 1.0})


def test_label_series_overall_is_max():
    rows = [
        [1.0, 50.0, 2600.0, 4.0, 225.0],  # all normal
        [3.0, 50.0, 2600.0, 4.0, 225.0],  # one EW
        [3.0, 50.0, 2900.0, 4.0, 225.0],  # EW + CA
    ]
    ls = label_series(series_of(rows), TABLE)
    assert ls.overall.tolist() == [N, EW, CA]
    assert ls.sensor_labels[2].tolist() == [EW, N, CA, N, N]


@settings(max_examples=50)
@given(st.lists(st.lists(st.floats(0, 3000), min_size=5, max_size=5), min_size=1, max_size=30))
def test_overall_dominates_sensor_labels(rows):
    ls = label_series(series_of(rows), TABLE)
    assert np.all(ls.overall >= ls.sensor_labels.max(axis=1))
    assert np.all((ls.sensor_labels == ls.overall[:, None]).any(axis=1))


def test_fixed_only_scheme():
    ls = label_series(series_of([[3.0, 50.0, 2600.0, 4.0, 225.0], [5.5, 50, 2600, 4, 225]]), TABLE, "fixed_only")
    assert ls.overall.tolist() == [N, CA]


def test_binarize():
    assert binarize(N) == 0
    assert binarize(EW) == 1
    assert binarize(CA) == 1
    assert binarize(np.array([0, 1, 2])).tolist() == [0, 1, 1]


def test_threshold_dict_round_trip():
    assert ThresholdSet.from_dict(TABLE.to_dict()) == TABLE
