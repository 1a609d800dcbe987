import numpy as np
import pytest

from pumpcast.errors import EmptyAfterCleaning, InvalidProfile, MissingColumn
from pumpcast.telemetry import (
    CSV_HEADER,
    SENSORS,
    FaultEpisode,
    SensorId,
    SyntheticProfile,
    TelemetrySeries,
    generate_synthetic,
    ingest_csv,
    repair_gaps,
    to_csv,
)

HEADER = ",".join(CSV_HEADER)


def write(tmp_path, lines, name="t.csv"):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


def minute_series(n, start="2024-01-01T00:00", values=None):
    ts = np.datetime64(start, "m") + np.arange(n).astype("timedelta64[m]")
    if values is None:
        values = np.tile([1.0, 50.0, 2600.0, 4.0, 225.0], (n, 1))
    return TelemetrySeries(ts, values)


def test_sensor_enum_order_and_units():
    assert [s.value for s in SENSORS] == ["vibration", "temperature", "flow", "pressure", "current"]
    assert SensorId.FLOW.unit == "m³/h"
    assert SensorId.CURRENT.index == 4


def test_ingest_well_formed(tmp_path):
    p = write(tmp_path, [
        HEADER,
        "2024-01-01T00:00,1.0,50,2600,4.1,220",
        "2024-01-01T00:01,1.1,51,2610,4.2,221",
        "2024-01-01T00:02,1.2,52,2620,4.3,222",
    ])
    series, report = ingest_csv(p)
    assert len(series) == 3
    assert report.dropped_invalid == 0
    assert series.record(1)["temperature"] == 51.0


def test_ingest_drops_nan_row(tmp_path):
    p = write(tmp_path, [
        HEADER,
        "2024-01-01T00:00,1.0,50,2600,4.1,220",
        "2024-01-01T00:01,NaN,51,2610,4.2,221",
        "2024-01-01T00:02,1.2,52,2620,4.3,222",
        "not-a-time,1.2,52,2620,4.3,222",
    ])
    series, report = ingest_csv(p)
    assert len(series) == 2
    assert report.dropped_invalid == 2


def test_ingest_sorts_like_stable_sort_oracle(tmp_path):
    rng = np.random.default_rng(3)
    minutes = rng.permutation(40)[:30]
    minutes = np.concatenate([minutes, minutes[:5]])  # duplicates, later rows must win
    rows = []
    for i, m in enumerate(minutes):
        ts = np.datetime64("2024-01-01T00:00", "m") + np.timedelta64(int(m), "m")
        rows.append((str(np.datetime_as_string(ts, unit="m")), float(i)))
    lines = [HEADER] + [f"{t},{v},50,2600,4,225" for t, v in rows]
    series, report = ingest_csv(write(tmp_path, lines))

    # oracle: stable sort of (timestamp, row order), keep the last per timestamp
    oracle: dict[str, float] = {}
    for t, v in sorted(rows, key=lambda r: r[0]):
        oracle[t] = v
    assert report.duplicates_collapsed == 5
    assert [str(np.datetime_as_string(t, unit="m")) for t in series.timestamps] == list(oracle)
    assert series.column("vibration").tolist() == list(oracle.values())


def test_ingest_missing_column(tmp_path):
    p = write(tmp_path, ["timestamp,vibration,temperature,flow,pressure", "2024-01-01T00:00,1,2,3,4"])
    with pytest.raises(MissingColumn):
        ingest_csv(p)


def test_ingest_empty_after_cleaning(tmp_path):
    p = write(tmp_path, [HEADER, "2024-01-01T00:00,inf,50,2600,4,225"])
    with pytest.raises(EmptyAfterCleaning):
        ingest_csv(p)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = minute_series(20, values=rng.normal(size=(20, 5)) * 100)
    path = tmp_path / "out.csv"
    text = to_csv(s, path)
    assert text.splitlines()[0] == HEADER
    assert "\r" not in path.read_bytes().decode()
    back, _ = ingest_csv(path)
    assert back == s


def test_repair_fills_midpoint():
    ts = np.array(["2024-01-01T00:00", "2024-01-01T00:02"], dtype="datetime64[m]")
    vals = np.array([[1.0, 50, 2600, 4, 225], [3.0, 52, 2600, 4, 225]])
    fixed, report = repair_gaps(TelemetrySeries(ts, vals), max_gap=5)
    assert len(fixed) == 3
    assert fixed.values[1, 0] == 2.0
    assert fixed.values[1, 1] == 51.0
    assert report.filled_minutes == 1


def test_repair_no_gaps_is_identity():
    s = minute_series(30)
    fixed, report = repair_gaps(s)
    assert fixed == s
    assert report.filled_minutes == 0


def test_repair_keeps_longest_segment():
    a = minute_series(100)
    b_start = a.timestamps[-1] + np.timedelta64(11, "m")  # 10 missing minutes
    b = minute_series(80, start=str(b_start))
    joined = TelemetrySeries(np.concatenate([a.timestamps, b.timestamps]), np.vstack([a.values, b.values]))
    fixed, report = repair_gaps(joined, max_gap=5)

    # oracle: enumerate contiguous segments, take the longest
    steps = np.diff(joined.timestamps).astype(int)
    cuts = [0] + [i + 1 for i, s in enumerate(steps) if s - 1 > 5] + [len(joined)]
    segs = [(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1)]
    lo, hi = max(segs, key=lambda s: s[1] - s[0])
    assert fixed == joined.slice(lo, hi)
    assert len(fixed) == 100
    assert len(report.discarded_spans) == 1


def test_repair_idempotent_and_contiguous():
    rng = np.random.default_rng(7)
    minutes = np.sort(rng.choice(500, size=300, replace=False))
    ts = np.datetime64("2024-01-01T00:00", "m") + minutes.astype("timedelta64[m]")
    s = TelemetrySeries(ts, rng.normal(size=(300, 5)))
    once, _ = repair_gaps(s, max_gap=5)
    assert once.is_contiguous()
    twice, report = repair_gaps(once, max_gap=5)
    assert twice == once
    assert report.filled_minutes == 0


def test_repair_single_record():
    s = minute_series(1)
    assert repair_gaps(s)[0] is s


def test_series_rejects_non_increasing():
    ts = np.array(["2024-01-01T00:01", "2024-01-01T00:00"], dtype="datetime64[m]")
    with pytest.raises(ValueError):
        TelemetrySeries(ts, np.ones((2, 5)))


def profile(**kw):
    d = dict(
        duration=400,
        baseline=(1.0, 50.0, 2600.0, 4.0, 225.0),
        noise_std=(0.0,) * 5,
        period=(1440.0,) * 5,
        amplitude=(0.0,) * 5,
        seed=11,
        min_duration=10,
    )
    d.update(kw)
    return SyntheticProfile(**d)


def test_synthetic_constant_without_noise():
    s = generate_synthetic(profile())
    assert np.all(s.values == np.array([1.0, 50.0, 2600.0, 4.0, 225.0]))
    assert s.is_contiguous()


def test_synthetic_deterministic_bytes():
    p = profile(noise_std=(0.1, 1.0, 5.0, 0.05, 1.0), amplitude=(0.1, 2.0, 10.0, 0.1, 1.0))
    assert to_csv(generate_synthetic(p)) == to_csv(generate_synthetic(p))
    other = profile(noise_std=(0.1, 1.0, 5.0, 0.05, 1.0), amplitude=(0.1, 2.0, 10.0, 0.1, 1.0), seed=12)
    assert to_csv(generate_synthetic(p)) != to_csv(generate_synthetic(other))


def test_synthetic_fault_doubles_mean():
    noise = 0.2
    ep = FaultEpisode(start=100, ramp=50, hold=200, sensors=(SensorId.VIBRATION,), severity=2.0)
    p = profile(duration=400, noise_std=(noise, 0, 0, 0, 0), faults=(ep,))
    s = generate_synthetic(p)
    plateau = s.column("vibration")[150:350]
    # oracle: direct average, tolerance three standard errors of the mean
    assert abs(plateau.mean() - 2.0) < 3 * noise / np.sqrt(plateau.size)
    assert np.all(s.column("temperature") == 50.0)


def test_invalid_profile():
    with pytest.raises(InvalidProfile):
        profile(faults=(FaultEpisode(0, 1, 1, (SensorId.FLOW,), 0.5),))
    with pytest.raises(InvalidProfile):
        profile(duration=5)
    with pytest.raises(InvalidProfile):
        SyntheticProfile.from_dict({"duration": 300, "baseline": 1.0, "bogus": 1}, min_duration=10)


def test_profile_dict_round_trip():
    ep = FaultEpisode(10, 5, 5, (SensorId.FLOW, SensorId.PRESSURE), 1.1)
    p = profile(faults=(ep,))
    q = SyntheticProfile.from_dict(p.to_dict(), min_duration=10)
    assert to_csv(generate_synthetic(p)) == to_csv(generate_synthetic(q))
