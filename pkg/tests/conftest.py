import json

import pytest

from pumpcast.pipeline import default_profile_dict

SEVERITY = {"vibration": 1.5, "temperature": 1.2, "flow": 1.04, "pressure": 1.15, "current": 1.05}


def small_profile(duration=2400):
    """The shipped profile shortened to ``duration`` minutes with regular faults."""
    p = default_profile_dict()
    p["duration"] = duration
    sensors = list(SEVERITY)
    p["faults"] = [
        {"start": s, "ramp": 40, "hold": 60, "sensors": [sensors[i % 5]], "severity": SEVERITY[sensors[i % 5]]}
        for i, s in enumerate(range(100, duration - 150, 220))
    ]
    return p


def small_config(**extra):
    cfg = {
        "data": {"synthetic": small_profile()},
        "windows": [20],
        "horizons": [5, 10],
        "forest": {"n_trees": 5, "max_depth": 6},
        "boosted": {"n_rounds": 10},
        "logistic": {"epochs": 50},
        "isolation_forest": {"n_trees": 10},
        "eval": {"n_resamples": 50},
        "ablation": {"window": 20, "variants": ["no_smote", "mean_std_only", "horizon_sweep"]},
    }
    cfg.update(extra)
    return cfg


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(small_config()), encoding="utf-8")
    return path


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
