"""Command-line driver: one subcommand per pipeline stage plus the full grid.

Every subcommand accepts the same global options (``--config``, ``--set``,
``--out``, ``--jobs``, ``--print-config``). Failures print one JSON object on
stderr and exit with 2 (config), 3 (data) or 1 (anything else).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import PipelineConfig, derive_seed, dump_config, load_config
from .errors import ConfigError, DataError, PumpcastError
from .evaluation import evaluate
from .experiments import (
    RunSpec,
    base_spec,
    canonical_plan,
    emit_report,
    load_results,
    pairwise_mcnemar,
    prepare_datasets,
    run_ablations,
    run_grid,
    summary_rows,
    train_model,
)
from .features import WindowConfig, build_dataset
from .labeling import ConditionLabel, ThresholdSet, label_series
from .models import dumps_model, load_model
from .pipeline import load_series, resolve_thresholds
from .telemetry import SENSORS, TelemetrySeries, ingest_csv, repair_gaps, to_csv

logger = logging.getLogger("pumpcast")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


def _series(cfg: PipelineConfig, input_path: str | None) -> TelemetrySeries:
    if input_path is None:
        return load_series(cfg)
    series, report = ingest_csv(input_path)
    logger.info("read %d rows from %s (%d dropped)", report.rows_read, input_path, report.dropped_invalid)
    return repair_gaps(series, cfg.data.max_gap)[0]


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _model_spec(cfg: PipelineConfig, args) -> RunSpec:
    window = args.window if args.window is not None else cfg.windows[0]
    horizon = args.horizon if args.horizon is not None else cfg.horizons[0]
    return base_spec(cfg, args.model, window, horizon)


# ---------------------------------------------------------------- subcommands


def cmd_generate(cfg: PipelineConfig, args) -> None:
    out = Path(args.output or Path(cfg.output_dir) / "telemetry.csv")
    series = load_series(replace(cfg, data=replace(cfg.data, source="synthetic")))
    out.parent.mkdir(parents=True, exist_ok=True)
    to_csv(series, out)
    _emit({"command": "generate", "rows": len(series), "output": str(out)})


def cmd_label(cfg: PipelineConfig, args) -> None:
    series = _series(cfg, args.input)
    thresholds = resolve_thresholds(cfg, series)
    labeled = label_series(series, thresholds, args.scheme)
    names = [ConditionLabel(i).display for i in range(3)]
    lines = ["timestamp," + ",".join(s.value for s in SENSORS) + ",overall"]
    for ts, per_sensor, overall in zip(series.timestamps, labeled.sensor_labels, labeled.overall):
        cells = [names[v] for v in per_sensor] + [names[overall]]
        lines.append(str(np.datetime_as_string(ts, unit="m")) + "," + ",".join(cells))
    out = Path(args.output or Path(cfg.output_dir) / "labels.csv")
    _write_text(out, "\n".join(lines) + "\n")
    _write_text(out.with_name("thresholds.json"), json.dumps(thresholds.to_dict(), indent=2, sort_keys=True) + "\n")
    counts = {names[i]: int((labeled.overall == i).sum()) for i in range(3)}
    _emit({"command": "label", "rows": len(series), "counts": counts, "output": str(out)})


def cmd_features(cfg: PipelineConfig, args) -> None:
    series = _series(cfg, args.input)
    thresholds = resolve_thresholds(cfg, series)
    window = args.window if args.window is not None else cfg.windows[0]
    horizon = args.horizon if args.horizon is not None else cfg.horizons[0]
    ds = build_dataset(
        label_series(series, thresholds),
        WindowConfig(window, horizon, cfg.stride, cfg.exclude_abnormal_history),
    )
    out = Path(args.output or Path(cfg.output_dir) / f"features_L{window}_H{horizon}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out)
    _emit({"command": "features", "samples": len(ds), "positives": ds.n_positive, "output": str(out)})


def cmd_train(cfg: PipelineConfig, args) -> None:
    series = _series(cfg, args.input)
    thresholds = resolve_thresholds(cfg, series)
    spec = _model_spec(cfg, args)
    train, _, n_before = prepare_datasets(spec, label_series(series, thresholds, spec.label_scheme))
    model = train_model(spec, train, thresholds)
    out = Path(args.output or Path(cfg.output_dir) / "models" / spec.run_id)
    _write_text(out / "model.json", dumps_model(model))
    record = {"run_id": spec.run_id, "spec": spec.to_dict(), "thresholds": thresholds.to_dict()}
    _write_text(out / "run.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    _emit({"command": "train", "run_id": spec.run_id, "n_train": n_before, "n_train_balanced": len(train), "output": str(out)})


def cmd_evaluate(cfg: PipelineConfig, args) -> None:
    run_dir = Path(args.run_dir)
    try:
        record = json.loads((run_dir / "run.json").read_text(encoding="utf-8"))
        model = load_model(run_dir / "model.json")
    except FileNotFoundError as exc:
        raise DataError(f"missing training artifact: {exc.filename}") from None
    spec = RunSpec.from_dict(record["spec"])
    thresholds = ThresholdSet.from_dict(record["thresholds"])
    series = _series(cfg, args.input)
    _, test, _ = prepare_datasets(spec, label_series(series, thresholds, spec.label_scheme))
    labels, scores = model.predict(test)
    report, cm = evaluate(labels, scores, test.y, spec.n_resamples, derive_seed(spec.seed, "bootstrap"), spec.ci_level)
    payload = {"run_id": spec.run_id, "confusion": cm.as_dict(), "n_test": len(test), **report.as_dict()}
    out = Path(args.output or run_dir / "metrics.json")
    _write_text(out, json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")
    _emit({"command": "evaluate", "run_id": spec.run_id, "recall": report.values["recall"], "output": str(out)})


def cmd_grid(cfg: PipelineConfig, args) -> None:
    start = time.perf_counter()
    series = load_series(cfg)
    thresholds = resolve_thresholds(cfg, series)
    plan = canonical_plan(cfg)
    results, pairwise = run_grid(plan, series, thresholds, args.jobs)
    out = Path(cfg.output_dir)
    emit_report(results, out, pairwise)
    _write_text(out / "config.json", dump_config(cfg))
    failed = [r.spec.run_id for r in results if not r.ok]
    _emit({
        "command": "grid",
        "runs": len(results),
        "failed": failed,
        "seconds": round(time.perf_counter() - start, 1),
        "output": str(out),
    })


def cmd_ablate(cfg: PipelineConfig, args) -> None:
    series = load_series(cfg)
    thresholds = resolve_thresholds(cfg, series)
    base, variants, rows = run_ablations(cfg, series, thresholds, args.jobs)
    out = Path(args.output or Path(cfg.output_dir) / "ablation")
    emit_report([base] + variants, out, ablations=rows)
    _write_text(out / "config.json", dump_config(cfg))
    _emit({"command": "ablate", "variants": [r.variant for r in rows], "output": str(out)})


def cmd_report(cfg: PipelineConfig, args) -> None:
    src = Path(args.run_dir or cfg.output_dir)
    if not (src / "runs").is_dir():
        raise DataError(f"no run directory under {src}")
    results = load_results(src)
    emit_report(results, src, pairwise_mcnemar(results))
    header, rows = summary_rows(results)
    widths = [max(len(h), 12) for h in header]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        cells = [f"{v:.3f}" if isinstance(v, float) else ("-" if v is None else str(v)) for v in row]
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))


COMMANDS = {
    "generate": cmd_generate,
    "label": cmd_label,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "grid": cmd_grid,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults apply to missing keys)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key, e.g. --set forest.n_trees=50 (repeatable)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="global seed (overrides seed)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for grid/ablate")
    common.add_argument("--shuffle-split", action="store_true", help="shuffled instead of chronological split")
    common.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pumpcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write synthetic telemetry CSV")
    p.add_argument("-o", "--output")

    p = sub.add_parser("label", parents=[common], help="label every record Normal/EarlyWarning/CriticalAlert")
    p.add_argument("input", nargs="?", help="telemetry CSV (default: config data source)")
    p.add_argument("--scheme", choices=("dual", "fixed_only"), default="dual")
    p.add_argument("-o", "--output")

    p = sub.add_parser("features", parents=[common], help="write the windowed feature dataset")
    p.add_argument("input", nargs="?")
    p.add_argument("--window", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("-o", "--output")

    p = sub.add_parser("train", parents=[common], help="train one model on the training split")
    p.add_argument("input", nargs="?")
    p.add_argument("--model", default="random_forest")
    p.add_argument("--window", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("-o", "--output", help="model directory")

    p = sub.add_parser("evaluate", parents=[common], help="score a trained model on its test split")
    p.add_argument("run_dir", help="directory written by 'train'")
    p.add_argument("--input", help="telemetry CSV (default: config data source)")
    p.add_argument("-o", "--output")

    sub.add_parser("grid", parents=[common], help="every (window, horizon) cell x every model")

    p = sub.add_parser("ablate", parents=[common], help="ablation variants against one base run")
    p.add_argument("-o", "--output")

    p = sub.add_parser("report", parents=[common], help="rebuild summary tables from a grid directory")
    p.add_argument("run_dir", nargs="?")
    return parser


def resolve_config(args) -> PipelineConfig:
    overrides = list(args.overrides)
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.shuffle_split:
        overrides.append("split.shuffle=true")
    cfg = load_config(args.config, overrides)
    if args.command == "train" and args.model not in cfg.models + cfg.baselines:
        raise ConfigError(f"unknown or disabled model {args.model!r}", key="models")
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1", key="jobs")
    return cfg


def _fail(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError) and exc.key is not None:
        payload["key"] = exc.key
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.print_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except DataError as exc:
        return _fail(exc, EXIT_DATA)
    except (FileNotFoundError, IsADirectoryError) as exc:
        return _fail(DataError(f"{exc.strerror}: {exc.filename}"), EXIT_DATA)
    except PumpcastError as exc:
        return _fail(exc, EXIT_RUNTIME)
    except Exception as exc:  # noqa: BLE001 - report unexpected failures in the same format
        logger.debug("unexpected failure", exc_info=True)
        return _fail(exc, EXIT_RUNTIME)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
