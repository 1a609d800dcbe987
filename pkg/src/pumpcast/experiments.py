"""Experiment grid, ablations and report files.

A run is fully described by its :class:`RunSpec` plus the resolved
thresholds; both are written next to its results so any run can be repeated
from its own record.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .balance import SmoteConfig, smote
from .config import BASELINE_NAMES, MODEL_NAMES, PipelineConfig, derive_seed
from .errors import ProvenanceViolation, PumpcastError
from .evaluation import METRICS, MetricReport, evaluate, mcnemar, split_chronological
from .features import WindowConfig, build_dataset, select_features
from .labeling import LabeledSeries, ThresholdSet, label_series
from .models import (
    BoostConfig,
    ForestConfig,
    IsolationConfig,
    LogisticConfig,
    MajorityBaseline,
    PersistenceBaseline,
    RuleBaseline,
    dumps_model,
    feature_importance,
    train_boosted,
    train_forest,
    train_isolation_forest,
    train_logistic,
)
from .telemetry import TelemetrySeries

logger = logging.getLogger(__name__)

MODEL_ORDER = MODEL_NAMES + BASELINE_NAMES
DISPLAY = {"random_forest": "RandomForest", "boosted": "Boosted"}


@dataclass(frozen=True)
class RunSpec:
    model: str
    window: int
    horizon: int
    seed: int
    stride: int = 1
    smote: bool = True
    k_neighbors: int = 5
    target_ratio: float = 1.0
    standardize_knn: bool = True
    stats: tuple[str, ...] | None = None
    sensors: tuple[str, ...] | None = None
    label_scheme: str = "dual"
    exclude_abnormal_history: bool = False
    train_fraction: float = 0.75
    shuffle_split: bool = False
    purge_gap: int = 0
    n_resamples: int = 2000
    ci_level: float = 0.95
    params: tuple[tuple[str, object], ...] = ()
    variant: str = "base"

    @property
    def run_id(self) -> str:
        rid = f"{self.model}_L{self.window}_H{self.horizon}"
        return rid if self.variant == "base" else f"{rid}__{self.variant}"

    @property
    def cell(self) -> tuple[int, int]:
        return (self.window, self.horizon)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = dict(self.params)
        d["stats"] = list(self.stats) if self.stats is not None else None
        d["sensors"] = list(self.sensors) if self.sensors is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunSpec:
        d = dict(d)
        d["params"] = tuple(sorted(d.get("params", {}).items()))
        for key in ("stats", "sensors"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class ExperimentPlan:
    runs: list[RunSpec]

    def __len__(self) -> int:
        return len(self.runs)


def model_params(cfg: PipelineConfig, model: str) -> tuple[tuple[str, object], ...]:
    section = {
        "random_forest": cfg.forest,
        "boosted": cfg.boosted,
        "logistic_regression": cfg.logistic,
        "isolation_forest": cfg.isolation_forest,
    }.get(model)
    params = asdict(section) if section is not None else {}
    if model in ("random_forest", "boosted", "isolation_forest"):
        params["seed"] = derive_seed(cfg.seed, model)
    return tuple(sorted(params.items()))


def base_spec(cfg: PipelineConfig, model: str, window: int, horizon: int) -> RunSpec:
    return RunSpec(
        model=model,
        window=window,
        horizon=horizon,
        seed=cfg.seed,
        stride=cfg.stride,
        smote=cfg.smote.enabled,
        k_neighbors=cfg.smote.k_neighbors,
        target_ratio=cfg.smote.target_ratio,
        standardize_knn=cfg.smote.standardize_before_knn,
        exclude_abnormal_history=cfg.exclude_abnormal_history,
        train_fraction=cfg.split.train_fraction,
        shuffle_split=cfg.split.shuffle,
        purge_gap=cfg.split.purge_gap,
        n_resamples=cfg.eval.n_resamples,
        ci_level=cfg.eval.ci_level,
        params=model_params(cfg, model),
    )


def canonical_plan(cfg: PipelineConfig) -> ExperimentPlan:
    """Every (window, horizon) cell x every configured model and baseline."""
    models = [m for m in MODEL_ORDER if m in cfg.models or m in cfg.baselines]
    return ExperimentPlan(
        [base_spec(cfg, m, w, h) for w in cfg.windows for h in cfg.horizons for m in models]
    )


@dataclass
class RunResult:
    spec: RunSpec
    thresholds: ThresholdSet
    report: MetricReport | None = None
    confusion: dict | None = None
    n_train: int = 0
    n_train_balanced: int = 0
    n_test: int = 0
    n_features: int = 0
    anchors: np.ndarray | None = None
    truth: np.ndarray | None = None
    labels: np.ndarray | None = None
    scores: np.ndarray | None = None
    model_text: str | None = None
    importance: list[tuple[str, float]] | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def record(self) -> dict:
        return {
            "run_id": self.spec.run_id,
            "spec": self.spec.to_dict(),
            "thresholds": self.thresholds.to_dict(),
            "code_version": __version__,
        }

    def metrics_payload(self) -> dict:
        payload = {
            "run_id": self.spec.run_id,
            "record": self.record(),
            "error": self.error,
        }
        if self.ok:
            payload.update(
                {
                    "confusion": self.confusion,
                    "n_train": self.n_train,
                    "n_train_balanced": self.n_train_balanced,
                    "n_test": self.n_test,
                    "n_features": self.n_features,
                    **self.report.as_dict(),
                }
            )
        return payload


def train_model(spec: RunSpec, train, thresholds: ThresholdSet):
    p = dict(spec.params)
    if spec.model == "random_forest":
        return train_forest(train, ForestConfig(**p))
    if spec.model == "boosted":
        return train_boosted(train, BoostConfig(**p))
    if spec.model == "logistic_regression":
        return train_logistic(train, LogisticConfig(**p))
    if spec.model == "isolation_forest":
        return train_isolation_forest(train, IsolationConfig(**p))
    if spec.model == "fixed_rule":
        return RuleBaseline("fixed", thresholds)
    if spec.model == "adaptive_rule":
        return RuleBaseline("adaptive", thresholds)
    if spec.model == "persistence":
        return PersistenceBaseline()
    if spec.model == "majority":
        return MajorityBaseline()
    raise ValueError(f"unknown model {spec.model!r}")


def prepare_datasets(spec: RunSpec, labeled: LabeledSeries):
    """Windows, chronological split and optional SMOTE for one run.

    Returns ``(train, test, n_train_before_smote)``.
    """
    ds = build_dataset(labeled, WindowConfig(spec.window, spec.horizon, spec.stride, spec.exclude_abnormal_history))
    if spec.stats is not None or spec.sensors is not None:
        ds = select_features(ds, spec.stats, spec.sensors)
    shuffle_seed = derive_seed(spec.seed, "split") if spec.shuffle_split else None
    train, test = split_chronological(ds, spec.train_fraction, spec.purge_gap, shuffle_seed)
    n_train = len(train)
    if spec.smote:
        cfg = SmoteConfig(spec.k_neighbors, spec.target_ratio, derive_seed(spec.seed, "smote"), spec.standardize_knn)
        train = smote(train, cfg)
    if test.split != "test" or train.split != "train" or test.synthetic.any():
        raise ProvenanceViolation(f"{spec.run_id}: train/test provenance tags violated")
    return train, test, n_train


def execute_run(spec: RunSpec, series: TelemetrySeries, thresholds: ThresholdSet, _cache: dict | None = None) -> RunResult:
    """label -> windows -> split -> (SMOTE) -> train -> predict -> metrics.

    Pipeline errors are captured in ``RunResult.error`` rather than raised.
    """
    result = RunResult(spec, thresholds)
    try:
        if _cache is not None and spec.label_scheme in _cache:
            labeled = _cache[spec.label_scheme]
        else:
            labeled = label_series(series, thresholds, spec.label_scheme)
            if _cache is not None:
                _cache[spec.label_scheme] = labeled
        train, test, result.n_train = prepare_datasets(spec, labeled)
        result.n_train_balanced = len(train)

        model = train_model(spec, train, thresholds)
        labels, scores = model.predict(test)
        report, cm = evaluate(
            labels, scores, test.y, spec.n_resamples, derive_seed(spec.seed, "bootstrap"), spec.ci_level
        )
        result.report = report
        result.confusion = cm.as_dict()
        result.n_test = len(test)
        result.n_features = len(test.feature_names)
        result.anchors = test.anchors
        result.truth = test.y.astype(np.int8)
        result.labels = labels.astype(np.int8)
        result.scores = np.asarray(scores, dtype=np.float64)
        result.model_text = dumps_model(model)
        if spec.model == "random_forest":
            result.importance = feature_importance(model)
    except ProvenanceViolation:
        raise
    except (PumpcastError, ValueError) as exc:
        logger.warning("run %s failed: %s", spec.run_id, exc)
        result.error = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # noqa: BLE001 - one broken cell must not stop the grid
        logger.error("run %s crashed: %s", spec.run_id, traceback.format_exc())
        result.error = f"{type(exc).__name__}: {exc}"
    return result


_WORKER: dict = {}


def _init_worker(series: TelemetrySeries, thresholds: ThresholdSet) -> None:
    _WORKER.clear()
    _WORKER.update(series=series, thresholds=thresholds, cache={})


def _run_in_worker(spec: RunSpec) -> RunResult:
    return execute_run(spec, _WORKER["series"], _WORKER["thresholds"], _WORKER["cache"])


def execute_plan(plan: ExperimentPlan, series: TelemetrySeries, thresholds: ThresholdSet, jobs: int = 1) -> list[RunResult]:
    """Run every spec; results come back sorted by run id whatever the pool width."""
    if jobs <= 1 or len(plan) <= 1:
        cache: dict = {}
        results = [execute_run(s, series, thresholds, cache) for s in plan.runs]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(series, thresholds)) as pool:
            results = list(pool.map(_run_in_worker, plan.runs))
    return sorted(results, key=lambda r: r.spec.run_id)


@dataclass(frozen=True)
class PairwiseTest:
    cell: tuple[int, int]
    model_a: str
    model_b: str
    statistic: float
    p_value: float
    b: int
    c: int
    method: str


def pairwise_mcnemar(results: list[RunResult]) -> list[PairwiseTest]:
    """McNemar between every pair of models sharing a (window, horizon) test set."""
    by_cell: dict[tuple[int, int], list[RunResult]] = {}
    for r in results:
        if r.ok and r.spec.variant == "base":
            by_cell.setdefault(r.spec.cell, []).append(r)
    out = []
    for cell in sorted(by_cell):
        runs = sorted(by_cell[cell], key=lambda r: MODEL_ORDER.index(r.spec.model))
        for i, a in enumerate(runs):
            for b in runs[i + 1 :]:
                if not np.array_equal(a.anchors, b.anchors):
                    continue
                t = mcnemar(a.labels, b.labels, a.truth)
                out.append(PairwiseTest(cell, a.spec.model, b.spec.model, t.statistic, t.p_value, t.b, t.c, t.method))
    return out


def run_grid(
    plan: ExperimentPlan, series: TelemetrySeries, thresholds: ThresholdSet, jobs: int = 1
) -> tuple[list[RunResult], list[PairwiseTest]]:
    results = execute_plan(plan, series, thresholds, jobs)
    return results, pairwise_mcnemar(results)


def ablation_specs(cfg: PipelineConfig) -> tuple[RunSpec, list[RunSpec]]:
    ab = cfg.ablation
    base = base_spec(cfg, ab.model, ab.window, ab.horizon)
    variants: list[RunSpec] = []
    for tag in ab.variants:
        if tag == "no_smote":
            variants.append(replace(base, smote=False, variant=tag))
        elif tag == "mean_std_only":
            variants.append(replace(base, stats=("mean", "std"), variant=tag))
        elif tag == "sensor_subset":
            variants.append(replace(base, sensors=tuple(ab.sensor_subset), variant=tag))
        elif tag == "simplified_labels":
            variants.append(replace(base, label_scheme="fixed_only", variant=tag))
        elif tag == "window_sweep":
            for w in sorted(set(cfg.windows) | {60, 120}):
                if w != base.window:
                    variants.append(replace(base, window=w, variant=f"{tag}_L{w}"))
        elif tag == "horizon_sweep":
            for h in sorted(set(cfg.horizons) | {5, 15, 30}):
                if h != base.horizon:
                    variants.append(replace(base, horizon=h, variant=f"{tag}_H{h}"))
        elif tag == "no_standardize_knn":
            variants.append(replace(base, standardize_knn=False, variant=tag))
        elif tag == "exclude_abnormal_history":
            variants.append(replace(base, exclude_abnormal_history=True, variant=tag))
    return base, variants


@dataclass
class AblationRow:
    variant: str
    run_id: str
    n_features: int
    base: dict
    value: dict
    mcnemar_b: int | None = None
    mcnemar_c: int | None = None
    mcnemar_p: float | None = None
    n_paired: int = 0
    error: str | None = None

    def delta(self, metric: str) -> float | None:
        a, b = self.base.get(metric), self.value.get(metric)
        return None if a is None or b is None else b - a


def compare_to_base(base: RunResult, variant: RunResult) -> AblationRow:
    row = AblationRow(
        variant=variant.spec.variant,
        run_id=variant.spec.run_id,
        n_features=variant.n_features,
        base=dict(base.report.values) if base.ok else {},
        value=dict(variant.report.values) if variant.ok else {},
        error=variant.error,
    )
    if base.ok and variant.ok:
        # pair on shared anchor timestamps; each run is scored against its own truth
        common, ia, ib = np.intersect1d(base.anchors, variant.anchors, return_indices=True)
        row.n_paired = int(common.size)
        if common.size:
            t = mcnemar(
                (base.labels[ia] == base.truth[ia]).astype(np.int8),
                (variant.labels[ib] == variant.truth[ib]).astype(np.int8),
                np.ones(common.size, dtype=np.int8),
            )
            row.mcnemar_b, row.mcnemar_c, row.mcnemar_p = t.b, t.c, t.p_value
    return row


def run_ablations(
    cfg: PipelineConfig, series: TelemetrySeries, thresholds: ThresholdSet, jobs: int = 1
) -> tuple[RunResult, list[RunResult], list[AblationRow]]:
    base, variants = ablation_specs(cfg)
    results = execute_plan(ExperimentPlan([base] + variants), series, thresholds, jobs)
    by_id = {r.spec.run_id: r for r in results}
    base_result = by_id[base.run_id]
    var_results = [by_id[v.run_id] for v in variants]
    return base_result, var_results, [compare_to_base(base_result, v) for v in var_results]


# ---------------------------------------------------------------- reporting


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def summary_rows(results: list[RunResult]) -> tuple[list[str], list[list]]:
    """Recall table: one row per (model, window), EarlyWarning and Normal recall per horizon."""
    base = [r for r in results if r.spec.variant == "base"]
    horizons = sorted({r.spec.horizon for r in base})
    header = ["model", "window"]
    for h in horizons:
        header += [f"earlywarning_recall_{h}min", f"normal_recall_{h}min"]
    keys = sorted(
        {(r.spec.model, r.spec.window) for r in base},
        key=lambda k: (k[0] in BASELINE_NAMES, k[1], MODEL_ORDER.index(k[0]) if k[0] in MODEL_ORDER else 99, k[0]),
    )
    index = {(r.spec.model, r.spec.window, r.spec.horizon): r for r in base}
    rows = []
    for model, window in keys:
        row: list = [DISPLAY.get(model, model), window]
        for h in horizons:
            r = index.get((model, window, h))
            if r is None or not r.ok:
                row += [None, None]
            else:
                row += [r.report.values["recall"], r.report.values["normal_recall"]]
        rows.append(row)
    return header, rows


def emit_report(
    results: list[RunResult],
    out_dir: str | Path,
    pairwise: list[PairwiseTest] | None = None,
    ablations: list[AblationRow] | None = None,
) -> list[Path]:
    """Write per-run artifacts and the top-level summary files; returns written paths."""
    if not results:
        raise ValueError("emit_report needs at least one run result")
    out = Path(out_dir)
    written: list[Path] = []

    def put(rel: str, text: str) -> None:
        p = out / rel
        _write(p, text)
        written.append(p)

    long_rows, conf_rows, imp_rows, err_rows = [], [], [], []
    for r in sorted(results, key=lambda r: r.spec.run_id):
        rid = r.spec.run_id
        put(f"runs/{rid}/config.json", _json(r.record()))
        put(f"runs/{rid}/metrics.json", _json(r.metrics_payload()))
        if not r.ok:
            err_rows.append([rid, r.error])
            continue
        cm = r.confusion
        put(f"runs/{rid}/confusion.csv", _csv_text(
            ["actual", "predicted_earlywarning", "predicted_normal"],
            [["EarlyWarning", cm["tp"], cm["fn"]], ["Normal", cm["fp"], cm["tn"]]],
        ))
        put(f"runs/{rid}/predictions.csv", _csv_text(
            ["anchor_ts", "truth", "label", "score"],
            [
                [str(np.datetime_as_string(a, unit="m")), int(t), int(l), float(s)]
                for a, t, l, s in zip(r.anchors, r.truth, r.labels, r.scores)
            ],
        ))
        put(f"runs/{rid}/model.json", r.model_text)
        if r.importance is not None:
            put(f"runs/{rid}/importance.csv", _csv_text(
                ["rank", "feature", "importance"],
                [[i + 1, f, v] for i, (f, v) in enumerate(r.importance)],
            ))
            imp_rows += [[rid, r.spec.window, r.spec.horizon, i + 1, f, v] for i, (f, v) in enumerate(r.importance)]
        conf_rows.append([rid, r.spec.model, r.spec.variant, r.spec.window, r.spec.horizon, cm["tp"], cm["fn"], cm["fp"], cm["tn"]])
        for m in METRICS:
            ci = r.report.ci.get(m)
            long_rows.append([
                rid, r.spec.model, r.spec.variant, r.spec.window, r.spec.horizon, m,
                r.report.values.get(m), ci[0] if ci else None, ci[1] if ci else None,
            ])

    header, rows = summary_rows(results)
    if rows:
        put("summary.csv", _csv_text(header, rows))
    put("metrics_long.csv", _csv_text(
        ["run_id", "model", "variant", "window", "horizon", "metric", "value", "ci_lo", "ci_hi"], long_rows
    ))
    put("confusion_matrices.csv", _csv_text(
        ["run_id", "model", "variant", "window", "horizon", "tp", "fn", "fp", "tn"], conf_rows
    ))
    if imp_rows:
        put("importance.csv", _csv_text(["run_id", "window", "horizon", "rank", "feature", "importance"], imp_rows))
    if pairwise is not None:
        put("mcnemar.csv", _csv_text(
            ["window", "horizon", "model_a", "model_b", "b", "c", "statistic", "p_value", "method"],
            [[t.cell[0], t.cell[1], t.model_a, t.model_b, t.b, t.c, t.statistic, t.p_value, t.method] for t in pairwise],
        ))
    if ablations is not None:
        header = ["variant", "run_id", "n_features"]
        for m in METRICS:
            header += [f"{m}_base", f"{m}_variant", f"{m}_delta"]
        header += ["mcnemar_b", "mcnemar_c", "mcnemar_p", "n_paired", "error"]
        rows = []
        for a in ablations:
            row: list = [a.variant, a.run_id, a.n_features]
            for m in METRICS:
                row += [a.base.get(m), a.value.get(m), a.delta(m)]
            row += [a.mcnemar_b, a.mcnemar_c, a.mcnemar_p, a.n_paired, a.error]
            rows.append(row)
        put("ablations.csv", _csv_text(header, rows))
    if err_rows:
        put("errors.csv", _csv_text(["run_id", "error"], err_rows))
    return written


def load_results(out_dir: str | Path) -> list[RunResult]:
    """Rebuild run results (metrics, predictions, model text) from a run directory."""
    results = []
    for run_dir in sorted((Path(out_dir) / "runs").iterdir()):
        payload = json.loads((run_dir / "metrics.json").read_text(encoding="utf-8"))
        rec = payload["record"]
        r = RunResult(RunSpec.from_dict(rec["spec"]), ThresholdSet.from_dict(rec["thresholds"]))
        r.error = payload.get("error")
        if r.ok:
            r.report = MetricReport.from_dict(payload)
            r.confusion = payload["confusion"]
            r.n_train, r.n_test = payload["n_train"], payload["n_test"]
            r.n_train_balanced, r.n_features = payload["n_train_balanced"], payload["n_features"]
            with open(run_dir / "predictions.csv", encoding="utf-8") as fh:
                rows = list(csv.DictReader(fh))
            r.anchors = np.array([row["anchor_ts"] for row in rows], dtype="datetime64[m]")
            r.truth = np.array([int(row["truth"]) for row in rows], dtype=np.int8)
            r.labels = np.array([int(row["label"]) for row in rows], dtype=np.int8)
            r.scores = np.array([float(row["score"]) for row in rows])
            r.model_text = (run_dir / "model.json").read_text(encoding="utf-8")
            imp = run_dir / "importance.csv"
            if imp.exists():
                with open(imp, encoding="utf-8") as fh:
                    r.importance = [(row["feature"], float(row["importance"])) for row in csv.DictReader(fh)]
        results.append(r)
    return results
