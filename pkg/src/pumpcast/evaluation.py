"""Splitting, classification metrics, bootstrap intervals and McNemar's test."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import LengthMismatch, TooFewSamples
from .features import LabeledDataset

logger = logging.getLogger(__name__)

METRICS: tuple[str, ...] = ("recall", "precision", "f1", "far", "normal_recall", "auroc", "accuracy")


def split_chronological(
    dataset: LabeledDataset,
    train_fraction: float = 0.75,
    purge_gap: int = 0,
    shuffle_seed: int | None = None,
) -> tuple[LabeledDataset, LabeledDataset]:
    """First ceil(fraction * n) samples train, the rest test.

    ``purge_gap`` drops that many samples from the start of the test side so
    overlapping windows cannot straddle the boundary. ``shuffle_seed`` turns
    this into a random split instead.
    """
    n = len(dataset)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n_train = math.ceil(round(train_fraction * n, 9))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)
        train_idx, test_idx = np.sort(order[:n_train]), np.sort(order[n_train:])
    else:
        train_idx = np.arange(n_train)
        test_idx = np.arange(n_train + purge_gap, n)
    if train_idx.size == 0 or test_idx.size == 0:
        raise TooFewSamples(f"split of {n} samples leaves an empty side")
    train = dataset.take(train_idx, split="train")
    test = dataset.take(test_idx, split="test")
    if np.unique(test.y).size < 2:
        logger.warning("test split holds a single class; AUROC will be undefined")
        test.meta["single_class_test"] = True
    return train, test


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_labels(cls, predicted: np.ndarray, truth: np.ndarray) -> ConfusionMatrix:
        p = np.asarray(predicted).astype(bool)
        t = np.asarray(truth).astype(bool)
        return cls(int((p & t).sum()), int((p & ~t).sum()), int((~p & t).sum()), int((~p & ~t).sum()))

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 else None


def metrics_from_confusion(cm: ConfusionMatrix) -> dict[str, float | None]:
    """Threshold metrics; ``None`` marks a zero denominator."""
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    if recall is None or precision is None:
        f1 = None
    else:
        f1 = _ratio(2 * precision * recall, precision + recall)
        if f1 is None:
            f1 = 0.0
    return {
        "recall": recall,
        "precision": precision,
        "f1": f1,
        "far": _ratio(cm.fp, cm.fp + cm.tn),
        "normal_recall": _ratio(cm.tn, cm.tn + cm.fp),
        "accuracy": _ratio(cm.tp + cm.tn, cm.total),
    }


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    starts = np.flatnonzero(np.concatenate(([True], xs[1:] != xs[:-1])))
    ends = np.concatenate((starts[1:], [xs.size]))
    # positions start..end-1 (0-based) share rank (start + end + 1) / 2
    group_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(xs.size)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def auroc(scores: np.ndarray, truth: np.ndarray) -> float | None:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counted half."""
    truth = np.asarray(truth).astype(bool)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    r = average_ranks(scores)
    u = r[truth].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class MetricReport:
    values: dict[str, float | None]
    n_samples: int
    ci: dict[str, tuple[float, float] | None] = field(default_factory=dict)
    ci_skipped: dict[str, int] = field(default_factory=dict)

    def __getattr__(self, name: str):
        values = self.__dict__.get("values", {})
        if name in values:
            return values[name]
        raise AttributeError(name)

    def as_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "metrics": {
                m: {
                    "value": self.values.get(m),
                    "ci": list(self.ci[m]) if self.ci.get(m) is not None else None,
                    "ci_skipped": self.ci_skipped.get(m, 0),
                }
                for m in self.values
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> MetricReport:
        m = d["metrics"]
        return cls(
            values={k: v["value"] for k, v in m.items()},
            n_samples=int(d["n_samples"]),
            ci={k: tuple(v["ci"]) if v["ci"] is not None else None for k, v in m.items()},
            ci_skipped={k: int(v.get("ci_skipped", 0)) for k, v in m.items()},
        )


def _check_lengths(*arrays) -> None:
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise LengthMismatch(f"inputs differ in length: {[len(a) for a in arrays]}")
    if n == 0:
        raise LengthMismatch("inputs are empty")


def compute_metrics(
    labels: Sequence[int], scores: Sequence[float], truths: Sequence[int]
) -> tuple[MetricReport, ConfusionMatrix]:
    labels, scores, truths = np.asarray(labels), np.asarray(scores, dtype=np.float64), np.asarray(truths)
    _check_lengths(labels, scores, truths)
    cm = ConfusionMatrix.from_labels(labels, truths)
    values = metrics_from_confusion(cm)
    values["auroc"] = auroc(scores, truths)
    return MetricReport({m: values[m] for m in METRICS}, int(truths.size)), cm


def metric_fn(name: str) -> Callable[[np.ndarray, np.ndarray, np.ndarray], float | None]:
    if name == "auroc":
        return lambda lab, sc, tr: auroc(sc, tr)
    if name not in METRICS:
        raise KeyError(f"unknown metric {name!r}")
    return lambda lab, sc, tr: metrics_from_confusion(ConfusionMatrix.from_labels(lab, tr))[name]


def bootstrap_cis(
    labels: Sequence[int],
    scores: Sequence[float],
    truths: Sequence[int],
    metrics: Sequence[str] = METRICS,
    n_resamples: int = 2000,
    seed: int = 0,
    level: float = 0.95,
) -> tuple[dict[str, tuple[float, float] | None], dict[str, int]]:
    """Percentile bootstrap over (prediction, truth) pairs.

    Resamples whose metric is undefined are skipped and counted. Returns
    ``(intervals, skipped_counts)``; an interval is ``None`` when every
    resample was undefined.
    """
    labels, scores, truths = np.asarray(labels), np.asarray(scores, dtype=np.float64), np.asarray(truths)
    _check_lengths(labels, scores, truths)
    n = truths.size
    if n < 10:
        raise TooFewSamples(f"bootstrap needs at least 10 samples, got {n}")
    idx = np.random.default_rng(seed).integers(0, n, size=(n_resamples, n))
    lab = labels[idx].astype(bool)
    tru = truths[idx].astype(bool)
    tp = (lab & tru).sum(axis=1).astype(np.float64)
    fp = (lab & ~tru).sum(axis=1).astype(np.float64)
    fn = (~lab & tru).sum(axis=1).astype(np.float64)
    tn = (~lab & ~tru).sum(axis=1).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        rec = tp / (tp + fn)
        prec = tp / (tp + fp)
        f1 = np.where((tp + fn > 0) & (tp + fp > 0), np.where(tp > 0, 2 * tp / (2 * tp + fp + fn), 0.0), np.nan)
        samples = {
            "recall": rec,
            "precision": prec,
            "f1": f1,
            "far": fp / (fp + tn),
            "normal_recall": tn / (tn + fp),
            "accuracy": (tp + tn) / n,
        }
    if "auroc" in metrics:
        samples["auroc"] = np.array(
            [np.nan if (v := auroc(scores[row], truths[row])) is None else v for row in idx]
        )
    alpha = (1.0 - level) / 2.0
    intervals: dict[str, tuple[float, float] | None] = {}
    skipped: dict[str, int] = {}
    for m in metrics:
        s = samples[m]
        ok = s[~np.isnan(s)]
        skipped[m] = int(s.size - ok.size)
        if ok.size == 0:
            intervals[m] = None
            continue
        lo, hi = np.quantile(ok, [alpha, 1.0 - alpha])
        intervals[m] = (float(lo), float(hi))
    return intervals, skipped


def bootstrap_ci(labels, scores, truths, metric: str, n_resamples: int = 2000, seed: int = 0, level: float = 0.95):
    intervals, _ = bootstrap_cis(labels, scores, truths, (metric,), n_resamples, seed, level)
    return intervals[metric]


def evaluate(
    labels, scores, truths, n_resamples: int = 2000, seed: int = 0, level: float = 0.95
) -> tuple[MetricReport, ConfusionMatrix]:
    """Point metrics plus bootstrap intervals.

    Intervals are widened to include the point estimate when the percentile
    interval misses it, so ``lo <= value <= hi`` always holds.
    """
    report, cm = compute_metrics(labels, scores, truths)
    if report.n_samples >= 10 and n_resamples > 0:
        intervals, skipped = bootstrap_cis(labels, scores, truths, METRICS, n_resamples, seed, level)
        for m, iv in intervals.items():
            v = report.values[m]
            if iv is not None and v is not None:
                iv = (min(iv[0], v), max(iv[1], v))
            report.ci[m] = iv
        report.ci_skipped = skipped
    return report, cm


@dataclass(frozen=True)
class McNemarResult:
    statistic: float
    p_value: float
    b: int
    c: int
    method: str  # "exact", "chi2" or "none"


def binom_cdf_half(k: int, n: int) -> float:
    """P(X <= k) for X ~ Binomial(n, 1/2), exact."""
    return sum(math.comb(n, i) for i in range(k + 1)) / 2**n


def chi2_sf_1df(x: float) -> float:
    return math.erfc(math.sqrt(x / 2.0))


def mcnemar_counts(b: int, c: int, exact_below: int = 25) -> McNemarResult:
    n = b + c
    if n == 0:
        return McNemarResult(0.0, 1.0, b, c, "none")
    if n < exact_below:
        k = min(b, c)
        return McNemarResult(float(k), min(1.0, 2.0 * binom_cdf_half(k, n)), b, c, "exact")
    stat = (abs(b - c) - 1.0) ** 2 / n
    return McNemarResult(stat, chi2_sf_1df(stat), b, c, "chi2")


def mcnemar(preds_a: Sequence[int], preds_b: Sequence[int], truths: Sequence[int]) -> McNemarResult:
    """Paired test on discordant outcomes: b = A right & B wrong, c = A wrong & B right."""
    a, bb, t = np.asarray(preds_a), np.asarray(preds_b), np.asarray(truths)
    if not (a.size == bb.size == t.size):
        raise LengthMismatch(f"inputs differ in length: {a.size}, {bb.size}, {t.size}")
    a_ok = a == t
    b_ok = bb == t
    return mcnemar_counts(int((a_ok & ~b_ok).sum()), int((~a_ok & b_ok).sum()))
