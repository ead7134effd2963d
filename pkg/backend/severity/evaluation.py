"""
Held-out classification metrics, ROC curves and model comparison reports.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy import stats

from . import artifacts, errors
from .datamodel import encode_design
from .glm import GlmFit, predict_glm
from .mixed import PREDICTION_MODES, predict_mixed
from .reporting import model_summary

logger = logging.getLogger(__name__)

THRESHOLD_MODES = ("fixed", "prevalence")


def _arrays(labels, scores):
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise errors.LengthMismatch(
            f"labels and scores differ in shape: {labels.shape} vs {scores.shape}"
        )
    if labels.size == 0:
        raise errors.EmptyInput("No rows to evaluate")
    if not np.all((labels == 0) | (labels == 1)):
        raise errors.InvalidLabels("Labels must be 0 or 1")
    return labels.astype(int), scores


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


def confusion(labels, scores, threshold=0.5):
    """Predicted positive iff score >= threshold"""
    labels, scores = _arrays(labels, scores)
    predicted = scores >= threshold
    positive = labels == 1
    return ConfusionCounts(
        tp=int(np.sum(predicted & positive)),
        fp=int(np.sum(predicted & ~positive)),
        tn=int(np.sum(~predicted & ~positive)),
        fn=int(np.sum(~predicted & positive)),
    )


def _ratio(num, den):
    return num / den if den else math.nan


def f1_score(precision, recall):
    """Harmonic mean; NaN when either input is undefined or both are zero"""
    if math.isnan(precision) or math.isnan(recall) or precision + recall == 0:
        return math.nan
    return 2.0 * precision * recall / (precision + recall)


class Metrics(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float

    @property
    def undefined(self):
        """Names of the metrics whose ratio was 0/0"""
        return tuple(name for name, value in self._asdict().items() if math.isnan(value))


def metrics(counts):
    if counts.total <= 0:
        raise errors.EmptyInput("Confusion counts are all zero")
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    return Metrics(
        accuracy=(counts.tp + counts.tn) / counts.total,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
    )


def _check_classes(labels):
    positives = int(labels.sum())
    if positives == 0 or positives == labels.size:
        raise errors.OneClassOnly()


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    @property
    def area(self):
        return float(np.trapezoid(self.tpr, self.fpr))

    def frame(self):
        return pd.DataFrame({"fpr": self.fpr, "tpr": self.tpr})

    def __len__(self):
        return len(self.fpr)


def roc_curve(labels, scores):
    """
    Sweep the threshold from +inf through every distinct score (descending)
    to -inf; tied scores move the curve in a single step.
    """
    labels, scores = _arrays(labels, scores)
    _check_classes(labels)
    order = np.argsort(-scores, kind="mergesort")
    ranked = scores[order]
    hits = labels[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(ranked)), ranked.size - 1]
    tps = np.cumsum(hits)[last_of_run]
    fps = np.cumsum(1 - hits)[last_of_run]
    positives, negatives = hits.sum(), hits.size - hits.sum()

    fpr = np.r_[0.0, fps / negatives, 1.0]
    tpr = np.r_[0.0, tps / positives, 1.0]
    thresholds = np.r_[np.inf, ranked[last_of_run], -np.inf]
    keep = np.r_[True, (np.diff(fpr) != 0) | (np.diff(tpr) != 0)]
    return RocCurve(fpr=fpr[keep], tpr=tpr[keep], thresholds=thresholds[keep])


def auc(labels, scores):
    """Mann-Whitney estimate: P(score_pos > score_neg) with ties counting 1/2"""
    labels, scores = _arrays(labels, scores)
    _check_classes(labels)
    ranks = stats.rankdata(scores)
    positives = int(labels.sum())
    negatives = labels.size - positives
    u = ranks[labels == 1].sum() - positives * (positives + 1) / 2.0
    return float(u / (positives * negatives))


def prevalence_threshold(labels, scores):
    """Score of the k-th highest case, k being the number of positive labels"""
    labels, scores = _arrays(labels, scores)
    k = int(labels.sum())
    if k == 0:
        return math.inf
    return float(np.sort(scores)[::-1][k - 1])


def resolve_threshold(labels, scores, threshold=0.5, threshold_mode="fixed"):
    if threshold_mode not in THRESHOLD_MODES:
        raise errors.InvalidConfig(f"Unknown threshold mode '{threshold_mode}'")
    if threshold_mode == "prevalence":
        return prevalence_threshold(labels, scores)
    if not 0.0 <= threshold <= 1.0:
        raise errors.InvalidConfig(f"threshold must lie in [0, 1], got {threshold}")
    return float(threshold)


@dataclass(frozen=True, eq=False)
class EvalReport:
    counts: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc: RocCurve
    auc: float
    threshold: float

    @property
    def undefined(self):
        return Metrics(self.accuracy, self.precision, self.recall, self.f1).undefined

    def to_dict(self):
        return {
            "threshold": artifacts.sig6(self.threshold),
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "tn": self.counts.tn,
                "fn": self.counts.fn,
            },
            "accuracy": artifacts.sig6(self.accuracy),
            "precision": artifacts.sig6(self.precision),
            "recall": artifacts.sig6(self.recall),
            "f1": artifacts.sig6(self.f1),
            "auc": artifacts.sig6(self.auc),
            "undefined": list(self.undefined),
        }


def evaluate(labels, scores, threshold=0.5, threshold_mode="fixed"):
    threshold = resolve_threshold(labels, scores, threshold, threshold_mode)
    counts = confusion(labels, scores, threshold)
    values = metrics(counts)
    report = EvalReport(
        counts=counts,
        accuracy=values.accuracy,
        precision=values.precision,
        recall=values.recall,
        f1=values.f1,
        roc=roc_curve(labels, scores),
        auc=auc(labels, scores),
        threshold=threshold,
    )
    if report.undefined:
        logger.warning("Undefined metrics (0/0): %s", ", ".join(report.undefined))
    return report


def predict(fit, dataset, mode="conditional"):
    """Encode ``dataset`` for the fit's model and return probabilities"""
    design = encode_design(dataset, fit.spec)
    if isinstance(fit, GlmFit):
        return predict_glm(fit, design)
    return predict_mixed(fit, design, mode)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    names: tuple
    summaries: tuple
    evaluations: tuple
    settings: dict

    def metrics_frame(self):
        rows = []
        for name, report in zip(self.names, self.evaluations):
            rows.append(
                {
                    "model": name,
                    "threshold": report.threshold,
                    "accuracy": report.accuracy,
                    "precision": report.precision,
                    "recall": report.recall,
                    "f1": report.f1,
                    "auc": report.auc,
                }
            )
        return pd.DataFrame(rows)

    def to_dict(self):
        return {
            "settings": self.settings,
            "models": [
                {"model": name, **summary}
                for name, summary in zip(self.names, self.summaries)
            ],
            "performance": [
                {"model": name, **report.to_dict()}
                for name, report in zip(self.names, self.evaluations)
            ],
        }

    def write(self, out_dir):
        out_dir = Path(out_dir)
        paths = [
            artifacts.write_json(out_dir / "comparison.json", self.to_dict()),
            artifacts.write_frame(out_dir / "metrics.csv", self.metrics_frame(), "%.6g"),
        ]
        for name, report in zip(self.names, self.evaluations):
            paths.append(
                artifacts.write_frame(
                    out_dir / f"roc_{name}.csv", report.roc.frame(), "%.6g"
                )
            )
        return paths


def compare_models(
    fits, test_dataset, threshold=0.5, mode="conditional", threshold_mode="fixed"
):
    """
    Evaluate each named fit on the same held-out data.

    ``fits`` is a sequence of (name, fit) pairs. Multilevel fits predict in
    ``mode`` (conditional uses the road effects estimated at training).
    """
    fits = list(fits)
    if not fits:
        raise errors.EmptyComparison()
    names = tuple(name for name, _ in fits)
    if len(set(names)) != len(names):
        raise errors.InvalidConfig(f"Model names must be unique, got {names}")
    if mode not in PREDICTION_MODES:
        raise errors.InvalidConfig(f"Unknown prediction mode '{mode}'")

    labels = np.array([r.severity for r in test_dataset.records])
    evaluations = []
    for name, fit in fits:
        scores = predict(fit, test_dataset, mode)
        report = evaluate(labels, scores, threshold, threshold_mode)
        logger.info(
            "%s: accuracy %.4f, recall %.4f, AUC %.4f",
            name,
            report.accuracy,
            report.recall,
            report.auc,
        )
        evaluations.append(report)
    return ComparisonReport(
        names=names,
        summaries=tuple(model_summary(fit) for _, fit in fits),
        evaluations=tuple(evaluations),
        settings={
            "threshold": threshold,
            "threshold_mode": threshold_mode,
            "prediction_mode": mode,
            "n_test": test_dataset.n,
        },
    )
