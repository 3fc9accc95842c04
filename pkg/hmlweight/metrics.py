"""
Node-wise precision / recall / F1, average precision and binarized AP.

Reports are pydantic models so they serialize to JSON directly; CSV writers
live alongside.
"""

import csv
import io
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel
from sklearn.metrics import average_precision_score

from .errors import NotDefined, ShapeError


class NodeMetrics(BaseModel):
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float


class AggregateMetrics(BaseModel):
    precision: float
    recall: float
    f1: float


class MetricsReport(BaseModel):
    per_node: dict[str, NodeMetrics]
    macro: AggregateMetrics
    micro: AggregateMetrics
    bin_ap: Optional[float] = None
    ap: Optional[float] = None


def _check_pair(pred: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape or pred.ndim != 2:
        raise ShapeError(f"Predictions {pred.shape} and labels {labels.shape} must be matching B x N")
    return pred != 0, labels != 0


def confusion_counts(pred: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """N x 4 integer array of (tp, fp, fn, tn) per node column."""
    pred, labels = _check_pair(pred, labels)
    tp = np.sum(pred & labels, axis=0)
    fp = np.sum(pred & ~labels, axis=0)
    fn = np.sum(~pred & labels, axis=0)
    tn = np.sum(~pred & ~labels, axis=0)
    return np.stack([tp, fp, fn, tn], axis=1).astype(np.int64)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _prf_from(tp, fp, fn) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    precision = _safe_ratio(tp, tp + fp)
    recall = _safe_ratio(tp, tp + fn)
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    return precision, recall, f1


def prf(counts: np.ndarray) -> tuple[np.ndarray, AggregateMetrics, AggregateMetrics]:
    """
    Per-node (P, R, F1) as an N x 3 array plus macro and micro aggregates.

    Macro averages only over nodes that occur in the ground truth; 0/0 is 0.
    """
    counts = np.asarray(counts, dtype=np.int64)
    tp, fp, fn = counts[:, 0], counts[:, 1], counts[:, 2]
    precision, recall, f1 = _prf_from(tp, fp, fn)

    present = (tp + fn) > 0
    if np.any(present):
        macro = AggregateMetrics(
            precision=float(precision[present].mean()),
            recall=float(recall[present].mean()),
            f1=float(f1[present].mean()),
        )
    else:
        macro = AggregateMetrics(precision=0.0, recall=0.0, f1=0.0)

    micro_p, micro_r, micro_f1 = _prf_from(tp.sum(), fp.sum(), fn.sum())
    micro = AggregateMetrics(precision=float(micro_p), recall=float(micro_r), f1=float(micro_f1))
    return np.stack([precision, recall, f1], axis=1), macro, micro


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """
    Rectangular area under the precision-recall curve, sum (R_n - R_{n-1}) P_n,
    with tied scores grouped into one threshold.

    Raises:
        NotDefined: no positive label
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = (np.asarray(labels).ravel() != 0).astype(np.uint8)
    if scores.shape != labels.shape:
        raise ShapeError(f"Scores {scores.shape} and labels {labels.shape} differ in size")
    if not np.any(labels):
        raise NotDefined("Average precision is undefined without positive labels")
    return float(average_precision_score(labels, scores))


def binarize(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(probs) >= threshold).astype(np.uint8)


def binarized_ap(probs: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Average precision of the {0, 1} predictions obtained at `threshold`."""
    return average_precision(binarize(probs, threshold), labels)


def _optional(fn, *args) -> Optional[float]:
    try:
        return fn(*args)
    except NotDefined:
        return None


def build_report(
    constrained_probs: np.ndarray,
    labels: np.ndarray,
    node_ids: Sequence[str],
    threshold: float = 0.5,
) -> MetricsReport:
    """Full metric suite for constrained probabilities against closed labels."""
    pred = binarize(constrained_probs, threshold)
    counts = confusion_counts(pred, labels)
    per_node_prf, macro, micro = prf(counts)
    per_node = {
        node_id: NodeMetrics(
            tp=int(c[0]), fp=int(c[1]), fn=int(c[2]), tn=int(c[3]),
            precision=float(m[0]), recall=float(m[1]), f1=float(m[2]),
        )
        for node_id, c, m in zip(node_ids, counts, per_node_prf)
    }
    return MetricsReport(
        per_node=per_node,
        macro=macro,
        micro=micro,
        bin_ap=_optional(binarized_ap, constrained_probs, labels, threshold),
        ap=_optional(average_precision, constrained_probs, labels),
    )


PER_NODE_FIELDS = ["node_id", "depth", "support", "tp", "fp", "fn", "tn", "precision", "recall", "f1"]


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def per_node_csv(report: MetricsReport, depths: Sequence[int]) -> str:
    """One row per node in hierarchy order, then __macro__ and __micro__ rows."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(PER_NODE_FIELDS)
    for (node_id, m), depth in zip(report.per_node.items(), depths):
        writer.writerow([
            node_id, depth, m.tp + m.fn, m.tp, m.fp, m.fn, m.tn,
            _fmt(m.precision), _fmt(m.recall), _fmt(m.f1),
        ])
    for name, agg in (("__macro__", report.macro), ("__micro__", report.micro)):
        writer.writerow([name, "", "", "", "", "", "", _fmt(agg.precision), _fmt(agg.recall), _fmt(agg.f1)])
    return buffer.getvalue()


SUMMARY_FIELDS = [
    "epoch", "split", "mean_loss",
    "macro_precision", "macro_recall", "macro_f1",
    "micro_precision", "micro_recall", "micro_f1",
    "bin_ap", "ap",
]


def summary_row(epoch: Optional[int], split: str, mean_loss: Optional[float], report: MetricsReport) -> list[str]:
    return [
        "" if epoch is None else str(epoch), split, _fmt(mean_loss),
        _fmt(report.macro.precision), _fmt(report.macro.recall), _fmt(report.macro.f1),
        _fmt(report.micro.precision), _fmt(report.micro.recall), _fmt(report.micro.f1),
        _fmt(report.bin_ap), _fmt(report.ap),
    ]


def summary_csv(rows: list[list[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    writer.writerows(rows)
    return buffer.getvalue()
