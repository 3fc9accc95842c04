"""
Directional rare-node experiment and the training-fraction ablation.

The directional experiment trains several weighting arms on the same synthetic
long-tailed data for a handful of seeds and compares test macro F1 with the
macro recall over the rarest training-frequency quartile.
"""

import csv
import io
import logging
from typing import Any, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .config import TrainConfig
from .data import Dataset, DatasetSplits
from .errors import NotDefined
from .metrics import MetricsReport
from .synth import SynthSpec, synth
from .trainer import train
from .uncertainty import FocalKind

logger = logging.getLogger(__name__)

ARMS: dict[str, dict[str, Any]] = {
    "unweighted": {"imbalance": False, "focal": FocalKind.NONE},
    "imbalance": {"imbalance": True, "focal": FocalKind.NONE},
    "imbalance+gmu": {"imbalance": True, "focal": FocalKind.GMU},
    "imbalance+bbma": {"imbalance": True, "focal": FocalKind.BBMA},
}

RARE_RECALL_FACTOR = 1.5


class ArmRun(BaseModel):
    arm: str
    seed: int
    macro_f1: float
    rare_recall: float


class ArmSummary(BaseModel):
    mean_f1: float
    std_f1: float
    mean_rare_recall: float


class DirectionalReport(BaseModel):
    runs: list[ArmRun]
    summary: dict[str, ArmSummary]
    criteria: dict[str, Optional[bool]]


class FractionPoint(BaseModel):
    fraction: float
    f1_weighted: float
    f1_unweighted: float
    advantage: Optional[float]


def weighting_advantage(f1_weighted: float, f1_unweighted: float) -> float:
    """Relative F1 gain of weighting, (F1_w - F1_u) / F1_u."""
    if f1_unweighted == 0:
        raise NotDefined("Weighting advantage is undefined for an unweighted F1 of 0")
    return (f1_weighted - f1_unweighted) / f1_unweighted


def rare_quartile_nodes(train_set: Dataset, test_set: Dataset) -> np.ndarray:
    """Nodes in the lowest quartile of training frequency that occur in the test labels."""
    counts = train_set.labels.astype(np.int64).sum(axis=0)
    cutoff = np.quantile(counts, 0.25)
    present = test_set.labels.astype(np.int64).sum(axis=0) > 0
    return np.flatnonzero((counts <= cutoff) & present)


def rare_recall(report: MetricsReport, node_ids: Sequence[str], nodes: np.ndarray) -> float:
    if nodes.size == 0:
        return 0.0
    return float(np.mean([report.per_node[node_ids[i]].recall for i in nodes]))


def _summarize(runs: list[ArmRun]) -> dict[str, ArmSummary]:
    summary = {}
    for arm in dict.fromkeys(r.arm for r in runs):
        f1 = np.array([r.macro_f1 for r in runs if r.arm == arm])
        recall = np.array([r.rare_recall for r in runs if r.arm == arm])
        summary[arm] = ArmSummary(mean_f1=float(f1.mean()), std_f1=float(f1.std()), mean_rare_recall=float(recall.mean()))
    return summary


def _criteria(summary: Mapping[str, ArmSummary]) -> dict[str, Optional[bool]]:
    base = summary.get("unweighted")
    weighted = summary.get("imbalance")
    criteria: dict[str, Optional[bool]] = {"rare_recall_gain": None, "macro_f1_gain": None, "focal_no_regression": None}
    if base is not None and weighted is not None:
        criteria["rare_recall_gain"] = weighted.mean_rare_recall >= RARE_RECALL_FACTOR * base.mean_rare_recall
        criteria["macro_f1_gain"] = weighted.mean_f1 > base.mean_f1
    focal_arms = [summary[a] for a in ("imbalance+gmu", "imbalance+bbma") if a in summary]
    if weighted is not None and focal_arms:
        criteria["focal_no_regression"] = any(
            s.mean_f1 >= weighted.mean_f1 - weighted.std_f1 and s.mean_rare_recall >= weighted.mean_rare_recall
            for s in focal_arms
        )
    return criteria


def run_directional(
    spec: SynthSpec,
    base_cfg: TrainConfig,
    seeds: Sequence[int],
    arms: Mapping[str, Mapping[str, Any]] = ARMS,
) -> DirectionalReport:
    """Train every arm for every seed; data and model seeds move together."""
    runs = []
    for seed in seeds:
        splits = synth(spec.model_copy(update={"seed": seed}))
        rare = rare_quartile_nodes(splits.train, splits.test)
        node_ids = splits.train.hierarchy.node_ids
        for arm, overrides in arms.items():
            cfg = base_cfg.model_copy(update={**overrides, "seed": seed})
            result = train(splits, cfg)
            report = result.log.test
            if report is None:
                raise NotDefined("The synthetic spec produced an empty test split")
            run = ArmRun(arm=arm, seed=seed, macro_f1=report.macro.f1, rare_recall=rare_recall(report, node_ids, rare))
            logger.info("seed %d %-16s macro F1 %.4f rare recall %.4f", seed, arm, run.macro_f1, run.rare_recall)
            runs.append(run)
    summary = _summarize(runs)
    return DirectionalReport(runs=runs, summary=summary, criteria=_criteria(summary))


def experiment_csv(report: DirectionalReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["arm", "seed", "macro_f1", "rare_recall"])
    for run in report.runs:
        writer.writerow([run.arm, run.seed, repr(run.macro_f1), repr(run.rare_recall)])
    return buffer.getvalue()


def run_fraction_sweep(splits: DatasetSplits, base_cfg: TrainConfig, fractions: Sequence[float]) -> list[FractionPoint]:
    """Weighted vs. unweighted test macro F1 when training on a share of the rows."""
    points = []
    for fraction in fractions:
        f1 = {}
        for arm in ("imbalance", "unweighted"):
            cfg = base_cfg.model_copy(update={**ARMS[arm], "train_fraction": fraction})
            report = train(splits, cfg).log.test
            if report is None:
                raise NotDefined("Fraction sweep needs a non-empty test split")
            f1[arm] = report.macro.f1
        try:
            advantage = weighting_advantage(f1["imbalance"], f1["unweighted"])
        except NotDefined:
            advantage = None
        logger.info("fraction %.3f: weighted F1 %.4f unweighted F1 %.4f", fraction, f1["imbalance"], f1["unweighted"])
        points.append(FractionPoint(fraction=fraction, f1_weighted=f1["imbalance"], f1_unweighted=f1["unweighted"], advantage=advantage))
    return points


def fraction_csv(points: Sequence[FractionPoint]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["fraction", "f1_weighted", "f1_unweighted", "advantage"])
    for p in points:
        writer.writerow([repr(p.fraction), repr(p.f1_weighted), repr(p.f1_unweighted), "" if p.advantage is None else repr(p.advantage)])
    return buffer.getvalue()
