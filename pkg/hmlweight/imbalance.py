"""
Node-wise imbalance weights and the per-batch weight schedulers.

Weights depend only on node frequencies, not on which observations carry the
node:

    w_i  = N_obs / (N_classes * n_i)
    w~_i = w0 + w_i * (w_i - w_min) / (w_max - w_min)

Positive annotations take w~_i, negative annotations weight 1.
"""

import csv
import io
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import EmptyDataset, ShapeError
from .hierarchy import NodeFrequencies

logger = logging.getLogger(__name__)

DEFAULT_W0 = 0.25
DEFAULT_SCHEDULER_K = 3.0


class NClassesMode(str, Enum):
    NODE_COUNT = "nodes"
    BINARY = "binary"


class SchedulerKind(str, Enum):
    NONE = "none"
    LINEAR = "linear"
    EXPONENTIAL = "exp"
    ALTERNATING = "alt"
    MIXED = "mixed"


@dataclass(frozen=True, eq=False)
class ImbalanceWeights:
    raw: np.ndarray
    rescaled: np.ndarray
    w0: float
    n_classes_mode: NClassesMode


@dataclass
class SchedulerState:
    """Scheduler position inside an epoch; advanced by the training loop only."""
    kind: SchedulerKind = SchedulerKind.NONE
    k_exp: float = DEFAULT_SCHEDULER_K
    mix_lambda: float = 0.5
    n_steps: int = 1
    t: int = 0

    def advance(self) -> None:
        self.t += 1

    def reset(self, n_steps: int) -> None:
        self.n_steps = n_steps
        self.t = 0


def raw_weights(freqs: NodeFrequencies, mode: NClassesMode = NClassesMode.NODE_COUNT) -> np.ndarray:
    """
    w_i = (N_classes * f_i)^-1.

    A node with n_i = 0 gets the largest weight among observed nodes.

    Raises:
        EmptyDataset: no node has a positive count
    """
    counts = np.asarray(freqs.counts, dtype=np.float64)
    if freqs.total_obs == 0 or not np.any(counts > 0):
        raise EmptyDataset("Cannot compute imbalance weights without positive annotations")

    n_classes = len(counts) if NClassesMode(mode) is NClassesMode.NODE_COUNT else 2
    seen = counts > 0
    weights = np.empty_like(counts)
    weights[seen] = freqs.total_obs / (n_classes * counts[seen])
    if not np.all(seen):
        logger.warning(
            "%d node(s) have no positive annotations; assigning the rarest-node weight",
            int(np.sum(~seen)),
        )
        weights[~seen] = weights[seen].max()
    return weights


def rescale_weights(w: np.ndarray, w0: float = DEFAULT_W0) -> np.ndarray:
    """Min-max rescale with a floor of w0; a constant vector maps to all w0."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ShapeError("Weight vector is empty")
    w_min, w_max = w.min(), w.max()
    if w_max == w_min:
        return np.full_like(w, w0)
    return w0 + w * (w - w_min) / (w_max - w_min)


def imbalance_weights(
    freqs: NodeFrequencies,
    w0: float = DEFAULT_W0,
    mode: NClassesMode = NClassesMode.NODE_COUNT,
) -> ImbalanceWeights:
    raw = raw_weights(freqs, mode)
    return ImbalanceWeights(raw=raw, rescaled=rescale_weights(raw, w0), w0=w0, n_classes_mode=NClassesMode(mode))


def weight_matrix(w_tilde: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """B x N loss weights: w~_i on positive annotations, 1 on negatives."""
    labels = np.asarray(labels)
    w_tilde = np.asarray(w_tilde, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[1] != w_tilde.shape[0]:
        raise ShapeError(f"Labels {labels.shape} do not match {w_tilde.shape[0]} weights")
    return np.where(labels != 0, w_tilde[None, :], 1.0)


def _progress(state: SchedulerState, exponent: float) -> float:
    if state.n_steps <= 1:
        return 0.0
    return (state.t / (state.n_steps - 1)) ** exponent


def scheduled_weights(w_tilde: np.ndarray, state: SchedulerState) -> np.ndarray:
    """
    Effective per-node weights at batch t of an epoch.

    linear / exp move from w~ at t = 0 to exactly 1 at t = n_steps - 1;
    alt uses w~ on even batches and 1 on odd ones; none and mixed leave w~ as is.
    """
    w_tilde = np.asarray(w_tilde, dtype=np.float64)
    if not 0 <= state.t < max(state.n_steps, 1):
        raise ValueError(f"Scheduler step {state.t} outside [0, {state.n_steps})")

    kind = SchedulerKind(state.kind)
    if kind is SchedulerKind.LINEAR:
        s = _progress(state, 1.0)
    elif kind is SchedulerKind.EXPONENTIAL:
        s = _progress(state, state.k_exp)
    elif kind is SchedulerKind.ALTERNATING:
        return w_tilde.copy() if state.t % 2 == 0 else np.ones_like(w_tilde)
    else:
        return w_tilde.copy()
    # lerp form is exact at both endpoints
    return (1.0 - s) * w_tilde + s


def mixed_loss(loss_weighted: np.ndarray, loss_unweighted: np.ndarray, mix_lambda: float) -> np.ndarray:
    """lambda * weighted + (1 - lambda) * unweighted, elementwise."""
    if not 0.0 <= mix_lambda <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {mix_lambda}")
    return mix_lambda * np.asarray(loss_weighted) + (1.0 - mix_lambda) * np.asarray(loss_unweighted)


@dataclass(frozen=True)
class NodeWeightRow:
    node_id: str
    count: int
    freq: float
    raw: float
    rescaled: float


WEIGHT_TABLE_FIELDS = ["node_id", "n_i", "f_i", "w_i", "w_tilde"]


def weight_table(node_ids: Sequence[str], freqs: NodeFrequencies, weights: ImbalanceWeights) -> list[NodeWeightRow]:
    """One row per node, rarest first (ties keep hierarchy order)."""
    rows = [
        NodeWeightRow(node_id, int(count), float(f), float(raw), float(rescaled))
        for node_id, count, f, raw, rescaled in zip(node_ids, freqs.counts, freqs.freq, weights.raw, weights.rescaled)
    ]
    return sorted(rows, key=lambda row: row.freq)


def weight_table_csv(rows: Sequence[NodeWeightRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(WEIGHT_TABLE_FIELDS)
    for row in rows:
        writer.writerow([row.node_id, row.count, repr(row.freq), repr(row.raw), repr(row.rescaled)])
    return buffer.getvalue()
