"""
Observation-level oversampling baselines.

LPROS (label-powerset random oversampling) treats each distinct label row as
one labelset and clones instances of below-mean labelsets. HROS-PD clones
observations whose deepest positive node is a rare node until that node's
imbalance ratio reaches the mean ratio. Both produce a ResamplePlan: a
multiset of source-row indices, original rows first.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from numpy.random import MT19937, Generator, SeedSequence

from .errors import ParseError
from .hierarchy import Hierarchy, NodeFrequencies, node_frequencies

logger = logging.getLogger(__name__)

DEFAULT_PCT = 0.25
# HROS-PD stops after adding this many multiples of the dataset size
DEFAULT_MAX_GROWTH = 1.0


class ResampleMethod(str, Enum):
    NONE = "none"
    LPROS = "lpros"
    HROS_PD = "hros-pd"


@dataclass(frozen=True, eq=False)
class ResamplePlan:
    method: ResampleMethod
    indices: np.ndarray
    n_source: int
    oversample_pct: float | None = None

    @property
    def n_added(self) -> int:
        return len(self.indices) - self.n_source


def _rng(seed: int) -> Generator:
    return Generator(MT19937(SeedSequence(seed)))


def identity_plan(n_rows: int, method: ResampleMethod = ResampleMethod.NONE) -> ResamplePlan:
    return ResamplePlan(method=method, indices=np.arange(n_rows), n_source=n_rows)


def labelset_counts(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct label rows and, per observation, the id of its labelset."""
    labels = np.asarray(labels, dtype=np.uint8)
    unique, inverse, counts = np.unique(labels, axis=0, return_inverse=True, return_counts=True)
    return inverse.ravel(), counts


def labelset_mad(labels: np.ndarray) -> float:
    """Mean absolute deviation of labelset counts from their mean."""
    _, counts = labelset_counts(labels)
    if counts.size == 0:
        return 0.0
    return float(np.mean(np.abs(counts - counts.mean())))


def lpros(labels: np.ndarray, pct: float = DEFAULT_PCT, rng_seed: int = 0) -> ResamplePlan:
    """
    Label-powerset random oversampling.

    Labelsets below the mean labelset count are visited rarest first; each is
    topped up towards the mean (floor) with uniformly drawn clones of its own
    rows until the budget of ceil(pct * N_obs) added rows runs out.
    """
    if pct < 0:
        raise ValueError(f"pct must be non-negative, got {pct}")
    labels = np.asarray(labels)
    n_obs = labels.shape[0]
    if n_obs == 0:
        return identity_plan(0, ResampleMethod.LPROS)

    rng = _rng(rng_seed)
    set_ids, counts = labelset_counts(labels)
    mean_size = counts.mean()
    budget = math.ceil(pct * n_obs)

    # stable sort so equal counts keep labelset order
    minority = [s for s in np.argsort(counts, kind="stable") if counts[s] < mean_size]
    added: list[np.ndarray] = []
    for labelset in minority:
        if budget <= 0:
            break
        n_to_add = min(int(mean_size - counts[labelset]), budget)
        if n_to_add <= 0:
            continue
        rows = np.flatnonzero(set_ids == labelset)
        added.append(rng.choice(rows, n_to_add, replace=True))
        budget -= n_to_add

    indices = np.concatenate([np.arange(n_obs), *added]) if added else np.arange(n_obs)
    logger.info("LPROS added %d rows to %d (%d minority labelsets)", len(indices) - n_obs, n_obs, len(minority))
    return ResamplePlan(method=ResampleMethod.LPROS, indices=indices, n_source=n_obs, oversample_pct=pct)


def deepest_positive(labels: np.ndarray, h: Hierarchy) -> np.ndarray:
    """B x N mask: positive nodes with no positive proper descendant in that row."""
    labels = (np.asarray(labels) != 0).astype(np.int64)
    positives_below = labels @ h.matrix.T.astype(np.int64)
    return (labels == 1) & (positives_below == 1)


def imbalance_ratios(counts: np.ndarray) -> np.ndarray:
    """IR_i = n_max / n_i; NaN for nodes without positives."""
    counts = np.asarray(counts, dtype=np.float64)
    ratios = np.full(counts.shape, np.nan)
    seen = counts > 0
    if np.any(seen):
        ratios[seen] = counts.max() / counts[seen]
    return ratios


def hros_pd(
    labels: np.ndarray,
    h: Hierarchy,
    rng_seed: int = 0,
    max_growth: float = DEFAULT_MAX_GROWTH,
) -> ResamplePlan:
    """
    Hierarchical random oversampling by deepest positive node.

    Nodes whose imbalance ratio exceeds the mean ratio are rare. For each rare
    node, rarest first, random rows whose deepest positive node is that node
    are cloned until its ratio reaches the initial mean ratio, no eligible row
    exists, or max_growth * N_obs rows have been added in total. A node also
    stops at the first drawn clone that would raise the variance of the
    ratios, so the plan never spreads them further than the source data.
    """
    labels = (np.asarray(labels) != 0).astype(np.uint8)
    n_obs = labels.shape[0]
    if not h.is_tree:
        logger.warning("HROS-PD targets tree hierarchies; running it on a DAG")
    if n_obs == 0:
        return identity_plan(0, ResampleMethod.HROS_PD)

    rng = _rng(rng_seed)
    counts = labels.astype(np.int64).sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        logger.warning("HROS-PD skips %d node(s) without positive annotations", empty.size)
    if empty.size == counts.size:
        return identity_plan(n_obs, ResampleMethod.HROS_PD)

    ratios = imbalance_ratios(counts)
    target = float(np.nanmean(ratios))
    eligible = deepest_positive(labels, h)
    max_added = int(max_growth * n_obs)

    rare = [i for i in np.argsort(-np.nan_to_num(ratios, nan=-np.inf), kind="stable")
            if counts[i] > 0 and ratios[i] > target]
    spread = float(np.nanvar(ratios))
    added: list[int] = []
    for node in rare:
        rows = np.flatnonzero(eligible[:, node])
        if rows.size == 0:
            continue
        while len(added) < max_added and counts.max() / counts[node] > target:
            row = int(rng.choice(rows))
            trial = counts + labels[row]
            # a clone also lifts n_max, which can spread the other ratios
            trial_spread = float(np.nanvar(imbalance_ratios(trial)))
            if trial_spread > spread:
                break
            added.append(row)
            counts, spread = trial, trial_spread

    if len(added) >= max_added:
        logger.warning("HROS-PD stopped at the growth cap of %d added rows", max_added)
    indices = np.concatenate([np.arange(n_obs), np.asarray(added, dtype=np.int64)])
    logger.info("HROS-PD added %d rows to %d (%d rare nodes)", len(added), n_obs, len(rare))
    return ResamplePlan(method=ResampleMethod.HROS_PD, indices=indices, n_source=n_obs)


def weights_after_resample(plan: ResamplePlan, labels: np.ndarray) -> NodeFrequencies:
    """Node frequencies over the resampled multiset."""
    return node_frequencies(np.asarray(labels)[plan.indices])


def write_plan(path: Path, plan: ResamplePlan) -> None:
    """One source-row index per line."""
    Path(path).write_text("".join(f"{int(i)}\n" for i in plan.indices), encoding="utf-8")


def read_plan(path: Path, n_source: int) -> ResamplePlan:
    indices = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            index = int(line)
        except ValueError:
            raise ParseError(f"not a row index: {line!r}", line_no) from None
        if not 0 <= index < n_source:
            raise ParseError(f"row index {index} outside [0, {n_source})", line_no)
        indices.append(index)
    return ResamplePlan(method=ResampleMethod.NONE, indices=np.asarray(indices, dtype=np.int64), n_source=n_source)
