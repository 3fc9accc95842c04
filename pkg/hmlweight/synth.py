"""
Synthetic long-tailed hierarchical multi-label datasets.

Generation, all draws from one seeded generator:

1. Tree: node k attaches to a uniformly chosen earlier node that still has
   room (fewer than `branching` children, depth below `max_depth - 1`), or
   becomes a new root. Ids are paths (`3/0/1`) so the tree survives ARFF.
2. `dag_extra_edges` cross edges, each from a node to a node of strictly
   greater tree depth, which keeps the graph acyclic.
3. Popularity: nodes ranked by (tree depth, random tie-break) get weight
   rank^-tail_exponent. Each row draws one terminal node from it, with
   probability `multi_label_prob` a sibling too, and is ancestor-closed.
4. Features: sum of the positive nodes' Gaussian prototypes plus
   noise_sigma * N(0, 1).
5. Rows split 70 / 15 / 15 in generation order.
"""

import logging
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import spearmanr

from .config import read_kv_file
from .data import Dataset, DatasetSplits, Split
from .errors import ConfigError, NotDefined
from .hierarchy import build_hierarchy, close_labels

logger = logging.getLogger(__name__)

SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


class SynthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_nodes: int = Field(60, ge=1, description="Hierarchy size")
    max_depth: int = Field(4, ge=1, description="Number of tree levels")
    branching: int = Field(4, ge=1, description="Maximum children per node (and roots)")
    dag_extra_edges: int = Field(0, ge=0, description="Cross edges added on top of the tree")
    n_obs: int = Field(1000, ge=1, description="Rows over all three splits")
    tail_exponent: float = Field(1.5, ge=0, description="Power-law exponent of node popularity")
    feature_dim: int = Field(32, ge=1, description="Feature columns")
    noise_sigma: float = Field(0.5, ge=0, description="Feature noise standard deviation")
    multi_label_prob: float = Field(0.2, ge=0, le=1, description="Chance of a second, sibling label")
    seed: int = Field(0, ge=0)


SYNTH_SPECS: dict[str, SynthSpec] = {
    "default": SynthSpec(),
    "tiny": SynthSpec(n_nodes=7, max_depth=3, branching=2, n_obs=40, feature_dim=6),
    "dag": SynthSpec(n_nodes=60, dag_extra_edges=15),
    # ~2000 training rows after the 70 % split
    "directional": SynthSpec(n_nodes=200, max_depth=5, branching=5, n_obs=2858, tail_exponent=1.5),
}


def load_synth_spec(name_or_path: str, overrides: Optional[dict] = None) -> SynthSpec:
    """A named spec, or a key=value spec file."""
    if name_or_path in SYNTH_SPECS:
        values = SYNTH_SPECS[name_or_path].model_dump()
    elif Path(name_or_path).is_file():
        values = read_kv_file(Path(name_or_path))
    else:
        raise ConfigError(f"Unknown synthetic spec {name_or_path!r}; "
                          f"use a file or one of {', '.join(sorted(SYNTH_SPECS))}")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return SynthSpec.model_validate(values)


def _grow_tree(spec: SynthSpec, rng: np.random.Generator) -> tuple[list[str], list[int], list[int]]:
    """Returns node ids, tree parent (-1 for roots) and tree depth per node."""
    ids: list[str] = []
    parent: list[int] = []
    depth: list[int] = []
    n_children: list[int] = []
    n_roots = 0
    for _ in range(spec.n_nodes):
        open_nodes = [i for i in range(len(ids))
                      if n_children[i] < spec.branching and depth[i] < spec.max_depth - 1]
        options = len(open_nodes) + (1 if n_roots < spec.branching else 0)
        pick = int(rng.integers(options)) if options else len(open_nodes)
        if pick < len(open_nodes):
            p = open_nodes[pick]
            ids.append(f"{ids[p]}/{n_children[p]}")
            parent.append(p)
            depth.append(depth[p] + 1)
            n_children[p] += 1
        else:
            ids.append(str(n_roots))
            parent.append(-1)
            depth.append(0)
            n_roots += 1
        n_children.append(0)
    return ids, parent, depth


def _cross_edges(spec: SynthSpec, parent: list[int], depth: list[int], rng: np.random.Generator) -> set[tuple[int, int]]:
    existing = {(p, c) for c, p in enumerate(parent) if p >= 0}
    added: set[tuple[int, int]] = set()
    depth_arr = np.asarray(depth)
    for _ in range(20 * spec.dag_extra_edges):
        if len(added) == spec.dag_extra_edges:
            break
        u = int(rng.integers(spec.n_nodes))
        deeper = np.flatnonzero(depth_arr > depth_arr[u])
        if deeper.size == 0:
            continue
        v = int(rng.choice(deeper))
        if (u, v) not in existing and (u, v) not in added:
            added.add((u, v))
    if len(added) < spec.dag_extra_edges:
        logger.warning("Placed %d of %d requested cross edges", len(added), spec.dag_extra_edges)
    return added


def popularity(depth: list[int], tail_exponent: float, rng: np.random.Generator) -> np.ndarray:
    """Normalized rank^-tail_exponent weights, ranks ordered by depth then at random."""
    order = np.lexsort((rng.random(len(depth)), np.asarray(depth)))
    rank = np.empty(len(depth), dtype=np.int64)
    rank[order] = np.arange(1, len(depth) + 1)
    weights = rank.astype(np.float64) ** -tail_exponent
    return weights / weights.sum()


def synth(spec: SynthSpec) -> DatasetSplits:
    rng = np.random.default_rng(spec.seed)
    ids, parent, depth = _grow_tree(spec, rng)
    edges = {(p, c) for c, p in enumerate(parent) if p >= 0} | _cross_edges(spec, parent, depth, rng)
    h = build_hierarchy(ids, sorted((ids[p], ids[c]) for p, c in edges))

    weights = popularity(depth, spec.tail_exponent, rng)
    siblings = [[j for j in range(spec.n_nodes) if j != i and parent[j] == parent[i]] for i in range(spec.n_nodes)]

    labels = np.zeros((spec.n_obs, spec.n_nodes), dtype=np.uint8)
    terminals = rng.choice(spec.n_nodes, size=spec.n_obs, p=weights)
    labels[np.arange(spec.n_obs), terminals] = 1
    second = rng.random(spec.n_obs) < spec.multi_label_prob
    for b in np.flatnonzero(second):
        candidates = siblings[terminals[b]]
        if candidates:
            labels[b, candidates[int(rng.integers(len(candidates)))]] = 1

    prototypes = rng.normal(size=(spec.n_nodes, spec.feature_dim))
    noise = rng.normal(size=(spec.n_obs, spec.feature_dim))
    closed = close_labels(labels, h)
    features = closed.astype(np.float64) @ prototypes + spec.noise_sigma * noise

    n_train = int(round(SPLIT_FRACTIONS[0] * spec.n_obs))
    n_valid = int(round(SPLIT_FRACTIONS[1] * spec.n_obs))
    bounds = [(0, n_train), (n_train, n_train + n_valid), (n_train + n_valid, spec.n_obs)]
    splits = [Dataset(features[a:b], closed[a:b], h, split) for (a, b), split in zip(bounds, Split)]
    logger.info("Synthesized %d nodes (%d edges), splits %s", spec.n_nodes, len(edges), [b - a for a, b in bounds])
    return DatasetSplits(*splits)


def depth_frequency_correlation(dataset: Dataset) -> float:
    """Spearman correlation between node depth and node frequency."""
    counts = dataset.labels.astype(np.int64).sum(axis=0)
    depth = np.asarray(dataset.hierarchy.depth)
    if np.unique(depth).size < 2 or np.unique(counts).size < 2:
        raise NotDefined("Correlation needs variation in both depth and frequency")
    rho, _ = spearmanr(depth, counts)
    return float(rho)
