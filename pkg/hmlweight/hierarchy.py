"""
Label hierarchy (DAG) and the annotation helpers built on it.

A Hierarchy is immutable once built. Node i's descendant set S_i always
contains i itself, and the descendant matrix A has A[i, j] = 1 iff j is in S_i.
"""

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import CyclicHierarchy, HierarchyError, ShapeError, UnknownNode


@dataclass(frozen=True)
class Hierarchy:
    """Immutable label DAG over ordered node ids."""
    node_ids: tuple[str, ...]
    edges: frozenset[tuple[int, int]]             # (parent_index, child_index)
    descendant_sets: tuple[frozenset[int], ...]   # S_i, reflexive
    depth: tuple[int, ...]                        # longest path from a root
    _index: dict[str, int] = field(repr=False, compare=False, hash=False)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def index(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def parents(self, i: int) -> list[int]:
        return sorted(p for p, c in self.edges if c == i)

    def children(self, i: int) -> list[int]:
        return sorted(c for p, c in self.edges if p == i)

    @property
    def roots(self) -> list[int]:
        has_parent = {c for _, c in self.edges}
        return [i for i in range(self.n_nodes) if i not in has_parent]

    @property
    def is_tree(self) -> bool:
        """True when no node has more than one parent."""
        children_of = np.asarray([c for _, c in self.edges], dtype=np.int64)
        child_counts = np.bincount(children_of, minlength=self.n_nodes)
        return bool(np.all(child_counts <= 1))

    @cached_property
    def matrix(self) -> np.ndarray:
        return descendant_matrix(self)

    def edge_list(self) -> list[tuple[str, str]]:
        """Edges as sorted (parent_id, child_id) pairs."""
        return sorted((self.node_ids[p], self.node_ids[c]) for p, c in self.edges)


def build_hierarchy(nodes: Sequence[str], edges: Iterable[tuple[str, str]]) -> Hierarchy:
    """
    Build a Hierarchy from node ids and (parent, child) id pairs.

    Raises:
        HierarchyError: duplicate node ids
        UnknownNode: an edge endpoint is not a declared node
        CyclicHierarchy: the edges contain a cycle
    """
    node_ids = tuple(str(n) for n in nodes)
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    if len(index) != len(node_ids):
        dupes = sorted(n for n, count in Counter(node_ids).items() if count > 1)
        raise HierarchyError(f"Duplicate node ids: {dupes}")

    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(node_ids)))
    for parent, child in edges:
        for endpoint in (parent, child):
            if endpoint not in index:
                raise UnknownNode(endpoint)
        graph.add_edge(index[parent], index[child])

    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        raise CyclicHierarchy([(node_ids[u], node_ids[v]) for u, v, *_ in cycle])

    descendant_sets = tuple(
        frozenset(nx.descendants(graph, i) | {i}) for i in range(len(node_ids))
    )

    depth = [0] * len(node_ids)
    for node in nx.topological_sort(graph):
        for child in graph.successors(node):
            depth[child] = max(depth[child], depth[node] + 1)

    return Hierarchy(
        node_ids=node_ids,
        edges=frozenset(graph.edges()),
        descendant_sets=descendant_sets,
        depth=tuple(depth),
        _index=index,
    )


def add_edges(h: Hierarchy, edges: Iterable[tuple[str, str]]) -> Hierarchy:
    """Return a new hierarchy with extra (parent, child) edges; closure and cycle check re-run."""
    return build_hierarchy(h.node_ids, h.edge_list() + list(edges))


def descendant_matrix(h: Hierarchy) -> np.ndarray:
    """N x N 0/1 matrix with A[i, j] = 1 iff j is a descendant of i (or i itself)."""
    A = np.zeros((h.n_nodes, h.n_nodes), dtype=np.uint8)
    for i, members in enumerate(h.descendant_sets):
        A[i, list(members)] = 1
    A.setflags(write=False)
    return A


def close_labels(labels: np.ndarray, h: Hierarchy) -> np.ndarray:
    """Set every ancestor of a positive node to positive. Idempotent."""
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[1] != h.n_nodes:
        raise ShapeError(f"Label matrix must be B x {h.n_nodes}, got {labels.shape}")
    # row b, node p: positive iff any j in S_p is positive
    reach = (labels != 0).astype(np.int64) @ h.matrix.T.astype(np.int64)
    return (reach > 0).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class NodeFrequencies:
    """Per-node positive counts n_i over N_obs observations."""
    counts: np.ndarray
    total_obs: int

    @property
    def freq(self) -> np.ndarray:
        if self.total_obs == 0:
            return np.zeros(len(self.counts), dtype=np.float64)
        return self.counts / float(self.total_obs)


def node_frequencies(labels: np.ndarray) -> NodeFrequencies:
    """Column sums of an ancestor-closed label matrix."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError(f"Label matrix must be 2-D, got shape {labels.shape}")
    counts = labels.astype(np.int64).sum(axis=0)
    return NodeFrequencies(counts=counts, total_obs=int(labels.shape[0]))
