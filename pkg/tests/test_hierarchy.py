import numpy as np
import pytest

from hmlweight.errors import CyclicHierarchy, HierarchyError, ShapeError, UnknownNode
from hmlweight.hierarchy import add_edges, build_hierarchy, close_labels, descendant_matrix, node_frequencies

from conftest import random_dag


def test_descendant_matrix_is_reflexive_and_transitive(chain):
    np.testing.assert_array_equal(chain.matrix, [[1, 1, 1], [0, 1, 1], [0, 0, 1]])


def test_diamond_descendant_matrix(diamond):
    np.testing.assert_array_equal(diamond.matrix, [[1, 1, 1, 1], [0, 1, 0, 1], [0, 0, 1, 1], [0, 0, 0, 1]])
    assert descendant_matrix(diamond).tolist() == diamond.matrix.tolist()


def _reachable_by_paths(h) -> list[set[int]]:
    """Walk every downward path from each node without memoising visits."""
    children = {i: [c for p, c in h.edges if p == i] for i in range(h.n_nodes)}
    reach = []
    for start in range(h.n_nodes):
        seen = {start}
        stack = [start]
        while stack:
            node = stack.pop()
            for child in children[node]:
                seen.add(child)
                stack.append(child)
        reach.append(seen)
    return reach


def test_closure_matches_path_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(40):
        h = random_dag(rng, int(rng.integers(1, 31)), edge_prob=0.12)
        reach = _reachable_by_paths(h)
        expected = np.zeros((h.n_nodes, h.n_nodes), dtype=np.uint8)
        for i, members in enumerate(reach):
            expected[i, sorted(members)] = 1
        np.testing.assert_array_equal(descendant_matrix(h), expected)

        labels = (rng.random((8, h.n_nodes)) < 0.1).astype(np.uint8)
        closed = np.zeros_like(labels)
        for b, j in zip(*np.nonzero(labels)):
            for i in range(h.n_nodes):
                if j in reach[i]:
                    closed[b, i] = 1
        np.testing.assert_array_equal(close_labels(labels, h), closed)


def test_diamond_depth_and_roots(diamond):
    assert diamond.depth == (0, 1, 1, 2)
    assert diamond.roots == [0]
    assert not diamond.is_tree
    assert diamond.parents(3) == [1, 2]
    assert diamond.children(0) == [1, 2]


def test_chain_is_tree(chain):
    assert chain.is_tree


def test_cycle_is_reported_with_its_edges():
    with pytest.raises(CyclicHierarchy) as info:
        build_hierarchy(["a", "b", "c"], [("a", "b"), ("b", "c"), ("c", "a")])
    assert len(info.value.cycle) == 3


def test_self_loop_is_a_cycle():
    with pytest.raises(CyclicHierarchy):
        build_hierarchy(["a"], [("a", "a")])


def test_unknown_edge_endpoint():
    with pytest.raises(UnknownNode) as info:
        build_hierarchy(["a"], [("a", "b")])
    assert info.value.node_id == "b"


def test_duplicate_ids_rejected():
    with pytest.raises(HierarchyError):
        build_hierarchy(["a", "a"], [])


def test_index_raises_unknown_node(chain):
    assert chain.index("b") == 1
    with pytest.raises(UnknownNode):
        chain.index("zz")


def test_add_edges_rechecks_cycles(chain):
    with pytest.raises(CyclicHierarchy):
        add_edges(chain, [("c", "a")])
    extended = add_edges(chain, [("a", "c")])
    assert extended.edge_list() == [("a", "b"), ("a", "c"), ("b", "c")]


def test_close_labels_adds_ancestors(diamond):
    closed = close_labels(np.array([[0, 0, 0, 1], [0, 1, 0, 0], [0, 0, 0, 0]]), diamond)
    np.testing.assert_array_equal(closed, [[1, 1, 1, 1], [1, 1, 0, 0], [0, 0, 0, 0]])


def test_close_labels_is_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(50):
        h = random_dag(rng, int(rng.integers(1, 15)))
        labels = (rng.random((6, h.n_nodes)) < 0.2).astype(np.uint8)
        once = close_labels(labels, h)
        np.testing.assert_array_equal(close_labels(once, h), once)
        for p, c in h.edges:
            assert np.all(once[:, p] >= once[:, c])


def test_close_labels_width_mismatch(chain):
    with pytest.raises(ShapeError):
        close_labels(np.zeros((2, 4)), chain)


def test_node_frequencies(chain):
    freqs = node_frequencies(close_labels(np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0], [0, 0, 0]]), chain))
    np.testing.assert_array_equal(freqs.counts, [3, 2, 1])
    assert freqs.total_obs == 4
    np.testing.assert_allclose(freqs.freq, [0.75, 0.5, 0.25])


def test_node_frequencies_empty():
    freqs = node_frequencies(np.zeros((0, 3), dtype=np.uint8))
    np.testing.assert_array_equal(freqs.freq, [0.0, 0.0, 0.0])
