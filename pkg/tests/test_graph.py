import numpy as np
import pytest

from gnnx.graph import (
    Graph,
    MISSING_LABEL,
    NodeSetView,
    disjoint_union,
    graphs_equal,
    induce_subgraph,
    k_hop_closure,
    normalize_adjacency,
)

from conftest import random_graph


def dense_normalized_adjacency(g: Graph) -> np.ndarray:
    """Independent oracle: explicit-loop D^{-1/2}(A+I)D^{-1/2}."""
    n = g.num_nodes
    a = np.zeros((n, n))
    for u, v in g.edges:
        a[u, v] = 1.0
        a[v, u] = 1.0
    a += np.eye(n)
    dhat = a.sum(axis=1)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if a[i, j]:
                out[i, j] = a[i, j] / np.sqrt(dhat[i] * dhat[j])
    return out


class TestGraphConstruction:
    def test_dedupes_and_canonicalizes_edges(self):
        g = Graph(3, ((1, 0), (0, 1), (2, 1)))
        assert g.edges == ((0, 1), (1, 2))

    def test_drops_self_loops(self):
        g = Graph(2, ((0, 0), (0, 1)))
        assert g.edges == ((0, 1),)

    def test_rejects_out_of_range_edge(self):
        with pytest.raises(ValueError):
            Graph(2, ((0, 2),))

    def test_rejects_misaligned_attributes(self):
        with pytest.raises(ValueError):
            Graph(3, (), attributes=np.zeros((2, 4)))

    def test_rejects_misaligned_labels(self):
        with pytest.raises(ValueError):
            Graph(3, (), labels=np.array([0, 1]))

    def test_default_node_ids(self):
        assert Graph(3, ()).node_ids == (0, 1, 2)


class TestNormalizeAdjacency:
    def test_single_node(self):
        adj = normalize_adjacency(Graph(1, ()))
        assert np.allclose(adj.matrix.toarray(), [[1.0]])

    def test_two_nodes_one_edge(self):
        adj = normalize_adjacency(Graph(2, ((0, 1),)))
        assert np.allclose(adj.matrix.toarray(), [[0.5, 0.5], [0.5, 0.5]])

    def test_path_graph_entries(self):
        adj = normalize_adjacency(Graph(3, ((0, 1), (1, 2))))
        assert adj.entry(0, 1) == pytest.approx(1 / np.sqrt(6), abs=1e-12)
        assert adj.entry(0, 0) == pytest.approx(0.5, abs=1e-12)
        assert adj.entry(1, 1) == pytest.approx(1 / 3, abs=1e-12)

    def test_isolated_node_diagonal_is_one(self):
        adj = normalize_adjacency(Graph(3, ((0, 1),)))
        assert adj.entry(2, 2) == 1.0

    def test_matches_dense_oracle_on_random_graphs(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(2, 51))
            g = random_graph(rng, n, float(rng.uniform(0.02, 0.3)))
            got = normalize_adjacency(g).matrix.toarray()
            want = dense_normalized_adjacency(g)
            assert np.abs(got - want).max() < 1e-10

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 30, 0.15)
        m = normalize_adjacency(g).matrix.toarray()
        assert np.abs(m - m.T).max() < 1e-12

    def test_positive_exactly_on_self_looped_edges(self):
        g = Graph(4, ((0, 1), (2, 3)))
        m = normalize_adjacency(g).matrix.toarray()
        for i in range(4):
            for j in range(4):
                has_edge = i == j or (min(i, j), max(i, j)) in g.edges
                assert (m[i, j] > 0) == has_edge


class TestKHopClosure:
    def test_star_center_seed(self):
        g = Graph(5, ((0, 1), (0, 2), (0, 3), (0, 4)))
        view, edges = k_hop_closure(g, NodeSetView((0,)), 1)
        assert view.ids == (0, 1, 2, 3, 4)
        assert sorted(edges) == sorted(g.edges)

    def test_path_hops(self):
        g = Graph(3, ((0, 1), (1, 2)))
        view, _ = k_hop_closure(g, NodeSetView((0,)), 2)
        assert view.hops == {0: 0, 1: 1, 2: 2}

    def test_isolated_seed(self):
        g = Graph(3, ((1, 2),))
        view, edges = k_hop_closure(g, NodeSetView((0,)), 2)
        assert view.ids == (0,)
        assert edges == []

    def test_two_hops_is_one_hop_twice(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            g = random_graph(rng, 25, 0.1)
            seeds = NodeSetView(tuple(int(i) for i in rng.choice(25, 5, replace=False)))
            two, _ = k_hop_closure(g, seeds, 2)
            once, _ = k_hop_closure(g, seeds, 1)
            twice, _ = k_hop_closure(g, NodeSetView(once.ids), 1)
            assert set(two.ids) == set(twice.ids)


class TestInduceSubgraph:
    def test_full_induction_is_isomorphic(self):
        rng = np.random.default_rng(3)
        g = random_graph(rng, 12, 0.3, feature_dim=4, num_classes=3)
        sub = induce_subgraph(g, NodeSetView(tuple(range(12))))
        assert graphs_equal(sub, g)

    def test_single_endpoint(self):
        g = Graph(2, ((0, 1),))
        sub = induce_subgraph(g, NodeSetView((0,)))
        assert sub.num_nodes == 1 and sub.num_edges == 0

    def test_triangle_two_nodes(self):
        g = Graph(3, ((0, 1), (1, 2), (0, 2)))
        sub = induce_subgraph(g, NodeSetView((0, 2)))
        assert sub.num_nodes == 2 and sub.edges == ((0, 1),)

    def test_preserves_external_ids_and_rows(self):
        attrs = np.arange(12.0).reshape(4, 3)
        g = Graph(4, ((0, 1), (2, 3)), attrs, np.array([0, 1, 2, 3]))
        sub = induce_subgraph(g, NodeSetView((3, 1)))
        assert sub.node_ids == (3, 1)
        assert np.array_equal(sub.attributes, attrs[[3, 1]])
        assert np.array_equal(sub.labels, [3, 1])

    def test_duplicate_ids_error(self):
        with pytest.raises(ValueError):
            NodeSetView((1, 1))


class TestDisjointUnion:
    def test_two_singletons(self):
        u = disjoint_union(Graph(1, ()), Graph(1, ()))
        assert u.num_nodes == 2 and u.num_edges == 0

    def test_edge_plus_triangle(self):
        u = disjoint_union(Graph(2, ((0, 1),)), Graph(3, ((0, 1), (1, 2), (0, 2))))
        assert u.num_nodes == 5 and u.num_edges == 4
        assert all(u < 2 and v < 2 or (u >= 2 and v >= 2) for u, v in u.edges)

    def test_preserves_labels_per_component(self):
        g1 = Graph(2, (), labels=np.array([1, 0]))
        g2 = Graph(2, (), labels=np.array([MISSING_LABEL, 1]))
        u = disjoint_union(g1, g2)
        assert np.array_equal(u.labels, [1, 0, MISSING_LABEL, 1])

    def test_feature_dim_mismatch(self):
        with pytest.raises(ValueError):
            disjoint_union(Graph(1, (), np.zeros((1, 3))), Graph(1, (), np.zeros((1, 4))))

    def test_partition_roundtrip(self):
        rng = np.random.default_rng(9)
        g = random_graph(rng, 14, 0.25, feature_dim=3)
        left = NodeSetView(tuple(range(6)))
        right = NodeSetView(tuple(range(6, 14)))
        u = disjoint_union(induce_subgraph(g, left), induce_subgraph(g, right))
        assert u.num_nodes == g.num_nodes
        intra = [e for e in g.edges if (e[0] < 6) == (e[1] < 6)]
        assert len(u.edges) == len(intra)
