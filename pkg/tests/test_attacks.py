from itertools import combinations

import numpy as np
import pytest
import scipy.sparse as sp

from gnnx.attacks import (
    AttackKnowledge,
    TaxonomyError,
    TAXONOMY,
    build_attack0_graph,
    build_attack1_graph,
    build_attack2_graph,
    build_attack3_graph,
    build_attack4_graph,
    build_attack5_graph,
    extract,
    generate_structure,
    run_attack6,
    synthesize_attributes,
)
from gnnx.gcn import TrainConfig, train
from gnnx.graph import (
    Graph,
    MISSING_LABEL,
    NodeSetView,
    k_hop_closure,
    normalize_adjacency,
)
from gnnx.oracle import VictimOracle


def make_victim(g: Graph, num_classes: int, seed: int = 0, epochs: int = 30):
    labeled = g.labeled_nodes()
    model = train(g, labeled, None, TrainConfig(seed=seed, epochs=epochs),
                  num_classes=num_classes, dropout_rate=0.0)
    adj = normalize_adjacency(g)
    return model, adj, VictimOracle(model, adj, g.attributes)


def make_knowledge(g: Graph, num_classes: int, attacker_ids, shadow: Graph | None = None,
                   alpha: float = 0.8, seed: int = 0, **overrides) -> AttackKnowledge:
    _, _, oracle = make_victim(g, num_classes, seed=seed)
    attacker = NodeSetView(tuple(attacker_ids), role="attacker")
    rows = np.asarray(attacker.ids, dtype=np.int64)
    closure, edges = k_hop_closure(g, attacker, 2)
    return AttackKnowledge(
        attacker_nodes=attacker,
        oracle=oracle,
        num_classes=num_classes,
        known_attrs=np.asarray(g.attributes[rows]),
        neighborhood=closure,
        known_edges=tuple(edges),
        full_structure=Graph(g.num_nodes, g.edges),
        shadow=shadow,
        alpha=alpha,
        **overrides,
    )


def two_clique_graph(size: int = 6, feature_dim: int = 2) -> Graph:
    """Two cliques with orthogonal class attributes; trivially classifiable."""
    n = 2 * size
    edges = tuple(combinations(range(size), 2)) + \
        tuple(combinations(range(size, n), 2))
    attrs = np.zeros((n, feature_dim))
    attrs[:size, 0] = 1.0
    attrs[size:, 1] = 1.0
    labels = np.array([0] * size + [1] * size)
    return Graph(n, edges, attrs, labels)


class TestSynthesizeAttributes:
    def test_alpha_one_single_first_hop(self):
        x = np.array([3.0, -1.0])
        out = synthesize_attributes([x], [1.0], [], [], alpha=1.0)
        assert np.allclose(out, x)

    def test_alpha_zero_single_second_hop(self):
        out = synthesize_attributes([], [], [np.array([2.0, 4.0])], [2.0], alpha=0.0)
        assert np.allclose(out, [1.0, 2.0])

    def test_mixed_hops_weighted_mean(self):
        # straight-line evaluation: 0.5*mean([4,0]/2, [0,4]/4) + 0.5*[8,8]/8
        out = synthesize_attributes(
            [np.array([4.0, 0.0]), np.array([0.0, 4.0])], [2.0, 4.0],
            [np.array([8.0, 8.0])], [8.0], alpha=0.5)
        assert np.allclose(out, [1.0, 0.75])

    def test_no_neighbors_rejected(self):
        with pytest.raises(ValueError):
            synthesize_attributes([], [], [], [], alpha=0.5)

    def test_alpha_one_ignores_second_hop(self):
        rng = np.random.default_rng(0)
        hop1 = [rng.normal(size=3)]
        base = synthesize_attributes(hop1, [2.0], [rng.normal(size=3)], [1.0], alpha=1.0)
        perturbed = synthesize_attributes(hop1, [2.0], [rng.normal(size=3) * 100], [3.0], alpha=1.0)
        assert np.array_equal(base, perturbed)

    def test_empty_hop_keeps_weight_unless_renormalized(self):
        x = np.array([2.0])
        plain = synthesize_attributes([x], [1.0], [], [], alpha=0.5)
        assert np.allclose(plain, [1.0])
        renorm = synthesize_attributes([x], [1.0], [], [], alpha=0.5, renormalize=True)
        assert np.allclose(renorm, [2.0])


class TestAttack0:
    def test_all_attacker_nodes_means_no_synthesis(self):
        g = two_clique_graph(4)
        knowledge = make_knowledge(g, 2, range(g.num_nodes))
        ag = build_attack0_graph(knowledge, "second-order")
        assert np.allclose(ag.graph.attributes, g.attributes)
        assert all(tag == "attacker" for tag in ag.provenance)

    def test_star_center_gets_leaf_mean(self):
        # leaves are attackers with degree 1, center is synthesized
        edges = ((0, 1), (0, 2), (0, 3), (0, 4))
        attrs = np.zeros((5, 2))
        attrs[1:] = [[1, 0], [0, 1], [1, 1], [3, 1]]
        labels = np.array([MISSING_LABEL, 0, 1, 1, 0])
        g = Graph(5, edges, attrs, labels)
        knowledge = make_knowledge(g, 2, [1, 2, 3, 4], alpha=1.0)
        ag = build_attack0_graph(knowledge, "first-order")
        center = ag.graph.node_ids.index(0)
        assert np.allclose(ag.graph.attributes[center], attrs[1:].mean(axis=0))

    def test_only_attackers_are_labeled(self, toycite):
        knowledge = make_knowledge(toycite.graph, toycite.num_classes, range(0, 196, 7))
        ag = build_attack0_graph(knowledge, "first-order")
        labeled = np.flatnonzero(ag.graph.labels != MISSING_LABEL)
        assert len(labeled) == len(knowledge.attacker_nodes)
        assert set(labeled.tolist()) == set(ag.labeled.ids)
        for i in labeled:
            assert ag.provenance[i] == "attacker"

    def test_synthesis_modes_nest(self, toycite):
        knowledge = make_knowledge(toycite.graph, toycite.num_classes, range(0, 196, 13))
        sizes = {}
        for mode in ("none", "first-order", "second-order"):
            sizes[mode] = build_attack0_graph(knowledge, mode).graph.num_nodes
        assert sizes["none"] == len(knowledge.attacker_nodes)
        assert sizes["none"] <= sizes["first-order"] <= sizes["second-order"]
        hops = knowledge.neighborhood.hops
        assert sizes["second-order"] == len(knowledge.neighborhood.ids)
        assert sizes["first-order"] == sum(1 for i in knowledge.neighborhood.ids if hops[i] <= 1)

    def test_unreachable_node_gets_zero_row_and_no_label(self):
        # hand-built knowledge: node 2 sits in the view with no known neighbor
        g = Graph(3, ((0, 1),), np.array([[1.0], [2.0], [3.0]]), np.array([0, 1, 1]))
        _, _, oracle = make_victim(g, 2)
        knowledge = AttackKnowledge(
            attacker_nodes=NodeSetView((0,), role="attacker"),
            oracle=oracle, num_classes=2,
            known_attrs=np.array([[1.0]]),
            neighborhood=NodeSetView((0, 1, 2), hops={0: 0, 1: 1, 2: 2}),
            known_edges=((0, 1),),
        )
        ag = build_attack0_graph(knowledge, "second-order")
        idx = ag.graph.node_ids.index(2)
        assert np.allclose(ag.graph.attributes[idx], 0.0)
        assert ag.graph.labels[idx] == MISSING_LABEL


class TestGenerateStructure:
    def test_identical_rows_single_edge(self):
        edges = generate_structure(np.array([[1.0, 2.0], [1.0, 2.0]]), 1.0, 1)
        assert edges == [(0, 1)]

    def test_orthogonal_clusters_stay_separate(self):
        # brute-force cosine table confirms within-cluster similarity dominates
        attrs = np.array([[1.0, 0.05], [1.0, -0.05], [0.05, 1.0], [-0.05, 1.0]])
        unit = attrs / np.linalg.norm(attrs, axis=1, keepdims=True)
        sims = unit @ unit.T
        for i, j in ((0, 1), (2, 3)):
            others = [k for k in range(4) if k not in (i, j)]
            assert all(sims[i, j] > sims[i, k] for k in others)
        edges = generate_structure(attrs, 1.0, 1)
        assert edges == [(0, 1), (2, 3)]

    def test_average_degree_lands_in_band(self):
        rng = np.random.default_rng(31)
        for target in (3.0, 5.0, 8.0):
            attrs = rng.normal(size=(60, 12))
            edges = generate_structure(attrs, target, 2)
            avg = 2 * len(edges) / 60
            assert 0.9 * target <= avg <= 1.1 * target

    def test_no_isolated_nodes(self):
        rng = np.random.default_rng(32)
        attrs = rng.normal(size=(40, 6))
        edges = generate_structure(attrs, 2.0, 3)
        touched = {i for e in edges for i in e}
        assert touched == set(range(40))

    def test_zero_rows_are_tolerated(self):
        attrs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.1]])
        edges = generate_structure(attrs, 2.0, 1)
        assert (1, 2) in edges

    def test_deterministic(self):
        rng = np.random.default_rng(33)
        attrs = rng.normal(size=(30, 5))
        assert generate_structure(attrs, 4.0, 2) == generate_structure(attrs, 4.0, 2)


class TestAttack1:
    def test_two_attacker_nodes(self):
        g = two_clique_graph(4)
        knowledge = make_knowledge(g, 2, [0, 4], target_avg_degree=1.0, k_neighbors=1)
        ag = build_attack1_graph(knowledge)
        assert ag.graph.num_nodes == 2
        assert ag.graph.num_edges == 1
        assert len(ag.labeled) == 2

    def test_labels_equal_oracle_responses(self, toycite):
        attacker = list(range(0, 196, 5))
        knowledge = make_knowledge(toycite.graph, toycite.num_classes, attacker)
        before = knowledge.oracle.queries
        ag = build_attack1_graph(knowledge)
        responses = knowledge.oracle._labels[np.asarray(attacker)]
        assert np.array_equal(ag.graph.labels, responses)
        assert knowledge.oracle.queries - before == len(attacker)

    def test_single_attacker_rejected(self):
        g = two_clique_graph(4)
        knowledge = make_knowledge(g, 2, [0])
        with pytest.raises(ValueError):
            build_attack1_graph(knowledge)


class TestAttack2:
    def test_identity_attributes(self):
        g = two_clique_graph(3)
        knowledge = make_knowledge(g, 2, [0, 3])
        ag = build_attack2_graph(knowledge)
        eye = ag.graph.attributes
        assert eye.shape == (g.num_nodes, g.num_nodes)
        assert (eye != sp.identity(g.num_nodes, format="csr")).nnz == 0

    def test_small_identity_pattern(self):
        g = Graph(3, ((0, 1), (1, 2)), labels=np.array([0, 1, 0]))
        _, _, oracle = make_victim(two_clique_graph(3), 2)
        knowledge = AttackKnowledge(
            attacker_nodes=NodeSetView((0,), role="attacker"), oracle=oracle,
            num_classes=2, full_structure=Graph(3, g.edges))
        ag = build_attack2_graph(knowledge)
        assert np.allclose(np.asarray(ag.graph.attributes.todense()), np.eye(3))

    def test_labeled_count(self, toycite):
        attacker = list(range(0, 196, 4))
        knowledge = make_knowledge(toycite.graph, toycite.num_classes, attacker)
        ag = build_attack2_graph(knowledge)
        assert len(ag.labeled) == len(attacker)
        assert np.count_nonzero(ag.graph.labels != MISSING_LABEL) == len(attacker)


class TestAttack3:
    def test_consumes_no_queries(self, toycite):
        shadow = two_clique_graph(5, feature_dim=toycite.graph.feature_dim)
        knowledge = make_knowledge(toycite.graph, toycite.num_classes, [0, 1], shadow=shadow)
        before = knowledge.oracle.queries
        ag = build_attack3_graph(knowledge)
        assert knowledge.oracle.queries == before
        assert ag.graph.num_nodes == shadow.num_nodes

    def test_feature_dim_mismatch_rejected(self, toycite):
        shadow = two_clique_graph(5, feature_dim=7)
        knowledge = make_knowledge(toycite.graph, toycite.num_classes, [0, 1], shadow=shadow)
        with pytest.raises(ValueError):
            build_attack3_graph(knowledge)

    def test_unlabeled_shadow_rejected(self, toycite):
        base = two_clique_graph(5, feature_dim=toycite.graph.feature_dim)
        shadow = Graph(base.num_nodes, base.edges, base.attributes)
        knowledge = make_knowledge(toycite.graph, toycite.num_classes, [0, 1], shadow=shadow)
        with pytest.raises(ValueError):
            build_attack3_graph(knowledge)


class TestCombinedAttacks:
    @pytest.fixture()
    def shadowed_knowledge(self, toycite):
        shadow = two_clique_graph(6, feature_dim=toycite.graph.feature_dim)
        return make_knowledge(toycite.graph, toycite.num_classes, range(0, 196, 6),
                              shadow=shadow)

    @pytest.mark.parametrize("builder,part_builder", [
        (build_attack4_graph, build_attack0_graph),
        (build_attack5_graph, build_attack1_graph),
    ])
    def test_shadow_component_is_isolated_and_recoverable(self, shadowed_knowledge,
                                                          builder, part_builder):
        combined = builder(shadowed_knowledge)
        part = part_builder(shadowed_knowledge)
        n0 = part.graph.num_nodes
        shadow = shadowed_knowledge.shadow
        assert combined.graph.num_nodes == n0 + shadow.num_nodes
        assert all((u < n0) == (v < n0) for u, v in combined.graph.edges)
        # the attacker component is recovered bit-identically
        head_edges = tuple(e for e in combined.graph.edges if e[0] < n0 and e[1] < n0)
        assert head_edges == part.graph.edges
        assert np.array_equal(np.asarray(combined.graph.attributes[:n0]),
                              np.asarray(part.graph.attributes))
        assert np.array_equal(combined.graph.labels[:n0], part.graph.labels)
        assert combined.graph.node_ids[:n0] == part.graph.node_ids
        assert combined.provenance[:n0] == part.provenance

    def test_labeled_count_sums_both_sources(self, shadowed_knowledge):
        combined = build_attack4_graph(shadowed_knowledge)
        shadow_labeled = int(shadowed_knowledge.shadow.labeled_nodes().size)
        assert len(combined.labeled) == len(shadowed_knowledge.attacker_nodes) + shadow_labeled


class TestAttack6:
    def test_perfect_submodels_give_perfect_ensemble(self):
        target = two_clique_graph(5)
        shadow = two_clique_graph(5)
        victim_model, victim_adj, oracle = make_victim(target, 2, epochs=100)
        knowledge = AttackKnowledge(
            attacker_nodes=NodeSetView((0, 1, 5, 6), role="attacker"),
            oracle=oracle, num_classes=2,
            full_structure=Graph(target.num_nodes, target.edges),
            shadow=shadow)
        ensemble = run_attack6(knowledge, TrainConfig(seed=0, epochs=150), dropout_rate=0.0)
        assert ensemble.attack_mlp.feature_dim == 2 * 2
        preds = ensemble.predict(victim_adj)
        assert np.allclose(preds.posteriors.sum(axis=1), 1.0, atol=1e-9)
        assert np.array_equal(preds.hard_labels, target.labels)

    def test_missing_shadow_labels_rejected(self):
        target = two_clique_graph(5)
        base = two_clique_graph(5)
        shadow = Graph(base.num_nodes, base.edges, base.attributes)
        _, _, oracle = make_victim(target, 2)
        knowledge = AttackKnowledge(
            attacker_nodes=NodeSetView((0, 5), role="attacker"), oracle=oracle,
            num_classes=2, full_structure=Graph(target.num_nodes, target.edges),
            shadow=shadow)
        with pytest.raises(ValueError):
            run_attack6(knowledge, TrainConfig(seed=0, epochs=10))


class TestExtract:
    @pytest.fixture()
    def full_knowledge(self, toycite):
        shadow = two_clique_graph(8, feature_dim=toycite.graph.feature_dim)
        return make_knowledge(toycite.graph, toycite.num_classes, range(0, 196, 8),
                              shadow=shadow)

    @pytest.mark.parametrize("attack_id", list(range(7)))
    def test_query_budget(self, full_knowledge, attack_id):
        before = full_knowledge.oracle.queries
        extract(attack_id, full_knowledge, TrainConfig(seed=1, epochs=5))
        spent = full_knowledge.oracle.queries - before
        expected = 0 if attack_id == 3 else len(full_knowledge.attacker_nodes)
        assert spent == expected

    @pytest.mark.parametrize("attack_id", list(range(7)))
    def test_restricted_knowledge_is_equivalent(self, full_knowledge, attack_id):
        cfg = TrainConfig(seed=2, epochs=5)
        a = extract(attack_id, full_knowledge, cfg)
        b = extract(attack_id, full_knowledge.restricted(attack_id), cfg)
        if attack_id == 6:
            pairs = [(a.model_structural, b.model_structural),
                     (a.model_shadow, b.model_shadow), (a.attack_mlp, b.attack_mlp)]
        else:
            pairs = [(a, b)]
        for ma, mb in pairs:
            assert np.array_equal(ma.w0, mb.w0) and np.array_equal(ma.w1, mb.w1)

    def test_taxonomy_violations_name_the_missing_dimension(self, toycite):
        knowledge = make_knowledge(toycite.graph, toycite.num_classes, range(0, 196, 8))
        no_attrs = AttackKnowledge(
            attacker_nodes=knowledge.attacker_nodes, oracle=knowledge.oracle,
            num_classes=knowledge.num_classes, full_structure=knowledge.full_structure)
        with pytest.raises(TaxonomyError, match="attributes"):
            extract(1, no_attrs, TrainConfig(epochs=5))
        with pytest.raises(TaxonomyError, match="shadow"):
            extract(3, knowledge, TrainConfig(epochs=5))
        with pytest.raises(TaxonomyError, match="shadow"):
            extract(4, knowledge, TrainConfig(epochs=5))

    def test_unknown_attack_id(self, full_knowledge):
        with pytest.raises(ValueError):
            extract(9, full_knowledge, TrainConfig(epochs=5))

    def test_taxonomy_table_shape(self):
        assert set(TAXONOMY) == set(range(7))
        assert TAXONOMY[0] == ("partial", "partial", False)
        assert TAXONOMY[6] == ("none", "full", True)
