"""Attack-graph construction and surrogate extraction.

Seven attacks, keyed by what the attacker holds along the three knowledge
dimensions (node attributes X, target structure A, shadow graph G'):

    id  X        A        G'      surrogate training
    0   partial  partial  -       semi-supervised, synthesized neighbor attrs
    1   partial  -        -       supervised, generated kNN structure
    2   -        full     -       semi-supervised, one-hot attributes
    3   -        -        yes     semi-supervised on the shadow graph
    4   partial  partial  yes     attack-0 graph + shadow, disjoint
    5   partial  -        yes     attack-1 graph + shadow, disjoint
    6   -        full     yes     ensemble of structural + shadow models

Every attack issues exactly one hard-label oracle query per attacker node,
except attack 3 which issues none.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .gcn import GcnModel, TrainConfig, forward, train
from .graph import (
    MISSING_LABEL,
    Graph,
    NodeSetView,
    NormalizedAdjacency,
    disjoint_union,
    identity_adjacency,
    normalize_adjacency,
)
from .oracle import VictimOracle
from .rng import derive_seed, rng_for

SYNTHESIS_MODES = ("none", "first-order", "second-order")


class TaxonomyError(ValueError):
    """Raised when the supplied knowledge does not match an attack's taxonomy row."""

    def __init__(self, attack_id, missing: str):
        self.attack_id = attack_id
        self.missing = missing
        super().__init__(f"attack {attack_id} requires {missing}")


# knowledge dimensions each attack may read: (attrs, structure, shadow)
TAXONOMY: dict[int, tuple[str, str, bool]] = {
    0: ("partial", "partial", False),
    1: ("partial", "none", False),
    2: ("none", "full", False),
    3: ("none", "none", True),
    4: ("partial", "partial", True),
    5: ("partial", "none", True),
    6: ("none", "full", True),
}


@dataclass(frozen=True, eq=False)
class AttackKnowledge:
    """Everything the attacker holds, before taxonomy restriction.

    `known_attrs` rows align with `attacker_nodes.ids`. `neighborhood` is the
    2-hop closure of the attacker nodes (hops recorded per node) and
    `known_edges` the closure's edge list, both in victim-graph node ids.
    `shadow` carries labels only on the nodes whose labels the attacker knows.
    """

    attacker_nodes: NodeSetView
    oracle: VictimOracle
    num_classes: int
    known_attrs: np.ndarray | None = None
    neighborhood: NodeSetView | None = None
    known_edges: tuple[tuple[int, int], ...] | None = None
    full_structure: Graph | None = None
    shadow: Graph | None = None
    alpha: float = 0.8
    k_neighbors: int = 3
    target_avg_degree: float | None = None
    renormalize_empty_hop: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if (self.known_attrs is None and self.known_edges is None
                and self.full_structure is None and self.shadow is None):
            raise ValueError("knowledge must include attributes, structure, or a shadow graph")
        if self.known_attrs is not None and len(self.known_attrs) != len(self.attacker_nodes):
            raise ValueError("known_attrs rows must align with attacker nodes")

    def restricted(self, attack_id: int) -> "AttackKnowledge":
        """Copy with every dimension outside the attack's taxonomy row nulled."""
        attrs_dim, struct_dim, shadow_dim = TAXONOMY[attack_id]
        return replace(
            self,
            known_attrs=self.known_attrs if attrs_dim == "partial" else None,
            neighborhood=self.neighborhood if struct_dim == "partial" else None,
            known_edges=self.known_edges if struct_dim == "partial" else None,
            full_structure=self.full_structure if struct_dim == "full" else None,
            shadow=self.shadow if shadow_dim else None,
        )


@dataclass(frozen=True, eq=False)
class AttackGraph:
    graph: Graph
    labeled: NodeSetView
    provenance: tuple[str, ...]

    def __post_init__(self):
        if self.graph.attributes is None:
            raise ValueError("attack graphs must have an attribute row for every node")
        if len(self.provenance) != self.graph.num_nodes:
            raise ValueError("provenance must tag every node")
        labels = self.graph.labels
        if labels is not None:
            for i in np.flatnonzero(labels != MISSING_LABEL):
                if self.provenance[i] == "synthetic":
                    raise ValueError("synthetic nodes must stay unlabeled")


def synthesize_attributes(attrs_1hop, degs_1hop, attrs_2hop, degs_2hop,
                          alpha: float, renormalize: bool = False) -> np.ndarray:
    """Degree-scaled neighbor-mean attribute synthesis.

    x' = alpha * mean_j(x_j / D_j over known 1-hop neighbors)
       + (1 - alpha) * mean_j(x_j / D_j over known strictly-2-hop neighbors)

    An empty hop class contributes a zero vector and the other term keeps its
    weight; with `renormalize` the surviving term's weight is rescaled to 1.
    """
    attrs_1hop = np.asarray(attrs_1hop, dtype=np.float64)
    attrs_2hop = np.asarray(attrs_2hop, dtype=np.float64)
    n1 = len(attrs_1hop)
    n2 = len(attrs_2hop)
    if n1 == 0 and n2 == 0:
        raise ValueError("no known neighbor in either hop")
    w1, w2 = alpha, 1.0 - alpha
    if renormalize:
        total = w1 * (n1 > 0) + w2 * (n2 > 0)
        if total > 0:
            w1, w2 = w1 / total, w2 / total
    dim = attrs_1hop.shape[1] if n1 else attrs_2hop.shape[1]
    out = np.zeros(dim)
    if n1:
        out += w1 * np.mean(attrs_1hop / np.asarray(degs_1hop, dtype=np.float64)[:, None], axis=0)
    if n2:
        out += w2 * np.mean(attrs_2hop / np.asarray(degs_2hop, dtype=np.float64)[:, None], axis=0)
    return out


def _require(knowledge: AttackKnowledge, attack_id: int, field: str, what: str):
    value = getattr(knowledge, field)
    if value is None:
        raise TaxonomyError(attack_id, what)
    return value


def build_attack0_graph(knowledge: AttackKnowledge,
                        synthesis_mode: str = "first-order") -> AttackGraph:
    """Attacker nodes plus their neighborhood, with synthesized attributes.

    `synthesis_mode` picks the neighborhood: "none" keeps only attacker nodes
    and their mutual edges, "first-order" adds 1-hop neighbors,
    "second-order" the full 2-hop closure. Non-attacker nodes receive
    degree-scaled mean attributes; nodes with no known neighbor within two
    hops get a zero row. Only attacker nodes are labeled (by the oracle).
    """
    if synthesis_mode not in SYNTHESIS_MODES:
        raise ValueError(f"unknown synthesis mode {synthesis_mode!r}")
    attacker = list(knowledge.attacker_nodes.ids)
    if not attacker:
        raise TaxonomyError(0, "a nonempty attacker node set")
    known_attrs = _require(knowledge, 0, "known_attrs", "attacker attributes")
    closure = _require(knowledge, 0, "neighborhood", "neighborhood structure")
    edges = _require(knowledge, 0, "known_edges", "neighborhood structure")

    attacker_set = set(attacker)
    if synthesis_mode == "none":
        members = sorted(attacker)
    else:
        max_hop = 1 if synthesis_mode == "first-order" else 2
        hops = closure.hops or {}
        members = sorted(i for i in closure.ids if hops.get(i, 0) <= max_hop)
    member_set = set(members)
    index = {orig: new for new, orig in enumerate(members)}
    local_edges = [(index[u], index[v]) for u, v in edges
                   if u in member_set and v in member_set]

    n = len(members)
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for u, v in local_edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    degree = np.array([len(ns) for ns in nbrs], dtype=np.float64)

    attr_row = {orig: known_attrs[pos] for pos, orig in enumerate(attacker)}
    is_attacker = np.array([m in attacker_set for m in members])
    feature_dim = known_attrs.shape[1]
    attrs = np.zeros((n, feature_dim))
    for local, orig in enumerate(members):
        if is_attacker[local]:
            attrs[local] = attr_row[orig]
            continue
        hop1 = [u for u in nbrs[local] if is_attacker[u]]
        two_hop: set[int] = set()
        for u in nbrs[local]:
            two_hop.update(nbrs[u])
        two_hop.difference_update(nbrs[local])
        two_hop.discard(local)
        hop2 = sorted(u for u in two_hop if is_attacker[u])
        if not hop1 and not hop2:
            continue  # zero attribute row, stays unlabeled
        attrs[local] = synthesize_attributes(
            [attr_row[members[u]] for u in hop1], degree[hop1],
            [attr_row[members[u]] for u in hop2], degree[hop2],
            knowledge.alpha, knowledge.renormalize_empty_hop)

    responses = knowledge.oracle.query(attacker)
    labels = np.full(n, MISSING_LABEL, dtype=np.int64)
    for pos, orig in enumerate(attacker):
        labels[index[orig]] = responses[pos]

    graph = Graph(n, tuple(local_edges), attrs, labels, node_ids=tuple(members))
    labeled = NodeSetView(tuple(sorted(index[a] for a in attacker)), role="attacker")
    provenance = tuple("attacker" if is_attacker[i] else "synthetic" for i in range(n))
    return AttackGraph(graph, labeled, provenance)


def generate_structure(attrs, target_avg_degree: float, k_neighbors: int) -> list[tuple[int, int]]:
    """Union-kNN graph on cosine similarity, density-matched to a target degree.

    Node i connects to its k nearest neighbors (and is connected by nodes that
    rank it among theirs); the neighbor count grows or the lowest-similarity
    edges are pruned until the average degree lands within ten percent of the
    target. All-zero rows have similarity 0 to every other node. Ties break
    toward the lower node id, so the output is deterministic.
    """
    x = np.asarray(attrs.todense() if sp.issparse(attrs) else attrs, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("structure generation needs at least two nodes")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    unit = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)
    sim = unit @ unit.T
    np.fill_diagonal(sim, -np.inf)
    order = np.argsort(-sim, axis=1, kind="stable")

    edges: set[tuple[int, int]] = set()

    def add_rank_column(col: int):
        for i in range(n):
            j = int(order[i, col])
            edges.add((i, j) if i < j else (j, i))

    k = min(k_neighbors, n - 1)
    for col in range(k):
        add_rank_column(col)

    lo, hi = 0.9 * target_avg_degree, 1.1 * target_avg_degree
    while 2 * len(edges) / n < lo and k < n - 1:
        add_rank_column(k)
        k += 1

    if 2 * len(edges) / n > hi:
        degree = np.zeros(n, dtype=np.int64)
        for u, v in edges:
            degree[u] += 1
            degree[v] += 1
        # weakest similarity first; never isolate an endpoint
        for u, v in sorted(edges, key=lambda e: (sim[e[0], e[1]], e)):
            if 2 * len(edges) / n <= hi:
                break
            if degree[u] > 1 and degree[v] > 1:
                edges.remove((u, v))
                degree[u] -= 1
                degree[v] -= 1

    return sorted(edges)


def build_attack1_graph(knowledge: AttackKnowledge) -> AttackGraph:
    """Attacker attributes with a generated structure; every node oracle-labeled."""
    attacker = list(knowledge.attacker_nodes.ids)
    if len(attacker) < 2:
        raise ValueError("attack 1 needs at least two attacker nodes")
    known_attrs = _require(knowledge, 1, "known_attrs", "attacker attributes")
    target_deg = knowledge.target_avg_degree
    if target_deg is None:
        if knowledge.shadow is not None:
            target_deg = 2.0 * knowledge.shadow.num_edges / knowledge.shadow.num_nodes
        else:
            target_deg = 4.0  # citation-domain density prior
    edges = generate_structure(known_attrs, target_deg, knowledge.k_neighbors)
    labels = knowledge.oracle.query(attacker)
    graph = Graph(len(attacker), tuple(edges), known_attrs, labels, node_ids=tuple(attacker))
    labeled = NodeSetView(tuple(range(len(attacker))), role="attacker")
    return AttackGraph(graph, labeled, ("attacker",) * len(attacker))


def build_attack2_graph(knowledge: AttackKnowledge,
                        full_structure: Graph | None = None) -> AttackGraph:
    """The full known structure with identity (one-hot) attributes."""
    structure = full_structure if full_structure is not None else \
        _require(knowledge, 2, "full_structure", "the full target structure")
    attacker = list(knowledge.attacker_nodes.ids)
    if not attacker:
        raise TaxonomyError(2, "a nonempty attacker node set")
    n = structure.num_nodes
    onehot = sp.identity(n, dtype=np.float64, format="csr")
    responses = knowledge.oracle.query(attacker)
    labels = np.full(n, MISSING_LABEL, dtype=np.int64)
    labels[np.asarray(attacker, dtype=np.int64)] = responses
    graph = Graph(n, structure.edges, onehot, labels, node_ids=structure.node_ids)
    labeled = NodeSetView(tuple(sorted(attacker)), role="attacker")
    attacker_set = set(attacker)
    provenance = tuple("attacker" if i in attacker_set else "synthetic" for i in range(n))
    return AttackGraph(graph, labeled, provenance)


def build_attack3_graph(knowledge: AttackKnowledge) -> AttackGraph:
    """The shadow graph verbatim; consumes no oracle queries."""
    shadow = _require(knowledge, 3, "shadow", "a labeled shadow graph")
    if shadow.labels is None or shadow.labeled_nodes().size == 0:
        raise ValueError("shadow graph carries no labels")
    if shadow.feature_dim != knowledge.oracle.feature_dim:
        raise ValueError(
            f"shadow feature_dim {shadow.feature_dim} != target {knowledge.oracle.feature_dim}")
    labeled = NodeSetView(tuple(int(i) for i in shadow.labeled_nodes()), role="shadow")
    return AttackGraph(shadow, labeled, ("shadow",) * shadow.num_nodes)


def _union_with_shadow(part: AttackGraph, shadow_part: AttackGraph) -> AttackGraph:
    n0 = part.graph.num_nodes
    graph = disjoint_union(part.graph, shadow_part.graph)
    labeled_ids = tuple(part.labeled.ids) + tuple(i + n0 for i in shadow_part.labeled.ids)
    labeled = NodeSetView(labeled_ids, role="other")
    return AttackGraph(graph, labeled, part.provenance + shadow_part.provenance)


def build_attack4_graph(knowledge: AttackKnowledge,
                        synthesis_mode: str = "first-order") -> AttackGraph:
    """Attack-0 graph and the shadow graph as two isolated components."""
    part = build_attack0_graph(knowledge, synthesis_mode)
    shadow_part = build_attack3_graph(knowledge)
    return _union_with_shadow(part, shadow_part)


def build_attack5_graph(knowledge: AttackKnowledge) -> AttackGraph:
    """Attack-1 graph and the shadow graph as two isolated components."""
    part = build_attack1_graph(knowledge)
    shadow_part = build_attack3_graph(knowledge)
    return _union_with_shadow(part, shadow_part)


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """Structural and shadow sub-models combined through a small attack MLP.

    The MLP consumes the stacked posteriors (2C) of the target-structural
    model and of the shadow-full model; at target time the shadow-full
    posterior comes from the shadow node nearest in structural-posterior
    space (ties break to the lowest shadow node id).
    """

    model_structural: GcnModel
    model_shadow: GcnModel
    attack_mlp: GcnModel
    shadow_struct_posteriors: np.ndarray
    shadow_full_posteriors: np.ndarray

    def __post_init__(self):
        c = self.model_structural.num_classes
        if self.model_shadow.num_classes != c:
            raise ValueError("sub-models must share the class count")
        if self.attack_mlp.feature_dim != 2 * c:
            raise ValueError("attack MLP input dim must be twice the class count")

    @property
    def num_classes(self) -> int:
        return self.model_structural.num_classes

    def predict(self, target_adj: NormalizedAdjacency):
        n = target_adj.num_nodes
        onehot = sp.identity(n, dtype=np.float64, format="csr")
        p_struct = forward(self.model_structural, target_adj, onehot).posteriors
        nearest = _nearest_rows(p_struct, self.shadow_struct_posteriors)
        stacked = np.hstack([p_struct, self.shadow_full_posteriors[nearest]])
        return forward(self.attack_mlp, identity_adjacency(n), stacked)


def _nearest_rows(a: np.ndarray, b: np.ndarray, chunk: int = 2048) -> np.ndarray:
    b_sq = np.einsum("ij,ij->i", b, b)
    out = np.empty(a.shape[0], dtype=np.int64)
    for start in range(0, a.shape[0], chunk):
        block = a[start:start + chunk]
        dist = b_sq[None, :] - 2.0 * (block @ b.T)  # |a|^2 term is constant per row
        out[start:start + chunk] = np.argmin(dist, axis=1)
    return out


def _reserve_validation(labeled: NodeSetView, seed: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Hold out 10% of labeled nodes for logging-only validation."""
    ids = np.asarray(sorted(labeled.ids), dtype=np.int64)
    n_val = len(ids) // 10
    if n_val == 0:
        return ids, None
    perm = rng_for(seed, "surrogate-val").permutation(len(ids))
    val = np.sort(ids[perm[:n_val]])
    tr = np.sort(ids[perm[n_val:]])
    return tr, val


def train_on_attack_graph(ag: AttackGraph, cfg: TrainConfig, num_classes: int,
                          hidden_dim: int = 16, dropout_rate: float = 0.5) -> GcnModel:
    tr, val = _reserve_validation(ag.labeled, cfg.seed)
    return train(ag.graph, tr, val, cfg, num_classes=num_classes,
                 hidden_dim=hidden_dim, dropout_rate=dropout_rate)


def run_attack6(knowledge: AttackKnowledge, cfg: TrainConfig,
                hidden_dim: int = 16, dropout_rate: float = 0.5) -> EnsembleModel:
    """Ensemble attack: structural and shadow extractions glued by an attack MLP."""
    shadow = _require(knowledge, 6, "shadow", "a labeled shadow graph")
    structure = _require(knowledge, 6, "full_structure", "the full target structure")
    if shadow.labels is None or shadow.labeled_nodes().size == 0:
        raise ValueError("shadow graph carries no labels")
    c = knowledge.num_classes
    shadow_labeled = NodeSetView(tuple(int(i) for i in shadow.labeled_nodes()), role="shadow")

    def sub_cfg(label: str) -> TrainConfig:
        return replace(cfg, seed=derive_seed(cfg.seed, label))

    # shadow-structural: one-hot attributes over the shadow structure
    n_shadow = shadow.num_nodes
    shadow_onehot = Graph(n_shadow, shadow.edges,
                          sp.identity(n_shadow, dtype=np.float64, format="csr"),
                          shadow.labels, shadow.node_ids)
    ag_ss = AttackGraph(shadow_onehot, shadow_labeled, ("shadow",) * n_shadow)
    m_shadow_struct = train_on_attack_graph(ag_ss, sub_cfg("attack6-shadow-structural"),
                                            c, hidden_dim, dropout_rate)

    # shadow-full: the shadow graph with its real attributes
    ag_sf = build_attack3_graph(knowledge)
    m_shadow_full = train_on_attack_graph(ag_sf, sub_cfg("attack6-shadow-full"),
                                          c, hidden_dim, dropout_rate)

    shadow_adj = normalize_adjacency(shadow)
    p_ss = forward(m_shadow_struct, shadow_adj, shadow_onehot.attributes).posteriors
    p_sf = forward(m_shadow_full, shadow_adj, shadow.attributes).posteriors

    # attack MLP on stacked posteriors of the labeled shadow nodes
    stacked = np.hstack([p_ss, p_sf])
    mlp_graph = Graph(n_shadow, (), stacked, shadow.labels)
    ag_mlp = AttackGraph(mlp_graph, shadow_labeled, ("shadow",) * n_shadow)
    attack_mlp = train_on_attack_graph(ag_mlp, sub_cfg("attack6-mlp"), c,
                                       hidden_dim=32, dropout_rate=0.0)

    # target-structural: one-hot extraction on the real target structure
    ag_ts = build_attack2_graph(knowledge, structure)
    m_target_struct = train_on_attack_graph(ag_ts, sub_cfg("attack6-target-structural"),
                                            c, hidden_dim, dropout_rate)

    return EnsembleModel(m_target_struct, m_shadow_full, attack_mlp, p_ss, p_sf)


def extract(attack_id: int, knowledge: AttackKnowledge, cfg: TrainConfig, *,
            hidden_dim: int = 16, dropout_rate: float = 0.5,
            synthesis_mode: str = "first-order"):
    """Build the attack graph for `attack_id` and train a surrogate on it.

    Raises TaxonomyError when the knowledge lacks a required dimension. The
    returned surrogate is a GcnModel, or an EnsembleModel for attack 6.
    """
    if attack_id not in TAXONOMY:
        raise ValueError(f"unknown attack id {attack_id}")
    _validate_taxonomy(attack_id, knowledge)
    k = knowledge.restricted(attack_id)
    if attack_id == 6:
        return run_attack6(k, cfg, hidden_dim, dropout_rate)
    if attack_id == 0:
        ag = build_attack0_graph(k, synthesis_mode)
    elif attack_id == 1:
        ag = build_attack1_graph(k)
    elif attack_id == 2:
        ag = build_attack2_graph(k)
    elif attack_id == 3:
        ag = build_attack3_graph(k)
    elif attack_id == 4:
        ag = build_attack4_graph(k, synthesis_mode)
    else:
        ag = build_attack5_graph(k)
    return train_on_attack_graph(ag, cfg, k.num_classes, hidden_dim, dropout_rate)


def _validate_taxonomy(attack_id: int, knowledge: AttackKnowledge) -> None:
    attrs_dim, struct_dim, shadow_dim = TAXONOMY[attack_id]
    if attrs_dim == "partial" and knowledge.known_attrs is None:
        raise TaxonomyError(attack_id, "attacker-node attributes")
    if struct_dim == "partial" and (knowledge.neighborhood is None or knowledge.known_edges is None):
        raise TaxonomyError(attack_id, "the attacker neighborhood structure")
    if struct_dim == "full" and knowledge.full_structure is None:
        raise TaxonomyError(attack_id, "the full target structure")
    if shadow_dim and knowledge.shadow is None:
        raise TaxonomyError(attack_id, "a shadow graph")
    if attack_id != 3 and len(knowledge.attacker_nodes) == 0:
        raise TaxonomyError(attack_id, "a nonempty attacker node set")
