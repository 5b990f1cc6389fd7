"""Graph container, adjacency normalization, and neighborhood/subgraph ops.

A Graph is immutable after construction: edges are undirected, deduplicated,
stored as (u, v) with u < v, and self-loops are dropped (the normalization
step adds them). Node ids are dense 0..n-1; `node_ids` carries stable
external identifiers across subgraph operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

MISSING_LABEL = -1

ROLES = ("attacker", "neighbor-1hop", "neighbor-2hop", "shadow", "other")


def _as_attr_matrix(attrs, num_nodes: int):
    if attrs is None:
        return None
    if sp.issparse(attrs):
        mat = attrs.tocsr().astype(np.float64)
    else:
        mat = np.ascontiguousarray(np.asarray(attrs, dtype=np.float64))
        if mat.ndim != 2:
            raise ValueError("attributes must be a 2-D matrix")
        mat.setflags(write=False)
    if mat.shape[0] != num_nodes:
        raise ValueError(f"attribute rows {mat.shape[0]} != num_nodes {num_nodes}")
    return mat


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    attributes: object = None        # dense ndarray or scipy CSR, rows per node
    labels: np.ndarray | None = None  # int array, MISSING_LABEL for unlabeled
    node_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("graph needs at least one node")
        canon = set()
        for u, v in self.edges:
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ValueError(f"edge ({u},{v}) out of range for {self.num_nodes} nodes")
            if u == v:
                continue
            canon.add((u, v) if u < v else (v, u))
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        object.__setattr__(self, "attributes", _as_attr_matrix(self.attributes, self.num_nodes))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).copy()
            if labels.shape != (self.num_nodes,):
                raise ValueError("labels length must equal num_nodes")
            if labels.min(initial=0) < MISSING_LABEL:
                raise ValueError("labels must be class ids or the missing sentinel")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(range(self.num_nodes)))
        elif len(self.node_ids) != self.num_nodes:
            raise ValueError("node_ids length must equal num_nodes")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return 0 if self.attributes is None else self.attributes.shape[1]

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        deg.setflags(write=False)
        return deg

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return tuple(tuple(sorted(ns)) for ns in nbrs)

    def labeled_nodes(self) -> np.ndarray:
        if self.labels is None:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.labels != MISSING_LABEL)


@dataclass(frozen=True)
class NodeSetView:
    """An ordered set of node ids with a role tag.

    `hops` (when present) maps each id to its minimum distance from the
    seed set that produced the view; seeds map to 0.
    """

    ids: tuple[int, ...]
    role: str = "other"
    hops: dict[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("node ids in a view must be unique")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    def __len__(self) -> int:
        return len(self.ids)

    def validate_in(self, g: Graph) -> None:
        for i in self.ids:
            if not 0 <= i < g.num_nodes:
                raise ValueError(f"node {i} not in graph of {g.num_nodes} nodes")


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Symmetric-normalized self-looped adjacency: entry (i,j) = 1/sqrt(d^_i d^_j)."""

    matrix: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    def entry(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])

    def dot(self, x):
        return self.matrix @ x


def normalize_adjacency(g: Graph) -> NormalizedAdjacency:
    """D^{-1/2} (A + I) D^{-1/2} with d^_i = 1 + degree(i)."""
    inv_sqrt = 1.0 / np.sqrt(g.degrees.astype(np.float64) + 1.0)
    rows = [np.arange(g.num_nodes)]
    cols = [np.arange(g.num_nodes)]
    if g.edges:
        e = np.asarray(g.edges, dtype=np.int64)
        rows += [e[:, 0], e[:, 1]]
        cols += [e[:, 1], e[:, 0]]
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    data = inv_sqrt[r] * inv_sqrt[c]
    mat = sp.csr_matrix((data, (r, c)), shape=(g.num_nodes, g.num_nodes))
    mat.sort_indices()
    return NormalizedAdjacency(mat)


def identity_adjacency(n: int) -> NormalizedAdjacency:
    """The n-node edgeless normalization: plain identity (used for MLP heads)."""
    return NormalizedAdjacency(sp.identity(n, dtype=np.float64, format="csr"))


def k_hop_closure(g: Graph, seeds: NodeSetView, k: int) -> tuple[NodeSetView, list[tuple[int, int]]]:
    """Nodes within distance <= k of any seed, plus all edges among them."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    seeds.validate_in(g)
    hops = {i: 0 for i in seeds.ids}
    frontier = list(seeds.ids)
    for dist in range(1, k + 1):
        nxt = []
        for u in frontier:
            for v in g.adjacency[u]:
                if v not in hops:
                    hops[v] = dist
                    nxt.append(v)
        frontier = nxt
    members = sorted(hops)
    member_set = set(members)
    edges = [(u, v) for u, v in g.edges if u in member_set and v in member_set]
    view = NodeSetView(tuple(members), role=f"neighbor-{k}hop", hops=hops)
    return view, edges


def induce_subgraph(g: Graph, nodes: NodeSetView) -> Graph:
    """Subgraph over `nodes` with renumbered ids; original ids kept in node_ids."""
    nodes.validate_in(g)
    index = {orig: new for new, orig in enumerate(nodes.ids)}
    edges = [
        (index[u], index[v])
        for u, v in g.edges
        if u in index and v in index
    ]
    rows = np.asarray(nodes.ids, dtype=np.int64)
    attrs = g.attributes[rows] if g.attributes is not None else None
    labels = g.labels[rows] if g.labels is not None else None
    node_ids = tuple(g.node_ids[i] for i in nodes.ids)
    return Graph(len(nodes.ids), tuple(edges), attrs, labels, node_ids)


def disjoint_union(g1: Graph, g2: Graph) -> Graph:
    """Combine two graphs with no cross edges; g2 ids are offset by g1.num_nodes."""
    if (g1.attributes is None) != (g2.attributes is None):
        raise ValueError("both graphs must have attributes, or neither")
    if g1.attributes is not None and g1.feature_dim != g2.feature_dim:
        raise ValueError(f"feature_dim mismatch: {g1.feature_dim} vs {g2.feature_dim}")
    n1 = g1.num_nodes
    edges = list(g1.edges) + [(u + n1, v + n1) for u, v in g2.edges]
    attrs = None
    if g1.attributes is not None:
        if sp.issparse(g1.attributes) or sp.issparse(g2.attributes):
            attrs = sp.vstack([sp.csr_matrix(g1.attributes), sp.csr_matrix(g2.attributes)], format="csr")
        else:
            attrs = np.vstack([g1.attributes, g2.attributes])
    labels = None
    if g1.labels is not None or g2.labels is not None:
        l1 = g1.labels if g1.labels is not None else np.full(n1, MISSING_LABEL, dtype=np.int64)
        l2 = g2.labels if g2.labels is not None else np.full(g2.num_nodes, MISSING_LABEL, dtype=np.int64)
        labels = np.concatenate([l1, l2])
    return Graph(n1 + g2.num_nodes, tuple(edges), attrs, labels, g1.node_ids + g2.node_ids)


def graphs_equal(a: Graph, b: Graph) -> bool:
    """Exact equality (edges, ids, labels, attribute bytes); used by tests."""
    if a.num_nodes != b.num_nodes or a.edges != b.edges or a.node_ids != b.node_ids:
        return False
    if (a.labels is None) != (b.labels is None):
        return False
    if a.labels is not None and not np.array_equal(a.labels, b.labels):
        return False
    if (a.attributes is None) != (b.attributes is None):
        return False
    if a.attributes is not None:
        xa, xb = a.attributes, b.attributes
        if sp.issparse(xa) != sp.issparse(xb):
            return False
        if sp.issparse(xa):
            return (xa != xb).nnz == 0
        return np.array_equal(xa, xb)
    return True
