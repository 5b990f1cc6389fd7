"""Dataset bundles: interchange format I/O, split construction, shadow splits.

A bundle directory holds UTF-8, LF-terminated, tab-separated files:

    meta.json    {"name", "num_nodes", "num_edges", "feature_dim", "num_classes"}
    edges.tsv    u<TAB>v per line, u < v
    attrs.tsv    node<TAB>feature<TAB>value sparse triplets (missing = 0)
    labels.tsv   node<TAB>class; absent nodes are unlabeled
    splits.tsv   optional node<TAB>role with role in {train,val,test}

attrs.tsv and labels.tsv may be absent entirely (no attributes / no labels).
All counts are cross-checked against meta.json at load time.
"""

from __future__ import annotations

import functools
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .communities import greedy_modularity_communities
from .graph import MISSING_LABEL, Graph, NodeSetView, induce_subgraph
from .rng import derive_seed, rng_for


class BundleFormatError(ValueError):
    pass


# train/val/test counts used in the benchmark configuration
DEFAULT_SPLIT_COUNTS = {
    "cora": (140, 300, 1000),
    "citeseer": (120, 500, 1000),
    "pubmed": (60, 500, 1000),
}


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    val_count: int
    test_count: int
    attacker_fraction: float = 0.25
    mode: str = "full-graph"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.attacker_fraction <= 1:
            raise ValueError("attacker_fraction must be in (0, 1]")
        if self.mode not in ("full-graph", "community-split"):
            raise ValueError(f"unknown split mode {self.mode!r}")


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    graph: Graph
    name: str
    num_classes: int
    splits: dict[str, NodeSetView] | None = None


def default_split_spec(name: str, seed: int = 0, attacker_fraction: float = 0.25) -> SplitSpec:
    counts = DEFAULT_SPLIT_COUNTS.get(name.lower())
    if counts is None:
        raise KeyError(f"no default split counts for dataset {name!r}")
    return SplitSpec(*counts, attacker_fraction=attacker_fraction, seed=seed)


def _read_tsv(path, columns: int):
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != columns:
                raise BundleFormatError(f"{path}:{lineno}: expected {columns} fields, got {len(parts)}")
            yield lineno, parts


def _parse_int(path, lineno, token, what):
    try:
        return int(token)
    except ValueError:
        raise BundleFormatError(f"{path}:{lineno}: malformed {what} {token!r}") from None


def load_bundle(path) -> DatasetBundle:
    meta_path = os.path.join(path, "meta.json")
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise BundleFormatError(f"{meta_path}: missing") from None
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"{meta_path}: {exc}") from None
    for key in ("name", "num_nodes", "num_edges", "feature_dim", "num_classes"):
        if key not in meta:
            raise BundleFormatError(f"{meta_path}: missing key {key!r}")
    n = int(meta["num_nodes"])
    num_classes = int(meta["num_classes"])
    feature_dim = int(meta["feature_dim"])

    edges_path = os.path.join(path, "edges.tsv")
    edges = []
    seen = set()
    for lineno, (a, b) in _read_tsv(edges_path, 2):
        u = _parse_int(edges_path, lineno, a, "node id")
        v = _parse_int(edges_path, lineno, b, "node id")
        if not (0 <= u < n and 0 <= v < n):
            raise BundleFormatError(f"{edges_path}:{lineno}: edge ({u},{v}) references id >= {n}")
        if u >= v:
            raise BundleFormatError(f"{edges_path}:{lineno}: edges must satisfy u < v")
        if (u, v) in seen:
            raise BundleFormatError(f"{edges_path}:{lineno}: duplicate edge ({u},{v})")
        seen.add((u, v))
        edges.append((u, v))
    if len(edges) != int(meta["num_edges"]):
        raise BundleFormatError(
            f"{edges_path}: {len(edges)} edges but meta.json declares {meta['num_edges']}")

    attrs = None
    attrs_path = os.path.join(path, "attrs.tsv")
    if os.path.exists(attrs_path):
        attrs = np.zeros((n, feature_dim))
        for lineno, (a, b, c) in _read_tsv(attrs_path, 3):
            node = _parse_int(attrs_path, lineno, a, "node id")
            feat = _parse_int(attrs_path, lineno, b, "feature index")
            if not 0 <= node < n:
                raise BundleFormatError(f"{attrs_path}:{lineno}: node id {node} out of range")
            if not 0 <= feat < feature_dim:
                raise BundleFormatError(f"{attrs_path}:{lineno}: feature index {feat} out of range")
            try:
                attrs[node, feat] = float(c)
            except ValueError:
                raise BundleFormatError(f"{attrs_path}:{lineno}: malformed value {c!r}") from None

    labels = None
    labels_path = os.path.join(path, "labels.tsv")
    if os.path.exists(labels_path):
        labels = np.full(n, MISSING_LABEL, dtype=np.int64)
        for lineno, (a, b) in _read_tsv(labels_path, 2):
            node = _parse_int(labels_path, lineno, a, "node id")
            cls = _parse_int(labels_path, lineno, b, "class id")
            if not 0 <= node < n:
                raise BundleFormatError(f"{labels_path}:{lineno}: node id {node} out of range")
            if not 0 <= cls < num_classes:
                raise BundleFormatError(f"{labels_path}:{lineno}: class {cls} out of range")
            labels[node] = cls

    splits = None
    splits_path = os.path.join(path, "splits.tsv")
    if os.path.exists(splits_path):
        roles: dict[str, list[int]] = {"train": [], "val": [], "test": []}
        for lineno, (a, b) in _read_tsv(splits_path, 2):
            node = _parse_int(splits_path, lineno, a, "node id")
            if b not in roles:
                raise BundleFormatError(f"{splits_path}:{lineno}: unknown role {b!r}")
            if not 0 <= node < n:
                raise BundleFormatError(f"{splits_path}:{lineno}: node id {node} out of range")
            roles[b].append(node)
        splits = {r: NodeSetView(tuple(ids), role="other") for r, ids in roles.items() if ids}

    graph = Graph(n, tuple(edges), attrs, labels)
    if graph.num_edges != int(meta["num_edges"]):
        raise BundleFormatError(f"{path}: edge count changed during canonicalization")
    return DatasetBundle(graph, str(meta["name"]), num_classes, splits)


def write_bundle(bundle: DatasetBundle, path, meta_extra: dict | None = None) -> None:
    """Write a bundle directory; byte output is deterministic for equal inputs."""
    os.makedirs(path, exist_ok=True)
    g = bundle.graph
    meta = {
        "name": bundle.name,
        "num_nodes": g.num_nodes,
        "num_edges": g.num_edges,
        "feature_dim": g.feature_dim,
        "num_classes": bundle.num_classes,
    }
    if meta_extra:
        meta.update(meta_extra)
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8", newline="") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(path, "edges.tsv"), "w", encoding="utf-8", newline="") as fh:
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
    if g.attributes is not None:
        attrs = np.asarray(g.attributes.todense()) if not isinstance(g.attributes, np.ndarray) \
            else g.attributes
        with open(os.path.join(path, "attrs.tsv"), "w", encoding="utf-8", newline="") as fh:
            for node, feat in zip(*np.nonzero(attrs)):
                fh.write(f"{node}\t{feat}\t{float(attrs[node, feat])!r}\n")
    if g.labels is not None:
        with open(os.path.join(path, "labels.tsv"), "w", encoding="utf-8", newline="") as fh:
            for node in np.flatnonzero(g.labels != MISSING_LABEL):
                fh.write(f"{node}\t{g.labels[node]}\n")
    if bundle.splits:
        with open(os.path.join(path, "splits.tsv"), "w", encoding="utf-8", newline="") as fh:
            for role in ("train", "val", "test"):
                view = bundle.splits.get(role)
                if view is not None:
                    for node in view.ids:
                        fh.write(f"{node}\t{role}\n")


def make_full_split(bundle: DatasetBundle, spec: SplitSpec) -> dict[str, NodeSetView]:
    """Seeded train/val/test split over labeled nodes.

    The training part is class-stratified (the benchmark counts are exact
    multiples of the class count); validation and test are uniform over the
    remaining labeled nodes.
    """
    g = bundle.graph
    labeled = g.labeled_nodes()
    total = spec.train_count + spec.val_count + spec.test_count
    if total > labeled.size:
        raise ValueError(f"split needs {total} labeled nodes, bundle has {labeled.size}")
    rng = rng_for(spec.seed, "full-split")

    c = bundle.num_classes
    pools = {cls: sorted(labeled[g.labels[labeled] == cls].tolist()) for cls in range(c)}
    quota = {cls: spec.train_count // c for cls in range(c)}
    extras = spec.train_count % c
    for cls in sorted(range(c), key=lambda k: (-len(pools[k]), k))[:extras]:
        quota[cls] += 1

    train_ids: list[int] = []
    shortfall = 0
    for cls in range(c):
        take = min(quota[cls], len(pools[cls]))
        shortfall += quota[cls] - take
        picked = rng.choice(pools[cls], size=take, replace=False)
        train_ids.extend(int(i) for i in picked)
    remaining = sorted(set(labeled.tolist()) - set(train_ids))
    if shortfall:
        backfill = rng.choice(remaining, size=shortfall, replace=False)
        train_ids.extend(int(i) for i in backfill)
        remaining = sorted(set(remaining) - set(int(i) for i in backfill))

    val_ids = sorted(int(i) for i in rng.choice(remaining, size=spec.val_count, replace=False))
    remaining = sorted(set(remaining) - set(val_ids))
    test_ids = sorted(int(i) for i in rng.choice(remaining, size=spec.test_count, replace=False))

    return {
        "train": NodeSetView(tuple(sorted(train_ids)), role="other"),
        "val": NodeSetView(tuple(val_ids), role="other"),
        "test": NodeSetView(tuple(test_ids), role="other"),
    }


def _scaled_spec(base: SplitSpec, side_nodes: int, total_nodes: int,
                 num_classes: int, labeled: int, seed: int) -> SplitSpec:
    ratio = side_nodes / total_nodes
    train = int(base.train_count * ratio)
    val = max(1, int(base.val_count * ratio))
    test = max(1, int(base.test_count * ratio))
    train = max(train, min(num_classes, labeled - val - test))
    overflow = train + val + test - labeled
    if overflow > 0:
        test = max(1, test - overflow)
    return replace(base, train_count=train, val_count=val, test_count=test,
                   mode="community-split", seed=seed)


@functools.lru_cache(maxsize=8)
def _communities(graph: Graph):
    # communities depend only on the graph; cached so multi-seed runs pay once
    return greedy_modularity_communities(graph)


def make_shadow_split(bundle: DatasetBundle, target_fraction: float, seed: int,
                      base_spec: SplitSpec | None = None) -> tuple[DatasetBundle, DatasetBundle]:
    """Community-based split into a target side and a disjoint shadow side.

    Communities come from greedy modularity maximization and are assigned
    largest-first to the target side until it first reaches
    target_fraction * N nodes; the rest form the shadow side. Edges crossing
    the two sides are dropped. Each side gets its own train/val/test split
    with the base counts scaled proportionally to the side size.
    """
    g = bundle.graph
    if base_spec is None:
        base_spec = default_split_spec(bundle.name, seed=seed)
    communities = _communities(g)
    n = g.num_nodes
    biggest = len(communities[0])
    if biggest > max(target_fraction, 1.0 - target_fraction) * n:
        raise ValueError(
            f"largest community has {biggest}/{n} nodes; cannot split at {target_fraction}")

    target_nodes: list[int] = []
    shadow_nodes: list[int] = []
    for comm in communities:
        if len(target_nodes) < target_fraction * n:
            target_nodes.extend(comm.ids)
        else:
            shadow_nodes.extend(comm.ids)

    sides = []
    for side_name, nodes, label in (("target", target_nodes, "target-split"),
                                    ("shadow", shadow_nodes, "shadow-split")):
        view = NodeSetView(tuple(sorted(nodes)), role="other")
        side_graph = induce_subgraph(g, view)
        side_bundle = DatasetBundle(side_graph, f"{bundle.name}-{side_name}", bundle.num_classes)
        spec = _scaled_spec(base_spec, side_graph.num_nodes, n, bundle.num_classes,
                            int(side_graph.labeled_nodes().size), derive_seed(seed, label))
        splits = make_full_split(side_bundle, spec)
        sides.append(DatasetBundle(side_graph, side_bundle.name, bundle.num_classes, splits))
    return sides[0], sides[1]


def sample_attacker_nodes(bundle: DatasetBundle, fraction: float, seed: int) -> NodeSetView:
    """Uniform sample (without replacement) of floor(fraction * N) nodes."""
    if not 0 < fraction <= 1:
        raise ValueError("attacker fraction must be in (0, 1]")
    n = bundle.graph.num_nodes
    count = int(fraction * n)
    picked = rng_for(seed, "attacker-sample").choice(n, size=count, replace=False)
    return NodeSetView(tuple(sorted(int(i) for i in picked)), role="attacker")
