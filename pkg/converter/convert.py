#!/usr/bin/env python3
"""Convert a pickled Planetoid distribution into an interchange bundle.

Expects the eight canonical files

    ind.<name>.x   ind.<name>.y   ind.<name>.tx  ind.<name>.ty
    ind.<name>.allx  ind.<name>.ally  ind.<name>.graph  ind.<name>.test.index

and writes meta.json / edges.tsv / attrs.tsv / labels.tsv (UTF-8, LF,
tab-separated; attrs as sparse node/feature/value triplets). Edges are
symmetrized and deduplicated; self-loops are dropped. Test-block rows are
reordered according to test.index. Gaps in test.index (the well-known
Citeseer isolated test nodes) become zero attribute rows and stay unlabeled.

Output is byte-deterministic: converting the same input twice yields
identical bundles.

Usage:
    python3 convert.py --in DIR --name {cora|citeseer|pubmed} --out DIR
"""

from __future__ import annotations

import argparse
import json
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp

SUFFIXES = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")

# node/edge counts reported for the standard distributions (edge counts are
# raw file entries; the undirected dedup below usually lands lower)
EXPECTED = {
    "cora": (2708, 5429),
    "citeseer": (3327, 4732),
    "pubmed": (19717, 44338),
}


def _load_pickle(path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def load_raw(input_dir: str, name: str) -> dict:
    paths = {s: os.path.join(input_dir, f"ind.{name}.{s}") for s in SUFFIXES}
    missing = [p for p in paths.values() if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError("missing distribution files: " + ", ".join(sorted(missing)))
    raw = {s: _load_pickle(paths[s]) for s in SUFFIXES if s != "test.index"}
    with open(paths["test.index"], encoding="utf-8") as fh:
        raw["test.index"] = [int(line) for line in fh if line.strip()]
    return raw


def assemble(raw: dict):
    """Stitch allx/tx into full, reordered attribute and label matrices."""
    allx = sp.csr_matrix(raw["allx"])
    tx = sp.csr_matrix(raw["tx"])
    ally = np.asarray(raw["ally"])
    ty = np.asarray(raw["ty"])
    test_idx = np.asarray(raw["test.index"], dtype=np.int64)
    if test_idx.size != tx.shape[0]:
        raise ValueError(f"test.index has {test_idx.size} entries but tx has {tx.shape[0]} rows")

    sorted_idx = np.sort(test_idx)
    lo, hi = int(sorted_idx[0]), int(sorted_idx[-1])
    span = hi - lo + 1
    if span != test_idx.size:
        # isolated test nodes: pad the test block with zero rows/labels
        tx_full = sp.lil_matrix((span, tx.shape[1]), dtype=np.float64)
        tx_full[sorted_idx - lo] = tx
        tx = sp.csr_matrix(tx_full)
        ty_full = np.zeros((span, ty.shape[1]))
        ty_full[sorted_idx - lo] = ty
        ty = ty_full

    features = sp.vstack([allx, tx]).tolil()
    features[test_idx] = features[sorted_idx]
    labels_onehot = np.vstack([ally, ty])
    labels_onehot[test_idx] = labels_onehot[sorted_idx]

    labels = np.where(labels_onehot.sum(axis=1) > 0,
                      labels_onehot.argmax(axis=1), -1).astype(np.int64)
    return sp.csr_matrix(features), labels


def extract_edges(graph: dict) -> tuple[list, int]:
    raw_entries = 0
    edges = set()
    for u, neighbors in graph.items():
        raw_entries += len(neighbors)
        for v in neighbors:
            u, v = int(u), int(v)
            if u != v:
                edges.add((u, v) if u < v else (v, u))
    return sorted(edges), raw_entries


def convert(input_dir: str, name: str, output_dir: str) -> dict:
    raw = load_raw(input_dir, name)
    features, labels = assemble(raw)
    edges, raw_entries = extract_edges(raw["graph"])
    num_nodes = features.shape[0]
    num_classes = int(np.asarray(raw["y"]).shape[1])

    if len(raw["graph"]) != num_nodes:
        raise ValueError(
            f"graph lists {len(raw['graph'])} nodes but features cover {num_nodes}")
    for u, v in edges:
        if v >= num_nodes:
            raise ValueError(f"edge ({u},{v}) references node id >= {num_nodes}")

    expected = EXPECTED.get(name)
    if expected and (num_nodes, raw_entries // 2) != expected:
        exp_nodes, exp_edges = expected
        if num_nodes != exp_nodes:
            print(f"warning: {name} has {num_nodes} nodes, expected {exp_nodes}",
                  file=sys.stderr)
        if raw_entries // 2 != exp_edges:
            print(f"warning: {name} raw edge entries/2 = {raw_entries // 2}, "
                  f"expected {exp_edges} (dedup conventions vary)", file=sys.stderr)

    os.makedirs(output_dir, exist_ok=True)
    meta = {
        "name": name,
        "num_nodes": num_nodes,
        "num_edges": len(edges),
        "feature_dim": int(features.shape[1]),
        "num_classes": num_classes,
        "raw_edge_entries": raw_entries,
    }
    with open(os.path.join(output_dir, "meta.json"), "w", encoding="utf-8", newline="") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(output_dir, "edges.tsv"), "w", encoding="utf-8", newline="") as fh:
        for u, v in edges:
            fh.write(f"{u}\t{v}\n")
    coo = features.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(os.path.join(output_dir, "attrs.tsv"), "w", encoding="utf-8", newline="") as fh:
        for k in order:
            fh.write(f"{coo.row[k]}\t{coo.col[k]}\t{float(coo.data[k])!r}\n")
    with open(os.path.join(output_dir, "labels.tsv"), "w", encoding="utf-8", newline="") as fh:
        for node in np.flatnonzero(labels >= 0):
            fh.write(f"{node}\t{labels[node]}\n")

    print(f"{name}: {num_nodes} nodes, {len(edges)} edges "
          f"({raw_entries} raw entries), {num_classes} classes, "
          f"{features.shape[1]} features -> {output_dir}")
    return meta


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--in", dest="input_dir", required=True)
    parser.add_argument("--name", required=True, choices=sorted(EXPECTED))
    parser.add_argument("--out", dest="output_dir", required=True)
    args = parser.parse_args(argv)
    try:
        convert(args.input_dir, args.name, args.output_dir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
