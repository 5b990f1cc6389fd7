"""Regenerate the checked-in `toycite` bundle.

A small citation-style benchmark: 8 structural blocks (two per class) with
mostly intra-block edges, bag-of-words attributes with 8 signature features
per class, and a slice of attribute-poor nodes so that graph structure
carries real signal. Deterministic; run from this directory:

    python3 generate_fixture.py
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "..", "src"))

from gnnx.datasets import DatasetBundle, write_bundle  # noqa: E402
from gnnx.graph import Graph  # noqa: E402

BLOCK_SIZES = [28, 27, 26, 25, 24, 23, 22, 21]  # distinct so community order is stable
NUM_CLASSES = 4
SIG_FEATURES = 8
NOISE_FEATURES = 8
P_INTRA = 0.15
P_CROSS = 0.008
P_SIG = 0.45
P_NOISE = 0.08
P_MUTED = 0.25  # nodes whose signature is mostly erased


def build(seed: int = 20240) -> DatasetBundle:
    rng = np.random.default_rng(seed)
    n = sum(BLOCK_SIZES)
    block = np.repeat(np.arange(len(BLOCK_SIZES)), BLOCK_SIZES)
    labels = block % NUM_CLASSES
    feature_dim = NUM_CLASSES * SIG_FEATURES + NOISE_FEATURES

    attrs = np.zeros((n, feature_dim))
    muted = rng.random(n) < P_MUTED
    for i in range(n):
        base = labels[i] * SIG_FEATURES
        p_sig = P_SIG * (0.15 if muted[i] else 1.0)
        attrs[i, base:base + SIG_FEATURES] = rng.random(SIG_FEATURES) < p_sig
        noise = rng.random(NOISE_FEATURES) < P_NOISE
        attrs[i, NUM_CLASSES * SIG_FEATURES:] = noise
        # a sprinkle of off-class words
        off = rng.random(NUM_CLASSES * SIG_FEATURES) < 0.02
        attrs[i, :NUM_CLASSES * SIG_FEATURES] = np.maximum(
            attrs[i, :NUM_CLASSES * SIG_FEATURES], off)

    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = P_INTRA if block[u] == block[v] else P_CROSS
            if rng.random() < p:
                edges.append((u, v))

    graph = Graph(n, tuple(edges), attrs, labels)
    return DatasetBundle(graph, "toycite", NUM_CLASSES)


if __name__ == "__main__":
    bundle = build()
    out = os.path.join(os.path.dirname(__file__), "toycite")
    write_bundle(bundle, out)
    print(f"toycite: {bundle.graph.num_nodes} nodes, {bundle.graph.num_edges} edges, "
          f"{bundle.graph.feature_dim} features -> {out}")
