import os

import numpy as np
import pytest

from gnnx.datasets import SplitSpec, load_bundle

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")
TOYCITE_DIR = os.path.join(FIXTURE_DIR, "toycite")


@pytest.fixture(scope="session")
def toycite():
    return load_bundle(TOYCITE_DIR)


@pytest.fixture(scope="session")
def toycite_spec():
    return SplitSpec(20, 40, 100)


def random_graph(rng: np.random.Generator, n: int, p: float, feature_dim: int | None = None,
                 num_classes: int | None = None):
    """Erdos-Renyi-style helper for property tests."""
    from gnnx.graph import Graph

    edges = tuple((i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p)
    attrs = rng.normal(size=(n, feature_dim)) if feature_dim else None
    labels = rng.integers(0, num_classes, n) if num_classes else None
    return Graph(n, edges, attrs, labels)
