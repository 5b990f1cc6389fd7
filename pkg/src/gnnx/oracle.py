"""Hard-label black-box oracle over a trained victim model.

The oracle answers with argmax class ids only, computed once in eval mode on
the victim's own graph; posteriors are never exposed. A lock-protected
counter records how many node queries have been issued.
"""

from __future__ import annotations

import threading

import numpy as np

from .gcn import GcnModel, forward
from .graph import NormalizedAdjacency


class VictimOracle:
    def __init__(self, model: GcnModel, adj: NormalizedAdjacency, attrs):
        if not model.trained:
            raise ValueError("oracle needs a trained model")
        self._num_nodes = adj.num_nodes
        self._feature_dim = attrs.shape[1]
        self._labels = forward(model, adj, attrs, training_mode=False).hard_labels
        self._num_classes = model.num_classes
        self._lock = threading.Lock()
        self._queries = 0

    @property
    def num_nodes(self) -> int:
        return self._num_nodes

    @property
    def feature_dim(self) -> int:
        return self._feature_dim

    @property
    def num_classes(self) -> int:
        return self._num_classes

    @property
    def queries(self) -> int:
        with self._lock:
            return self._queries

    def query(self, node_ids) -> np.ndarray:
        """Hard labels for the requested nodes; each id counts as one query."""
        ids = np.asarray(getattr(node_ids, "ids", node_ids), dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self._num_nodes):
            raise ValueError("query for unknown node id")
        with self._lock:
            self._queries += int(ids.size)
        return self._labels[ids].copy()
