"""Greedy modularity maximization (agglomerative, Clauset-Newman-Moore style).

Starts from singleton communities and repeatedly merges the pair with the
largest positive modularity gain, stopping when no merge improves modularity.
For two communities a, b with l_ab edges between them, degree sums D_a, D_b
and m total edges, the gain is

    dQ(a, b) = l_ab / m - D_a * D_b / (2 m^2).

Ties are broken by the lowest community-id pair; a merged community keeps the
smaller of the two ids, so the whole procedure is deterministic.
"""

from __future__ import annotations

import heapq

from .graph import Graph, NodeSetView


def _gain(l_ab: int, da: int, db: int, m: int) -> float:
    return l_ab / m - (da * db) / (2.0 * m * m)


def greedy_modularity_communities(g: Graph) -> list[NodeSetView]:
    """Partition of all nodes; communities sorted largest first."""
    m = g.num_edges
    if m == 0:
        raise ValueError("modularity communities need at least one edge")

    members: dict[int, list[int]] = {i: [i] for i in range(g.num_nodes)}
    deg_sum: dict[int, int] = {i: int(g.degrees[i]) for i in range(g.num_nodes)}
    between: dict[int, dict[int, int]] = {i: {} for i in range(g.num_nodes)}
    for u, v in g.edges:
        between[u][v] = between[u].get(v, 0) + 1
        between[v][u] = between[v].get(u, 0) + 1

    heap: list[tuple[float, int, int]] = []
    for u in between:
        for v, l in between[u].items():
            if u < v:
                heapq.heappush(heap, (-_gain(l, deg_sum[u], deg_sum[v], m), u, v))

    while heap:
        neg_dq, a, b = heapq.heappop(heap)
        if a not in members or b not in members:
            continue
        l_ab = between[a].get(b)
        if l_ab is None:
            continue
        dq = _gain(l_ab, deg_sum[a], deg_sum[b], m)
        if -neg_dq != dq:
            continue  # stale entry; a fresh one was pushed when the pair changed
        if dq <= 0:
            break  # heap top is the best candidate; nothing improves modularity
        # merge b into a (a < b by construction of heap entries)
        members[a].extend(members.pop(b))
        deg_sum[a] += deg_sum.pop(b)
        del between[a][b]
        for c, l in between.pop(b).items():
            if c == a:
                continue
            between[a][c] = between[a].get(c, 0) + l
            between[c][a] = between[a][c]
            del between[c][b]
        for c, l in between[a].items():
            lo, hi = (a, c) if a < c else (c, a)
            heapq.heappush(heap, (-_gain(l, deg_sum[lo], deg_sum[hi], m), lo, hi))

    comms = sorted(members.values(), key=lambda ns: (-len(ns), min(ns)))
    return [NodeSetView(tuple(sorted(ns)), role="other") for ns in comms]


def modularity(g: Graph, communities: list[NodeSetView]) -> float:
    """Newman modularity of a partition; exposed for tests and diagnostics."""
    m = g.num_edges
    if m == 0:
        raise ValueError("modularity is undefined without edges")
    comm_of = {}
    for idx, view in enumerate(communities):
        for node in view.ids:
            comm_of[node] = idx
    intra = [0] * len(communities)
    for u, v in g.edges:
        if comm_of[u] == comm_of[v]:
            intra[comm_of[u]] += 1
    deg = g.degrees
    q = 0.0
    for idx, view in enumerate(communities):
        d_c = sum(int(deg[i]) for i in view.ids)
        q += intra[idx] / m - (d_c / (2.0 * m)) ** 2
    return q
