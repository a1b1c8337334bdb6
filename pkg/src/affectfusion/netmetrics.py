"""Metrics of binary undirected networks and the 14-entry metric vector.

Betweenness counts unordered node pairs, so the hub of a star on five nodes
scores 6.  Every function accepts a symmetric 0/1 adjacency with a zero
diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIVERSITY_SEGMENTS = 4
NODE_METRICS = ("strength", "local_efficiency", "node_betweenness", "clustering",
                "diversity")
METRIC_NAMES = (
    ("transitivity", "global_efficiency", "strength_correlation")
    + tuple(f"{name}_{stat}" for name in NODE_METRICS for stat in ("mean", "sd"))
    + ("edge_betweenness_mean",)
)
SCHEMA_VERSION = 1


def _adjacency(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    a = (a != 0).astype(float)
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(a)):
        raise ValueError("adjacency must have a zero diagonal")
    return a


def strength(a) -> np.ndarray:
    return _adjacency(a).sum(axis=1)


def _triangles(a: np.ndarray) -> np.ndarray:
    """Triangles through each node."""
    return np.einsum("ij,jk,ki->i", a, a, a) / 2.0


def transitivity(a) -> float:
    """3 x triangles / connected triples; 0 without triples."""
    a = _adjacency(a)
    k = a.sum(axis=1)
    triples = np.sum(k * (k - 1))
    return float(2.0 * _triangles(a).sum() / triples) if triples > 0 else 0.0


def clustering(a) -> np.ndarray:
    a = _adjacency(a)
    k = a.sum(axis=1)
    pairs = k * (k - 1) / 2.0
    return np.divide(_triangles(a), pairs, out=np.zeros_like(k), where=pairs > 0)


@dataclass(frozen=True, eq=False)
class ShortestPaths:
    distance: np.ndarray  # (N, N), inf when unreachable
    node_betweenness: np.ndarray  # (N,)
    edge_betweenness: np.ndarray  # (N, N), symmetric, zero off the edges


def shortest_paths(a) -> ShortestPaths:
    """Breadth-first distances and Brandes betweenness from all sources at once.

    Rows index sources.  ``sigma[s, v]`` counts shortest s-v paths; the
    backward sweep accumulates the dependency of each source on every node
    and on every directed edge, level by level.
    """
    a = _adjacency(a)
    n = len(a)
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    sigma = np.eye(n)
    level = 0
    frontier = np.eye(n, dtype=bool)
    while frontier.any():
        reach = (sigma * frontier) @ a
        new = (reach > 0) & np.isinf(dist)
        level += 1
        dist[new] = level
        sigma[new] = reach[new]
        frontier = new
    delta = np.zeros((n, n))
    edge = np.zeros((n, n))
    for d in range(level - 1, 0, -1):
        at_d = dist == d
        coeff = np.where(at_d, (1.0 + delta) / np.where(at_d, sigma, 1.0), 0.0)
        before = np.where(dist == d - 1, sigma, 0.0)
        delta += before * (coeff @ a)
        edge += (before.T @ coeff) * a
    node = delta.sum(axis=0) - np.diag(delta)
    return ShortestPaths(dist, node / 2.0, (edge + edge.T) / 2.0)


def _efficiency(dist: np.ndarray) -> float:
    n = len(dist)
    if n < 2:
        return 0.0
    inv = np.zeros_like(dist)
    np.divide(1.0, dist, out=inv, where=np.isfinite(dist) & (dist > 0))
    return float(inv.sum() / (n * (n - 1)))


def global_efficiency(a) -> float:
    """Mean inverse shortest-path length over ordered node pairs."""
    return _efficiency(shortest_paths(a).distance)


def local_efficiency(a) -> np.ndarray:
    """Global efficiency of each node's neighbourhood subgraph (0 when k < 2)."""
    a = _adjacency(a)
    out = np.zeros(len(a))
    for i in range(len(a)):
        nb = np.flatnonzero(a[i])
        if len(nb) >= 2:
            out[i] = global_efficiency(a[np.ix_(nb, nb)])
    return out


def node_betweenness(a) -> np.ndarray:
    return shortest_paths(a).node_betweenness


def edge_betweenness_mean(a) -> float:
    a = _adjacency(a)
    if not a.any():
        return 0.0
    eb = shortest_paths(a).edge_betweenness
    return float(eb[np.triu(a, 1) > 0].mean())


def diversity(a, segments: int = DIVERSITY_SEGMENTS) -> np.ndarray:
    """Entropy of each node's links over ``segments`` equal blocks of node
    indices, divided by ``log(segments)``; 0 for isolated nodes."""
    a = _adjacency(a)
    n = len(a)
    block = (np.arange(n) * segments) // n
    counts = np.stack([a[:, block == q].sum(axis=1) for q in range(segments)], axis=1)
    k = counts.sum(axis=1, keepdims=True)
    p = np.divide(counts, k, out=np.zeros_like(counts), where=k > 0)
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -plogp.sum(axis=1) / np.log(segments)


def strength_correlation(a) -> float:
    """Pearson correlation of in- and out-strength.

    Both are the degree on a symmetric network, so this is 1 unless the
    degrees are all equal, where it is defined as 0.
    """
    a = _adjacency(a)
    s_in, s_out = a.sum(axis=0), a.sum(axis=1)
    if np.ptp(s_in) == 0 or np.ptp(s_out) == 0:
        return 0.0
    x, y = s_in - s_in.mean(), s_out - s_out.mean()
    return float(np.clip(x @ y / np.sqrt((x @ x) * (y @ y)), -1.0, 1.0))


def node_metrics(a) -> np.ndarray:
    """Per-node ``(N, 5)`` array in :data:`NODE_METRICS` order."""
    a = _adjacency(a)
    return np.column_stack([
        a.sum(axis=1), local_efficiency(a), node_betweenness(a), clustering(a),
        diversity(a),
    ])


def metric_vector(a, segments: int = DIVERSITY_SEGMENTS) -> np.ndarray:
    """The 14 metrics in :data:`METRIC_NAMES` order (node SDs use ddof=0)."""
    a = _adjacency(a)
    if len(a) < 3:
        raise ValueError("metric vector needs at least 3 nodes")
    paths = shortest_paths(a)
    per_node = np.column_stack([
        a.sum(axis=1), local_efficiency(a), paths.node_betweenness, clustering(a),
        diversity(a, segments),
    ])
    summaries = np.column_stack([per_node.mean(axis=0), per_node.std(axis=0)]).ravel()
    edges = np.triu(a, 1) > 0
    eb = float(paths.edge_betweenness[edges].mean()) if edges.any() else 0.0
    head = [transitivity(a), _efficiency(paths.distance), strength_correlation(a)]
    return np.concatenate([head, summaries, [eb]])
