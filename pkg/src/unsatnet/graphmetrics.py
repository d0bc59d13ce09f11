"""Degree, clustering, geodesic and small-world characteristics of the
similarity networks.

Graphs are unweighted boolean adjacency matrices.  Shortest paths use
Dijkstra with unit edge weights; the mean geodesic distance averages
over connected pairs only, reporting the connected-pair fraction so
disconnected snapshots stay comparable.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field as dc_field

import numpy as np


class NoConnectedPairsError(ValueError):
    """Mean geodesic distance is undefined on an edgeless graph."""


@dataclass(frozen=True)
class PathStats:
    l_path: float
    connected_pairs: int
    total_pairs: int

    @property
    def connected_fraction(self) -> float:
        return self.connected_pairs / self.total_pairs if self.total_pairs else 0.0


@dataclass(frozen=True)
class SmallWorldIndices:
    c_ratio: float
    l_ratio: float
    sigma: float
    c_rand: float
    l_rand: float


@dataclass(eq=False)
class GraphSummary:
    """Scalar characteristics of one graph plus per-node metrics."""

    n_nodes: int
    n_edges: int
    mean_degree: float
    mean_clustering: float
    l_path: float
    connected_fraction: float
    n_components: int
    degrees: np.ndarray
    clusterings: np.ndarray
    degree_hist: dict


def _as_bool_adj(adj) -> np.ndarray:
    a = np.asarray(getattr(adj, "adjacency", adj), dtype=bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    return a


def degrees(adj) -> np.ndarray:
    return _as_bool_adj(adj).sum(axis=1)


def node_clustering(adj, i: int) -> float:
    """Fraction of realized edges among the neighbors of node i.

    Zero by convention when the node has at most one neighbor.
    """
    a = _as_bool_adj(adj)
    nbrs = np.flatnonzero(a[i])
    k = nbrs.size
    if k <= 1:
        return 0.0
    sub = a[np.ix_(nbrs, nbrs)]
    links = int(sub.sum()) // 2
    return links / (k * (k - 1) / 2.0)


def clustering_coefficients(adj) -> np.ndarray:
    """Per-node clustering via triangle counts (diag of A^3)."""
    a = _as_bool_adj(adj).astype(np.int64)
    k = a.sum(axis=1)
    triangles = np.diag(a @ a @ a) / 2.0
    denom = k * (k - 1) / 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(denom > 0, triangles / np.where(denom > 0, denom, 1.0), 0.0)
    return c


def mean_clustering(adj) -> float:
    """Average of node clustering over all nodes, isolated ones included."""
    a = _as_bool_adj(adj)
    if a.shape[0] == 0:
        raise ValueError("empty graph")
    return float(clustering_coefficients(a).mean())


def degree_distribution(adj):
    """P(k) histogram as (k values, probabilities), probabilities sum to 1."""
    d = degrees(adj)
    n = d.size
    ks, counts = np.unique(d, return_counts=True)
    return ks.astype(int), counts / n


def shortest_paths(adj, source: int) -> np.ndarray:
    """Unit-weight Dijkstra distances from source; inf where unreachable."""
    a = _as_bool_adj(adj)
    n = a.shape[0]
    if not 0 <= source < n:
        raise ValueError("source out of range")
    nbr_lists = [np.flatnonzero(a[i]) for i in range(n)]
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v in nbr_lists[u]:
            nd = d + 1.0
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _all_pairs_distances(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    nbr_lists = [np.flatnonzero(a[i]) for i in range(n)]
    out = np.full((n, n), np.inf)
    for s in range(n):
        dist = out[s]
        dist[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for v in nbr_lists[u]:
                nd = d + 1.0
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
    return out


def avg_path_length(adj) -> PathStats:
    """Mean geodesic distance over connected pairs.

    Raises NoConnectedPairsError when no pair is connected (edgeless
    graph), since the mean is undefined there.
    """
    a = _as_bool_adj(adj)
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 nodes")
    dist = _all_pairs_distances(a)
    iu = np.triu_indices(n, k=1)
    pair_d = dist[iu]
    finite = np.isfinite(pair_d)
    connected = int(finite.sum())
    if connected == 0:
        raise NoConnectedPairsError("no connected pair in graph")
    return PathStats(l_path=float(pair_d[finite].mean()),
                     connected_pairs=connected, total_pairs=pair_d.size)


def n_components(adj) -> int:
    a = _as_bool_adj(adj)
    n = a.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = 0
    for s in range(n):
        if seen[s]:
            continue
        comps += 1
        stack = [s]
        seen[s] = True
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(a[u]):
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
    return comps


def erdos_renyi(n: int, p: float, rng) -> np.ndarray:
    """G(n, p) adjacency with independent upper-triangle coin flips."""
    a = np.zeros((n, n), dtype=bool)
    iu = np.triu_indices(n, k=1)
    coins = rng.random(iu[0].size) < p
    a[iu] = coins
    return a | a.T


def small_world_indices(adj, n_random: int = 20, seed: int = 0) -> SmallWorldIndices:
    """C and L ratios against matched Erdos-Renyi baselines.

    The baselines use G(N, p) with p = 2E/(N(N-1)) averaged over
    n_random fixed-seed replicates; sigma = (C/C_rand)/(L/L_rand).
    """
    a = _as_bool_adj(adj)
    n = a.shape[0]
    e = int(a.sum()) // 2
    if e < 1:
        raise ValueError("graph must have at least one edge")
    p = 2.0 * e / (n * (n - 1))
    c_obs = mean_clustering(a)
    l_obs = avg_path_length(a).l_path

    rng = np.random.default_rng(seed)
    c_samples = []
    l_samples = []
    for _ in range(n_random):
        r = erdos_renyi(n, p, rng)
        c_samples.append(mean_clustering(r))
        try:
            l_samples.append(avg_path_length(r).l_path)
        except NoConnectedPairsError:
            continue
    if not l_samples:
        raise NoConnectedPairsError("all random baselines edgeless")
    c_rand = float(np.mean(c_samples))
    l_rand = float(np.mean(l_samples))
    if c_rand == 0.0:
        c_ratio = np.inf if c_obs > 0 else 0.0
    else:
        c_ratio = c_obs / c_rand
    l_ratio = l_obs / l_rand
    sigma = c_ratio / l_ratio if l_ratio > 0 else np.inf
    return SmallWorldIndices(c_ratio=float(c_ratio), l_ratio=float(l_ratio),
                             sigma=float(sigma), c_rand=c_rand, l_rand=l_rand)


def kc_state_space(adj):
    """Per-node (degree, clustering) pairs in node order."""
    a = _as_bool_adj(adj)
    return degrees(a), clustering_coefficients(a)


def summarize(adj) -> GraphSummary:
    """All scalar characteristics of one graph in a single pass."""
    a = _as_bool_adj(adj)
    n = a.shape[0]
    degs = a.sum(axis=1)
    e = int(degs.sum()) // 2
    cs = clustering_coefficients(a)
    try:
        stats = avg_path_length(a)
        l_path, cfrac = stats.l_path, stats.connected_fraction
    except NoConnectedPairsError:
        l_path, cfrac = np.nan, 0.0
    ks, pk = degree_distribution(a)
    return GraphSummary(n_nodes=n, n_edges=e, mean_degree=float(degs.mean()),
                        mean_clustering=float(cs.mean()), l_path=l_path,
                        connected_fraction=cfrac, n_components=n_components(a),
                        degrees=degs, clusterings=cs,
                        degree_hist=dict(zip(ks.tolist(), pk.tolist())))
