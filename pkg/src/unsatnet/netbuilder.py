"""Similarity networks over profile sets.

Two edge rules: (a) significant Pearson correlation, gated by the
two-tailed p-value of the t statistic with L - 2 degrees of freedom;
(b) Euclidean dissimilarity at or above a fraction of the maximum
pairwise distance.  Cross-time block matrices extend the same rules to
pairs of snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import betainc

from .profiler import ProfileSet


class ZeroVarianceError(ValueError):
    """A profile has no variance, so its correlation is undefined."""


class NonUniformTimestepError(ValueError):
    """Temporal block construction needs uniformly spaced snapshots."""


class DegenerateProfilesError(ValueError):
    """All profiles identical: no dissimilarity structure exists."""


@dataclass(eq=False)
class SimilarityGraph:
    """Undirected simple graph over profiles (boolean adjacency)."""

    adjacency: np.ndarray
    metric: str                 # "correlation_pvalue" | "euclidean"
    threshold_spec: str
    t: float
    field_name: str
    degenerate: bool = False

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=bool)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any(a != a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a)):
            raise ValueError("self-loops are not allowed")
        self.adjacency = a

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2


def correlation(v_i, v_j) -> float:
    """Pearson correlation coefficient of two equal-length profiles."""
    x = np.asarray(v_i, dtype=float)
    y = np.asarray(v_j, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("profiles must be 1D with equal length")
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.sum(dx * dx))
    sy = np.sqrt(np.sum(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("zero-variance profile")
    return float(np.sum(dx * dy) / (sx * sy))


def p_value(c: float, length: int) -> float:
    """Two-tailed p of the no-correlation hypothesis, L - 2 dof.

    Evaluated through the regularized incomplete beta function, which
    for the t statistic t = c*sqrt((L-2)/(1-c^2)) reduces to
    I_{1-c^2}(nu/2, 1/2).
    """
    if length < 3:
        raise ValueError("need at least 3 samples")
    if abs(c) > 1.0 + 1e-12:
        raise ValueError("correlation out of [-1, 1]")
    if abs(c) >= 1.0:
        return 0.0
    nu = length - 2
    return float(betainc(nu / 2.0, 0.5, 1.0 - c * c))


def euclidean(v_i, v_j) -> float:
    """Euclidean distance between two equal-length profiles."""
    x = np.asarray(v_i, dtype=float)
    y = np.asarray(v_j, dtype=float)
    if x.shape != y.shape:
        raise ValueError("profiles must have equal length")
    d = x - y
    return float(np.sqrt(np.dot(d, d)))


def _correlation_matrix(values: np.ndarray):
    """(C, valid) where valid marks rows with nonzero variance."""
    v = np.asarray(values, dtype=float)
    centered = v - v.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centered ** 2, axis=1))
    valid = norms > 0.0
    safe = np.where(valid, norms, 1.0)
    z = centered / safe[:, None]
    c = z @ z.T
    np.clip(c, -1.0, 1.0, out=c)
    return c, valid


def _pvalue_matrix(c: np.ndarray, length: int) -> np.ndarray:
    nu = length - 2
    x = np.clip(1.0 - c * c, 0.0, 1.0)
    return betainc(nu / 2.0, 0.5, x)


def build_correlation_network(profiles: ProfileSet,
                              xi: float = 0.05) -> SimilarityGraph:
    """Edge (i, j) iff the correlation of profiles i and j is significant
    at level xi.  Zero-variance profiles stay isolated."""
    if not 0.0 < xi < 1.0:
        raise ValueError("xi must be in (0, 1)")
    c, valid = _correlation_matrix(profiles.values)
    p = _pvalue_matrix(c, profiles.n_samples)
    adj = p <= xi
    adj &= valid[:, None] & valid[None, :]
    np.fill_diagonal(adj, False)
    return SimilarityGraph(adjacency=adj, metric="correlation_pvalue",
                           threshold_spec=f"p<={xi:g}", t=profiles.t,
                           field_name=profiles.field_name)


def build_euclidean_network(profiles: ProfileSet,
                            fraction: float = 0.7) -> SimilarityGraph:
    """Edge (i, j) iff d_ij >= fraction * max pairwise distance.

    Edges mark dissimilarity.  If all profiles coincide the graph is
    empty and flagged degenerate.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    d = cdist(profiles.values, profiles.values)
    d_max = float(d.max())
    spec = f"d>={fraction:g}*dmax"
    if d_max == 0.0:
        n = profiles.n_profiles
        return SimilarityGraph(adjacency=np.zeros((n, n), dtype=bool),
                               metric="euclidean", threshold_spec=spec,
                               t=profiles.t, field_name=profiles.field_name,
                               degenerate=True)
    adj = d >= fraction * d_max
    np.fill_diagonal(adj, False)
    return SimilarityGraph(adjacency=adj, metric="euclidean",
                           threshold_spec=spec, t=profiles.t,
                           field_name=profiles.field_name)


@dataclass(eq=False)
class TemporalBlockMatrix:
    """Cross-time connection blocks M^(t, t + k*dt).

    blocks[k][r] is the N x N boolean block linking profiles at time
    index r to profiles at time index r + k, or None where r + k runs
    past the last snapshot.  Row k = 0 reproduces the spatial networks
    (with diagonal entries kept as computed).
    """

    times: np.ndarray
    delta_t: float
    metric: str
    threshold_spec: str
    field_name: str
    blocks: list

    @property
    def n(self) -> int:
        return len(self.times)


def temporal_blocks(profile_sets, metric: str, *, xi: float = 0.05,
                    fraction: float = 0.7) -> TemporalBlockMatrix:
    """Assemble the block matrix over uniformly spaced profile sets."""
    sets = list(profile_sets)
    if len(sets) < 2:
        raise ValueError("need at least 2 snapshot times")
    times = np.array([ps.t for ps in sets], dtype=float)
    dts = np.diff(times)
    if np.any(dts <= 0) or not np.allclose(dts, dts[0], rtol=1e-9, atol=1e-12):
        raise NonUniformTimestepError(f"snapshot times not uniform: {times}")
    if len({ps.n_profiles for ps in sets}) != 1:
        raise ValueError("profile sets must share the node count")
    n = len(sets)

    def block(a: ProfileSet, b: ProfileSet) -> np.ndarray:
        if metric == "correlation_pvalue":
            va, valid_a = _correlation_matrix_pair(a.values, b.values)
            p = _pvalue_matrix(va, a.n_samples)
            m = p <= xi
            m &= valid_a
            return m
        if metric == "euclidean":
            d = cdist(a.values, b.values)
            d_max = float(d.max())
            if d_max == 0.0:
                return np.zeros(d.shape, dtype=bool)
            return d >= fraction * d_max
        raise ValueError(f"unknown metric {metric!r}")

    spec = f"p<={xi:g}" if metric == "correlation_pvalue" \
        else f"d>={fraction:g}*dmax"
    blocks = []
    for k in range(n):
        row = []
        for r in range(n):
            row.append(block(sets[r], sets[r + k]) if r + k < n else None)
        blocks.append(row)
    return TemporalBlockMatrix(times=times, delta_t=float(dts[0]),
                               metric=metric, threshold_spec=spec,
                               field_name=sets[0].field_name, blocks=blocks)


def _correlation_matrix_pair(values_a: np.ndarray, values_b: np.ndarray):
    """Cross correlations between two profile sets; invalid pairs masked."""
    def normalize(v):
        centered = v - v.mean(axis=1, keepdims=True)
        norms = np.sqrt(np.sum(centered ** 2, axis=1))
        valid = norms > 0.0
        return centered / np.where(valid, norms, 1.0)[:, None], valid

    za, va = normalize(np.asarray(values_a, dtype=float))
    zb, vb = normalize(np.asarray(values_b, dtype=float))
    c = za @ zb.T
    np.clip(c, -1.0, 1.0, out=c)
    return c, va[:, None] & vb[None, :]
