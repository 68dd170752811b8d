"""Sensitivity-weighted batched k-means and the color/shape codebooks.

Assignment uses the weighted squared distance S(x) * ||x - c_k||^2, which for
positive weights has the same argmin as plain distance; zero-weight vectors
are assigned by plain distance but contribute nothing to the centroid means.
Updates follow a mini-batch scheme: each step assigns a random batch, takes
the weighted mean per cluster, and moves centroids by an exponential decay
(c <- lambda_d * c + (1 - lambda_d) * mean).  An exact mode replaces the decay
update with the plain weighted mean for oracle comparisons against Lloyd's.

Shape clustering operates on trace-normalized covariances packed as 6-entry
vectors.  Batch means of unit-trace matrices stay unit trace; centroids are
renormalized by their trace after every step to remove floating-point drift,
and the finished codebook is eigendecomposed into (quaternion, unit scale).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .scene import (GaussianScene, cov6_trace, covariance_from,
                    eigendecompose_covariance, normalize_covariance)
from .sensitivity import split_by_threshold

TRACE_TOL = 1e-5
TRACE_FLOOR = 1e-12


@dataclass
class ClusterConfig:
    k: int = 4096
    steps: int = 100
    batch_size: int = 2 ** 18
    decay: float = 0.8           # lambda_d
    seed: int = 0
    exact_update: bool = False   # full-mean updates for Lloyd's-oracle tests

    def __post_init__(self):
        assert self.k > 0 and self.steps >= 0 and self.batch_size > 0
        assert 0.0 < self.decay <= 1.0


@dataclass
class Codebook:
    """K_total x D table; rows [clustered_count:] are retained verbatim."""

    entries: np.ndarray
    clustered_count: int
    # Shape codebooks keep the pre-decomposition unit-trace covariances around
    # for diagnostics and tests.
    cov_entries: np.ndarray | None = field(default=None, repr=False)

    @property
    def k_total(self) -> int:
        return self.entries.shape[0]


def _init_centroids(rng: np.random.Generator, vectors: np.ndarray, k: int) -> np.ndarray:
    lo = vectors.min(axis=0)
    hi = vectors.max(axis=0)
    return lo + rng.random((k, vectors.shape[1])) * (hi - lo)


def _assign(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2; the x term is constant per row.
    d2 = (centroids * centroids).sum(axis=1)[None, :] - 2.0 * vectors @ centroids.T
    return np.argmin(d2, axis=1)


def _batch_means(vectors: np.ndarray, weights: np.ndarray, assign: np.ndarray,
                 k: int) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean per cluster; a cluster with zero total weight is skipped."""
    wsum = np.bincount(assign, weights=weights, minlength=k)
    means = np.zeros((k, vectors.shape[1]))
    for d in range(vectors.shape[1]):
        means[:, d] = np.bincount(assign, weights=weights * vectors[:, d], minlength=k)
    updated = wsum > 0
    means[updated] /= wsum[updated, None]
    return means, updated


def weighted_kmeans(vectors: np.ndarray, weights: np.ndarray, config: ClusterConfig,
                    *, init: np.ndarray | None = None,
                    step_hook=None) -> tuple[np.ndarray, np.ndarray]:
    """Cluster M x D vectors into K centroids; returns (centroids, assignments).

    ``init`` overrides the uniform-random initialization (oracle tests).
    ``step_hook(rng, centroids, means, updated) -> centroids`` runs after every
    update step; shape clustering uses it for trace renormalization.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    m = vectors.shape[0]
    if m < 1:
        raise ValueError("need at least one vector")
    if weights.shape != (m,):
        raise ValueError("weights must be one scalar per vector")
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    if not np.any(weights > 0):
        raise ValueError("all clustering weights are zero")

    k = config.k
    if k > m:
        warnings.warn(f"codebook size {k} exceeds population {m}; clamping to {m}")
        k = m
    rng = np.random.default_rng(config.seed)
    centroids = _init_centroids(rng, vectors, k) if init is None else np.array(init, dtype=np.float64)
    batch_size = min(config.batch_size, m)

    order = rng.permutation(m)
    cursor = 0
    assigned_ever = np.zeros(k, dtype=bool)
    for _ in range(config.steps):
        if config.exact_update and batch_size == m:
            batch = np.arange(m)
        else:
            if cursor + batch_size > m:
                order = rng.permutation(m)
                cursor = 0
            batch = order[cursor:cursor + batch_size]
            cursor += batch_size
        assign = _assign(vectors[batch], centroids)
        means, updated = _batch_means(vectors[batch], weights[batch], assign, k)
        assigned_ever |= updated
        if config.exact_update:
            centroids[updated] = means[updated]
        else:
            centroids[updated] = config.decay * centroids[updated] + (1.0 - config.decay) * means[updated]
            # Uniform-random init strands centroids that never win a vector;
            # reseed them onto the batch vectors worst served by their current
            # centroid (the same farthest-vector rule used at the end).  Exact
            # mode skips this so it stays comparable to textbook Lloyd's.
            empty = np.nonzero(~updated)[0]
            if empty.size:
                dist = np.linalg.norm(vectors[batch] - centroids[assign], axis=1)
                farthest = np.argsort(-dist, kind="stable")[: empty.size]
                centroids[empty] = vectors[batch][farthest]
        if step_hook is not None:
            centroids = step_hook(rng, centroids, means, updated)

    assignments = _assign(vectors, centroids)
    # Clusters that never captured anything are dead weight: recycle them onto
    # the vectors currently worst represented, then reassign.
    for _ in range(k):
        counts = np.bincount(assignments, minlength=k)
        empty = np.nonzero(counts == 0)[0]
        if empty.size == 0:
            break
        dist = np.linalg.norm(vectors - centroids[assignments], axis=1)
        farthest = np.argsort(-dist, kind="stable")[: empty.size]
        centroids[empty] = vectors[farthest]
        assignments = _assign(vectors, centroids)
    return centroids, assignments


def kmeans_objective(vectors: np.ndarray, weights: np.ndarray,
                     centroids: np.ndarray, assignments: np.ndarray) -> float:
    diff = np.asarray(vectors, dtype=np.float64) - centroids[assignments]
    return float(np.sum(np.asarray(weights, dtype=np.float64) * (diff * diff).sum(axis=1)))


def cluster_colors(scene: GaussianScene, s: np.ndarray, beta_c: float,
                   config: ClusterConfig) -> tuple[Codebook, np.ndarray]:
    """Codebook over flattened SH vectors with high-sensitivity retention."""
    n = scene.n
    vectors = scene.sh.reshape(n, -1).astype(np.float64)
    clusterable, retained = split_by_threshold(np.arange(n), s, beta_c)
    if clusterable.size == 0:
        raise ValueError("no vectors left to cluster; lower beta_c")
    centroids, assign = weighted_kmeans(vectors[clusterable], np.asarray(s)[clusterable], config)
    k = centroids.shape[0]
    entries = np.concatenate([centroids, vectors[retained]], axis=0)
    index = np.empty(n, dtype=np.int64)
    index[clusterable] = assign
    index[retained] = k + np.arange(retained.size)
    return Codebook(entries=entries, clustered_count=k), index


def _shape_hook(vectors: np.ndarray):
    def hook(hook_rng: np.random.Generator, centroids: np.ndarray,
             means: np.ndarray, updated: np.ndarray) -> np.ndarray:
        mean_traces = cov6_trace(means[updated])
        if mean_traces.size and np.max(np.abs(mean_traces - 1.0)) > TRACE_TOL:
            raise AssertionError("weighted mean of unit-trace covariances lost unit trace")
        traces = cov6_trace(centroids)
        degenerate = traces <= TRACE_FLOOR
        if np.any(degenerate):
            replacement = hook_rng.integers(0, vectors.shape[0], size=int(degenerate.sum()))
            centroids[degenerate] = vectors[replacement]
            traces = cov6_trace(centroids)
        return centroids / traces[:, None]

    return hook


def cluster_shapes(scene: GaussianScene, s: np.ndarray, beta_g: float,
                   config: ClusterConfig) -> tuple[Codebook, np.ndarray, np.ndarray]:
    """Cluster trace-normalized covariances; returns (codebook, index, eta).

    The codebook's ``entries`` are (quaternion, unit-norm scale) rows of width
    7, obtained by eigendecomposing the unit-trace centroids; retained
    covariances are appended verbatim before decomposition.
    """
    n = scene.n
    cov = covariance_from(scene.rotations, np.exp(scene.log_scales.astype(np.float64)))
    sigma_hat, eta = normalize_covariance(cov)

    clusterable, retained = split_by_threshold(np.arange(n), s, beta_g)
    if clusterable.size == 0:
        raise ValueError("no vectors left to cluster; lower beta_g")
    vectors = sigma_hat[clusterable]
    centroids, assign = weighted_kmeans(vectors, np.asarray(s)[clusterable], config,
                                        step_hook=_shape_hook(vectors))
    k = centroids.shape[0]
    cov_entries = np.concatenate([centroids, sigma_hat[retained]], axis=0)

    quats, scales = eigendecompose_covariance(cov_entries)
    norms = np.linalg.norm(scales, axis=1, keepdims=True)
    entries = np.concatenate([quats, scales / norms], axis=1)

    index = np.empty(n, dtype=np.int64)
    index[clusterable] = assign
    index[retained] = k + np.arange(retained.size)
    return Codebook(entries=entries, clustered_count=k, cov_entries=cov_entries), index, eta
