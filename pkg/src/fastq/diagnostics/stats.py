"""Distribution distances, density clustering and the permutation support statistic."""
from __future__ import annotations

from itertools import combinations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


def wasserstein_1d(a, b) -> float:
    """W1 by quantile coupling on a grid of ``max(len(a), len(b))`` mid-point levels.

    Exact when the two samples have equal size (sorted pairing).
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein_1d needs two non-empty samples")
    m = max(a.size, b.size)
    levels = (np.arange(m) + 0.5) / m
    qa = a[np.minimum((levels * a.size).astype(np.int64), a.size - 1)]
    qb = b[np.minimum((levels * b.size).astype(np.int64), b.size - 1)]
    return float(np.mean(np.abs(qa - qb)))


def disparity(samples: dict[int, np.ndarray]) -> tuple[np.ndarray, float]:
    """Per-dimension W1 averaged over policy pairs, and its sum over dimensions.

    ``samples[p]`` is an ``[n_p, d]`` array of policy ``p``'s points.
    """
    keys = sorted(k for k, v in samples.items() if len(v))
    if len(keys) < 2:
        raise ValueError("need points from at least two groups")
    d = np.asarray(samples[keys[0]]).shape[1]
    per_dim = np.zeros(d)
    pairs = list(combinations(keys, 2))
    for p, q in pairs:
        sp, sq = np.asarray(samples[p]), np.asarray(samples[q])
        per_dim += [wasserstein_1d(sp[:, j], sq[:, j]) for j in range(d)]
    per_dim /= len(pairs)
    return per_dim, float(per_dim.sum())


def random_split_disparity(points: np.ndarray, n_groups: int, rng: np.random.Generator) -> float:
    """Disparity of the pooled points after a random relabelling into ``n_groups``."""
    labels = rng.permutation(np.arange(len(points)) % n_groups)
    return disparity({g: points[labels == g] for g in range(n_groups)})[1]


def dbscan_labels(points, eps: float, min_samples: int) -> np.ndarray:
    """DBSCAN labels (``-1`` is noise).

    A point is core when at least ``min_samples`` points, itself included, lie
    within distance ``eps``. Clusters are connected components of core points;
    border points join the first core neighbour's cluster.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        raise ValueError("no points")
    pairs = cKDTree(pts).query_pairs(eps, output_type="ndarray")
    deg = np.ones(n, dtype=np.int64) + np.bincount(pairs.ravel(), minlength=n)
    core = deg >= min_samples
    both = pairs[core[pairs[:, 0]] & core[pairs[:, 1]]]
    graph = coo_matrix((np.ones(len(both)), (both[:, 0], both[:, 1])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    labels = np.full(n, -1, dtype=np.int64)
    core_ids = np.flatnonzero(core)
    _, dense = np.unique(comp[core_ids], return_inverse=True)
    labels[core_ids] = dense
    for i, j in pairs:
        if not core[i] and core[j] and labels[i] < 0:
            labels[i] = labels[j]
        elif not core[j] and core[i] and labels[j] < 0:
            labels[j] = labels[i]
    return labels


def cluster_count(points, eps: float, min_samples: int) -> int:
    labels = dbscan_labels(points, eps, min_samples)
    return int(labels.max() + 1) if labels.size else 0


def cluster_sweep(points, eps: float = 0.3, min_samples_list=(2, 5, 10, 20, 50)) -> list[int]:
    return [cluster_count(points, eps, int(k)) for k in min_samples_list]


def unit_scale(points: np.ndarray) -> np.ndarray:
    """Min-max scale each column to [0, 1] (constant columns map to 0)."""
    pts = np.asarray(points, dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (pts - lo) / span


def support_percent(observed_lift: float, null_samples) -> float:
    """Percentage of null samples strictly below the observed lift."""
    null = np.asarray(null_samples, dtype=np.float64).ravel()
    if null.size == 0:
        raise ValueError("empty null distribution")
    return 100.0 * float(np.count_nonzero(null < observed_lift)) / null.size
