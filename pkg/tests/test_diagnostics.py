from collections import deque
from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import wasserstein_distance
from sklearn.cluster import DBSCAN

from fastq.diagnostics import (
    cluster_count, cluster_sweep, dbscan_labels, disparity, embed_2d, random_split_disparity,
    support_percent, unit_scale, wasserstein_1d, write_report,
)
from fastq.diagnostics.report import read_tsv, svg_bars


# ------------------------------------------------------------------ brute-force references

def brute_w1_equal(a, b) -> float:
    """Minimum mean |a_i - b_pi(i)| over all permutations."""
    return min(sum(abs(x - y) for x, y in zip(a, perm)) / len(a) for perm in permutations(b))


def brute_cluster_count(points, eps, min_samples) -> int:
    """DBSCAN cluster count by BFS over the core-point graph, no index structures."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    adj = dist <= eps
    core = adj.sum(1) >= min_samples
    seen = np.zeros(n, dtype=bool)
    count = 0
    for s in range(n):
        if not core[s] or seen[s]:
            continue
        count += 1
        seen[s] = True
        queue = deque([s])
        while queue:
            i = queue.popleft()
            for j in np.flatnonzero(adj[i] & core & ~seen):
                seen[j] = True
                queue.append(j)
    return count


def brute_support(observed, null) -> Fraction:
    return Fraction(100 * sum(1 for v in null if v < observed), len(null))


# ------------------------------------------------------------------ wasserstein

def test_wasserstein_examples():
    assert wasserstein_1d([0, 0], [1, 1]) == 1.0
    assert wasserstein_1d([0, 1, 2], [0, 1, 2]) == 0.0
    assert wasserstein_1d([0.0], [3.0]) == 3.0
    with pytest.raises(ValueError):
        wasserstein_1d([], [1.0])


def test_wasserstein_equal_sizes_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(60):
        n = int(rng.integers(1, 7))
        # dyadic values keep every partial sum exact, so equality is bitwise
        a = rng.integers(-64, 64, n) / 8.0
        b = rng.integers(-64, 64, n) / 8.0
        assert wasserstein_1d(a, b) == brute_w1_equal(list(a), list(b))
    for _ in range(60):
        n = int(rng.integers(1, 7))
        a, b = rng.normal(size=n), rng.normal(size=n)
        assert wasserstein_1d(a, b) == pytest.approx(brute_w1_equal(list(a), list(b)), abs=1e-12)


def test_wasserstein_divisible_sizes_match_scipy():
    rng = np.random.default_rng(1)
    for _ in range(60):
        n = int(rng.integers(1, 6))
        k = int(rng.integers(1, 4))
        a, b = rng.normal(size=n), rng.normal(size=n * k)
        assert wasserstein_1d(a, b) == pytest.approx(wasserstein_distance(a, b), abs=1e-12)
        assert wasserstein_1d(b, a) == pytest.approx(wasserstein_distance(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=12),
       st.lists(st.floats(-100, 100), min_size=1, max_size=12))
def test_wasserstein_properties(a, b):
    d = wasserstein_1d(a, b)
    assert d >= 0 and d == wasserstein_1d(b, a)
    assert wasserstein_1d(a, a) == 0.0


def test_wasserstein_triangle_spot_check():
    x, y, z = [0.0, 1.0, 5.0], [2.0, 2.5, 3.0], [-1.0, 4.0, 4.0]
    assert wasserstein_1d(x, z) <= wasserstein_1d(x, y) + wasserstein_1d(y, z)


def test_disparity_pairs_and_random_split():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(50, 2)), rng.normal(size=(50, 2)) + [3.0, 0.0]
    per_dim, total = disparity({0: a, 1: b})
    assert per_dim[0] == pytest.approx(wasserstein_1d(a[:, 0], b[:, 0]))
    assert total == pytest.approx(per_dim.sum())
    assert total > 5 * random_split_disparity(np.vstack([a, b]), 2, rng)
    with pytest.raises(ValueError):
        disparity({0: a})


# ------------------------------------------------------------------ clustering

def test_cluster_count_brute_force_and_sklearn():
    rng = np.random.default_rng(3)
    for _ in range(60):
        n = int(rng.integers(1, 40))
        pts = rng.random((n, 2))
        eps = float(rng.uniform(0.05, 0.3))
        k = int(rng.integers(1, 6))
        ours = cluster_count(pts, eps, k)
        assert ours == brute_cluster_count(pts, eps, k)
        sk = DBSCAN(eps=eps, min_samples=k).fit(pts).labels_
        assert ours == len(set(sk) - {-1})


def test_cluster_labels_cores_match_sklearn():
    rng = np.random.default_rng(4)
    pts = np.vstack([rng.normal(c, 0.05, size=(30, 2)) for c in ((0, 0), (1, 1), (0, 1))])
    ours = dbscan_labels(pts, 0.15, 5)
    sk = DBSCAN(eps=0.15, min_samples=5).fit(pts)
    core = sk.core_sample_indices_
    # same partition of core points up to relabelling
    pairs = {(a, b) for a, b in zip(ours[core], sk.labels_[core])}
    assert len(pairs) == len(set(ours[core])) == len(set(sk.labels_[core]))
    assert np.array_equal(ours == -1, sk.labels_ == -1)


def test_eps_boundary_is_inclusive():
    chain = np.arange(5, dtype=np.float64)[:, None]
    assert cluster_count(chain, 1.0, 3) == 1
    assert cluster_count(chain, 0.999, 2) == 0
    assert cluster_count(chain, 1.0, 1) == 1
    assert cluster_count(chain, 0.5, 1) == 5


def test_cluster_sweep_monotone_and_brute_force():
    rng = np.random.default_rng(5)
    blobs = np.vstack([rng.normal(c, s, size=(m, 2)) for c, s, m in
                       (((0, 0), 0.05, 60), ((2, 2), 0.1, 25), ((0, 3), 0.2, 12), ((3, 0), 0.3, 6))])
    sweep = cluster_sweep(blobs)
    assert sweep == [brute_cluster_count(blobs, 0.3, k) for k in (2, 5, 10, 20, 50)]
    assert all(b <= a for a, b in zip(sweep, sweep[1:])) and sweep[0] >= 3 and sweep[-1] == 1


def test_cluster_sweep_random_instances():
    rng = np.random.default_rng(6)
    for _ in range(50):
        pts = rng.random((int(rng.integers(5, 60)), 2))
        ks = (1, 2, 3, 5)
        assert cluster_sweep(pts, 0.2, ks) == [brute_cluster_count(pts, 0.2, k) for k in ks]


def test_unit_scale():
    x = np.array([[0.0, 5.0, 1.0], [2.0, 5.0, 3.0], [4.0, 5.0, 2.0]])
    assert np.array_equal(unit_scale(x), [[0, 0, 0], [0.5, 0, 1], [1, 0, 0.5]])


# ------------------------------------------------------------------ support %

def test_support_percent_examples():
    assert support_percent(1.0, [0.0, 0.5, 1.0, 2.0]) == 50.0
    assert support_percent(10.0, [1.0, 2.0]) == 100.0
    assert support_percent(-1.0, [1.0, 2.0]) == 0.0
    with pytest.raises(ValueError):
        support_percent(1.0, [])


def test_support_percent_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(60):
        null = rng.integers(0, 20, int(rng.integers(1, 50))) / 4.0
        obs = float(rng.integers(0, 20)) / 4.0
        assert support_percent(obs, null) == float(brute_support(obs, list(null)))


# ------------------------------------------------------------------ embedding and reports

def test_embed_2d_deterministic_and_learns():
    rng = np.random.default_rng(8)
    x = rng.random((80, 5))
    codes, losses = embed_2d(x, seed=3, epochs=40)
    again, _ = embed_2d(x, seed=3, epochs=40)
    assert codes.shape == (80, 2) and np.array_equal(codes, again)
    assert losses[-1] < losses[0]
    with pytest.raises(ValueError):
        embed_2d(x[:5], seed=0)


def test_report_pair(tmp_path):
    tsv, svg = write_report(tmp_path, "demo", ["k", "v"], [["a", 1.5], ["b", 2.0]], "demo",
                            labels=["a", "b"], series={"v": [1.5, 2.0]})
    header, rows = read_tsv(tsv)
    assert header == ["k", "v"] and rows == [["a", "1.5"], ["b", "2.0"]]
    assert svg.read_text().startswith("<svg") and svg.name == "demo.svg"
    assert "<rect" in svg_bars("t", ["x"], {"s": [0.0]})
