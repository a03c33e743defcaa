import itertools

import numpy as np
import pytest

from coreselect.data_model import EmbeddingMatrix
from coreselect.errors import ConfigError, DataError
from coreselect.kmedoids import (ClusterConfig, DistanceMatrix, cluster_class,
                                 cluster_report_rows, kmedoids_fit,
                                 pairwise_distances, select_k, silhouette,
                                 single_medoid)
from coreselect.synthetic import ClassSpec, ClusterSpec, MixtureSpec, generate


def matrix(points, labels=None):
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    labels = labels if labels is not None else np.zeros(n, dtype=int)
    names = [f"c{i}" for i in range(int(np.max(labels)) + 1)]
    return EmbeddingMatrix(ids=np.arange(n), labels=labels, data=pts, class_names=names)


def naive_silhouette(dist, assignment):
    """Direct transcription of the per-point silhouette formulas."""
    n = len(assignment)
    clusters = sorted(set(assignment))
    s = np.zeros(n)
    for i in range(n):
        own = [j for j in range(n) if assignment[j] == assignment[i] and j != i]
        if not own:
            s[i] = 0.0
            continue
        a_i = sum(dist[i][j] for j in own) / len(own)
        b_i = min(
            sum(dist[i][j] for j in range(n) if assignment[j] == c) /
            sum(1 for j in range(n) if assignment[j] == c)
            for c in clusters if c != assignment[i])
        s[i] = 0.0 if max(a_i, b_i) == 0 else (b_i - a_i) / max(a_i, b_i)
    return s


def brute_force_k2(dist):
    """Optimal 2-medoid total deviation by exhaustive enumeration."""
    n = len(dist)
    best = np.inf
    for a, b in itertools.combinations(range(n), 2):
        cost = np.minimum(dist[:, a], dist[:, b]).sum()
        best = min(best, cost)
    return best


class TestPairwiseDistances:
    def test_345_triangle(self):
        d = pairwise_distances(matrix([[0, 0], [3, 4]]))
        assert d.values[0, 1] == pytest.approx(5.0)

    def test_identical_points(self):
        d = pairwise_distances(matrix([[1, 1], [1, 1], [1, 1]]))
        assert np.all(d.values == 0)

    def test_manhattan(self):
        d = pairwise_distances(matrix([[0, 0], [3, 4]]), metric="manhattan")
        assert d.values[0, 1] == pytest.approx(7.0)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(0)
        d = pairwise_distances(matrix(rng.normal(size=(20, 3)))).values
        for i, j, k in itertools.permutations(range(20), 3):
            assert d[i, j] <= d[i, k] + d[k, j] + 1e-9

    def test_too_small(self):
        with pytest.raises(DataError):
            pairwise_distances(matrix([[0, 0]]))

    def test_unknown_metric(self):
        with pytest.raises(ConfigError):
            pairwise_distances(matrix([[0, 0], [1, 1]]), metric="chebyshev")


class TestKMedoidsFit:
    def test_two_separated_pairs(self):
        m = matrix([[0, 0], [0, 1], [100, 0], [100, 1]])
        d = pairwise_distances(m)
        c = kmedoids_fit(d, 2)
        groups = {tuple(sorted(np.flatnonzero(c.assignment == g))) for g in range(2)}
        assert groups == {(0, 1), (2, 3)}
        assert c.total_deviation == pytest.approx(2.0)

    def test_n_equals_k_plus_guard(self):
        # k = n-1: one cluster holds a pair, deviation is its distance
        m = matrix([[0, 0], [10, 0], [20, 0]])
        d = pairwise_distances(m)
        c = kmedoids_fit(d, 2)
        assert c.total_deviation == pytest.approx(10.0)

    def test_parameter_errors(self):
        d = pairwise_distances(matrix([[0, 0], [1, 0], [2, 0]]))
        with pytest.raises(ConfigError):
            kmedoids_fit(d, 3)  # k must be <= n-1
        with pytest.raises(ConfigError):
            kmedoids_fit(d, 1)
        with pytest.raises(ConfigError):
            kmedoids_fit(d, 2, max_iter=0)

    def test_matches_brute_force_k2(self):
        rng = np.random.default_rng(1)
        hits = 0
        for _ in range(200):
            n = int(rng.integers(4, 9))
            d = pairwise_distances(matrix(rng.normal(size=(n, 2))))
            c = kmedoids_fit(d, 2)
            opt = brute_force_k2(d.values)
            assert c.total_deviation <= opt * 1.05 + 1e-12
            if c.total_deviation <= opt + 1e-9:
                hits += 1
        assert hits >= 190  # >= 95% exact

    def test_determinism(self):
        rng = np.random.default_rng(2)
        m = matrix(rng.normal(size=(30, 3)))
        d = pairwise_distances(m)
        c1 = kmedoids_fit(d, 3, seed=0)
        c2 = kmedoids_fit(d, 3, seed=0)
        assert np.array_equal(c1.medoids, c2.medoids)
        assert np.array_equal(c1.assignment, c2.assignment)

    def test_partition_and_medoid_membership(self):
        rng = np.random.default_rng(3)
        d = pairwise_distances(matrix(rng.normal(size=(40, 2))))
        c = kmedoids_fit(d, 4)
        sizes = np.bincount(c.assignment, minlength=4)
        assert np.all(sizes > 0)
        for g, m in enumerate(c.medoids):
            assert c.assignment[m] == g

    def test_single_medoid(self):
        d = pairwise_distances(matrix([[0.0], [1.0], [10.0]]))
        c = single_medoid(d)
        assert c.medoids[0] == 1  # middle point minimizes total distance
        assert c.total_deviation == pytest.approx(10.0)


class TestSilhouette:
    def test_tight_far_clusters_all_ones(self):
        # within-distance 0, between > 0 -> every s_i = 1
        m = matrix([[0, 0], [0, 0], [9, 9], [9, 9]])
        d = pairwise_distances(m)
        rep = silhouette(d, [0, 0, 1, 1])
        assert np.allclose(rep.per_point, 1.0)
        assert rep.mean == pytest.approx(1.0)

    def test_equidistant_point_scores_zero(self):
        # point 1 sits exactly between its own cluster mate and the other cluster
        vals = np.array([
            [0, 2, 4, 4],
            [2, 0, 2, 2],
            [4, 2, 0, 0],
            [4, 2, 0, 0],
        ], dtype=float)
        d = DistanceMatrix(vals)
        rep = silhouette(d, [0, 0, 1, 1])
        assert rep.per_point[1] == pytest.approx(0.0)

    def test_singleton_cluster_zero(self):
        m = matrix([[0, 0], [1, 0], [50, 50]])
        d = pairwise_distances(m)
        rep = silhouette(d, [0, 0, 1])
        assert rep.per_point[2] == 0.0

    def test_single_cluster_undefined(self):
        d = pairwise_distances(matrix([[0, 0], [1, 1]]))
        with pytest.raises(DataError):
            silhouette(d, [0, 0])

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(6, 51))
            k = int(rng.integers(2, 6))
            d = pairwise_distances(matrix(rng.normal(size=(n, 3))))
            assignment = rng.integers(0, k, n)
            assignment[:k] = np.arange(k)  # keep every cluster non-empty
            rep = silhouette(d, assignment)
            oracle = naive_silhouette(d.values, assignment)
            assert np.max(np.abs(rep.per_point - oracle)) <= 1e-12
            assert np.all(rep.per_point >= -1) and np.all(rep.per_point <= 1)


class TestSelectK:
    def test_recovers_planted_k(self):
        spec = MixtureSpec(classes=(ClassSpec("a", 120, tuple(
            ClusterSpec(0.25, c, 0.05) for c in [(0, 0), (3, 0), (0, 3), (3, 3)])),),
            dim=2, seed=11)
        m, _ = generate(spec)
        d = pairwise_distances(m)
        res = select_k(d, (2, 8))
        assert res.chosen_k == 4

    def test_only_option(self):
        m = matrix([[0, 0], [0, 1], [10, 0], [10, 1]])
        d = pairwise_distances(m)
        res = select_k(d, (2, 2))
        assert res.chosen_k == 2

    def test_outlier_instance_prefers_two(self):
        # near-identical mass plus one far outlier: silhouette for k=2 beats k=3
        pts = [[0, 0], [0.01, 0], [0, 0.01], [0.01, 0.01], [100, 100]]
        d = pairwise_distances(matrix(pts))
        res = select_k(d, (2, 3))
        assert res.chosen_k == 2
        assert res.scores[2] > res.scores[3]

    def test_invalid_range(self):
        d = pairwise_distances(matrix(np.random.default_rng(0).normal(size=(5, 2))))
        with pytest.raises(ConfigError):
            select_k(d, (2, 5))


class TestClusterClass:
    def test_planted_four_clusters(self):
        spec = MixtureSpec(classes=(ClassSpec("lym", 160, tuple(
            ClusterSpec(w, c, 0.1) for w, c in zip(
                [0.4, 0.3, 0.2, 0.1], [(0, 0), (5, 0), (0, 5), (5, 5)]))),),
            dim=2, seed=13)
        m, truth = generate(spec, exact_counts=True)
        sel, cc = cluster_class(m)
        assert cc.k == 4
        assert sorted(cc.cluster_sizes.tolist()) == [16, 32, 48, 64]
        # medoids are actual sample ids from the class
        assert set(cc.medoid_ids.tolist()) <= set(m.ids.tolist())

    def test_tiny_class_k2(self):
        m = matrix([[0, 0], [0, 0.1], [10, 0]])
        _, cc = cluster_class(m, ClusterConfig(k_range=(2, 8)))
        assert cc.k == 2

    def test_too_small_falls_back(self):
        m = matrix([[0, 0], [1, 1]])
        sel, cc = cluster_class(m, ClusterConfig(k_range=(2, 8)))
        assert sel is None and cc.fallback and cc.k == 1
        assert cc.cluster_sizes.tolist() == [2]

    def test_frequency_table_sums_to_class_size(self):
        rng = np.random.default_rng(5)
        m = matrix(rng.normal(size=(25, 2)))
        _, cc = cluster_class(m)
        rows = cluster_report_rows({0: cc}, ["a"])
        assert sum(r["size"] for r in rows) == 25

    def test_multi_class_rejected(self):
        m = matrix([[0, 0], [1, 1]], labels=np.array([0, 1]))
        with pytest.raises(DataError):
            cluster_class(m)


def test_deviation_never_increases_across_runs():
    # PAM applies only strictly-improving swaps, so more iterations never hurt
    rng = np.random.default_rng(6)
    d = pairwise_distances(matrix(rng.normal(size=(50, 2))))
    prev = np.inf
    for it in range(1, 8):
        c = kmedoids_fit(d, 3, max_iter=it)
        assert c.total_deviation <= prev + 1e-12
        prev = c.total_deviation
