import numpy as np
import pytest

from coreselect.data_model import EmbeddingMatrix
from coreselect.errors import ConfigError, DataError
from coreselect.evaluate import (ConfusionMatrix, aggregate, compare,
                                 compute_metrics, confusion_from_predictions,
                                 knn_classify, nearest_medoid_classify,
                                 write_comparison_csv, write_comparison_json)
from coreselect.kmedoids import ClassClustering
from coreselect.synthetic import ClassSpec, ClusterSpec, MixtureSpec, generate


def matrix(points, labels, names=None):
    pts = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    names = names or [f"c{i}" for i in range(int(labels.max()) + 1)]
    return EmbeddingMatrix(ids=np.arange(len(pts)), labels=labels, data=pts,
                           class_names=names)


def naive_knn(train_x, train_y, query, k, n_classes):
    order = sorted(range(len(train_x)),
                   key=lambda i: (float(np.linalg.norm(train_x[i] - query)), i))
    votes = [0] * n_classes
    for i in order[:k]:
        votes[train_y[i]] += 1
    return votes.index(max(votes))


class TestKnn:
    def test_exact_match_k1(self):
        train = matrix([[0, 0], [5, 5]], [0, 1])
        test = matrix([[5, 5]], [1])
        assert knn_classify(train, test, k=1).tolist() == [1]

    def test_nearest_class_wins(self):
        train = matrix([[0, 0], [10, 10]], [0, 1])
        test = matrix([[1, 1]], [0])
        assert knn_classify(train, test, k=1).tolist() == [0]

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(0)
        train = matrix(rng.normal(size=(30, 3)), rng.integers(0, 3, 30))
        test = matrix(rng.normal(size=(15, 3)), rng.integers(0, 3, 15))
        preds = knn_classify(train, test, k=3)
        for i in range(test.n):
            assert preds[i] == naive_knn(train.data, train.labels.tolist(),
                                         test.data[i], 3, 3)

    def test_train_equals_test_perfect(self):
        rng = np.random.default_rng(1)
        m = matrix(rng.normal(size=(20, 2)), rng.integers(0, 2, 20))
        preds = knn_classify(m, m, k=1)
        assert np.array_equal(preds, m.labels)

    def test_dim_mismatch(self):
        train = matrix([[0, 0]], [0])
        test = matrix([[0, 0, 0]], [0])
        with pytest.raises(DataError):
            knn_classify(train, test, k=1)

    def test_vote_tie_prefers_smaller_class(self):
        train = matrix([[0, 0], [2, 0]], [1, 0])
        test = matrix([[1, 0]], [0])
        assert knn_classify(train, test, k=2).tolist() == [0]


class TestNearestMedoid:
    def test_voronoi_labeling(self):
        medoids = [(0, np.array([0.0, 0.0])), (1, np.array([10.0, 0.0]))]
        test = matrix([[1, 0], [9, 0]], [0, 1])
        assert nearest_medoid_classify(medoids, test).tolist() == [0, 1]

    def test_tie_prefers_smaller_class(self):
        medoids = [(1, np.array([2.0, 0.0])), (0, np.array([0.0, 0.0]))]
        test = matrix([[1, 0]], [0])
        assert nearest_medoid_classify(medoids, test).tolist() == [0]

    def test_empty_medoids(self):
        test = matrix([[0, 0]], [0])
        with pytest.raises(ConfigError):
            nearest_medoid_classify([], test)

    def test_equivalent_to_1nn_on_medoid_set(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(6, 2))
        labels = np.array([0, 0, 1, 1, 2, 2])
        medoids = [(int(l), p) for l, p in zip(labels, pts)]
        train = matrix(pts, labels)
        test = matrix(rng.normal(size=(25, 2)), rng.integers(0, 3, 25))
        assert np.array_equal(nearest_medoid_classify(medoids, test),
                              knn_classify(train, test, k=1))


class TestMetrics:
    def test_perfect_diagonal(self):
        rep = compute_metrics(ConfusionMatrix(np.diag([5, 3, 2])))
        assert rep.accuracy == 1.0
        assert rep.precision_macro == rep.recall_macro == rep.f1_macro == 1.0

    def test_binary_hand_case(self):
        # TP=40, TN=40, FP=10, FN=10 (positive = class 0)
        counts = np.array([[40, 10], [10, 40]])
        rep = compute_metrics(ConfusionMatrix(counts))
        assert rep.accuracy == pytest.approx(0.8)
        assert rep.per_class[0] == pytest.approx((0.8, 0.8, 0.8))
        assert rep.precision_macro == pytest.approx(0.8)
        assert rep.f1_macro == pytest.approx(0.8)

    def test_all_one_class_predictions(self):
        # 2 balanced classes of 50, everything predicted class 0
        counts = np.array([[50, 0], [50, 0]])
        rep = compute_metrics(ConfusionMatrix(counts))
        assert rep.accuracy == pytest.approx(0.5)
        assert rep.precision_macro == pytest.approx(0.25)
        assert rep.recall_macro == pytest.approx(0.5)
        assert rep.f1_macro == pytest.approx(1 / 3)

    def test_single_class_prediction_accuracy_is_prevalence(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            row = rng.integers(1, 20, 3)
            counts = np.zeros((3, 3), dtype=int)
            counts[:, 1] = row
            rep = compute_metrics(ConfusionMatrix(counts))
            assert rep.accuracy == pytest.approx(row[1] / row.sum())

    def test_macro_f1_bounded_by_per_class(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            counts = rng.integers(0, 30, (4, 4))
            counts[0, 0] += 1  # non-empty
            rep = compute_metrics(ConfusionMatrix(counts))
            f1s = [f for _, _, f in rep.per_class]
            assert min(f1s) - 1e-12 <= rep.f1_macro <= max(f1s) + 1e-12

    def test_confusion_total(self):
        true = [0, 1, 2, 1]
        pred = [0, 2, 2, 1]
        conf = confusion_from_predictions(true, pred, 3)
        assert conf.total == 4
        assert conf.counts[1, 2] == 1

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            compute_metrics(ConfusionMatrix(np.zeros((2, 2), dtype=int)))
        with pytest.raises(DataError):
            ConfusionMatrix(np.array([[1, -1], [0, 0]]))


def two_class_clustered_data(seed=0):
    spec = MixtureSpec(classes=(
        ClassSpec("a", 60, (ClusterSpec(0.8, (0, 0), 0.3), ClusterSpec(0.2, (6, 0), 0.3))),
        ClassSpec("b", 60, (ClusterSpec(0.8, (0, 10), 0.3), ClusterSpec(0.2, (6, 10), 0.3))),
    ), dim=2, seed=seed)
    m, truth = generate(spec, exact_counts=True)
    clusterings = {}
    for c in (0, 1):
        rows = np.flatnonzero(m.labels == c)
        ids = m.ids[rows]
        assignment = np.array([truth[int(i)] for i in ids])
        clusterings[c] = ClassClustering(
            class_index=c, ids=ids, assignment=assignment,
            medoid_ids=ids[:2], k=2, mean_silhouette=None, per_cluster_silhouette=None)
    return m, clusterings


class TestCompare:
    def test_fraction_one_identical_rows(self):
        m, clusterings = two_class_clustered_data()
        rows = compare(m, m, clusterings, [1.0], [0, 1])
        by_method = {}
        for r in rows:
            by_method.setdefault(r.method, []).append(r)
        for rs, iz in zip(by_method["random"], by_method["intelligent"]):
            assert rs.accuracy == iz.accuracy
            assert rs.f1_macro == iz.f1_macro

    def test_deterministic_rerun(self):
        m, clusterings = two_class_clustered_data()
        r1 = compare(m, m, clusterings, [0.3], [5])
        r2 = compare(m, m, clusterings, [0.3], [5])
        assert r1 == r2

    def test_aggregate_shape(self):
        m, clusterings = two_class_clustered_data()
        rows = compare(m, m, clusterings, [0.5], [0, 1, 2])
        agg = aggregate(rows)
        assert set(agg) == {("random", 0.5), ("intelligent", 0.5)}
        for stats in agg.values():
            mean, std = stats["accuracy"]
            assert 0 <= mean <= 1 and std >= 0

    def test_report_files(self, tmp_path):
        m, clusterings = two_class_clustered_data()
        rows = compare(m, m, clusterings, [0.5], [0])
        write_comparison_csv(rows, tmp_path / "rows.csv")
        lines = (tmp_path / "rows.csv").read_text().splitlines()
        assert lines[0] == "method,fraction,seed,accuracy,precision_macro,recall_macro,f1_macro"
        assert len(lines) == 3
        write_comparison_json(rows, tmp_path / "rep.json")
        import json
        doc = json.loads((tmp_path / "rep.json").read_text())
        assert len(doc["rows"]) == 2 and "aggregate" in doc
