"""Desk-scale downstream evaluation of coresets.

A k-NN (or nearest-medoid) classifier stands in for full model training:
it is cheap, deterministic, and sensitive to which regions of the feature
space the coreset covers, which is exactly what the RS-vs-IS comparison
needs. Metrics are accuracy plus macro-averaged precision/recall/F1 with
the pessimistic zero-division convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .data_model import EmbeddingMatrix
from .errors import ConfigError, DataError
from .kmedoids import ClassClustering
from .sampler import intelligent_sample, random_sample


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (c, c): rows true class, columns predicted

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or np.any(c < 0):
            raise DataError("confusion matrix must be square and non-negative")
        self.counts = c

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    per_class: list  # of (precision, recall, f1)
    classifier: str = ""


def knn_classify(train: EmbeddingMatrix, test: EmbeddingMatrix, k: int = 5) -> np.ndarray:
    """Majority vote among the k nearest training points (euclidean).

    Distance ties resolve by training row order; vote ties by the smallest
    class index.
    """
    if train.dim != test.dim:
        raise DataError(f"dimension mismatch: train d={train.dim}, test d={test.dim}")
    if not 1 <= k <= train.n:
        raise ConfigError(f"k must be in [1, {train.n}], got {k}")
    dist = cdist(test.data, train.data)
    # stable argsort keeps equal-distance neighbors in training order
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    votes = train.labels[nearest]
    n_classes = max(int(train.labels.max()), int(test.labels.max())) + 1
    preds = np.empty(test.n, dtype=np.int32)
    for i in range(test.n):
        preds[i] = int(np.argmax(np.bincount(votes[i], minlength=n_classes)))
    return preds


def nearest_medoid_classify(medoids: list[tuple[int, np.ndarray]],
                            test: EmbeddingMatrix) -> np.ndarray:
    """Predict the class of the nearest medoid; ties to the smallest class."""
    if not medoids:
        raise ConfigError("need at least one medoid")
    order = sorted(range(len(medoids)), key=lambda i: (medoids[i][0], i))
    classes = np.array([medoids[i][0] for i in order], dtype=np.int32)
    points = np.stack([np.asarray(medoids[i][1], dtype=np.float64) for i in order])
    if points.shape[1] != test.dim:
        raise DataError("medoid dimension does not match test data")
    dist = cdist(test.data, points)
    return classes[dist.argmin(axis=1)]


def confusion_from_predictions(true_labels, predictions, n_classes: int) -> ConfusionMatrix:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(np.asarray(true_labels), np.asarray(predictions)):
        counts[int(t), int(p)] += 1
    return ConfusionMatrix(counts)


def compute_metrics(confusion: ConfusionMatrix, classifier: str = "") -> EvalReport:
    """Accuracy and macro precision/recall/F1 from a confusion matrix."""
    counts = confusion.counts
    total = confusion.total
    if total < 1:
        raise ConfigError("confusion matrix is empty")
    tp = np.diag(counts).astype(np.float64)
    col = counts.sum(axis=0).astype(np.float64)
    row = counts.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    # 2*TP/(2*TP+FP+FN), same as the harmonic mean of precision and recall
    # but exact on integer counts
    support = row + col
    f1 = np.divide(2 * tp, support, out=np.zeros_like(tp), where=support > 0)
    per_class = [(float(p), float(r), float(f)) for p, r, f in zip(precision, recall, f1)]
    return EvalReport(confusion=confusion,
                      accuracy=float(tp.sum() / total),
                      precision_macro=float(precision.mean()),
                      recall_macro=float(recall.mean()),
                      f1_macro=float(f1.mean()),
                      per_class=per_class,
                      classifier=classifier)


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    fraction: float
    seed: int
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float


def evaluate_coreset(train: EmbeddingMatrix, test: EmbeddingMatrix, ids,
                     knn_k: int = 5) -> EvalReport:
    """Train a k-NN on the id-selected subset of train, score on test."""
    wanted = set(int(i) for i in ids)
    rows = np.array([r for r, i in enumerate(train.ids) if int(i) in wanted])
    subset = train.take(rows)
    k = min(knn_k, subset.n)
    preds = knn_classify(subset, test, k=k)
    n_classes = len(train.class_names) or int(max(train.labels.max(), test.labels.max())) + 1
    conf = confusion_from_predictions(test.labels, preds, n_classes)
    return compute_metrics(conf, classifier=f"{k}-nn")


def compare(train: EmbeddingMatrix, test: EmbeddingMatrix,
            clusterings: dict[int, ClassClustering],
            fractions, seeds, methods=("random", "intelligent"),
            knn_k: int = 5, allocation: str = "equal",
            class_allocation: str = "proportional") -> list[ComparisonRow]:
    """RS-vs-IS grid: one row per (method, fraction, seed)."""
    rows = []
    for fraction in fractions:
        n = max(1, int(np.floor(fraction * train.n + 0.5)))
        n = min(n, train.n)
        for seed in seeds:
            for method in methods:
                if method == "random":
                    sel = random_sample(train, n, seed=seed)
                elif method == "intelligent":
                    sel = intelligent_sample(train, clusterings, n, allocation=allocation,
                                             class_allocation=class_allocation, seed=seed)
                else:
                    raise ConfigError(f"unknown method {method!r}")
                rep = evaluate_coreset(train, test, sel.ids, knn_k=knn_k)
                rows.append(ComparisonRow(method=method, fraction=float(fraction),
                                          seed=int(seed), accuracy=rep.accuracy,
                                          precision_macro=rep.precision_macro,
                                          recall_macro=rep.recall_macro,
                                          f1_macro=rep.f1_macro))
    return rows


def aggregate(rows: list[ComparisonRow]) -> dict:
    """(method, fraction) -> per-metric (mean, stddev) over seeds."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.method, r.fraction), []).append(r)
    out = {}
    for key, rs in groups.items():
        stats = {}
        for metric in ("accuracy", "precision_macro", "recall_macro", "f1_macro"):
            vals = np.array([getattr(r, metric) for r in rs])
            stats[metric] = (float(vals.mean()), float(vals.std()))
        out[key] = stats
    return out


def write_comparison_csv(rows: list[ComparisonRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("method,fraction,seed,accuracy,precision_macro,recall_macro,f1_macro\n")
        for r in rows:
            f.write(f"{r.method},{repr(r.fraction)},{r.seed},{repr(r.accuracy)},"
                    f"{repr(r.precision_macro)},{repr(r.recall_macro)},{repr(r.f1_macro)}\n")


def write_comparison_json(rows: list[ComparisonRow], path,
                          confusions: dict | None = None) -> None:
    doc = {
        "rows": [r.__dict__ for r in rows],
        "aggregate": {f"{m}/{repr(fr)}": stats for (m, fr), stats in sorted(aggregate(rows).items())},
    }
    if confusions:
        doc["confusions"] = {key: np.asarray(c).tolist() for key, c in sorted(confusions.items())}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
