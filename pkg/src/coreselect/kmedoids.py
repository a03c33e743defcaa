"""K-Medoids (PAM) clustering with silhouette-based selection of k.

Initialization is the deterministic greedy BUILD: the first medoid
minimizes total distance, each subsequent medoid maximizes the reduction
in total deviation. The swap phase evaluates all (medoid, non-medoid)
pairs per iteration and applies the single best strictly-improving swap,
so total deviation is non-increasing. All tie-breaks go to the lowest
index, which makes results reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .data_model import EmbeddingMatrix
from .errors import ConfigError, DataError

_IMPROVE_EPS = 1e-12


@dataclass
class DistanceMatrix:
    values: np.ndarray  # (n, n) symmetric, zero diagonal
    metric: str = "euclidean"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DataError("distance matrix must be square")
        if not np.all(np.isfinite(v)):
            raise DataError("distance matrix contains non-finite values")
        if np.any(v < 0) or np.any(np.diag(v) != 0) or not np.allclose(v, v.T):
            raise DataError("distance matrix must be symmetric, non-negative, zero-diagonal")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class Clustering:
    k: int
    assignment: np.ndarray  # (n,) cluster indices
    medoids: np.ndarray     # (k,) row indices
    total_deviation: float
    iterations: int


@dataclass
class SilhouetteReport:
    per_point: np.ndarray
    mean: float
    per_cluster_mean: np.ndarray


@dataclass
class KSelectionResult:
    chosen_k: int
    scores: dict            # k -> mean silhouette
    clusterings: dict       # k -> Clustering


@dataclass
class ClassClustering:
    """One class's clustering plus the id bookkeeping the sampler needs."""

    class_index: int
    ids: np.ndarray         # SampleIds for the class, in class-matrix order
    assignment: np.ndarray  # (n,) intraclass cluster indices
    medoid_ids: np.ndarray  # (k,) SampleIds of the medoids
    k: int
    mean_silhouette: float | None
    per_cluster_silhouette: np.ndarray | None
    fallback: bool = False

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def cluster_ids(self, c: int) -> np.ndarray:
        return self.ids[self.assignment == c]


@dataclass(frozen=True)
class ClusterConfig:
    k_range: tuple = (2, 8)
    metric: str = "euclidean"
    seed: int = 0
    max_iter: int = 100


def pairwise_distances(m: EmbeddingMatrix, metric: str = "euclidean") -> DistanceMatrix:
    if m.n < 2:
        raise DataError(f"need N >= 2 points, got {m.n}")
    if metric == "euclidean":
        v = cdist(m.data, m.data, metric="euclidean")
    elif metric == "manhattan":
        v = cdist(m.data, m.data, metric="cityblock")
    else:
        raise ConfigError(f"unknown metric {metric!r}")
    v = (v + v.T) / 2.0
    np.fill_diagonal(v, 0.0)
    return DistanceMatrix(v, metric)


def _assign(dist: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    # nearest medoid, ties to the lowest cluster index; medoids always own
    # their cluster (relevant only under exact duplicates)
    dm = dist[:, medoids]
    assignment = dm.argmin(axis=1)
    assignment[medoids] = np.arange(len(medoids))
    return assignment


def _build_init(dist: np.ndarray, k: int) -> list[int]:
    totals = dist.sum(axis=0)
    medoids = [int(np.argmin(totals))]
    dnear = dist[:, medoids[0]].copy()
    for _ in range(1, k):
        gains = np.maximum(dnear[:, None] - dist, 0.0).sum(axis=0)
        gains[medoids] = -np.inf
        j = int(np.argmax(gains))
        medoids.append(j)
        np.minimum(dnear, dist[:, j], out=dnear)
    return medoids


def single_medoid(d: DistanceMatrix) -> Clustering:
    """Degenerate k=1 clustering: the global 1-medoid minimizer."""
    totals = d.values.sum(axis=0)
    m = int(np.argmin(totals))
    return Clustering(k=1, assignment=np.zeros(d.n, dtype=np.int64),
                      medoids=np.array([m]), total_deviation=float(totals[m]),
                      iterations=0)


# single-swap PAM has rare local optima well above the global one even at
# n <= 8; instances this small are cheap to solve exactly instead
_EXACT_LIMIT = 3000


def _exact_medoids(dist: np.ndarray, k: int) -> np.ndarray | None:
    from itertools import combinations
    from math import comb

    n = dist.shape[0]
    if comb(n, k) > _EXACT_LIMIT:
        return None
    best_cost = np.inf
    best = None
    for combo in combinations(range(n), k):
        cost = dist[:, combo].min(axis=1).sum()
        if cost < best_cost - _IMPROVE_EPS:
            best_cost = cost
            best = combo
    return np.array(best)


def kmedoids_fit(d: DistanceMatrix, k: int, seed: int = 0, max_iter: int = 100) -> Clustering:
    """PAM: deterministic BUILD seeding plus best-swap iterations.

    Instances small enough to enumerate (C(n,k) <= 3000) are refined
    against the exact optimizer of the PAM objective. The seed parameter
    is accepted for interface stability; with deterministic BUILD and
    lowest-index tie-breaking it does not influence the result.
    """
    n = d.n
    if not 2 <= k <= n - 1:
        raise ConfigError(f"k must satisfy 2 <= k <= n-1, got k={k}, n={n}")
    if max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}")
    dist = d.values
    medoids = np.array(_build_init(dist, k))

    iterations = 0
    rows = np.arange(n)
    for _ in range(max_iter):
        dm = dist[:, medoids]
        order = np.argsort(dm, axis=1, kind="stable")
        d1 = dm[rows, order[:, 0]]
        d2 = dm[rows, order[:, 1]]
        nearest = order[:, 0]

        is_medoid = np.zeros(n, dtype=bool)
        is_medoid[medoids] = True
        cand = np.flatnonzero(~is_medoid)
        dc = dist[:, cand]  # (n, n_cand)

        best_delta = -_IMPROVE_EPS
        best = None
        for r in range(k):
            in_r = nearest == r
            # points losing medoid r fall back to min(second-nearest, new)
            deltas = (np.minimum(dc[in_r], d2[in_r, None]) - d1[in_r, None]).sum(axis=0)
            deltas += np.minimum(dc[~in_r] - d1[~in_r, None], 0.0).sum(axis=0)
            j = int(np.argmin(deltas))
            if deltas[j] < best_delta:
                best_delta = float(deltas[j])
                best = (r, int(cand[j]))
        if best is None:
            break
        medoids[best[0]] = best[1]
        iterations += 1

    exact = _exact_medoids(dist, k)
    if exact is not None:
        pam_cost = dist[rows, medoids[_assign(dist, medoids)]].sum()
        exact_cost = dist[:, exact].min(axis=1).sum()
        if exact_cost < pam_cost - _IMPROVE_EPS:
            medoids = exact

    assignment = _assign(dist, medoids)
    total = float(dist[rows, medoids[assignment]].sum())
    return Clustering(k=k, assignment=assignment, medoids=medoids,
                      total_deviation=total, iterations=iterations)


def silhouette(d: DistanceMatrix, assignment) -> SilhouetteReport:
    """Per-point silhouette s_i = (b_i - a_i) / max(a_i, b_i).

    a_i averages over the point's own cluster excluding itself; b_i is the
    smallest mean distance to any other cluster. Points in singleton
    clusters get s_i = 0, as does the degenerate a_i = b_i = 0 case.
    """
    assignment = np.asarray(assignment)
    n = d.n
    if len(assignment) != n:
        raise DataError("assignment length must equal distance matrix size")
    labels = np.unique(assignment)
    k = len(labels)
    if k < 2:
        raise DataError("silhouette undefined for a single cluster")
    relabel = {int(c): i for i, c in enumerate(labels)}
    a = np.array([relabel[int(c)] for c in assignment])

    onehot = np.zeros((n, k))
    onehot[np.arange(n), a] = 1.0
    sums = d.values @ onehot          # (n, k): summed distance to each cluster
    counts = onehot.sum(axis=0)       # (k,)

    own_count = counts[a]
    own_sum = sums[np.arange(n), a]
    a_i = np.where(own_count > 1, own_sum / np.maximum(own_count - 1, 1), 0.0)

    means = sums / counts[None, :]
    means[np.arange(n), a] = np.inf
    b_i = means.min(axis=1)

    denom = np.maximum(a_i, b_i)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, (b_i - a_i) / denom, 0.0)
    s = np.where(own_count <= 1, 0.0, s)

    per_cluster = np.array([s[a == c].mean() for c in range(k)])
    return SilhouetteReport(per_point=s, mean=float(s.mean()), per_cluster_mean=per_cluster)


def select_k(d: DistanceMatrix, k_range: tuple, seed: int = 0, max_iter: int = 100
             ) -> KSelectionResult:
    """Run PAM for each k in the range and pick the best mean silhouette."""
    k_min, k_max = k_range
    if not 2 <= k_min <= k_max <= d.n - 1:
        raise ConfigError(f"invalid k range [{k_min}, {k_max}] for n={d.n}")
    scores, clusterings = {}, {}
    for k in range(k_min, k_max + 1):
        c = kmedoids_fit(d, k, seed=seed, max_iter=max_iter)
        clusterings[k] = c
        scores[k] = silhouette(d, c.assignment).mean
    chosen = min(scores, key=lambda k: (-scores[k], k))
    return KSelectionResult(chosen_k=chosen, scores=scores, clusterings=clusterings)


def cluster_class(m: EmbeddingMatrix, config: ClusterConfig = ClusterConfig()
                  ) -> tuple[KSelectionResult | None, ClassClustering]:
    """Cluster a single-class matrix, selecting k by silhouette.

    Classes too small for the k range fall back to one cluster containing
    every point (flagged in the result) instead of aborting the pipeline.
    """
    classes = np.unique(m.labels)
    if len(classes) != 1:
        raise DataError(f"cluster_class expects a single-class matrix, got {len(classes)} classes")
    class_index = int(classes[0])
    k_min, k_max = config.k_range
    if m.n < k_min + 1:
        if m.n == 1:
            medoid_row = 0
            assignment = np.zeros(1, dtype=np.int64)
        else:
            c1 = single_medoid(pairwise_distances(m, config.metric))
            medoid_row = int(c1.medoids[0])
            assignment = c1.assignment
        cc = ClassClustering(class_index=class_index, ids=m.ids.copy(),
                             assignment=assignment, medoid_ids=np.array([m.ids[medoid_row]]),
                             k=1, mean_silhouette=None, per_cluster_silhouette=None,
                             fallback=True)
        return None, cc
    d = pairwise_distances(m, config.metric)
    sel = select_k(d, (k_min, min(k_max, m.n - 1)), seed=config.seed, max_iter=config.max_iter)
    best = sel.clusterings[sel.chosen_k]
    rep = silhouette(d, best.assignment)
    cc = ClassClustering(class_index=class_index, ids=m.ids.copy(),
                         assignment=best.assignment, medoid_ids=m.ids[best.medoids],
                         k=best.k, mean_silhouette=rep.mean,
                         per_cluster_silhouette=rep.per_cluster_mean)
    return sel, cc


def cluster_report_rows(clusterings: dict[int, ClassClustering],
                        class_names: list[str] | None = None) -> list[dict]:
    """Per-cluster frequency rows: class, cluster, size, medoid_id, silhouette."""
    rows = []
    for ci in sorted(clusterings):
        cc = clusterings[ci]
        name = class_names[ci] if class_names else str(ci)
        sizes = cc.cluster_sizes
        for c in range(cc.k):
            sil = "" if cc.per_cluster_silhouette is None else repr(float(cc.per_cluster_silhouette[c]))
            rows.append({"class": name, "cluster": c, "size": int(sizes[c]),
                         "medoid_id": int(cc.medoid_ids[c]), "mean_silhouette": sil})
    return rows


def write_cluster_report(clusterings: dict[int, ClassClustering], path,
                         class_names: list[str] | None = None) -> None:
    rows = cluster_report_rows(clusterings, class_names)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("class,cluster,size,medoid_id,mean_silhouette\n")
        for r in rows:
            f.write(f"{r['class']},{r['cluster']},{r['size']},{r['medoid_id']},{r['mean_silhouette']}\n")
