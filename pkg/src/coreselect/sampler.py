"""Coreset construction: Random Sampling baseline and Intelligent Sampling.

Random Sampling draws uniformly without replacement from the whole
training set. Intelligent Sampling first splits the budget across classes
(proportional by default), then across each class's intraclass clusters
(equal by default, which is what rescues underrepresented clusters), and
finally uniformly within each cluster. Uniform draws are realized as
inverse-CDF picks on a deterministic uniform stream (partial Fisher-Yates
over the remaining pool), so identical seeds give identical selections.

Quotas are integerized with largest-remainder rounding; quotas exceeding a
cluster's size are capped and the shortfall redistributed to the clusters
with the most remaining capacity (ties to the lowest index).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import EmbeddingMatrix
from .errors import ConfigError, DataError
from .kmedoids import ClassClustering


@dataclass(frozen=True)
class CoresetSpec:
    method: str = "random"            # random | intelligent
    fraction: float | None = None
    size: int | None = None
    seed: int = 0
    allocation: str = "equal"         # equal | proportional_floor (IS, intra-class)
    class_allocation: str = "proportional"  # proportional | equal (IS, across classes)

    def __post_init__(self):
        if self.method not in ("random", "intelligent"):
            raise ConfigError(f"unknown sampling method {self.method!r}")
        if (self.fraction is None) == (self.size is None):
            raise ConfigError("exactly one of fraction or size must be given")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"fraction must be in (0,1], got {self.fraction}")
        if self.allocation not in ("equal", "proportional_floor"):
            raise ConfigError(f"unknown allocation {self.allocation!r}")
        if self.class_allocation not in ("proportional", "equal"):
            raise ConfigError(f"unknown class_allocation {self.class_allocation!r}")

    def resolve_size(self, n: int) -> int:
        if self.size is not None:
            ns = self.size
        else:
            ns = int(math.floor(self.fraction * n + 0.5))
        ns = max(ns, 1)
        if ns > n:
            raise ConfigError(f"coreset size {ns} exceeds dataset size {n}")
        return ns


@dataclass
class CoresetSelection:
    ids: np.ndarray                  # selected SampleIds, ascending
    per_class: dict                  # class index -> count
    per_cluster: dict                # (class, cluster) -> count
    spec: CoresetSpec

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if len(np.unique(self.ids)) != len(self.ids):
            raise DataError("selection contains duplicate ids")


@dataclass(frozen=True)
class MultinomialModel:
    probabilities: tuple
    draws: int

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if np.any(p < 0):
            raise ConfigError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError(f"probabilities sum to {p.sum()}, not 1")


def draw_without_replacement(rng: np.random.Generator, pool_size: int, n: int) -> np.ndarray:
    """n uniform picks without replacement, via inverse-CDF on uniforms.

    Each step maps one uniform variate through the inverse CDF of the
    discrete uniform over the remaining pool (a partial Fisher-Yates).
    """
    if not 0 <= n <= pool_size:
        raise ConfigError(f"cannot draw {n} from pool of {pool_size}")
    pool = np.arange(pool_size)
    for i in range(n):
        j = i + int(rng.random() * (pool_size - i))
        j = min(j, pool_size - 1)  # guard u == 1.0 edge
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:n]


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer allocation: floors first, leftovers by descending remainder."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or w.sum() <= 0:
        raise ConfigError("weights must be non-negative with positive sum")
    quota = w / w.sum() * total
    base = np.floor(quota).astype(np.int64)
    rem = total - int(base.sum())
    if rem > 0:
        frac = quota - base
        order = np.lexsort((np.arange(len(w)), -frac))
        base[order[:rem]] += 1
    return base


def _cap_and_redistribute(quotas: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Cap quotas at capacity; shortfall goes to largest remaining capacity."""
    total = int(quotas.sum())
    if total > int(caps.sum()):
        raise ConfigError(f"quota {total} exceeds total capacity {int(caps.sum())}")
    out = np.minimum(quotas, caps).astype(np.int64)
    shortfall = total - int(out.sum())
    while shortfall > 0:
        capacity = caps - out
        j = min(np.flatnonzero(capacity == capacity.max()))
        out[j] += 1
        shortfall -= 1
    return out


def random_sample(m: EmbeddingMatrix, n: int, seed: int = 0) -> CoresetSelection:
    """Uniform sample without replacement over the whole dataset."""
    if not 1 <= n <= m.n:
        raise ConfigError(f"sample size {n} out of range [1, {m.n}]")
    rng = np.random.default_rng(seed)
    rows = np.sort(draw_without_replacement(rng, m.n, n))
    labels = m.labels[rows]
    per_class = {int(c): int(cnt) for c, cnt in zip(*np.unique(labels, return_counts=True))}
    spec = CoresetSpec(method="random", size=n, seed=seed)
    return CoresetSelection(ids=m.ids[rows], per_class=per_class, per_cluster={}, spec=spec)


def _cluster_quotas(sizes: np.ndarray, quota: int, allocation: str) -> np.ndarray:
    k = len(sizes)
    if allocation == "equal":
        base = largest_remainder(np.ones(k), quota)
    else:  # proportional_floor: proportional with every cluster >= 1 when feasible
        if quota >= k:
            base = 1 + largest_remainder(sizes, quota - k)
        else:
            base = largest_remainder(sizes, quota)
    return _cap_and_redistribute(base, sizes)


def intelligent_sample(m: EmbeddingMatrix, clusterings: dict[int, ClassClustering],
                       n: int, allocation: str = "equal",
                       class_allocation: str = "proportional",
                       seed: int = 0) -> CoresetSelection:
    """Cluster-stratified sampling: per-class quota, then per-cluster quota,
    then uniform within each cluster."""
    if not 1 <= n <= m.n:
        raise ConfigError(f"sample size {n} out of range [1, {m.n}]")
    classes = sorted(int(c) for c in np.unique(m.labels))
    for c in classes:
        if c not in clusterings:
            raise DataError(f"no clustering for class {c}")
    class_sizes = np.array([int(np.sum(m.labels == c)) for c in classes])
    if class_allocation == "proportional":
        class_quota = largest_remainder(class_sizes, n)
    else:
        class_quota = largest_remainder(np.ones(len(classes)), n)
    class_quota = _cap_and_redistribute(class_quota, class_sizes)

    rng = np.random.default_rng(seed)
    selected = []
    per_class, per_cluster = {}, {}
    for ci, c in enumerate(classes):
        cc = clusterings[c]
        if len(cc.ids) != class_sizes[ci]:
            raise DataError(f"clustering for class {c} covers {len(cc.ids)} samples, "
                            f"dataset has {class_sizes[ci]}")
        sizes = cc.cluster_sizes
        quotas = _cluster_quotas(sizes, int(class_quota[ci]), allocation)
        per_class[c] = int(class_quota[ci])
        for cl in range(cc.k):
            take = int(quotas[cl])
            per_cluster[(c, cl)] = take
            if take == 0:
                continue
            members = cc.cluster_ids(cl)
            picks = draw_without_replacement(rng, len(members), take)
            selected.append(members[np.sort(picks)])
    ids = np.sort(np.concatenate(selected))
    spec = CoresetSpec(method="intelligent", size=n, seed=seed,
                       allocation=allocation, class_allocation=class_allocation)
    return CoresetSelection(ids=ids, per_class=per_class, per_cluster=per_cluster, spec=spec)


def multinomial_pmf(model: MultinomialModel, counts) -> float:
    """Multinomial pmf N_S!/(n_1!...n_K!) * prod p_k^{n_k}, in log space."""
    counts = np.asarray(counts, dtype=np.int64)
    p = np.asarray(model.probabilities, dtype=np.float64)
    if len(counts) != len(p):
        raise ConfigError("counts length must match probabilities")
    if np.any(counts < 0) or counts.sum() != model.draws:
        raise ConfigError(f"counts must be non-negative and sum to draws={model.draws}")
    log = math.lgamma(model.draws + 1)
    for nk, pk in zip(counts, p):
        log -= math.lgamma(int(nk) + 1)
        if nk > 0:
            if pk == 0.0:
                return 0.0
            log += nk * math.log(pk)
    return math.exp(log)


def rs_expected_counts(cluster_sizes, n: int) -> np.ndarray:
    """Expected per-cluster counts under global random sampling."""
    sizes = np.asarray(cluster_sizes, dtype=np.float64)
    if np.any(sizes <= 0):
        raise ConfigError("cluster sizes must be positive")
    return n * sizes / sizes.sum()


@dataclass(frozen=True)
class RepresentationRow:
    class_index: int
    cluster: int
    source_size: int
    selected: int
    rate: float
    rs_expected: float


def representation_report(sel: CoresetSelection,
                          clusterings: dict[int, ClassClustering]) -> list[RepresentationRow]:
    """Per-(class, cluster) selection counts vs. the RS expectation."""
    chosen = set(int(i) for i in sel.ids)
    total_source = sum(len(cc.ids) for cc in clusterings.values())
    n_sel = len(sel.ids)
    rows = []
    for c in sorted(clusterings):
        cc = clusterings[c]
        for cl in range(cc.k):
            members = cc.cluster_ids(cl)
            size = len(members)
            count = sum(1 for i in members if int(i) in chosen)
            rows.append(RepresentationRow(
                class_index=c, cluster=cl, source_size=size, selected=count,
                rate=count / size if size else 0.0,
                rs_expected=n_sel * size / total_source))
    return rows


def write_representation_report(rows: list[RepresentationRow], path,
                                class_names: list[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("class,cluster,source_size,selected,rate,rs_expected\n")
        for r in rows:
            name = class_names[r.class_index] if class_names else str(r.class_index)
            f.write(f"{name},{r.cluster},{r.source_size},{r.selected},"
                    f"{repr(r.rate)},{repr(r.rs_expected)}\n")


def save_selection(sel: CoresetSelection, m: EmbeddingMatrix,
                   clusterings: dict[int, ClassClustering] | None, csv_path) -> None:
    """Selection CSV (id,class,cluster) plus a JSON sidecar with the spec."""
    csv_path = Path(csv_path)
    id_to_row = {int(i): r for r, i in enumerate(m.ids)}
    id_to_cluster = {}
    if clusterings:
        for c, cc in clusterings.items():
            for i, cl in zip(cc.ids, cc.assignment):
                id_to_cluster[int(i)] = int(cl)
    names = m.class_names or [str(c) for c in range(int(m.labels.max()) + 1)]
    with csv_path.open("w", encoding="utf-8", newline="\n") as f:
        f.write("id,class,cluster\n")
        for i in sel.ids:
            row = id_to_row[int(i)]
            cl = id_to_cluster.get(int(i), "")
            f.write(f"{int(i)},{names[m.labels[row]]},{cl}\n")
    sidecar = {
        "spec": {
            "method": sel.spec.method,
            "fraction": sel.spec.fraction,
            "size": sel.spec.size,
            "seed": sel.spec.seed,
            "allocation": sel.spec.allocation,
            "class_allocation": sel.spec.class_allocation,
        },
        "per_class": {str(k): v for k, v in sorted(sel.per_class.items())},
        "per_cluster": {f"{c}/{cl}": v for (c, cl), v in sorted(sel.per_cluster.items())},
        "n_selected": int(len(sel.ids)),
    }
    csv_path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_selection_ids(csv_path) -> np.ndarray:
    lines = Path(csv_path).read_text(encoding="utf-8").splitlines()
    return np.array([int(line.split(",")[0]) for line in lines[1:] if line], dtype=np.int64)
