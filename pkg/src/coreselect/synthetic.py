"""Synthetic Gaussian-mixture embedding datasets with planted clusters.

Each class is a mixture of isotropic Gaussians with known weights, so the
generated dataset carries ground-truth intraclass cluster labels. Points
are drawn by applying the inverse standard-normal CDF to a uniform stream
from numpy's PCG64 generator, which pins the byte-level output for a given
seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .data_model import EmbeddingMatrix
from .errors import ConfigError, FormatError

_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class ClusterSpec:
    weight: float
    center: tuple
    stddev: float


@dataclass(frozen=True)
class ClassSpec:
    name: str
    count: int
    clusters: tuple  # of ClusterSpec


@dataclass(frozen=True)
class MixtureSpec:
    classes: tuple  # of ClassSpec
    dim: int
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if not self.classes:
            raise ConfigError("need at least one class")
        for cls in self.classes:
            if not cls.clusters:
                raise ConfigError(f"class {cls.name!r} has no clusters")
            if cls.count < len(cls.clusters):
                raise ConfigError(f"class {cls.name!r}: count < number of clusters")
            total = sum(c.weight for c in cls.clusters)
            if abs(total - 1.0) > _WEIGHT_TOL:
                raise ConfigError(f"class {cls.name!r}: weights sum to {total}, not 1")
            for c in cls.clusters:
                if c.weight <= 0:
                    raise ConfigError(f"class {cls.name!r}: non-positive weight")
                if c.stddev <= 0:
                    raise ConfigError(f"class {cls.name!r}: non-positive stddev")
                if len(c.center) != self.dim:
                    raise ConfigError(f"class {cls.name!r}: center length != dim")


def exact_cluster_counts(weights, total: int) -> np.ndarray:
    """Largest-remainder rounding of weight*total, summing exactly to total."""
    w = np.asarray(weights, dtype=np.float64)
    quota = w / w.sum() * total
    base = np.floor(quota + 0.5).astype(np.int64)  # round half up
    diff = total - int(base.sum())
    if diff != 0:
        frac = quota - np.floor(quota)
        # hand out or claw back units by remainder, ties to lowest index
        order = np.lexsort((np.arange(len(w)), -frac if diff > 0 else frac))
        step = 1 if diff > 0 else -1
        i = 0
        while diff != 0:
            j = order[i % len(w)]
            if base[j] + step >= 0:
                base[j] += step
                diff -= step
            i += 1
    return base


def generate(spec: MixtureSpec, exact_counts: bool = False
             ) -> tuple[EmbeddingMatrix, dict[int, int]]:
    """Draw the mixture; returns the matrix and id -> intraclass-cluster map.

    Per class, cluster membership counts follow a multinomial draw over the
    weights (inverse-CDF over the cumulative weights), or largest-remainder
    exact proportions when ``exact_counts`` is set.
    """
    rng = np.random.default_rng(spec.seed)
    ids, labels, rows = [], [], []
    ground_truth: dict[int, int] = {}
    next_id = 0
    for class_idx, cls in enumerate(spec.classes):
        weights = np.array([c.weight for c in cls.clusters])
        if exact_counts:
            counts = exact_cluster_counts(weights, cls.count)
        else:
            cum = np.cumsum(weights)
            cum[-1] = 1.0
            counts = np.bincount(np.searchsorted(cum, rng.random(cls.count), side="right"),
                                 minlength=len(weights))
        for cluster_idx, (cspec, cnt) in enumerate(zip(cls.clusters, counts)):
            if cnt == 0:
                continue
            u = rng.random((int(cnt), spec.dim))
            pts = np.asarray(cspec.center) + cspec.stddev * ndtri(u)
            for p in pts:
                ids.append(next_id)
                labels.append(class_idx)
                rows.append(p)
                ground_truth[next_id] = cluster_idx
                next_id += 1
    m = EmbeddingMatrix(np.array(ids), np.array(labels), np.array(rows),
                        [c.name for c in spec.classes])
    return m, ground_truth


def spec_from_json(path) -> tuple[MixtureSpec, bool]:
    """Load a MixtureSpec from its JSON file; returns (spec, exact_counts)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    try:
        classes = tuple(
            ClassSpec(
                name=c["name"],
                count=int(c["count"]),
                clusters=tuple(
                    ClusterSpec(weight=float(k["weight"]),
                                center=tuple(float(v) for v in k["center"]),
                                stddev=float(k["stddev"]))
                    for k in c["clusters"]),
            )
            for c in doc["classes"])
        spec = MixtureSpec(classes=classes, dim=int(doc["dim"]), seed=int(doc.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: bad mixture spec: {e}") from None
    return spec, bool(doc.get("exact_counts", False))
