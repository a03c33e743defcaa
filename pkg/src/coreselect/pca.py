"""PCA dimensionality reduction for embedding matrices.

The covariance is computed on mean-centered data with divisor N, its
eigendecomposition taken symmetric (numpy.linalg.eigh), eigenvalues sorted
descending with round-off negatives clamped to 0. The number of retained
components k is the smallest k whose cumulative explained-variance ratio
reaches the threshold (default 0.95). Each basis column is sign-fixed so
its largest-magnitude entry is non-negative.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data_model import EmbeddingMatrix
from .errors import ConfigError, DataError, FormatError, NumericError

_MAGIC = b"CPCA"
_VERSION = 1
DEFAULT_THRESHOLD = 0.95


@dataclass
class PcaModel:
    mean: np.ndarray          # (d,)
    basis: np.ndarray         # (d, k), orthonormal columns
    eigenvalues: np.ndarray   # (k,) descending, >= 0
    explained_ratio: np.ndarray  # (k,) cumulative, non-decreasing
    input_dim: int
    retained: int


def fit(m: EmbeddingMatrix, threshold: float = DEFAULT_THRESHOLD) -> PcaModel:
    """Fit a PCA model retaining the given cumulative variance fraction."""
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"threshold must be in (0,1], got {threshold}")
    if m.n < 2:
        raise DataError(f"PCA fit needs N >= 2, got N={m.n}")
    mean = m.data.mean(axis=0)
    centered = m.data - mean
    cov = centered.T @ centered / m.n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    if total <= 0.0:
        raise NumericError("zero total variance: all rows identical")
    cum = np.cumsum(evals) / total
    k = int(np.argmax(cum >= threshold - 1e-12)) + 1
    basis = evecs[:, :k].copy()
    # sign convention: largest-magnitude entry of each column non-negative
    for j in range(k):
        i = int(np.argmax(np.abs(basis[:, j])))
        if basis[i, j] < 0:
            basis[:, j] = -basis[:, j]
    return PcaModel(mean=mean, basis=basis, eigenvalues=evals[:k].copy(),
                    explained_ratio=cum[:k].copy(), input_dim=m.dim, retained=k)


def transform(model: PcaModel, m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Project rows onto the retained components: (x - mean) @ basis."""
    if m.dim != model.input_dim:
        raise DataError(f"dimension mismatch: matrix d={m.dim}, model d={model.input_dim}")
    reduced = (m.data - model.mean) @ model.basis
    return EmbeddingMatrix(m.ids, m.labels, reduced, list(m.class_names))


def fit_transform(m: EmbeddingMatrix, threshold: float = DEFAULT_THRESHOLD
                  ) -> tuple[PcaModel, EmbeddingMatrix]:
    model = fit(m, threshold)
    return model, transform(model, m)


def save_model(model: PcaModel, f) -> None:
    """Write the binary CPCA section to an open binary file object."""
    f.write(_MAGIC)
    f.write(struct.pack("<HII", _VERSION, model.input_dim, model.retained))
    f.write(np.ascontiguousarray(model.mean, dtype="<f8").tobytes())
    f.write(np.ascontiguousarray(model.eigenvalues, dtype="<f8").tobytes())
    f.write(np.ascontiguousarray(model.explained_ratio, dtype="<f8").tobytes())
    f.write(np.ascontiguousarray(model.basis, dtype="<f8").tobytes())


def load_model(f) -> PcaModel:
    """Read a CPCA section written by save_model."""
    magic = f.read(4)
    if magic != _MAGIC:
        raise FormatError(f"bad PCA model magic {magic!r}")
    version, d, k = struct.unpack("<HII", f.read(struct.calcsize("<HII")))
    if version != _VERSION:
        raise FormatError(f"unsupported PCA model version {version}")
    mean = np.frombuffer(f.read(8 * d), dtype="<f8").copy()
    evals = np.frombuffer(f.read(8 * k), dtype="<f8").copy()
    ratio = np.frombuffer(f.read(8 * k), dtype="<f8").copy()
    basis = np.frombuffer(f.read(8 * d * k), dtype="<f8").reshape(d, k).copy()
    return PcaModel(mean=mean, basis=basis, eigenvalues=evals,
                    explained_ratio=ratio, input_dim=d, retained=k)
