"""Core dataset types and embedding file I/O.

An embedding dataset is an N x d matrix of per-sample feature vectors with
parallel sample ids and class labels. Labels are stored as integer class
indices internally; class-name strings appear only at the file boundary.

Two on-disk formats are supported:

* CSV: header ``id,label,f0,...,f{d-1}``, one row per sample, UTF-8,
  ``.`` decimal separator. Floats are written with Python's shortest
  round-trip repr.
* Binary: magic ``CSEL``, version u16=1, N u64, d u32, N ids (u64),
  N label indices (u32), a label-name table (count u32, then u32
  length-prefixed UTF-8 strings), then N*d f64 values row-major.
  Everything little-endian; round-trips are bit-exact.
"""

from __future__ import annotations

import json
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError

_MAGIC = b"CSEL"
_VERSION = 1
_LABEL_RE = re.compile(r"^[A-Za-z0-9_-]+$")


@dataclass(frozen=True)
class SplitSpec:
    """Train/test split parameters. Fraction applies to the train side."""

    train_fraction: float
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must be in (0,1), got {self.train_fraction}")


@dataclass(frozen=True)
class LabeledDataset:
    """Id/label pairs plus the ordered class vocabulary."""

    samples: tuple  # of (id, label-string)
    class_names: tuple
    source: str = ""

    def __post_init__(self):
        if len(self.class_names) != len(set(self.class_names)):
            raise DataError("duplicate class names")
        if not self.class_names or not self.samples:
            raise DataError("dataset needs at least one class and one sample")
        known = set(self.class_names)
        seen = set()
        for _, label in self.samples:
            if label not in known:
                raise DataError(f"label {label!r} not in class_names")
            seen.add(label)
        missing = known - seen
        if missing:
            raise DataError(f"classes without samples: {sorted(missing)}")


@dataclass
class EmbeddingMatrix:
    """N x d embedding matrix with parallel sample ids and class indices."""

    ids: np.ndarray  # (N,) int64
    labels: np.ndarray  # (N,) int32 class indices
    data: np.ndarray  # (N, d) float64
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DataError("data must be 2-D")
        n, d = self.data.shape
        if n < 1 or d < 1:
            raise DataError(f"need N >= 1 and d >= 1, got {n}x{d}")
        if len(self.ids) != n or len(self.labels) != n:
            raise DataError("ids, labels, and data rows must have equal length")
        if np.any(self.ids < 0):
            raise DataError("sample ids must be non-negative")
        uniq, counts = np.unique(self.ids, return_counts=True)
        if np.any(counts > 1):
            raise DataError(f"duplicate id {int(uniq[np.argmax(counts > 1)])}")
        if not np.all(np.isfinite(self.data)):
            i, j = np.argwhere(~np.isfinite(self.data))[0]
            raise DataError(f"non-finite value at row {i}, column f{j}")
        if self.class_names:
            if np.any(self.labels < 0) or np.any(self.labels >= len(self.class_names)):
                raise DataError("label index out of range of class_names")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def take(self, indices) -> "EmbeddingMatrix":
        """Row subset preserving the given order."""
        idx = np.asarray(indices)
        return EmbeddingMatrix(self.ids[idx], self.labels[idx], self.data[idx],
                               list(self.class_names))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(m: EmbeddingMatrix, spec: SplitSpec) -> tuple[EmbeddingMatrix, EmbeddingMatrix]:
    """Partition rows into train/test sets, deterministic given the seed.

    Stratified mode rounds each class's train count half-up, then nudges the
    largest classes by +/-1 until the global train count matches the
    unstratified target. Both sides keep the source row order.
    """
    rng = np.random.default_rng(spec.seed)
    n = m.n
    target = _round_half_up(spec.train_fraction * n)
    target = min(max(target, 1), n - 1)

    if not spec.stratified:
        perm = rng.permutation(n)
        train_idx = np.sort(perm[:target])
        test_idx = np.sort(perm[target:])
        return m.take(train_idx), m.take(test_idx)

    classes = np.unique(m.labels)
    counts = {int(c): int(np.sum(m.labels == c)) for c in classes}
    for c, nc in counts.items():
        if nc < 2:
            name = m.class_names[c] if m.class_names else str(c)
            raise DataError(f"class {name!r} has only {nc} sample; stratified split needs >= 2")

    takes = {c: min(max(_round_half_up(spec.train_fraction * nc), 1), nc - 1)
             for c, nc in counts.items()}
    diff = target - sum(takes.values())
    # adjust largest classes first (ties: lowest class index) until the
    # global count matches
    order = sorted(counts, key=lambda c: (-counts[c], c))
    while diff != 0:
        step = 1 if diff > 0 else -1
        moved = False
        for c in order:
            lo, hi = 1, counts[c] - 1
            if lo <= takes[c] + step <= hi:
                takes[c] += step
                diff -= step
                moved = True
                break
        if not moved:
            raise DataError("cannot satisfy stratified split counts")

    train_mask = np.zeros(n, dtype=bool)
    for c in sorted(counts):
        rows = np.flatnonzero(m.labels == c)
        chosen = rng.permutation(len(rows))[: takes[c]]
        train_mask[rows[chosen]] = True
    return m.take(np.flatnonzero(train_mask)), m.take(np.flatnonzero(~train_mask))


def partition_by_class(m: EmbeddingMatrix) -> dict[int, EmbeddingMatrix]:
    """Map class index -> sub-matrix, preserving relative row order."""
    out = {}
    for c in np.unique(m.labels):
        out[int(c)] = m.take(np.flatnonzero(m.labels == c))
    return out


def _format_float(x: float) -> str:
    return repr(float(x))


def save_embeddings(m: EmbeddingMatrix, path, format: str = "binary") -> None:
    """Write an embedding matrix to disk in the CSV or binary format."""
    path = Path(path)
    names = m.class_names or [str(c) for c in range(int(m.labels.max()) + 1)]
    for name in names:
        if not _LABEL_RE.match(name):
            raise DataError(f"label {name!r} not representable (must match [A-Za-z0-9_-]+)")
    if format == "csv":
        with path.open("w", encoding="utf-8", newline="\n") as f:
            f.write("id,label," + ",".join(f"f{j}" for j in range(m.dim)) + "\n")
            for i in range(m.n):
                row = ",".join(_format_float(v) for v in m.data[i])
                f.write(f"{int(m.ids[i])},{names[m.labels[i]]},{row}\n")
    elif format == "binary":
        with path.open("wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<HQI", _VERSION, m.n, m.dim))
            f.write(m.ids.astype("<u8").tobytes())
            f.write(m.labels.astype("<u4").tobytes())
            f.write(struct.pack("<I", len(names)))
            for name in names:
                raw = name.encode("utf-8")
                f.write(struct.pack("<I", len(raw)) + raw)
            f.write(np.ascontiguousarray(m.data, dtype="<f8").tobytes())
    else:
        raise ConfigError(f"unknown format {format!r}")


def load_embeddings(path, format: str | None = None) -> EmbeddingMatrix:
    """Read an embedding matrix; format inferred from the suffix if omitted."""
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix == ".csv" else "binary"
    if format == "csv":
        return _load_csv(path)
    if format == "binary":
        return _load_binary(path)
    raise ConfigError(f"unknown format {format!r}")


def _load_csv(path: Path) -> EmbeddingMatrix:
    with path.open("r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file (line 1)")
    header = lines[0].split(",")
    if len(header) < 3 or header[0] != "id" or header[1] != "label":
        raise FormatError(f"{path}: malformed header at line 1: {lines[0]!r}")
    d = len(header) - 2
    if header[2:] != [f"f{j}" for j in range(d)]:
        raise FormatError(f"{path}: malformed header at line 1: {lines[0]!r}")

    ids, names, rows = [], [], []
    class_names: list[str] = []
    index: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != d + 2:
            raise FormatError(f"{path}: expected {d + 2} fields at line {lineno}, got {len(parts)}")
        try:
            sid = int(parts[0])
        except ValueError:
            raise FormatError(f"{path}: bad id at line {lineno}: {parts[0]!r}") from None
        label = parts[1]
        if label not in index:
            index[label] = len(class_names)
            class_names.append(label)
        try:
            vals = [float(v) for v in parts[2:]]
        except ValueError:
            raise FormatError(f"{path}: bad number at line {lineno}") from None
        for j, v in enumerate(vals):
            if not math.isfinite(v):
                raise DataError(f"{path}: non-finite value at row {lineno - 1}, column f{j}")
        ids.append(sid)
        names.append(index[label])
        rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return EmbeddingMatrix(np.array(ids), np.array(names), np.array(rows), class_names)


def _load_binary(path: Path) -> EmbeddingMatrix:
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    off = 4
    version, n, d = struct.unpack_from("<HQI", raw, off)
    off += struct.calcsize("<HQI")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    ids = np.frombuffer(raw, dtype="<u8", count=n, offset=off).astype(np.int64)
    off += 8 * n
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=off).astype(np.int32)
    off += 4 * n
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    names = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", raw, off)
        off += 4
        names.append(raw[off:off + ln].decode("utf-8"))
        off += ln
    data = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    return EmbeddingMatrix(ids, labels, data.copy(), names)


def save_manifest(path, *, dataset: str, class_names: list[str], embedding_path: str,
                  dim: int, n: int, provenance: str = "", extra: dict | None = None) -> None:
    """Write the JSON dataset manifest next to an embedding file."""
    doc = {
        "dataset": dataset,
        "class_names": list(class_names),
        "embedding_path": embedding_path,
        "d": int(dim),
        "N": int(n),
        "provenance": provenance,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON manifest: {e}") from None
    for key in ("dataset", "class_names", "embedding_path", "d", "N"):
        if key not in doc:
            raise FormatError(f"{path}: manifest missing key {key!r}")
    return doc
