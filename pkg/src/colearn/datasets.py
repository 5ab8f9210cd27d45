"""Synthetic datasets, CSV ingestion, and IID equal partitioning."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DatasetLoadError, InvalidInputError
from .params import Batch


@dataclass(frozen=True)
class Dataset(Batch):
    class_count: int = 2

    def __post_init__(self):
        super().__post_init__()
        if len(self) < 1:
            raise InvalidInputError("dataset needs at least one sample")
        if self.class_count < 1:
            raise InvalidInputError("class_count must be positive")
        if not np.all(np.isfinite(self.features)):
            raise InvalidInputError("features contain NaN/Inf")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise InvalidInputError(f"labels outside [0, {self.class_count})")

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_count)

    def equals(self, other: "Dataset") -> bool:
        return (self.class_count == other.class_count
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))


@dataclass(frozen=True)
class Shard:
    participant_id: int
    data: Dataset
    # row indices into the partitioned dataset, for provenance checks
    source_indices: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.data)


def gen_gaussian_blobs(seed: int, n: int, d: int, classes: int,
                       separation: float) -> Dataset:
    """Balanced isotropic unit-variance Gaussian classes.

    When ``d >= classes`` the class means sit on scaled orthonormal directions,
    so every pair of means is exactly ``separation`` apart. Otherwise they are
    spaced ``separation`` apart along one random unit direction.
    """
    if classes < 2 or n < classes or d < 1:
        raise InvalidInputError(f"need n >= C >= 2 and d >= 1 (n={n}, C={classes}, d={d})")
    if not separation > 0:
        raise InvalidInputError("separation must be positive")
    rng = np.random.default_rng(seed)
    if d >= classes:
        q, _ = np.linalg.qr(rng.standard_normal((d, classes)))
        means = (separation / np.sqrt(2.0)) * q.T
    else:
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        means = separation * np.arange(classes)[:, None] * u[None, :]
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    x = means[labels] + rng.standard_normal((n, d))
    return Dataset(x, labels, classes)


def xor_rings_label(ring: np.ndarray, quadrant: np.ndarray) -> np.ndarray:
    return (ring + quadrant) % 2


def gen_xor_rings(seed: int, n: int, noise: float, rings: int = 3) -> Dataset:
    """Concentric circles cut into quadrants with XOR-alternating labels.

    Ring ``k`` has radius ``sqrt(2) * (k + 1)``; quadrants are numbered
    counter-clockwise from (+, +). A point's label is ``(ring + quadrant) % 2``,
    so ring 0 reproduces XOR on the signs and the label flips from ring to ring.
    Samples are spread evenly over the (ring, quadrant) cells and evenly in angle
    within a cell; ``noise`` adds isotropic Gaussian jitter and the row order is
    shuffled by ``seed``. With ``n = 4`` and no noise the four rows are the
    canonical XOR points (+-1, +-1).
    """
    if n < 4:
        raise InvalidInputError("xor-rings needs n >= 4")
    if noise < 0:
        raise InvalidInputError("noise must be non-negative")
    if rings < 1:
        raise InvalidInputError("rings must be >= 1")
    cells = 4 * rings
    i = np.arange(n)
    cell = i % cells
    quadrant = cell % 4
    ring = cell // 4
    slot = i // cells
    per_cell = np.bincount(cell, minlength=cells)[cell]
    angle = (quadrant + (slot + 0.5) / per_cell) * (np.pi / 2)
    radius = np.sqrt(2.0) * (ring + 1)
    x = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    if n == 4:
        # cos/sin(pi/4) * sqrt(2) is 1 only up to rounding
        x = np.round(x, 12)
    labels = xor_rings_label(ring, quadrant)
    rng = np.random.default_rng(seed)
    if noise > 0:
        x = x + noise * rng.standard_normal(x.shape)
    order = rng.permutation(n)
    return Dataset(x[order], labels[order], 2)


def split_sizes(n: int, k: int) -> list[int]:
    base, extra = divmod(n, k)
    return [base + 1 if i < extra else base for i in range(k)]


def partition_iid(data: Dataset, k: int, seed: int) -> list[Shard]:
    """Shuffle with ``seed`` and cut into ``k`` contiguous chunks of near-equal size."""
    if k < 1:
        raise InvalidInputError("need at least one participant")
    if k > len(data):
        raise InvalidInputError(f"cannot split {len(data)} samples across {k} participants")
    perm = np.random.default_rng(seed).permutation(len(data))
    shards = []
    start = 0
    for pid, size in enumerate(split_sizes(len(data), k)):
        idx = perm[start:start + size]
        shards.append(Shard(pid, data.subset(idx), idx))
        start += size
    return shards


def train_test_split(data: Dataset, n_test: int, seed: int) -> tuple[Dataset, Dataset]:
    if not 0 < n_test < len(data):
        raise InvalidInputError(f"n_test must be in (0, {len(data)})")
    perm = np.random.default_rng(seed).permutation(len(data))
    return data.subset(perm[n_test:]), data.subset(perm[:n_test])


@dataclass(frozen=True)
class CsvSchema:
    class_count: int
    label_column: int = -1
    feature_columns: Sequence[int] | None = None
    header: bool = False


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a comma-separated file; errors carry the 1-based line number."""
    path = Path(path)
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DatasetLoadError(str(exc), path=path) from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if schema.header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DatasetLoadError(f"expected {width} columns, got {len(row)}", lineno, path)
            label_col = schema.label_column % width
            feat_cols = (schema.feature_columns if schema.feature_columns is not None
                         else [c for c in range(width) if c != label_col])
            try:
                raw_label = float(row[label_col])
                feats = [float(row[c]) for c in feat_cols]
            except (ValueError, IndexError) as exc:
                raise DatasetLoadError(f"cannot parse row: {exc}", lineno, path) from exc
            if raw_label != int(raw_label):
                raise DatasetLoadError(f"non-integer label {row[label_col]!r}", lineno, path)
            label = int(raw_label)
            if not 0 <= label < schema.class_count:
                raise DatasetLoadError(
                    f"label {label} outside [0, {schema.class_count})", lineno, path)
            if not all(np.isfinite(feats)):
                raise DatasetLoadError("non-finite feature", lineno, path)
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise DatasetLoadError("no data rows", path=path)
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels), schema.class_count)


def save_csv(path, data: Dataset, header: bool = False) -> None:
    """Write features then label per row; floats use ``repr`` so reloads are exact."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{j}" for j in range(data.input_dim)] + ["label"])
        for x, y in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
