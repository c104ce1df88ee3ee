"""Datasets: synthetic task generation, CSV round-trip, oversampling, batching.

CSV format: header ``label,f0,f1,...,f{d-1}``, one sample per row, labels
contiguous integers from 0, decimal floats, UTF-8.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .errors import CsvParseError, InputError


@dataclass
class Dataset:
    """Immutable-by-convention classification dataset.

    `mean`/`std` hold the standardization applied to features (train-set
    statistics), kept so the same transform can be reused at eval time.
    """

    features: np.ndarray
    labels: np.ndarray
    c: int
    name: str = ""
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise InputError("labels must be one per sample")
        if not np.all(np.isfinite(self.features)):
            raise InputError(f"dataset {self.name!r} has non-finite features")
        if self.n < self.c:
            raise InputError(f"dataset {self.name!r} has fewer samples than classes")
        present = np.unique(self.labels)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.c):
            raise InputError(f"labels outside [0,{self.c}) in dataset {self.name!r}")
        if len(present) != self.c:
            raise InputError(f"dataset {self.name!r} is missing classes: "
                             f"expected {self.c}, saw {len(present)}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def standardize_pair(train: Dataset, val: Dataset) -> tuple[Dataset, Dataset]:
    """Shift/scale both splits by the train split's per-feature mean and std.

    Constant features get std 1 so they pass through unscaled.
    """
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    out = []
    for ds in (train, val):
        out.append(Dataset(features=(ds.features - mean) / std, labels=ds.labels.copy(),
                           c=ds.c, name=ds.name, mean=mean.copy(), std=std.copy()))
    return out[0], out[1]


def gen_synthetic_task(rng: np.random.Generator, c: int, n_per_class: int,
                       d: int, margin: float, name: str = "synthetic"):
    """Gaussian-cluster classification task; returns (train, val) datasets.

    Class means are random Gaussian draws rescaled so the closest pair of
    means sits exactly `margin` apart (within-class std is 1), making the
    separation guarantee deterministic. Split is 80/20 stratified by
    class; both splits are standardized with train statistics.
    """
    if c < 2:
        raise InputError(f"need c >= 2, got {c}")
    if d < 2:
        raise InputError(f"need d >= 2, got {d}")
    if margin <= 0:
        raise InputError(f"need margin > 0, got {margin}")
    if n_per_class < 5:
        raise InputError(f"need n_per_class >= 5 for a stratified split, got {n_per_class}")

    means = rng.normal(size=(c, d))
    dmin = min(
        np.linalg.norm(means[i] - means[j])
        for i in range(c) for j in range(i + 1, c)
    )
    means *= margin / dmin

    feats, labels = [], []
    for k in range(c):
        feats.append(means[k] + rng.normal(size=(n_per_class, d)))
        labels.append(np.full(n_per_class, k, dtype=np.int64))
    X = np.concatenate(feats)
    y = np.concatenate(labels)

    n_val_per_class = max(1, round(0.2 * n_per_class))
    train_idx, val_idx = [], []
    for k in range(c):
        kidx = np.flatnonzero(y == k)
        kidx = rng.permutation(kidx)
        val_idx.append(kidx[:n_val_per_class])
        train_idx.append(kidx[n_val_per_class:])
    train_idx = np.concatenate(train_idx)
    val_idx = np.concatenate(val_idx)
    train = Dataset(features=X[train_idx], labels=y[train_idx], c=c, name=f"{name}-train")
    val = Dataset(features=X[val_idx], labels=y[val_idx], c=c, name=f"{name}-val")
    return standardize_pair(train, val)


def oversample_to_equal(datasets: list[Dataset], rng: np.random.Generator) -> list[Dataset]:
    """Resample every dataset up to the max size with uniform replacement.

    Originals stay as a prefix; already-max-size datasets are returned as
    the same objects.
    """
    if not datasets:
        raise InputError("no datasets to oversample")
    for ds in datasets:
        if ds.n == 0:
            raise InputError(f"dataset {ds.name!r} is empty")
    target = max(ds.n for ds in datasets)
    out = []
    for ds in datasets:
        pad = target - ds.n
        if pad == 0:
            out.append(ds)
            continue
        extra = rng.integers(0, ds.n, size=pad)
        out.append(Dataset(
            features=np.concatenate([ds.features, ds.features[extra]]),
            labels=np.concatenate([ds.labels, ds.labels[extra]]),
            c=ds.c, name=ds.name, mean=ds.mean, std=ds.std,
        ))
    return out


def write_csv(path, ds: Dataset) -> None:
    path = FsPath(path)
    header = "label," + ",".join(f"f{j}" for j in range(ds.d))
    lines = [header]
    for i in range(ds.n):
        row = ",".join(repr(float(v)) for v in ds.features[i])
        lines.append(f"{int(ds.labels[i])},{row}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_csv(path, name: str = "") -> Dataset:
    path = FsPath(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise CsvParseError(path, 1, "missing header")
        cols = [c.strip() for c in header.rstrip("\n").split(",")]
        if not cols or cols[0] != "label":
            raise CsvParseError(path, 1, "header must start with 'label'")
        d = len(cols) - 1
        if d < 1:
            raise CsvParseError(path, 1, "no feature columns")
        expected = ["label"] + [f"f{j}" for j in range(d)]
        if cols != expected:
            raise CsvParseError(path, 1, f"header must be {','.join(expected)}")
        feats, labels = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != d + 1:
                raise CsvParseError(path, lineno, f"expected {d + 1} cells, got {len(cells)}")
            try:
                lab = int(cells[0])
            except ValueError:
                raise CsvParseError(path, lineno, f"non-integer label {cells[0]!r}") from None
            try:
                row = [float(v) for v in cells[1:]]
            except ValueError:
                raise CsvParseError(path, lineno, "non-numeric feature cell") from None
            labels.append(lab)
            feats.append(row)
    if not labels:
        raise CsvParseError(path, 2, "file has no samples")
    y = np.asarray(labels, dtype=np.int64)
    if y.min() < 0:
        raise CsvParseError(path, 1, "negative label")
    c = int(y.max()) + 1
    present = set(np.unique(y).tolist())
    if present != set(range(c)):
        missing = sorted(set(range(c)) - present)
        raise CsvParseError(path, 1, f"non-contiguous labels: missing {missing}")
    return Dataset(features=np.asarray(feats), labels=y, c=c, name=name or path.stem)


@dataclass
class BatchPlan:
    """One epoch's traversal order over a dataset."""

    batch_size: int
    order: np.ndarray
    cursor: int = 0

    @classmethod
    def for_dataset(cls, ds: Dataset, batch_size: int, rng: np.random.Generator) -> "BatchPlan":
        if batch_size < 1:
            raise InputError(f"batch_size must be >= 1, got {batch_size}")
        return cls(batch_size=batch_size, order=rng.permutation(ds.n))

    @property
    def n_batches(self) -> int:
        n = len(self.order)
        return -(-n // self.batch_size)

    @property
    def remaining(self) -> int:
        done = self.cursor // self.batch_size
        return self.n_batches - done

    def reshuffle(self, rng: np.random.Generator) -> None:
        self.order = rng.permutation(len(self.order))
        self.cursor = 0


def next_batches(ds: Dataset, plan: BatchPlan, count: int) -> list[np.ndarray]:
    """Up to `count` consecutive index blocks of the epoch permutation.

    The final block of an epoch may be short; an exhausted plan yields [].
    """
    if len(plan.order) != ds.n:
        raise InputError("batch plan does not belong to this dataset")
    batches = []
    for _ in range(count):
        if plan.cursor >= ds.n:
            break
        stop = min(plan.cursor + plan.batch_size, ds.n)
        batches.append(plan.order[plan.cursor:stop])
        plan.cursor = stop
    return batches
