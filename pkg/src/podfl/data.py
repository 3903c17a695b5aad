"""Datasets and client partitioning.

Provides a seeded synthetic Gaussian-cluster classification generator, a
reader for the big-endian IDX image/label format, a holdout split, and
the two partition policies used by the simulator: uniform iid shards and
label-skewed shards where each client draws from a fixed number of
classes.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, PartitionError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer labels in ``[0, num_classes)``."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match {self.features.shape[0]} rows"
            )
        if self.n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels outside [0, num_classes)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


PARTITION_MODES = ("iid", "label-skew")


@dataclass(frozen=True)
class PartitionPlan:
    """How a dataset is carved into client shards."""

    mode: str
    num_clients: int
    skew_classes_per_client: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in PARTITION_MODES:
            raise PartitionError(f"partition.mode: unknown mode {self.mode!r}")
        if self.num_clients < 1:
            raise PartitionError(f"partition.num_clients: must be >= 1, got {self.num_clients}")
        if self.mode == "label-skew" and self.skew_classes_per_client < 1:
            raise PartitionError(
                "partition.skew_classes_per_client: must be >= 1 for label-skew, "
                f"got {self.skew_classes_per_client}"
            )


def synth_classification(
    n: int,
    input_dim: int,
    num_classes: int,
    seed: int,
    *,
    class_sep: float = 4.0,
    cluster_std: float = 1.0,
) -> Dataset:
    """Gaussian class clusters with seeded means; every class gets at least one example.

    Labels are dealt round-robin before shuffling, so with ``n == num_classes``
    each class appears exactly once. Separation defaults are generous enough
    for a linear model to fit the training set almost perfectly.
    """
    if n < num_classes:
        raise ValueError(f"n={n} cannot cover num_classes={num_classes}")
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    rng = np.random.default_rng(seed)
    means = class_sep * rng.standard_normal((num_classes, input_dim))
    labels = rng.permutation(np.arange(n) % num_classes)
    features = means[labels] + cluster_std * rng.standard_normal((n, input_dim))
    return Dataset(features, labels.astype(np.int64), num_classes)


def _read_idx_payload(path: Path, expected_magic: int) -> tuple[tuple[int, ...], np.ndarray]:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header, {len(raw)} bytes before offset 4")
    magic = int.from_bytes(raw[0:4], "big")
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x} at byte offset 0, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated dimension table, {len(raw)} bytes before offset {header}")
    dims = tuple(int.from_bytes(raw[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim))
    expected = int(np.prod(dims)) if dims else 0
    actual = len(raw) - header
    if actual != expected:
        raise FormatError(
            f"{path}: expected {expected} data bytes after offset {header}, found {actual}"
        )
    return dims, np.frombuffer(raw, dtype=np.uint8, offset=header)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair into a flat float64 dataset.

    Images are row-major flattened to ``rows*cols`` features scaled into
    [0, 1]; labels stay integers. Gzip-compressed files are accepted
    transparently. Malformed or mismatched files raise
    :class:`podfl.errors.FormatError` naming the byte offset involved.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    idims, ibytes = _read_idx_payload(images_path, IDX_IMAGES_MAGIC)
    ldims, lbytes = _read_idx_payload(labels_path, IDX_LABELS_MAGIC)
    n, rows, cols = idims
    if ldims[0] != n:
        raise FormatError(
            f"{labels_path}: {ldims[0]} labels do not match {n} images in {images_path}"
        )
    features = ibytes.astype(np.float64).reshape(n, rows * cols) / 255.0
    labels = lbytes.astype(np.int64)
    return Dataset(features, labels, int(labels.max()) + 1 if n else 0)


def train_test_split(ds: Dataset, holdout_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split; the first ``round(n * holdout_fraction)`` rows become the holdout."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in [0, 1), got {holdout_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(ds.n)
    n_test = int(round(ds.n * holdout_fraction))
    return ds.subset(order[n_test:]), ds.subset(order[:n_test])


def _split_sizes(total: int, parts: int) -> list[int]:
    base, rem = divmod(total, parts)
    return [base + 1 if i < rem else base for i in range(parts)]


def partition(ds: Dataset, plan: PartitionPlan) -> list[Dataset]:
    """Carve ``ds`` into ``plan.num_clients`` disjoint shards that cover it exactly.

    iid mode deals a seeded shuffle into near-equal slices, any remainder
    going to the first clients. Label-skew mode assigns each client exactly
    ``skew_classes_per_client`` classes (classes spread round-robin over a
    seeded class order) and splits each class's examples evenly among the
    clients that demand it; infeasible demands raise
    :class:`podfl.errors.PartitionError`.
    """
    if ds.n < plan.num_clients:
        raise PartitionError(
            f"dataset has {ds.n} examples for {plan.num_clients} clients"
        )
    rng = np.random.default_rng(plan.seed)

    if plan.mode == "iid":
        order = rng.permutation(ds.n)
        shards, start = [], 0
        for size in _split_sizes(ds.n, plan.num_clients):
            shards.append(ds.subset(np.sort(order[start : start + size])))
            start += size
        return shards

    s, c = plan.skew_classes_per_client, ds.num_classes
    if s > c:
        raise PartitionError(
            f"partition.skew_classes_per_client: {s} exceeds num_classes {c}"
        )
    class_order = rng.permutation(c)
    wanted = [
        [int(class_order[(i * s + j) % c]) for j in range(s)]
        for i in range(plan.num_clients)
    ]
    demanders: dict[int, list[int]] = {cls: [] for cls in range(c)}
    for client, classes in enumerate(wanted):
        for cls in classes:
            demanders[cls].append(client)
    present = np.unique(ds.labels)
    for cls in present:
        if not demanders[int(cls)]:
            raise PartitionError(
                f"class {int(cls)} is assigned to no client; "
                f"increase skew_classes_per_client or num_clients"
            )
    parts: dict[int, list[np.ndarray]] = {i: [] for i in range(plan.num_clients)}
    for cls in range(c):
        takers = demanders[cls]
        if not takers:
            continue
        idx = np.nonzero(ds.labels == cls)[0]
        if len(idx) < len(takers):
            raise PartitionError(
                f"class {cls} has {len(idx)} examples but {len(takers)} clients demand it"
            )
        idx = rng.permutation(idx)
        start = 0
        for taker, size in zip(takers, _split_sizes(len(idx), len(takers))):
            parts[taker].append(idx[start : start + size])
            start += size
    shards = []
    for i in range(plan.num_clients):
        joined = np.sort(np.concatenate(parts[i]))
        shards.append(ds.subset(joined))
    return shards
