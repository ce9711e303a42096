"""Datasets: synthetic Gaussian classes, CIFAR-10 binary batches, long-tail
subsampling and Dirichlet non-IID partitioning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from fedlf.container import read_container, write_container
from fedlf.errors import FormatError, InputError

CIFAR_RECORD = 3073
CIFAR_PIXELS = 3072


@dataclass
class LabeledDataset:
    samples: np.ndarray          # (N, input_dim) float64
    labels: np.ndarray           # (N,) int64
    num_classes: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.labels.shape[0]:
            raise InputError(f"samples {self.samples.shape} do not match labels {self.labels.shape}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InputError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.samples.shape[1]

    @cached_property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.samples[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True)
class PartitionSpec:
    num_clients: int = 20
    dirichlet_alpha: float = 0.5
    imbalance_factor: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.num_clients < 1:
            raise InputError("num_clients must be >= 1")
        if not self.dirichlet_alpha > 0:
            raise InputError("dirichlet_alpha must be positive")
        if self.imbalance_factor < 1:
            raise InputError("imbalance_factor must be >= 1")


@dataclass
class ClientShard:
    client_id: int
    sample_indices: np.ndarray
    dist: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.sample_indices.shape[0])


def longtail_counts(n_max: int, num_classes: int, imbalance_factor: float) -> np.ndarray:
    """Exponential profile ``n_max * IF ** (-c / (C - 1))``, rounded half up."""
    if imbalance_factor < 1:
        raise InputError("imbalance_factor must be >= 1")
    if num_classes < 2 or n_max < 1:
        raise InputError("need num_classes >= 2 and n_max >= 1")
    c = np.arange(num_classes, dtype=np.float64)
    raw = n_max * imbalance_factor ** (-c / (num_classes - 1))
    return np.floor(raw + 0.5).astype(np.int64)


def subsample_longtail(dataset: LabeledDataset, counts, seed: int) -> LabeledDataset:
    counts = np.asarray(counts, dtype=np.int64).reshape(-1)
    if counts.shape[0] != dataset.num_classes:
        raise InputError("counts length must equal num_classes")
    rng = np.random.default_rng(seed)
    picked = []
    for c in range(dataset.num_classes):
        pool = np.flatnonzero(dataset.labels == c)
        if counts[c] > pool.size:
            raise InputError(f"class {c} has {pool.size} samples, {counts[c]} requested")
        if counts[c] < 0:
            raise InputError(f"negative count for class {c}")
        picked.append(np.sort(rng.choice(pool, size=int(counts[c]), replace=False)))
    return dataset.subset(np.concatenate(picked))


def largest_remainder(total: int, proportions) -> np.ndarray:
    """Integer allocation of ``total`` proportional to ``proportions``, summing exactly."""
    p = np.asarray(proportions, dtype=np.float64)
    p = p / p.sum()
    raw = total * p
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        # stable sort so ties go to the lower client id
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


def dirichlet_partition(dataset: LabeledDataset, spec: PartitionSpec) -> list[ClientShard]:
    """Split each class across clients by a symmetric Dirichlet draw."""
    k = spec.num_clients
    if k > len(dataset):
        raise InputError(f"{k} clients but only {len(dataset)} samples")
    rng = np.random.default_rng(spec.seed)
    owned = [[] for _ in range(k)]
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        props = rng.dirichlet(np.full(k, spec.dirichlet_alpha))
        if not np.all(np.isfinite(props)) or props.sum() <= 0:
            props = np.full(k, 1.0 / k)
        alloc = largest_remainder(idx.size, props)
        idx = rng.permutation(idx)
        bounds = np.concatenate([[0], np.cumsum(alloc)])
        for j in range(k):
            owned[j].append(idx[bounds[j]:bounds[j + 1]])
    shards = []
    for j in range(k):
        ind = np.sort(np.concatenate(owned[j])).astype(np.int64)
        dist = np.bincount(dataset.labels[ind], minlength=dataset.num_classes)
        shards.append(ClientShard(j, ind, dist))
    return shards


def synth_gaussians(num_classes: int, input_dim: int, counts, class_spread: float, seed: int,
                    noise: float = 1.0) -> LabeledDataset:
    """Isotropic Gaussian blobs around seeded random unit-norm means scaled by ``class_spread``.

    The class means depend only on ``(seed, num_classes, input_dim)``; noise
    is drawn class by class afterwards, so growing one class's count does not
    move the others.
    """
    if input_dim < 1:
        raise InputError("input_dim must be >= 1")
    counts = np.asarray(counts, dtype=np.int64).reshape(-1)
    if counts.shape[0] != num_classes:
        raise InputError("counts length must equal num_classes")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(num_classes, input_dim))
    means *= class_spread / np.linalg.norm(means, axis=1, keepdims=True)
    xs, ys = [], []
    for c in range(num_classes):
        crng = np.random.default_rng([seed, c])
        xs.append(means[c] + noise * crng.normal(size=(int(counts[c]), input_dim)))
        ys.append(np.full(int(counts[c]), c))
    return LabeledDataset(np.concatenate(xs), np.concatenate(ys), num_classes)


def split_per_class(dataset: LabeledDataset, first: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Take the first ``first`` samples of each class as one set, the rest as another."""
    head, tail = [], []
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        head.append(idx[:first])
        tail.append(idx[first:])
    return dataset.subset(np.concatenate(head)), dataset.subset(np.concatenate(tail))


def _parse_cifar_bytes(raw: bytes, path) -> LabeledDataset:
    n = len(raw) // CIFAR_RECORD
    if len(raw) % CIFAR_RECORD:
        raise FormatError(
            f"{path}: truncated record at byte {n * CIFAR_RECORD} "
            f"({len(raw) % CIFAR_RECORD} of {CIFAR_RECORD} bytes)",
            offset=n * CIFAR_RECORD, path=str(path))
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(n, CIFAR_RECORD)
    labels = arr[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= 10)
    if bad.size:
        off = int(bad[0]) * CIFAR_RECORD
        raise FormatError(f"{path}: label byte {labels[bad[0]]} >= 10 at byte {off}",
                          offset=off, path=str(path))
    samples = arr[:, 1:].astype(np.float64) / 255.0
    return LabeledDataset(samples, labels, 10)


def load_cifar10_binary(path) -> LabeledDataset:
    """Read CIFAR-10 binary batches: 1 label byte + 3072 pixel bytes per record.

    ``path`` is a single ``.bin`` file or a directory, in which case every
    ``data_batch_*.bin`` is read in name order.
    """
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("data_batch_*.bin"))
        if not files:
            raise FormatError(f"{p}: no data_batch_*.bin files", path=str(p))
    elif p.is_file():
        files = [p]
    else:
        raise FormatError(f"{p}: no such file or directory", path=str(p))
    parts = [_parse_cifar_bytes(f.read_bytes(), f) for f in files]
    if len(parts) == 1:
        return parts[0]
    return LabeledDataset(np.concatenate([d.samples for d in parts]),
                          np.concatenate([d.labels for d in parts]), 10)


def save_dataset(dataset: LabeledDataset, path) -> None:
    write_container(path, {"samples": dataset.samples, "labels": dataset.labels.astype(np.float64)},
                    "fedlf-dataset", {"num_classes": dataset.num_classes})


def load_dataset(path) -> LabeledDataset:
    tensors, meta = read_container(path, "fedlf-dataset")
    labels = tensors["labels"]
    if not np.array_equal(labels, np.round(labels)):
        raise FormatError(f"{path}: non-integer labels", path=str(path))
    return LabeledDataset(tensors["samples"], labels.astype(np.int64), int(meta["num_classes"]))


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))
