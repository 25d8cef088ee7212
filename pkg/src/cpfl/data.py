"""Synthetic blob tasks, Dirichlet label-skew partitioning and validation carving."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

MEAN_RADIUS = 4.0


def _as_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise InvalidInputError("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise InvalidInputError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise InvalidInputError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: Sequence[int] | np.ndarray) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.class_count)

    @classmethod
    def concat(cls, parts: Sequence["LabeledDataset"]) -> "LabeledDataset":
        if not parts:
            raise InvalidInputError("nothing to concatenate")
        return cls(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            parts[0].class_count,
        )


@dataclass
class UnlabeledDataset:
    features: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise InvalidInputError("features must be a 2-D matrix")

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass
class LabelDistribution:
    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def class_count(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def entropy(self) -> float:
        """Shannon entropy (nats) of the normalized counts; 0 for an empty histogram."""
        total = self.counts.sum()
        if total == 0:
            return 0.0
        p = self.counts[self.counts > 0] / total
        return float(-(p * np.log(p)).sum())


def blob_means(classes: int, dim: int, seed) -> np.ndarray:
    """One mean per class, uniformly on the sphere of radius 4."""
    directions = _as_rng(seed).standard_normal((classes, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    return MEAN_RADIUS * directions / norms


def gen_synthetic(
    classes: int,
    dim: int,
    samples_per_class: int,
    cluster_spread: float,
    seed: int,
) -> LabeledDataset:
    """Isotropic Gaussian blobs, ``samples_per_class`` per class, rows shuffled.

    Means come from :func:`blob_means` with the same seed, so two calls with the
    same ``(classes, dim, seed)`` share class means whatever the sample count.
    """
    if classes < 2 or dim < 2 or samples_per_class < 1 or not cluster_spread > 0:
        raise InvalidInputError(
            "gen_synthetic needs classes >= 2, dim >= 2, samples_per_class >= 1, spread > 0"
        )
    means = blob_means(classes, dim, [seed, 0])
    rng = _as_rng([seed, 1])
    labels = np.repeat(np.arange(classes), samples_per_class)
    rng.shuffle(labels)
    features = means[labels] + cluster_spread * rng.standard_normal((len(labels), dim))
    return LabeledDataset(features, labels, classes)


def gen_public(
    classes: int,
    dim: int,
    size: int,
    cluster_spread: float,
    seed: int,
    public_seed: int,
    shift: float = 1.0,
) -> UnlabeledDataset:
    """Unlabeled blobs around the task means of ``seed``, all moved by one random
    offset of length ``shift``. Component choice and noise come from ``public_seed``."""
    if size < 1:
        raise InvalidInputError("public set size must be >= 1")
    means = blob_means(classes, dim, [seed, 0])
    rng = _as_rng([public_seed, 2])
    offset = rng.standard_normal(dim)
    offset *= shift / np.linalg.norm(offset)
    components = rng.integers(0, classes, size=size)
    features = means[components] + offset + cluster_spread * rng.standard_normal((size, dim))
    return UnlabeledDataset(features)


def stratified_split(
    dataset: LabeledDataset, holdout_per_class: int, seed
) -> tuple[LabeledDataset, LabeledDataset]:
    """Move ``holdout_per_class`` random samples of every class into a second set."""
    rng = _as_rng(seed)
    keep, hold = [], []
    for c in range(dataset.class_count):
        idx = np.flatnonzero(dataset.labels == c)
        if len(idx) < holdout_per_class:
            raise InvalidInputError(f"class {c} has only {len(idx)} samples")
        idx = rng.permutation(idx)
        hold.append(idx[:holdout_per_class])
        keep.append(idx[holdout_per_class:])
    return (
        dataset.subset(np.sort(np.concatenate(keep))),
        dataset.subset(np.sort(np.concatenate(hold))),
    )


def largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    """Integer allotment of ``total`` proportional to ``shares`` that sums exactly to ``total``.

    Leftover units go to the largest fractional parts; ties favour lower indices.
    """
    shares = np.asarray(shares, dtype=np.float64)
    ideal = shares / shares.sum() * total
    base = np.floor(ideal).astype(np.int64)
    leftover = total - int(base.sum())
    if leftover > 0:
        order = np.argsort(-(ideal - base), kind="stable")
        base[order[:leftover]] += 1
    return base


def dirichlet_partition(
    dataset: LabeledDataset, num_clients: int, alpha: float, seed
) -> list[LabeledDataset]:
    """Split ``dataset`` over clients with Dirichlet(alpha) label skew.

    For each class a share vector over clients is drawn and the (shuffled) class
    samples are dealt out in contiguous runs sized by largest-remainder rounding.
    Client samples keep the input's row order.
    """
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be > 0, got {alpha}")
    if num_clients < 1:
        raise InvalidInputError("num_clients must be >= 1")
    if len(dataset) == 0:
        raise InvalidInputError("cannot partition an empty dataset")
    rng = _as_rng(seed)
    owned: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
    for c in range(dataset.class_count):
        idx = rng.permutation(np.flatnonzero(dataset.labels == c))
        shares = rng.dirichlet(np.full(num_clients, float(alpha)))
        if not np.all(np.isfinite(shares)) or shares.sum() <= 0:
            # extreme alpha underflow: give the class to one client
            shares = np.zeros(num_clients)
            shares[rng.integers(num_clients)] = 1.0
        counts = largest_remainder(shares, len(idx))
        bounds = np.concatenate([[0], np.cumsum(counts)])
        for k in range(num_clients):
            owned[k].append(idx[bounds[k]:bounds[k + 1]])
    return [
        dataset.subset(np.sort(np.concatenate(parts)).astype(np.int64))
        for parts in owned
    ]


def split_validation(
    dataset: LabeledDataset,
    fraction: float = 0.1,
    min_samples: int = 10,
    seed=None,
) -> tuple[LabeledDataset, LabeledDataset | None]:
    """Carve a validation set off a client's data.

    Clients with fewer than ``min_samples`` samples get ``None`` and keep
    everything for training. Otherwise ``round(fraction * N)`` (half up, at
    least 1) samples are drawn without replacement.
    """
    if not 0 < fraction < 1:
        raise InvalidInputError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(dataset)
    if n < min_samples:
        return dataset, None
    k = max(1, int(np.floor(fraction * n + 0.5)))
    perm = _as_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[k:])), dataset.subset(np.sort(perm[:k]))


def label_distribution(dataset: LabeledDataset) -> LabelDistribution:
    return LabelDistribution(np.bincount(dataset.labels, minlength=dataset.class_count))


def aggregate_label_distributions(dists: Sequence[LabelDistribution]) -> LabelDistribution:
    if not dists:
        raise InvalidInputError("need at least one label distribution")
    sizes = {d.class_count for d in dists}
    if len(sizes) != 1:
        raise InvalidInputError(f"mismatched class counts: {sorted(sizes)}")
    return LabelDistribution(np.sum([d.counts for d in dists], axis=0))


# CSV files: header `label,f0,f1,...`; unlabeled files drop the label column.

def save_dataset_csv(path: str | Path, dataset: LabeledDataset | UnlabeledDataset) -> None:
    labeled = isinstance(dataset, LabeledDataset)
    dim = dataset.features.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow((["label"] if labeled else []) + [f"f{j}" for j in range(dim)])
        for i, row in enumerate(dataset.features):
            values = [repr(float(v)) for v in row]
            writer.writerow(([str(int(dataset.labels[i]))] if labeled else []) + values)


def _read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    return rows[0], rows[1:]


def load_dataset_csv(path: str | Path, class_count: int | None = None) -> LabeledDataset:
    header, rows = _read_csv(path)
    if not header or header[0] != "label":
        raise InvalidInputError(f"{path}: first column must be 'label'")
    dim = len(header) - 1
    try:
        labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
        features = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    features = features.reshape(len(rows), dim)
    if class_count is None:
        class_count = int(labels.max()) + 1 if len(labels) else 0
    return LabeledDataset(features, labels, class_count)


def load_unlabeled_csv(path: str | Path) -> UnlabeledDataset:
    header, rows = _read_csv(path)
    try:
        features = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    return UnlabeledDataset(features.reshape(len(rows), len(header)))
