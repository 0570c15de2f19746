"""Synthetic labeled datasets with controlled class geometry.

Datasets are small (tens to hundreds of samples) and fully in-memory.
Two manifold families are supported: isotropic blobs with a hard radius
(so class supports can be kept disjoint by construction) and segments of
a ring. Generation is deterministic given the config seed.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

__all__ = [
    "Sample",
    "Dataset",
    "GeneratorConfig",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
]

_BINARY_MAGIC = b"CONC1"

# Blob noise is clipped to this many multiples of cluster_spread so that a
# class occupies a ball of known radius; the center-spacing rule below then
# really does separate class supports instead of just making overlap unlikely.
_BLOB_RADIUS_FACTOR = 2.0

# Pairwise center distances must exceed this multiple of cluster_spread when
# disjoint classes are requested.
_SPACING_FACTOR = 4.0


@dataclass(frozen=True)
class Sample:
    """One labeled point: a float feature vector and an integer class id."""

    features: np.ndarray
    class_id: int

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1 or feats.size == 0:
            raise ValueError("sample features must be a non-empty 1-d vector")
        if not np.all(np.isfinite(feats)):
            raise ValueError("sample features must be finite")
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")
        object.__setattr__(self, "features", feats)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of samples with declared and empirical priors.

    ``features`` has shape (N, D) and ``labels`` shape (N,). ``priors`` are
    the class probabilities the dataset was declared with; for loaded
    datasets they match the empirical frequencies exactly.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    priors: tuple[float, ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ValueError("features must be a non-empty (N, D) matrix")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must align with features rows")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValueError("labels must lie in [0, num_classes)")
        if len(self.priors) != self.num_classes:
            raise ValueError("priors must have one entry per class")
        priors = np.asarray(self.priors, dtype=np.float64)
        if np.any(priors <= 0.0):
            raise ValueError("every class prior must be positive")
        if abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError("class priors must sum to 1")
        counts = np.bincount(labels, minlength=self.num_classes)
        if np.any(counts == 0):
            raise ValueError("every class must have at least one sample")
        # Generator contract: observed frequencies stay within three standard
        # errors of the declared priors.
        n = labels.size
        freq = counts / n
        slack = 3.0 * np.sqrt(priors * (1.0 - priors) / n)
        if np.any(np.abs(freq - priors) > slack + 1e-12):
            raise ValueError("empirical class frequencies inconsistent with declared priors")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "priors", tuple(float(p) for p in priors))

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @cached_property
    def empirical_priors(self) -> tuple[float, ...]:
        counts = np.bincount(self.labels, minlength=self.num_classes)
        return tuple(float(c) / self.num_samples for c in counts)

    @cached_property
    def samples(self) -> tuple[Sample, ...]:
        return tuple(
            Sample(self.features[i].copy(), int(self.labels[i]))
            for i in range(self.num_samples)
        )

    def class_indices(self, class_id: int) -> np.ndarray:
        """Indices of the samples belonging to ``class_id``, ascending."""
        if not 0 <= class_id < self.num_classes:
            raise ValueError(f"class_id {class_id} out of range")
        return np.flatnonzero(self.labels == class_id)


@dataclass(frozen=True)
class GeneratorConfig:
    """Recipe for a synthetic dataset.

    ``cluster_centers`` is a (K, D) array-like; one center per class.
    ``cluster_spread`` controls the noise scale around each center. When
    ``disjoint_classes`` is set, pairwise center distances must exceed
    4x the spread so that class supports cannot touch.
    """

    num_classes: int
    samples_per_class: int
    cluster_centers: tuple[tuple[float, ...], ...]
    cluster_spread: float
    manifold: Literal["gaussian_blobs", "ring_segments"] = "gaussian_blobs"
    seed: int = 0
    disjoint_classes: bool = True

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.cluster_spread < 0.0:
            raise ValueError("cluster_spread must be non-negative")
        centers = np.asarray(self.cluster_centers, dtype=np.float64)
        if centers.ndim != 2 or centers.shape[0] != self.num_classes:
            raise ValueError("cluster_centers must provide one center per class")
        if not np.all(np.isfinite(centers)):
            raise ValueError("cluster_centers must be finite")
        if self.manifold not in ("gaussian_blobs", "ring_segments"):
            raise ValueError(f"unknown manifold {self.manifold!r}")
        if self.manifold == "ring_segments":
            if centers.shape[1] < 2:
                raise ValueError("ring_segments needs at least 2 feature dimensions")
            radii = np.linalg.norm(centers[:, :2], axis=1)
            if np.any(radii <= 0.0):
                raise ValueError("ring_segments centers must be off-origin in the first two dims")
        if self.disjoint_classes and self.num_classes > 1:
            min_gap = _SPACING_FACTOR * self.cluster_spread
            for i in range(self.num_classes):
                for j in range(i + 1, self.num_classes):
                    gap = float(np.linalg.norm(centers[i] - centers[j]))
                    if gap <= min_gap:
                        raise ValueError(
                            f"centers {i} and {j} are {gap:.4g} apart; disjoint classes "
                            f"need more than {min_gap:.4g}"
                        )
        object.__setattr__(
            self,
            "cluster_centers",
            tuple(tuple(float(v) for v in row) for row in centers),
        )

    @property
    def input_dim(self) -> int:
        return len(self.cluster_centers[0])


def _blob_noise(rng: np.random.Generator, count: int, dim: int, spread: float) -> np.ndarray:
    """Isotropic noise with hard radius ``_BLOB_RADIUS_FACTOR * spread``.

    Radius is |N(0,1)| truncated at the radius factor, direction uniform on
    the sphere, so the envelope does not grow with the dimension.
    """
    if spread == 0.0:
        return np.zeros((count, dim))
    radii = np.abs(rng.standard_normal(count))
    # Truncate by resampling; the loop terminates fast (P(reject) ~ 0.046).
    while True:
        bad = radii > _BLOB_RADIUS_FACTOR
        if not bad.any():
            break
        radii[bad] = np.abs(rng.standard_normal(int(bad.sum())))
    dirs = rng.standard_normal((count, dim))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    while True:
        tiny = norms[:, 0] < 1e-12
        if not tiny.any():
            break
        dirs[tiny] = rng.standard_normal((int(tiny.sum()), dim))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    return spread * radii[:, None] * dirs / norms


def generate_dataset(config: GeneratorConfig) -> Dataset:
    """Draw a dataset from the generator config, deterministically in seed."""
    rng = np.random.default_rng(config.seed)
    centers = np.asarray(config.cluster_centers, dtype=np.float64)
    dim = centers.shape[1]
    per = config.samples_per_class
    blocks = []
    labels = []
    for k in range(config.num_classes):
        if config.manifold == "gaussian_blobs":
            points = centers[k] + _blob_noise(rng, per, dim, config.cluster_spread)
        else:
            points = _ring_segment(rng, centers[k], per, config.cluster_spread)
        blocks.append(points)
        labels.append(np.full(per, k, dtype=np.int64))
    feats = np.concatenate(blocks, axis=0)
    labs = np.concatenate(labels)
    priors = tuple(1.0 / config.num_classes for _ in range(config.num_classes))
    return Dataset(feats, labs, config.num_classes, priors, seed=config.seed)


def _ring_segment(
    rng: np.random.Generator, center: np.ndarray, count: int, spread: float
) -> np.ndarray:
    """Points on an arc of the ring through ``center`` in the first two dims.

    The arc is centered at the center's angle with half arc-length equal to
    ``_BLOB_RADIUS_FACTOR * spread``; remaining coordinates are copied from
    the center.
    """
    radius = float(np.linalg.norm(center[:2]))
    base_angle = float(np.arctan2(center[1], center[0]))
    half_angle = min(np.pi, _BLOB_RADIUS_FACTOR * spread / radius)
    angles = base_angle + half_angle * (2.0 * rng.random(count) - 1.0)
    points = np.tile(center, (count, 1)).astype(np.float64)
    points[:, 0] = radius * np.cos(angles)
    points[:, 1] = radius * np.sin(angles)
    return points


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def save_dataset(dataset: Dataset, path: str, format: Literal["csv", "binary"] = "csv") -> None:
    """Write a dataset to ``path`` in the CSV or binary container format."""
    if format == "csv":
        _save_csv(dataset, path)
    elif format == "binary":
        _save_binary(dataset, path)
    else:
        raise ValueError(f"unknown dataset format {format!r}")


def load_dataset(path: str, format: Literal["csv", "binary"] = "csv") -> Dataset:
    """Read a dataset written by :func:`save_dataset`."""
    if format == "csv":
        return _load_csv(path)
    if format == "binary":
        return _load_binary(path)
    raise ValueError(f"unknown dataset format {format!r}")


def _save_csv(dataset: Dataset, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j}" for j in range(dataset.input_dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([_fmt(v) for v in row] + [str(int(label))])


def _load_csv(path: str) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        expected = [f"f{j}" for j in range(len(header) - 1)] + ["label"]
        if header != expected or len(header) < 2:
            raise ValueError(f"{path}: malformed header {header!r}")
        dim = len(header) - 1
        rows: list[list[float]] = []
        labels: list[int] = []
        for idx, row in enumerate(reader, start=1):
            if len(row) != dim + 1:
                raise ValueError(f"{path}: row {idx} has {len(row)} fields, expected {dim + 1}")
            try:
                rows.append([float(v) for v in row[:dim]])
                labels.append(int(row[dim]))
            except ValueError as exc:
                raise ValueError(f"{path}: row {idx} is malformed: {exc}") from None
            if labels[-1] < 0:
                raise ValueError(f"{path}: row {idx} has negative label")
    if not rows:
        raise ValueError(f"{path}: no samples")
    feats = np.asarray(rows, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.int64)
    num_classes = int(labs.max()) + 1
    counts = np.bincount(labs, minlength=num_classes)
    priors = tuple(float(c) / labs.size for c in counts)
    return Dataset(feats, labs, num_classes, priors, seed=None)


def _save_binary(dataset: Dataset, path: str) -> None:
    record = np.dtype([("features", "<f8", (dataset.input_dim,)), ("label", "<u4")])
    body = np.empty(dataset.num_samples, dtype=record)
    body["features"] = dataset.features
    body["label"] = dataset.labels.astype(np.uint32)
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<IIQ", dataset.input_dim, dataset.num_classes, dataset.num_samples))
        fh.write(body.tobytes())


def _load_binary(path: str) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(_BINARY_MAGIC))
        if magic != _BINARY_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {_BINARY_MAGIC!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError(f"{path}: truncated header")
        dim, num_classes, count = struct.unpack("<IIQ", header)
        if dim == 0 or num_classes == 0:
            raise ValueError(f"{path}: header declares empty dimensions")
        if count == 0:
            raise ValueError(f"{path}: no samples")
        record = np.dtype([("features", "<f8", (dim,)), ("label", "<u4")])
        raw = fh.read()
    expected = count * record.itemsize
    if len(raw) != expected:
        raise ValueError(f"{path}: body has {len(raw)} bytes, expected {expected}")
    body = np.frombuffer(raw, dtype=record)
    labels = body["label"].astype(np.int64)
    if labels.max() >= num_classes:
        raise ValueError(f"{path}: label {labels.max()} outside declared {num_classes} classes")
    feats = np.asarray(body["features"], dtype=np.float64).reshape(count, dim)
    counts = np.bincount(labels, minlength=num_classes)
    priors = tuple(float(c) / count for c in counts)
    return Dataset(feats.copy(), labels, num_classes, priors, seed=None)
