"""Augmentation sets: a closed catalog of transforms plus view machinery.

A transform is either discrete (identity, a fixed coordinate permutation, a
fixed sign-flip mask) or continuous with a scalar parameter theta in [0, 1]
(additive shift along a direction, rotation in a coordinate plane, scaling).
Every continuous rule carries a certified Lipschitz constant with respect to
theta; for rotation and scaling the constant is valid on the ball of radius
``data_radius`` around the origin, which is part of the rule's declaration.

Views of a point are the discrete transforms plus the continuous family
evaluated on a regular grid over the parameter cube. The grid is an
under-approximation of the continuous family, so grid-based distances can
only overestimate the true minimal view distance, never undershoot it.

The sampling model used for drawing random views splits mass evenly between
the discrete members (1/(2m) each) and the continuous family (theta uniform
on the cube); with no continuous member all mass is discrete. Expectations
over enumerated views use matching weights so sampled and enumerated
quantities estimate the same thing.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

from .core import Dataset, Sample

__all__ = [
    "Transform",
    "AugmentationSet",
    "ViewSet",
    "identity",
    "coordinate_permutation",
    "sign_flip_mask",
    "additive_shift",
    "rotation_2d",
    "scaling",
    "enumerate_views",
    "view_tensor",
    "view_weights",
    "augmented_distance",
    "distance_matrix",
    "save_distance_matrix",
    "load_distance_matrix",
    "sample_view_pair",
    "sample_views",
    "transform_from_spec",
    "transform_to_spec",
    "augmentation_from_spec",
    "augmentation_to_spec",
    "default_augmentation_set",
]

_DISCRETE_RULES = ("identity", "coordinate_permutation", "sign_flip_mask")
_CONTINUOUS_RULES = ("additive_shift", "rotation_2d_subspace", "scale")

_DISTANCE_MAGIC = b"CDM1"


@dataclass(frozen=True)
class Transform:
    """One member of the transform catalog.

    Only the fields relevant to ``rule`` are set; use the factory functions
    below rather than constructing directly.
    """

    rule: str
    permutation: tuple[int, ...] | None = None
    signs: tuple[float, ...] | None = None
    direction: tuple[float, ...] | None = None
    axes: tuple[int, int] | None = None
    max_angle: float | None = None
    scale_span: tuple[float, float] | None = None
    data_radius: float | None = None

    def __post_init__(self) -> None:
        if self.rule not in _DISCRETE_RULES + _CONTINUOUS_RULES:
            raise ValueError(f"unknown transform rule {self.rule!r}")
        if self.rule == "coordinate_permutation":
            if self.permutation is None or sorted(self.permutation) != list(
                range(len(self.permutation))
            ):
                raise ValueError("coordinate_permutation needs a valid permutation tuple")
        if self.rule == "sign_flip_mask":
            if self.signs is None or any(s not in (-1.0, 1.0) for s in self.signs):
                raise ValueError("sign_flip_mask needs entries in {-1, +1}")
        if self.rule == "additive_shift":
            if self.direction is None or len(self.direction) == 0:
                raise ValueError("additive_shift needs a direction vector")
        if self.rule == "rotation_2d_subspace":
            if self.axes is None or self.axes[0] == self.axes[1]:
                raise ValueError("rotation_2d_subspace needs two distinct axes")
            if self.max_angle is None or self.max_angle < 0:
                raise ValueError("rotation_2d_subspace needs max_angle >= 0")
            if self.data_radius is None or self.data_radius <= 0:
                raise ValueError("rotation_2d_subspace needs a positive data_radius")
        if self.rule == "scale":
            if self.scale_span is None:
                raise ValueError("scale needs a (low, high) span")
            if self.data_radius is None or self.data_radius <= 0:
                raise ValueError("scale needs a positive data_radius")

    @property
    def is_discrete(self) -> bool:
        return self.rule in _DISCRETE_RULES

    @property
    def param_dim(self) -> int:
        return 0 if self.is_discrete else 1

    @property
    def lipschitz_bound(self) -> float:
        """Certified Lipschitz constant of theta -> A_theta(x).

        Valid for all x when the rule is an additive shift, and for
        ||x|| <= data_radius for rotation and scaling. Discrete rules
        have no parameter and report 0.
        """
        if self.rule == "additive_shift":
            return float(np.linalg.norm(self.direction))
        if self.rule == "rotation_2d_subspace":
            return float(self.max_angle * self.data_radius)
        if self.rule == "scale":
            lo, hi = self.scale_span
            return float(abs(hi - lo) * self.data_radius)
        return 0.0

    def apply(self, x: np.ndarray, theta: float | np.ndarray | None = None) -> np.ndarray:
        """Apply the transform to ``x`` (a vector or a (B, D) batch).

        ``theta`` is required for continuous rules; it may be a scalar or a
        per-row array for batched input.
        """
        x = np.asarray(x, dtype=np.float64)
        if self.is_discrete:
            if theta is not None:
                raise ValueError(f"{self.rule} takes no parameter")
            if self.rule == "identity":
                return x.copy()
            if self.rule == "coordinate_permutation":
                if x.shape[-1] != len(self.permutation):
                    raise ValueError("permutation length does not match feature dimension")
                return x[..., list(self.permutation)]
            mask = np.asarray(self.signs, dtype=np.float64)
            if x.shape[-1] != mask.size:
                raise ValueError("sign mask length does not match feature dimension")
            return x * mask
        if theta is None:
            raise ValueError(f"{self.rule} requires a parameter in [0, 1]")
        th = np.asarray(theta, dtype=np.float64)
        if np.any(th < -1e-12) or np.any(th > 1.0 + 1e-12):
            raise ValueError("theta must lie in [0, 1]")
        if x.ndim == 2 and th.ndim == 1:
            th = th[:, None]
        if self.rule == "additive_shift":
            vec = np.asarray(self.direction, dtype=np.float64)
            if x.shape[-1] != vec.size:
                raise ValueError("shift direction length does not match feature dimension")
            return x + th * vec
        if self.rule == "rotation_2d_subspace":
            i, j = self.axes
            if x.shape[-1] <= max(i, j):
                raise ValueError("rotation axes outside feature dimension")
            angle = th * self.max_angle
            cos = np.cos(angle)
            sin = np.sin(angle)
            out = x.copy()
            xi, xj = x[..., i], x[..., j]
            if x.ndim == 2:
                cos, sin = np.ravel(cos), np.ravel(sin)
            out[..., i] = cos * xi - sin * xj
            out[..., j] = sin * xi + cos * xj
            return out
        lo, hi = self.scale_span
        factor = lo + th * (hi - lo)
        return x * factor


def identity() -> Transform:
    return Transform("identity")


def coordinate_permutation(permutation: tuple[int, ...]) -> Transform:
    return Transform("coordinate_permutation", permutation=tuple(int(i) for i in permutation))


def sign_flip_mask(signs: tuple[float, ...]) -> Transform:
    return Transform("sign_flip_mask", signs=tuple(float(s) for s in signs))


def additive_shift(direction: tuple[float, ...]) -> Transform:
    return Transform("additive_shift", direction=tuple(float(v) for v in direction))


def rotation_2d(axes: tuple[int, int], max_angle: float, data_radius: float) -> Transform:
    return Transform(
        "rotation_2d_subspace",
        axes=(int(axes[0]), int(axes[1])),
        max_angle=float(max_angle),
        data_radius=float(data_radius),
    )


def scaling(low: float, high: float, data_radius: float) -> Transform:
    return Transform("scale", scale_span=(float(low), float(high)), data_radius=float(data_radius))


@dataclass(frozen=True)
class AugmentationSet:
    """Closed set of transforms plus the grid resolution per continuous axis.

    The identity must always be a member, so every point is a view of
    itself. ``grid_resolution`` points per axis (endpoints included)
    discretize the continuous parameter cube.
    """

    transforms: tuple[Transform, ...]
    grid_resolution: int = 2

    def __post_init__(self) -> None:
        transforms = tuple(self.transforms)
        if not any(t.rule == "identity" for t in transforms):
            raise ValueError("the identity transform must be a member")
        if len(set(transforms)) != len(transforms):
            raise ValueError("duplicate transforms in augmentation set")
        if self.num_continuous_params >= 1 and self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2 with continuous transforms")
        object.__setattr__(self, "transforms", transforms)

    @property
    def discrete(self) -> tuple[Transform, ...]:
        return tuple(t for t in self.transforms if t.is_discrete)

    @property
    def continuous(self) -> tuple[Transform, ...]:
        return tuple(t for t in self.transforms if not t.is_discrete)

    @property
    def num_discrete(self) -> int:
        return len(self.discrete)

    @property
    def num_continuous_params(self) -> int:
        return sum(t.param_dim for t in self.continuous)

    @property
    def effective_lipschitz(self) -> float:
        """Largest per-rule parameter Lipschitz constant among members."""
        if not self.continuous:
            return 0.0
        return max(t.lipschitz_bound for t in self.continuous)

    @property
    def num_views(self) -> int:
        n = self.num_continuous_params
        return self.num_discrete + (self.grid_resolution**n if n >= 1 else 0)

    def fingerprint(self) -> str:
        """Stable content hash of the set (used to stamp derived artifacts)."""
        payload = json.dumps(augmentation_to_spec(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ViewSet:
    """All enumerated views of one origin point, in canonical order."""

    origin: np.ndarray
    views: np.ndarray

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=np.float64)
        views = np.asarray(self.views, dtype=np.float64)
        if views.ndim != 2 or views.shape[1] != origin.shape[0]:
            raise ValueError("views must be (V, D) matching the origin dimension")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "views", views)

    @property
    def num_views(self) -> int:
        return self.views.shape[0]


def _grid_axis(resolution: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, resolution)


def _grid_thetas(aug: AugmentationSet) -> list[tuple[float, ...]]:
    n = aug.num_continuous_params
    if n == 0:
        return []
    axis = _grid_axis(aug.grid_resolution)
    return list(itertools.product(axis, repeat=n))


def view_tensor(points: np.ndarray, aug: AugmentationSet) -> np.ndarray:
    """Enumerated views for a batch of points, shape (B, V, D).

    Order: discrete transforms in declaration order, then the parameter grid
    in lexicographic order (first axis slowest). Continuous transforms
    compose in declaration order, one grid coordinate per transform.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    chunks = [t.apply(points) for t in aug.discrete]
    for theta in _grid_thetas(aug):
        out = points
        for trans, th in zip(aug.continuous, theta):
            out = trans.apply(out, th)
        chunks.append(out)
    return np.stack(chunks, axis=1)


def enumerate_views(sample: Sample | np.ndarray, aug: AugmentationSet) -> ViewSet:
    """All views of one sample: discrete members then the theta grid."""
    x = sample.features if isinstance(sample, Sample) else np.asarray(sample, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("enumerate_views expects a single point")
    return ViewSet(origin=x, views=view_tensor(x, aug)[0])


def view_weights(aug: AugmentationSet) -> np.ndarray:
    """Probability of each enumerated view under the sampling model.

    Half the mass spread over the discrete members and half over the grid
    cells standing in for the continuous family; all mass on the discrete
    members when there is no continuous transform.
    """
    m = aug.num_discrete
    n = aug.num_continuous_params
    if n == 0:
        return np.full(m, 1.0 / m)
    g = aug.grid_resolution**n
    return np.concatenate([np.full(m, 0.5 / m), np.full(g, 0.5 / g)])


def augmented_distance(x1: np.ndarray, x2: np.ndarray, aug: AugmentationSet) -> float:
    """Smallest Euclidean distance between any view of x1 and any view of x2.

    Symmetric, non-negative, and zero between a point and itself. Computed
    on squared distances with a single square root at the end.
    """
    a = np.asarray(x1, dtype=np.float64)
    b = np.asarray(x2, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("augmented_distance expects two vectors of equal dimension")
    va = view_tensor(a, aug)[0]
    vb = view_tensor(b, aug)[0]
    d2 = cdist(va, vb, "sqeuclidean")
    return float(np.sqrt(max(d2.min(), 0.0)))


def distance_matrix(
    dataset: Dataset,
    aug: AugmentationSet,
    class_filter: int | None = None,
    block_rows: int = 32,
) -> np.ndarray:
    """Pairwise augmented distances, optionally restricted to one class.

    Returns an (N, N) symmetric matrix with zero diagonal where N is the
    number of selected samples (row order follows dataset order). Work is
    done blockwise over vectorized view batches.
    """
    if class_filter is None:
        points = dataset.features
    else:
        points = dataset.features[dataset.class_indices(class_filter)]
    n = points.shape[0]
    views = view_tensor(points, aug)
    v = views.shape[1]
    flat = views.reshape(n * v, -1)
    out = np.empty((n, n))
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        d2 = cdist(flat[start * v : stop * v], flat, "sqeuclidean")
        d2 = d2.reshape(stop - start, v, n, v)
        out[start:stop] = d2.min(axis=(1, 3))
    out = np.sqrt(np.maximum(out, 0.0))
    out = np.minimum(out, out.T)
    np.fill_diagonal(out, 0.0)
    return out


def save_distance_matrix(matrix: np.ndarray, path: str) -> None:
    """Write the upper triangle (diagonal included, row-major) to disk."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("distance matrix must be square")
    n = matrix.shape[0]
    rows, cols = np.triu_indices(n)
    with open(path, "wb") as fh:
        fh.write(_DISTANCE_MAGIC)
        fh.write(np.uint64(n).tobytes())
        fh.write(matrix[rows, cols].astype("<f8").tobytes())


def load_distance_matrix(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(len(_DISTANCE_MAGIC))
        if magic != _DISTANCE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        raw_n = fh.read(8)
        if len(raw_n) != 8:
            raise ValueError(f"{path}: truncated header")
        n = int(np.frombuffer(raw_n, dtype="<u8")[0])
        body = fh.read()
    expected = n * (n + 1) // 2
    tri = np.frombuffer(body, dtype="<f8")
    if tri.size != expected:
        raise ValueError(f"{path}: expected {expected} entries, found {tri.size}")
    out = np.zeros((n, n))
    rows, cols = np.triu_indices(n)
    out[rows, cols] = tri
    out[cols, rows] = tri
    return out


def sample_views(points: np.ndarray, aug: AugmentationSet, rng: np.random.Generator) -> np.ndarray:
    """Draw one random view per row of ``points`` under the sampling model.

    The rng stream is consumed identically regardless of branch outcomes
    (coin, discrete index, continuous parameters per row), so sequences are
    reproducible across augmentation sets of equal shape.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    b = points.shape[0]
    m = aug.num_discrete
    n = aug.num_continuous_params
    coin = rng.random(b)
    disc_idx = rng.integers(0, m, size=b)
    thetas = rng.random((b, n)) if n else np.zeros((b, 0))
    take_discrete = (coin < 0.5) | (n == 0)
    out = np.empty_like(points)
    for idx, trans in enumerate(aug.discrete):
        mask = take_discrete & (disc_idx == idx)
        if mask.any():
            out[mask] = trans.apply(points[mask])
    cont_mask = ~take_discrete
    if cont_mask.any():
        cur = points[cont_mask]
        for j, trans in enumerate(aug.continuous):
            cur = trans.apply(cur, thetas[cont_mask, j])
        out[cont_mask] = cur
    return out


def sample_view_pair(
    x: Sample | np.ndarray, aug: AugmentationSet, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Two independent random views of one point."""
    vec = x.features if isinstance(x, Sample) else np.asarray(x, dtype=np.float64)
    pair = sample_views(np.stack([vec, vec]), aug, rng)
    return pair[0], pair[1]


# ---------------------------------------------------------------------------
# Declarative specs (used by config files)
# ---------------------------------------------------------------------------


def transform_to_spec(transform: Transform) -> dict:
    spec: dict = {"rule": transform.rule}
    if transform.permutation is not None:
        spec["permutation"] = list(transform.permutation)
    if transform.signs is not None:
        spec["signs"] = list(transform.signs)
    if transform.direction is not None:
        spec["direction"] = list(transform.direction)
    if transform.axes is not None:
        spec["axes"] = list(transform.axes)
    if transform.max_angle is not None:
        spec["max_angle"] = transform.max_angle
    if transform.scale_span is not None:
        spec["scale_span"] = list(transform.scale_span)
    if transform.data_radius is not None:
        spec["data_radius"] = transform.data_radius
    return spec


def transform_from_spec(spec: dict) -> Transform:
    if not isinstance(spec, dict) or "rule" not in spec:
        raise ValueError(f"transform spec must be a dict with a 'rule' key, got {spec!r}")
    rule = spec["rule"]
    try:
        if rule == "identity":
            return identity()
        if rule == "coordinate_permutation":
            return coordinate_permutation(tuple(spec["permutation"]))
        if rule == "sign_flip_mask":
            return sign_flip_mask(tuple(spec["signs"]))
        if rule == "additive_shift":
            return additive_shift(tuple(spec["direction"]))
        if rule == "rotation_2d_subspace":
            return rotation_2d(tuple(spec["axes"]), spec["max_angle"], spec["data_radius"])
        if rule == "scale":
            lo, hi = spec["scale_span"]
            return scaling(lo, hi, spec["data_radius"])
    except KeyError as exc:
        raise ValueError(f"transform spec for {rule!r} is missing {exc}") from None
    raise ValueError(f"unknown transform rule {rule!r}")


def augmentation_to_spec(aug: AugmentationSet) -> dict:
    return {
        "grid_resolution": aug.grid_resolution,
        "transforms": [transform_to_spec(t) for t in aug.transforms],
    }


def augmentation_from_spec(spec: dict) -> AugmentationSet:
    if not isinstance(spec, dict) or "transforms" not in spec:
        raise ValueError("augmentation spec must be a dict with a 'transforms' list")
    transforms = tuple(transform_from_spec(s) for s in spec["transforms"])
    return AugmentationSet(transforms, grid_resolution=int(spec.get("grid_resolution", 2)))


def default_augmentation_set(input_dim: int, shift_scale: float = 0.5) -> AugmentationSet:
    """Identity plus a modest shift along the last feature axis."""
    direction = [0.0] * input_dim
    direction[-1] = shift_scale
    return AugmentationSet(
        (identity(), additive_shift(tuple(direction))),
        grid_resolution=3,
    )
