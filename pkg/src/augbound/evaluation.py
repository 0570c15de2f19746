"""Empirical quantities the guarantees are checked against.

Everything here is computed over the enumerated view grid with the
sampling-model weights (half mass on discrete members, half on the
parameter grid), so centers, alignment statistics, and population losses
all refer to one common view distribution.

Encoders are evaluated through a :class:`FrozenEncoder`. For sphere models
this is a plain wrapper; for batch-standardized models the standardization
statistics are computed once over the weighted views of the whole dataset
and then frozen, which makes single-point embeddings well defined and
pins the norm convention to sqrt(d) in the mean-square sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import losses as losses_mod
from .augment import AugmentationSet, view_tensor, view_weights
from .core import Dataset
from .encoder import EncoderModel, forward_prenorm, lipschitz_upper_bound
from .losses import LossBreakdown

__all__ = [
    "FrozenEncoder",
    "ClassStats",
    "AlignmentStats",
    "freeze_encoder",
    "class_centers",
    "nn_classify",
    "classify_batch",
    "linear_classifier",
    "error_rate",
    "view_spreads",
    "empirical_r_eps",
    "population_loss",
    "class_moments",
]


@dataclass(frozen=True)
class FrozenEncoder:
    """Deterministic point-wise embedding map derived from a model.

    ``shift``/``scale`` are the frozen standardization statistics (None in
    sphere mode). ``radius`` is the norm convention the bounds use: the
    sphere radius, or sqrt(output_dim) for standardized models.
    """

    model: EncoderModel
    shift: np.ndarray | None
    scale: np.ndarray | None
    radius: float

    def embed(self, x: np.ndarray) -> np.ndarray:
        pre = forward_prenorm(self.model, x)
        if self.shift is None:
            norms = np.linalg.norm(pre, axis=1, keepdims=True)
            if norms.min() < 1e-12:
                raise ValueError("zero vector cannot be projected onto the sphere")
            return self.model.radius * pre / norms
        return (pre - self.shift) / self.scale

    @property
    def output_dim(self) -> int:
        return self.model.output_dim

    def lipschitz(self, probe_inputs: np.ndarray) -> float:
        """Certified Lipschitz bound consistent with this frozen map."""
        if self.shift is None:
            return lipschitz_upper_bound(self.model, probe_inputs)
        product = lipschitz_upper_bound(
            EncoderModel(self.model.layers, norm_mode="none", radius=self.model.radius)
        )
        return product / float(self.scale.min())


def _all_views_and_weights(
    dataset: Dataset, aug: AugmentationSet
) -> tuple[np.ndarray, np.ndarray]:
    views = view_tensor(dataset.features, aug)
    weights = view_weights(aug)
    return views, weights


def freeze_encoder(
    model: EncoderModel, dataset: Dataset, aug: AugmentationSet
) -> FrozenEncoder:
    """Wrap a model for evaluation against a dataset and augmentation set.

    Sphere models pass through. Batch-standardized models get shift/scale
    from the weighted view population of the full dataset, so the frozen
    map satisfies E[f_i] = 0 and E[f_i^2] = 1 per dimension exactly under
    the view distribution.
    """
    if model.norm_mode == "sphere":
        return FrozenEncoder(model, None, None, radius=model.radius)
    if model.norm_mode != "batch_standardized":
        raise ValueError("evaluation needs a sphere or batch_standardized model")
    views, weights = _all_views_and_weights(dataset, aug)
    n, v, _ = views.shape
    pre = forward_prenorm(model, views.reshape(n * v, -1))
    w = np.tile(weights, n) / n
    mu = w @ pre
    var = w @ (pre - mu) ** 2
    if var.min() < 1e-24:
        raise ValueError("view population has zero variance in some embedding dimension")
    return FrozenEncoder(model, mu, np.sqrt(var), radius=float(np.sqrt(model.output_dim)))


@dataclass(frozen=True)
class ClassStats:
    """Per-class embedding centers under the view distribution."""

    centers: np.ndarray
    priors: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        centers = np.asarray(self.centers, dtype=np.float64)
        if centers.ndim != 2 or centers.shape[0] != len(self.priors):
            raise ValueError("centers must be (K, d) aligned with priors")
        object.__setattr__(self, "centers", centers)

    @property
    def num_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def min_center_norm_sq(self) -> float:
        return float(np.min(np.sum(self.centers**2, axis=1)))

    @property
    def delta_mu(self) -> float:
        """1 - min_k ||mu_k||^2 / r^2; zero when every center hits the shell."""
        return 1.0 - self.min_center_norm_sq / self.radius**2


def _embedded_views(
    encoder: FrozenEncoder, dataset: Dataset, aug: AugmentationSet
) -> tuple[np.ndarray, np.ndarray]:
    """Embeddings of all enumerated views, shape (N, V, d), plus weights."""
    views, weights = _all_views_and_weights(dataset, aug)
    n, v, _ = views.shape
    z = encoder.embed(views.reshape(n * v, -1))
    return z.reshape(n, v, -1), weights


def class_centers(
    encoder: FrozenEncoder,
    dataset: Dataset,
    aug: AugmentationSet,
    views_per_sample: int | None = None,
    rng: np.random.Generator | None = None,
) -> ClassStats:
    """Class centers mu_k = E_{x in C_k} E_{views} f.

    By default the view expectation enumerates the grid with the sampling
    weights (deterministic). Passing ``views_per_sample`` switches to that
    many Monte Carlo view draws per sample, which needs an rng.
    """
    if views_per_sample is None:
        z, weights = _embedded_views(encoder, dataset, aug)
        per_sample = np.einsum("v,nvd->nd", weights, z)
    else:
        if views_per_sample < 1:
            raise ValueError("views_per_sample must be >= 1")
        if rng is None:
            raise ValueError("Monte Carlo view sampling needs an rng")
        from .augment import sample_views

        acc = np.zeros((dataset.num_samples, encoder.output_dim))
        for _ in range(views_per_sample):
            acc += encoder.embed(sample_views(dataset.features, aug, rng))
        per_sample = acc / views_per_sample
    centers = np.stack(
        [
            per_sample[dataset.class_indices(k)].mean(axis=0)
            for k in range(dataset.num_classes)
        ]
    )
    return ClassStats(
        centers=centers, priors=dataset.empirical_priors, radius=encoder.radius
    )


def nn_classify(stats: ClassStats, z: np.ndarray) -> int:
    """Nearest-center class for one embedding; ties go to the smaller id."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("nn_classify takes a single embedding")
    dists = np.sum((stats.centers - z) ** 2, axis=1)
    return int(np.argmin(dists))


def classify_batch(stats: ClassStats, z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    d2 = cdist(z, stats.centers, "sqeuclidean")
    return np.argmin(d2, axis=1)


def linear_classifier(stats: ClassStats) -> tuple[np.ndarray, np.ndarray]:
    """Weights and biases of the equivalent linear rule argmax_k w_k.z + b_k."""
    weights = stats.centers
    biases = -0.5 * np.sum(stats.centers**2, axis=1)
    return weights, biases


def error_rate(encoder: FrozenEncoder, dataset: Dataset, stats: ClassStats) -> float:
    """Misclassification rate of the nearest-center rule on raw samples."""
    preds = classify_batch(stats, encoder.embed(dataset.features))
    return float(np.mean(preds != dataset.labels))


def view_spreads(
    encoder: FrozenEncoder, dataset: Dataset, aug: AugmentationSet
) -> np.ndarray:
    """Per-sample largest embedding distance between any two views."""
    z, _ = _embedded_views(encoder, dataset, aug)
    n = z.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = np.sqrt(max(cdist(z[i], z[i], "sqeuclidean").max(), 0.0))
    return out


@dataclass(frozen=True)
class AlignmentStats:
    """Empirical sharpness of view alignment at one epsilon."""

    epsilon: float
    r_eps: float
    l_pos: float
    pairs_per_sample: int


def empirical_r_eps(
    encoder: FrozenEncoder, dataset: Dataset, aug: AugmentationSet, epsilon: float
) -> AlignmentStats:
    """Fraction of samples whose view spread exceeds epsilon, plus the
    mean squared view-pair distance (both under the view weights)."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    z, weights = _embedded_views(encoder, dataset, aug)
    spreads = view_spreads(encoder, dataset, aug)
    sq_norms = np.sum(z**2, axis=2)
    means = np.einsum("v,nvd->nd", weights, z)
    second = weights @ sq_norms.T
    l_pos = float(np.mean(2.0 * (second - np.sum(means**2, axis=1))))
    return AlignmentStats(
        epsilon=float(epsilon),
        r_eps=float(np.mean(spreads > epsilon)),
        l_pos=max(l_pos, 0.0),
        pairs_per_sample=z.shape[1] ** 2,
    )


def class_moments(
    encoder: FrozenEncoder, dataset: Dataset, aug: AugmentationSet, stats: ClassStats
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class E ||f(view) - mu_k|| and E ||f(view) - mu_k||^2.

    Expectations run over class samples and weighted views; used to check
    the intra-class moment guarantees.
    """
    z, weights = _embedded_views(encoder, dataset, aug)
    first = np.empty(dataset.num_classes)
    second = np.empty(dataset.num_classes)
    for k in range(dataset.num_classes):
        idx = dataset.class_indices(k)
        diff = z[idx] - stats.centers[k]
        sq = np.sum(diff**2, axis=2)
        first[k] = np.mean(np.sqrt(sq) @ weights)
        second[k] = np.mean(sq @ weights)
    return first, second


def population_loss(
    encoder: FrozenEncoder,
    dataset: Dataset,
    aug: AugmentationSet,
    kind: losses_mod.LossKind,
    lam: float = 1.0,
) -> LossBreakdown:
    """Loss under full view enumeration instead of batch sampling.

    Expectations over positives pair independent views of one sample;
    negatives pair views of independent samples. The cross-correlation
    population matrix is E_x g(x) g(x)^T with g the per-sample weighted
    view mean, which is the exact population value of the batch estimator.
    """
    z, weights = _embedded_views(encoder, dataset, aug)
    n, v, d = z.shape
    means = np.einsum("v,nvd->nd", weights, z)
    sq_norms = np.sum(z**2, axis=2)
    l_pos = float(np.mean(2.0 * (weights @ sq_norms.T - np.sum(means**2, axis=1))))
    if kind == "info_nce":
        l1 = l_pos / 2.0 - 1.0
        flat = z.reshape(n * v, d)
        w_neg = np.tile(weights, n) / n
        pair_w = np.outer(weights, weights).ravel()
        l2 = 0.0
        for i in range(n):
            pos = (z[i] @ z[i].T).ravel()
            neg = z[i] @ flat.T
            terms = np.logaddexp(pos[:, None], np.repeat(neg, v, axis=0))
            l2 += pair_w @ terms @ w_neg
        l2 = float(l2 / n)
        return LossBreakdown(kind="info_nce", total=l1 + l2, l1=l1, l2=l2, lam=1.0)
    if kind == "simple":
        l1 = l_pos / 2.0 - 1.0
        grand_mean = means.mean(axis=0)
        l2 = float(np.sum(grand_mean**2))
        return LossBreakdown(kind="simple", total=l1 + lam * l2, l1=l1, l2=l2, lam=lam)
    if kind == "cross_corr":
        f = means.T @ means / n
        f = (f + f.T) / 2.0
        diag = np.diag(f)
        l1 = float(np.sum((1.0 - diag) ** 2))
        l2 = float(np.sum((f - np.eye(d)) ** 2))
        return LossBreakdown(
            kind="cross_corr", total=(1.0 - lam) * l1 + lam * l2, l1=l1, l2=l2, lam=lam
        )
    raise ValueError(f"unknown loss kind {kind!r}")
