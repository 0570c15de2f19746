"""Contrastive losses and their alignment/divergence decompositions.

Every loss reports a breakdown (total, l1, l2) where l1 measures alignment
of positive pairs and l2 the divergence (negative-repulsion) part. The
recomposition identity is loss-specific and checked on construction:

    info_nce      total == l1 + l2
    cross_corr    total == (1 - lam) * l1 + lam * l2
    simple        total == l1 + lam * l2

Inputs are raw embedding batches; nothing here touches the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

__all__ = [
    "LossBreakdown",
    "CrossCorrMatrix",
    "info_nce",
    "cross_correlation",
    "cross_corr_loss",
    "simple_contrastive",
]

_UNIT_NORM_TOL = 1e-6
_STANDARDIZATION_TOL = 1e-6

LossKind = Literal["info_nce", "cross_corr", "simple"]


def recompose(kind: str, l1: float, l2: float, lam: float) -> float:
    """Total loss implied by a breakdown, per the loss-specific identity."""
    if kind == "info_nce":
        return l1 + l2
    if kind == "cross_corr":
        return (1.0 - lam) * l1 + lam * l2
    if kind == "simple":
        return l1 + lam * l2
    raise ValueError(f"unknown loss kind {kind!r}")


@dataclass(frozen=True)
class LossBreakdown:
    """Loss value with its alignment (l1) and divergence (l2) parts."""

    kind: LossKind
    total: float
    l1: float
    l2: float
    lam: float = 1.0

    def __post_init__(self) -> None:
        if abs(self.total - recompose(self.kind, self.l1, self.l2, self.lam)) > 1e-9:
            raise ValueError("breakdown does not recompose to the total")


@dataclass(frozen=True)
class CrossCorrMatrix:
    """Symmetrized cross-correlation estimate between two view batches."""

    matrix: np.ndarray
    batch_size: int

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("cross-correlation matrix must be square")
        if np.abs(mat - mat.T).max() > 1e-12:
            raise ValueError("cross-correlation matrix must be symmetric")
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _check_batches(*batches: np.ndarray) -> list[np.ndarray]:
    arrays = [np.atleast_2d(np.asarray(b, dtype=np.float64)) for b in batches]
    shape = arrays[0].shape
    if shape[0] == 0:
        raise ValueError("empty batch")
    for arr in arrays[1:]:
        if arr.shape != shape:
            raise ValueError("view batches must share one shape")
    return arrays


def _check_unit_norm(*batches: np.ndarray) -> None:
    for batch in batches:
        norms = np.linalg.norm(batch, axis=1)
        if np.abs(norms - 1.0).max() > _UNIT_NORM_TOL:
            raise ValueError("embeddings must be unit-norm")


def info_nce(z1: np.ndarray, z2: np.ndarray, z_neg: np.ndarray) -> LossBreakdown:
    """One-negative InfoNCE on unit-norm embeddings, no temperature.

    total = mean -log(e^{z1.z2} / (e^{z1.z2} + e^{z1.z_neg}))
    l1    = mean ||z1 - z2||^2 / 2 - 1          (alignment)
    l2    = mean log(e^{z1.z2} + e^{z1.z_neg})  (divergence)

    On exactly unit-norm rows total == l1 + l2 because -z1.z2 equals
    ||z1 - z2||^2 / 2 - 1.
    """
    z1, z2, z_neg = _check_batches(z1, z2, z_neg)
    _check_unit_norm(z1, z2, z_neg)
    pos = np.sum(z1 * z2, axis=1)
    neg = np.sum(z1 * z_neg, axis=1)
    log_denom = np.logaddexp(pos, neg)
    l1 = float(np.mean(np.sum((z1 - z2) ** 2, axis=1)) / 2.0 - 1.0)
    l2 = float(np.mean(log_denom))
    return LossBreakdown(kind="info_nce", total=l1 + l2, l1=l1, l2=l2, lam=1.0)


def _check_standardized(pooled: np.ndarray) -> None:
    mean = pooled.mean(axis=0)
    mean_sq = np.mean(pooled**2, axis=0)
    if (
        np.abs(mean).max() > _STANDARDIZATION_TOL
        or np.abs(mean_sq - 1.0).max() > _STANDARDIZATION_TOL
    ):
        raise ValueError("view batches must be standardized per dimension over their union")


def cross_correlation(view1: np.ndarray, view2: np.ndarray) -> CrossCorrMatrix:
    """Symmetrized estimator F = mean (z1 z2^T + z2 z1^T) / 2 over the batch.

    Requires the pooled batch (both views together) to be standardized per
    dimension: zero mean, unit mean square.
    """
    view1, view2 = _check_batches(view1, view2)
    _check_standardized(np.concatenate([view1, view2], axis=0))
    b = view1.shape[0]
    raw = view1.T @ view2 / b
    return CrossCorrMatrix(matrix=(raw + raw.T) / 2.0, batch_size=b)


def cross_corr_loss(corr: CrossCorrMatrix, lam: float) -> LossBreakdown:
    """Redundancy-reduction loss on a cross-correlation matrix.

    total = sum_i (1 - F_ii)^2 + lam * sum_{i != j} F_ij^2. With
    l1 = sum_i (1 - F_ii)^2 and l2 = ||F - I||_F^2 the same value equals
    (1 - lam) * l1 + lam * l2 identically, since l2 = l1 + sum_{i!=j} F_ij^2.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    f = corr.matrix
    diag = np.diag(f)
    l1 = float(np.sum((1.0 - diag) ** 2))
    l2 = float(np.sum((f - np.eye(corr.dim)) ** 2))
    return LossBreakdown(
        kind="cross_corr", total=(1.0 - lam) * l1 + lam * l2, l1=l1, l2=l2, lam=lam
    )


def simple_contrastive(
    z1: np.ndarray, z2: np.ndarray, z_neg: np.ndarray, lam: float
) -> LossBreakdown:
    """Linear-repulsion contrastive loss: mean(-z1.z2) + lam * mean(z1.z_neg).

    l1 is the same alignment term as in info_nce; l2 is the batch estimate
    of the repulsion term, mean z1.z_neg (its population value is
    ||E f||^2, which is blind to dimensional collapse).
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    z1, z2, z_neg = _check_batches(z1, z2, z_neg)
    _check_unit_norm(z1, z2, z_neg)
    l1 = float(np.mean(np.sum((z1 - z2) ** 2, axis=1)) / 2.0 - 1.0)
    l2 = float(np.mean(np.sum(z1 * z_neg, axis=1)))
    return LossBreakdown(kind="simple", total=l1 + lam * l2, l1=l1, l2=l2, lam=lam)
