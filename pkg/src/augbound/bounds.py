"""Closed-form guarantees for contrastive encoders, verified numerically.

All functions are pure and total on their stated domains: they evaluate
the literal formulas relating concentration (sigma, delta), alignment
(epsilon, r_eps), loss levels (l1, l2), and classifier geometry (centers,
priors, radius) to error-rate and center-separation guarantees. The
numbered names (theorem1 ... theorem4, lemma5) follow the result numbering
used throughout this package's reports, so report keys like ``thm1.bound``
are stable identifiers.

Conventions: the classifier is the nearest-center rule; r is the embedding
norm scale (1 for the sphere-normalized InfoNCE setup, sqrt(d) for the
standardized cross-correlation setup); L is a certified Lipschitz constant
of the embedding map. Reports refuse to mix the two conventions: an
InfoNCE loss level is never fed into the cross-correlation separation
bound or vice versa.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundInputs",
    "EmpiricalMeasurements",
    "PairBound",
    "BoundReport",
    "rho",
    "rho_max",
    "divergence_threshold",
    "theorem1_bound",
    "eta",
    "theorem2_bound",
    "tau",
    "theorem3_bound",
    "lemma5_moments",
    "tau_prime",
    "theorem4_bound",
    "combined_error_bounds",
    "full_report",
    "save_bound_report",
]


def rho(
    sigma: float,
    delta: float,
    epsilon: float,
    r_eps: float,
    prior: float,
    lipschitz: float,
    radius: float,
) -> float:
    """Mass a class can lose to poor concentration or misalignment:

        rho = 2 (1 - sigma) + r_eps / prior + sigma (L delta / r + 2 eps / r)
    """
    if prior <= 0:
        raise ValueError("prior must be positive")
    if radius <= 0:
        raise ValueError("radius must be positive")
    return (
        2.0 * (1.0 - sigma)
        + r_eps / prior
        + sigma * (lipschitz * delta / radius + 2.0 * epsilon / radius)
    )


def rho_max(
    sigma: float,
    delta: float,
    epsilon: float,
    r_eps: float,
    priors: tuple[float, ...],
    lipschitz: float,
    radius: float,
) -> float:
    """Worst-case rho over classes: evaluated at the smallest prior."""
    if not priors:
        raise ValueError("priors must be non-empty")
    return rho(sigma, delta, epsilon, r_eps, min(priors), lipschitz, radius)


def divergence_threshold(rho_max_value: float, delta_mu: float, radius: float) -> float:
    """Center-product level below which every sample in a tight, aligned
    main part lands on its own class center:

        r^2 (1 - rho_max - sqrt(2 rho_max) - delta_mu / 2)

    Negative rho_max is clamped to zero under the square root.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    r = max(rho_max_value, 0.0)
    return radius**2 * (1.0 - rho_max_value - math.sqrt(2.0 * r) - delta_mu / 2.0)


def theorem1_bound(sigma: float, r_eps: float, condition_holds: bool) -> tuple[float, bool]:
    """Error bound (1 - sigma) + r_eps, valid when every pairwise center
    product clears the divergence threshold. Clamped to [0, 1]."""
    value = min(max((1.0 - sigma) + r_eps, 0.0), 1.0)
    return value, bool(condition_holds)


def eta(
    epsilon: float,
    num_continuous: int,
    num_discrete: int,
    lipschitz: float,
    transform_lipschitz: float,
) -> float:
    """Alignment-to-probability conversion factor

        eta(eps) = inf_h 4 max(1, m^2 h^(2n)) / (h^(2n) (eps - 2 sqrt(n) L M h))

    over h in (0, eps / (2 sqrt(n) L M)). Every evaluated h yields a valid
    upper bound, so the returned grid-plus-golden-section minimum is safe
    even if slightly above the true infimum. Limits: with n = 0 (or L M = 0)
    the factor is 4 m^2 / eps.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if num_discrete < 1:
        raise ValueError("at least the identity transform is required")
    m2 = float(num_discrete) ** 2
    n = int(num_continuous)
    if n == 0 or lipschitz * transform_lipschitz == 0.0:
        return 4.0 * m2 / epsilon

    slope = 2.0 * math.sqrt(n) * lipschitz * transform_lipschitz
    h_max = epsilon / slope

    def objective(h: float) -> float:
        h2n = h ** (2 * n)
        return 4.0 * max(1.0, m2 * h2n) / (h2n * (epsilon - slope * h))

    grid = np.exp(np.linspace(math.log(h_max * 1e-9), math.log(h_max * (1.0 - 1e-9)), 1024))
    values = [objective(float(h)) for h in grid]
    best_idx = int(np.argmin(values))
    best = values[best_idx]
    lo = float(grid[max(best_idx - 1, 0)])
    hi = float(grid[min(best_idx + 1, len(grid) - 1)])
    # Golden-section refinement inside the bracketing grid cells.
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    while (b - a) > 1e-6 * h_max:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
    return min(best, fc, fd)


def theorem2_bound(eta_value: float, l_pos: float) -> float:
    """Upper bound on r_eps from the positive-pair loss:
    eta * sqrt(l_pos), clamped to [0, 1] for reporting."""
    if eta_value < 0 or l_pos < 0:
        raise ValueError("eta and l_pos must be non-negative")
    return min(eta_value * math.sqrt(l_pos), 1.0)


def tau(
    epsilon: float,
    sigma: float,
    delta: float,
    num_classes: int,
    r_eps: float,
    lipschitz: float,
) -> float:
    """Gap between the InfoNCE divergence term and the center products:

        b = 1 - sigma (1 - eps/2 - L delta/4) + K r_eps
        tau = 16 b^2 + 8 b + (eps - 1)/K + 2 r_eps
    """
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    b = 1.0 - sigma * (1.0 - epsilon / 2.0 - lipschitz * delta / 4.0) + num_classes * r_eps
    return 16.0 * b**2 + 8.0 * b + (epsilon - 1.0) / num_classes + 2.0 * r_eps


def theorem3_bound(
    l2: float, tau_value: float, p_k: float, p_l: float, epsilon: float
) -> tuple[float, bool]:
    """Center-product bound from the InfoNCE divergence term:

        mu_k . mu_l <= log(exp((l2 + tau) / (p_k p_l)) - exp(1 - eps))

    evaluated in log space as a + log1p(-exp(b - a)) with
    a = (l2 + tau)/(p_k p_l) and b = 1 - eps. Out of domain (a <= b) the
    inequality carries no information; the flag is False and the value nan.
    """
    if p_k <= 0 or p_l <= 0:
        raise ValueError("class priors must be positive")
    a = (l2 + tau_value) / (p_k * p_l)
    b = 1.0 - epsilon
    if a <= b:
        return float("nan"), False
    return a + math.log1p(-math.exp(b - a)), True


def lemma5_moments(
    epsilon: float,
    sigma: float,
    delta: float,
    radius: float,
    lipschitz: float,
    r_eps: float,
    prior: float,
) -> tuple[float, float]:
    """Bounds on the intra-class moments E||f - mu_k|| and E||f - mu_k||^2:

        first  <= 4 r (1 - sigma (1 - eps/(2r) - L delta/(4r)) + r_eps / p_k)
        second <= (2 eps + L delta)^2
                  + 4 r (1 - sigma + r_eps / p_k) (r + 2 eps + L delta)
                  + 4 r^2 (1 - sigma + r_eps / p_k)^2
    """
    if prior <= 0:
        raise ValueError("prior must be positive")
    if radius <= 0:
        raise ValueError("radius must be positive")
    slack = 1.0 - sigma + r_eps / prior
    first = 4.0 * radius * (
        1.0
        - sigma * (1.0 - epsilon / (2.0 * radius) - lipschitz * delta / (4.0 * radius))
        + r_eps / prior
    )
    width = 2.0 * epsilon + lipschitz * delta
    second = width**2 + 4.0 * radius * slack * (radius + width) + 4.0 * radius**2 * slack**2
    return first, second


def tau_prime(
    epsilon: float,
    sigma: float,
    delta: float,
    dim: int,
    num_classes: int,
    r_eps: float,
    lipschitz: float,
    l1: float,
    priors: tuple[float, ...],
) -> float:
    """Gap term for the cross-correlation separation bound:

        t = (2 eps + L delta) / (2 sqrt(d))
        tau' = 4 d (1 - sigma + t)^2 + 4 (1 - sigma) d
               + 8 d K r_eps (3/2 - sigma + t)
               + 4 d r_eps^2 sum_k 1/p_k
               + sqrt(2) d^(3/4) l1^(1/4)
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if l1 < 0:
        raise ValueError("l1 must be non-negative")
    if any(p <= 0 for p in priors):
        raise ValueError("class priors must be positive")
    t = (2.0 * epsilon + lipschitz * delta) / (2.0 * math.sqrt(dim))
    inv_prior_sum = sum(1.0 / p for p in priors)
    return (
        4.0 * dim * (1.0 - sigma + t) ** 2
        + 4.0 * (1.0 - sigma) * dim
        + 8.0 * dim * num_classes * r_eps * (1.5 - sigma + t)
        + 4.0 * dim * r_eps**2 * inv_prior_sum
        + math.sqrt(2.0) * dim**0.75 * l1**0.25
    )


def theorem4_bound(
    l2: float, tau_prime_value: float, p_k: float, p_l: float, dim: int, num_classes: int
) -> tuple[float, bool]:
    """Center-product bound from the cross-correlation divergence term:

        mu_k . mu_l <= sqrt((2 / (p_k p_l)) (l2 + tau' - (d - K)/2))

    Out of domain when the radicand is negative (flag False, value nan).
    """
    if p_k <= 0 or p_l <= 0:
        raise ValueError("class priors must be positive")
    radicand = (2.0 / (p_k * p_l)) * (l2 + tau_prime_value - (dim - num_classes) / 2.0)
    if radicand < 0:
        return float("nan"), False
    return math.sqrt(radicand), True


# ---------------------------------------------------------------------------
# Assembled report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundInputs:
    """Everything the guarantee formulas consume, in one place.

    ``loss_kind`` decides which separation bound applies; ``radius`` must
    match its convention (1 for info_nce/simple, sqrt(dim) for
    cross_corr). ``centers`` are the class centers under the same view
    distribution as the loss levels.
    """

    sigma: float
    delta: float
    epsilon: float
    r_eps: float
    l_pos: float
    lipschitz: float
    radius: float
    dim: int
    num_discrete: int
    num_continuous: int
    transform_lipschitz: float
    num_classes: int
    priors: tuple[float, ...]
    loss_kind: str
    l1: float
    l2: float
    lam: float
    centers: np.ndarray
    delta_mu: float

    def __post_init__(self) -> None:
        missing = [name for name, value in self.__dict__.items() if value is None]
        if missing:
            raise ValueError(f"bound inputs missing: {', '.join(sorted(missing))}")
        if self.loss_kind not in ("info_nce", "cross_corr", "simple"):
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if len(self.priors) != self.num_classes:
            raise ValueError("priors must have one entry per class")
        centers = np.asarray(self.centers, dtype=np.float64)
        if centers.shape != (self.num_classes, self.dim):
            raise ValueError("centers must be (num_classes, dim)")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers must be finite")
        for name in (
            "sigma", "delta", "epsilon", "r_eps", "l_pos", "lipschitz",
            "radius", "transform_lipschitz", "l1", "l2", "lam", "delta_mu",
        ):
            if not math.isfinite(float(getattr(self, name))):
                raise ValueError(f"bound input {name!r} must be finite")
        if not 0.0 < self.sigma <= 1.0:
            raise ValueError("sigma must lie in (0, 1]")
        expected_r = 1.0 if self.loss_kind in ("info_nce", "simple") else math.sqrt(self.dim)
        if abs(self.radius - expected_r) > 1e-9:
            raise ValueError(
                f"radius {self.radius} does not match the {self.loss_kind} convention"
            )
        object.__setattr__(self, "centers", centers)


@dataclass(frozen=True)
class EmpiricalMeasurements:
    """Measured counterparts for the report's comparison block."""

    err: float
    class_first_moments: tuple[float, ...]
    class_second_moments: tuple[float, ...]
    premise_fraction: float


@dataclass(frozen=True)
class PairBound:
    class_k: int
    class_l: int
    value: float
    in_domain: bool
    empirical: float


@dataclass(frozen=True)
class BoundReport:
    """All guarantee values, validity flags, and empirical comparisons."""

    inputs: BoundInputs
    rho_per_class: tuple[float, ...]
    rho_max: float
    threshold: float
    condition_holds: bool
    thm1_bound: float
    thm1_valid: bool
    eta: float
    thm2_bound: float
    tau: float | None
    thm3_pairs: tuple[PairBound, ...]
    tau_prime: float | None
    thm4_pairs: tuple[PairBound, ...]
    lemma5_first: tuple[float, ...]
    lemma5_second: tuple[float, ...]
    combined_infonce: tuple[float, bool] | None
    combined_crosscorr: tuple[float, bool] | None
    empirical: EmpiricalMeasurements

    def to_flat_dict(self) -> dict[str, object]:
        """Stable key-value view used by the CSV serialization."""
        out: dict[str, object] = {
            "inputs.sigma": self.inputs.sigma,
            "inputs.delta": self.inputs.delta,
            "inputs.epsilon": self.inputs.epsilon,
            "inputs.r_eps": self.inputs.r_eps,
            "inputs.l_pos": self.inputs.l_pos,
            "inputs.lipschitz": self.inputs.lipschitz,
            "inputs.radius": self.inputs.radius,
            "inputs.loss_kind": self.inputs.loss_kind,
            "inputs.l1": self.inputs.l1,
            "inputs.l2": self.inputs.l2,
            "inputs.lam": self.inputs.lam,
            "inputs.delta_mu": self.inputs.delta_mu,
        }
        for k, value in enumerate(self.rho_per_class):
            out[f"rho.class_{k}"] = value
        out["rho.max"] = self.rho_max
        out["thm1.threshold"] = self.threshold
        out["thm1.condition_holds"] = self.condition_holds
        out["thm1.bound"] = self.thm1_bound
        out["thm1.valid"] = self.thm1_valid
        out["thm2.eta"] = self.eta
        out["thm2.bound"] = self.thm2_bound
        if self.tau is not None:
            out["thm3.tau"] = self.tau
        for pair in self.thm3_pairs:
            key = f"thm3.bound.{pair.class_k}_{pair.class_l}"
            out[key] = pair.value
            out[f"thm3.in_domain.{pair.class_k}_{pair.class_l}"] = pair.in_domain
        if self.thm3_pairs:
            out["thm3.in_domain"] = all(p.in_domain for p in self.thm3_pairs)
        if self.tau_prime is not None:
            out["thm4.tau_prime"] = self.tau_prime
        for pair in self.thm4_pairs:
            key = f"thm4.bound.{pair.class_k}_{pair.class_l}"
            out[key] = pair.value
            out[f"thm4.in_domain.{pair.class_k}_{pair.class_l}"] = pair.in_domain
        if self.thm4_pairs:
            out["thm4.in_domain"] = all(p.in_domain for p in self.thm4_pairs)
        for k, (first, second) in enumerate(zip(self.lemma5_first, self.lemma5_second)):
            out[f"lemma5.first.class_{k}"] = first
            out[f"lemma5.second.class_{k}"] = second
        if self.combined_infonce is not None:
            out["combined.infonce.bound"] = self.combined_infonce[0]
            out["combined.infonce.valid"] = self.combined_infonce[1]
        if self.combined_crosscorr is not None:
            out["combined.crosscorr.bound"] = self.combined_crosscorr[0]
            out["combined.crosscorr.valid"] = self.combined_crosscorr[1]
        out["empirical.err"] = self.empirical.err
        for k, (first, second) in enumerate(
            zip(self.empirical.class_first_moments, self.empirical.class_second_moments)
        ):
            out[f"empirical.first_moment.class_{k}"] = first
            out[f"empirical.second_moment.class_{k}"] = second
        out["empirical.premise_fraction"] = self.empirical.premise_fraction
        products = self.inputs.centers @ self.inputs.centers.T
        for k in range(self.inputs.num_classes):
            for l in range(k + 1, self.inputs.num_classes):
                out[f"empirical.mu_product.{k}_{l}"] = float(products[k, l])
        return out


def combined_error_bounds(inputs: BoundInputs) -> tuple[tuple[float, bool] | None, ...]:
    """Loss-only error bounds; see :func:`full_report` for the flags."""
    report = full_report(
        inputs,
        EmpiricalMeasurements(
            err=float("nan"),
            class_first_moments=(float("nan"),) * inputs.num_classes,
            class_second_moments=(float("nan"),) * inputs.num_classes,
            premise_fraction=float("nan"),
        ),
    )
    return report.combined_infonce, report.combined_crosscorr


def full_report(inputs: BoundInputs, empirical: EmpiricalMeasurements) -> BoundReport:
    """Evaluate every applicable guarantee and pair it with measurements.

    The separation bound matching ``loss_kind`` is evaluated per class
    pair; the other one is reported as not applicable rather than fed the
    wrong loss level. Combined error bounds are flagged valid only when
    every pair bound is in domain and clears the divergence threshold.
    """
    k_classes = inputs.num_classes
    rho_values = tuple(
        rho(
            inputs.sigma,
            inputs.delta,
            inputs.epsilon,
            inputs.r_eps,
            p,
            inputs.lipschitz,
            inputs.radius,
        )
        for p in inputs.priors
    )
    rho_worst = rho_max(
        inputs.sigma,
        inputs.delta,
        inputs.epsilon,
        inputs.r_eps,
        inputs.priors,
        inputs.lipschitz,
        inputs.radius,
    )
    threshold = divergence_threshold(rho_worst, inputs.delta_mu, inputs.radius)
    products = inputs.centers @ inputs.centers.T
    pair_indices = [(k, l) for k in range(k_classes) for l in range(k + 1, k_classes)]
    condition = all(products[k, l] < threshold for k, l in pair_indices)
    thm1_value, thm1_valid = theorem1_bound(inputs.sigma, inputs.r_eps, condition)
    eta_value = eta(
        inputs.epsilon,
        inputs.num_continuous,
        inputs.num_discrete,
        inputs.lipschitz,
        inputs.transform_lipschitz,
    )
    thm2_value = theorem2_bound(eta_value, inputs.l_pos)
    lemma_first = []
    lemma_second = []
    for p in inputs.priors:
        first, second = lemma5_moments(
            inputs.epsilon,
            inputs.sigma,
            inputs.delta,
            inputs.radius,
            inputs.lipschitz,
            inputs.r_eps,
            p,
        )
        lemma_first.append(first)
        lemma_second.append(second)

    tau_value: float | None = None
    thm3_pairs: list[PairBound] = []
    tau_prime_value: float | None = None
    thm4_pairs: list[PairBound] = []
    combined_infonce: tuple[float, bool] | None = None
    combined_crosscorr: tuple[float, bool] | None = None

    if inputs.loss_kind == "info_nce":
        tau_value = tau(
            inputs.epsilon,
            inputs.sigma,
            inputs.delta,
            k_classes,
            inputs.r_eps,
            inputs.lipschitz,
        )
        for k, l in pair_indices:
            value, in_domain = theorem3_bound(
                inputs.l2, tau_value, inputs.priors[k], inputs.priors[l], inputs.epsilon
            )
            thm3_pairs.append(PairBound(k, l, value, in_domain, float(products[k, l])))
        separation_ok = bool(thm3_pairs) and all(
            p.in_domain and p.value < threshold for p in thm3_pairs
        )
        value = (1.0 - inputs.sigma) + eta_value * math.sqrt(max(2.0 + 2.0 * inputs.l1, 0.0))
        combined_infonce = (value, separation_ok)
    elif inputs.loss_kind == "cross_corr":
        tau_prime_value = tau_prime(
            inputs.epsilon,
            inputs.sigma,
            inputs.delta,
            inputs.dim,
            k_classes,
            inputs.r_eps,
            inputs.lipschitz,
            inputs.l1,
            inputs.priors,
        )
        for k, l in pair_indices:
            value, in_domain = theorem4_bound(
                inputs.l2,
                tau_prime_value,
                inputs.priors[k],
                inputs.priors[l],
                inputs.dim,
                k_classes,
            )
            thm4_pairs.append(PairBound(k, l, value, in_domain, float(products[k, l])))
        separation_ok = bool(thm4_pairs) and all(
            p.in_domain and p.value < threshold for p in thm4_pairs
        )
        value = (1.0 - inputs.sigma) + math.sqrt(2.0) * eta_value * inputs.dim**0.25 * max(
            inputs.l1, 0.0
        ) ** 0.25
        combined_crosscorr = (value, separation_ok)

    return BoundReport(
        inputs=inputs,
        rho_per_class=rho_values,
        rho_max=rho_worst,
        threshold=threshold,
        condition_holds=condition,
        thm1_bound=thm1_value,
        thm1_valid=thm1_valid,
        eta=eta_value,
        thm2_bound=thm2_value,
        tau=tau_value,
        thm3_pairs=tuple(thm3_pairs),
        tau_prime=tau_prime_value,
        thm4_pairs=tuple(thm4_pairs),
        lemma5_first=tuple(lemma_first),
        lemma5_second=tuple(lemma_second),
        combined_infonce=combined_infonce,
        combined_crosscorr=combined_crosscorr,
        empirical=empirical,
    )


def _csv_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_bound_report(report: BoundReport, csv_path: str, json_path: str | None = None) -> None:
    """Write the flat key-value CSV and optionally a structured JSON."""
    flat = report.to_flat_dict()
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for key, value in flat.items():
            writer.writerow([key, _csv_value(value)])
    if json_path is not None:
        payload = {
            k: (None if isinstance(v, float) and math.isnan(v) else v)
            for k, v in flat.items()
        }
        with open(json_path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
