"""End-to-end experiment pipeline and sweep drivers.

A single experiment runs data generation, encoder training, concentration
estimation over a delta grid, evaluation, and the full guarantee report,
persisting every stage artifact under one output directory. Sweeps repeat
the experiment across augmentation levels (richer sets, stronger
transforms, or all transform pairs from a catalog), training a fresh
encoder per level, and summarize how concentration tracks the observed
error rate.

Configs are single JSON documents with sections ``dataset``,
``augmentation``, ``encoder``, ``training``, ``analysis``, and optionally
``sweep``; the README documents the schema. Schema problems raise
:class:`ConfigError`; failures inside a pipeline stage raise
:class:`StageError` carrying the stage name, with all artifacts from
earlier stages already on disk.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy.stats import spearmanr

from .augment import (
    AugmentationSet,
    augmentation_from_spec,
    augmentation_to_spec,
    identity,
    transform_from_spec,
    transform_to_spec,
    view_tensor,
)
from .bounds import (
    BoundInputs,
    BoundReport,
    EmpiricalMeasurements,
    full_report,
    save_bound_report,
)
from .concentration import ConcentrationEstimate, save_concentration, sigma_delta_curve
from .core import Dataset, GeneratorConfig, generate_dataset, load_dataset, save_dataset
from .encoder import (
    EncoderModel,
    TrainConfig,
    init_encoder,
    save_model,
    save_trace,
    train,
)
from .evaluation import (
    AlignmentStats,
    ClassStats,
    FrozenEncoder,
    class_centers,
    class_moments,
    classify_batch,
    empirical_r_eps,
    error_rate,
    freeze_encoder,
    population_loss,
)
from .losses import LossBreakdown

__all__ = [
    "ConfigError",
    "StageError",
    "EncoderArch",
    "SweepSpec",
    "ExperimentConfig",
    "EvalBundle",
    "ExperimentResult",
    "SweepResult",
    "load_config",
    "config_from_dict",
    "config_to_dict",
    "with_seed_override",
    "stage_dataset",
    "stage_train",
    "stage_concentration",
    "stage_evaluate",
    "stage_bounds",
    "run_experiment",
    "run_sweep",
    "scale_transform_strength",
]


class ConfigError(Exception):
    """The config document is malformed or violates the schema."""


class StageError(Exception):
    """A pipeline stage failed; earlier artifacts are already persisted."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


@dataclass(frozen=True)
class EncoderArch:
    """Architecture half of the encoder spec (training half is TrainConfig)."""

    hidden_dims: tuple[int, ...]
    output_dim: int
    norm_mode: Literal["sphere", "batch_standardized", "none"]
    radius: float
    seed: int


@dataclass(frozen=True)
class SweepSpec:
    """One sweep family.

    kind "richness": levels are augmentation specs, each strictly
    containing the previous one's transforms at the same grid resolution.
    kind "strength": levels are strictly increasing positive scale factors
    applied to the base augmentation's continuous transforms.
    kind "pairs": levels are a catalog of transform specs; the sweep runs
    one experiment per 2-subset (identity is always added).
    """

    kind: Literal["richness", "strength", "pairs"]
    levels: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: GeneratorConfig | str
    augmentation: AugmentationSet
    encoder: EncoderArch
    training: TrainConfig
    delta_grid: tuple[float, ...]
    epsilon_grid: tuple[float, ...]
    clique_mode: Literal["exact", "dual_approx"]
    sweep: SweepSpec | None = None

    def __post_init__(self) -> None:
        if not self.delta_grid:
            raise ConfigError("analysis.delta_grid must be non-empty")
        if any(d <= 0 for d in self.delta_grid):
            raise ConfigError("analysis.delta_grid entries must be positive")
        if any(b <= a for a, b in zip(self.delta_grid, self.delta_grid[1:])):
            raise ConfigError("analysis.delta_grid must be strictly ascending")
        if not self.epsilon_grid:
            raise ConfigError("analysis.epsilon_grid must be non-empty")
        if any(e <= 0 for e in self.epsilon_grid):
            raise ConfigError("analysis.epsilon_grid entries must be positive")
        loss = self.training.loss
        mode = self.encoder.norm_mode
        if loss in ("info_nce", "simple"):
            if mode != "sphere" or abs(self.encoder.radius - 1.0) > 1e-9:
                raise ConfigError(
                    f"loss '{loss}' needs norm_mode 'sphere' with radius 1"
                )
        elif loss == "cross_corr" and mode != "batch_standardized":
            raise ConfigError("loss 'cross_corr' needs norm_mode 'batch_standardized'")


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"{where}.{key} is missing")
    return section[key]


def _as_int(value, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where} must be >= {minimum}")
    return value


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number")
    return float(value)


def _parse_dataset(section, base_dir: str) -> GeneratorConfig | str:
    if not isinstance(section, dict):
        raise ConfigError("dataset section must be an object")
    if "path" in section:
        return os.path.normpath(os.path.join(base_dir, str(section["path"])))
    try:
        return GeneratorConfig(
            num_classes=_as_int(_require(section, "num_classes", "dataset"), "dataset.num_classes", 1),
            samples_per_class=_as_int(
                _require(section, "samples_per_class", "dataset"), "dataset.samples_per_class", 1
            ),
            cluster_centers=tuple(
                tuple(float(v) for v in row)
                for row in _require(section, "cluster_centers", "dataset")
            ),
            cluster_spread=_as_float(
                _require(section, "cluster_spread", "dataset"), "dataset.cluster_spread"
            ),
            manifold=_require(section, "manifold", "dataset"),
            seed=_as_int(_require(section, "seed", "dataset"), "dataset.seed", 0),
            disjoint_classes=bool(section.get("disjoint_classes", True)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"dataset section invalid: {exc}") from exc


def _parse_augmentation(section) -> AugmentationSet:
    if not isinstance(section, dict):
        raise ConfigError("augmentation section must be an object")
    try:
        return augmentation_from_spec(section)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"augmentation section invalid: {exc}") from exc


def _parse_encoder(section) -> EncoderArch:
    if not isinstance(section, dict):
        raise ConfigError("encoder section must be an object")
    hidden = _require(section, "hidden_dims", "encoder")
    if not isinstance(hidden, (list, tuple)):
        raise ConfigError("encoder.hidden_dims must be a list")
    return EncoderArch(
        hidden_dims=tuple(_as_int(h, "encoder.hidden_dims[*]", 1) for h in hidden),
        output_dim=_as_int(_require(section, "output_dim", "encoder"), "encoder.output_dim", 1),
        norm_mode=_parse_choice(
            _require(section, "norm_mode", "encoder"),
            ("sphere", "batch_standardized", "none"),
            "encoder.norm_mode",
        ),
        radius=_as_float(section.get("radius", 1.0), "encoder.radius"),
        seed=_as_int(_require(section, "seed", "encoder"), "encoder.seed", 0),
    )


def _parse_choice(value, choices: tuple[str, ...], where: str) -> str:
    if value not in choices:
        raise ConfigError(f"{where} must be one of {', '.join(choices)}")
    return value


def _parse_training(section) -> TrainConfig:
    if not isinstance(section, dict):
        raise ConfigError("training section must be an object")
    try:
        return TrainConfig(
            loss=_parse_choice(
                _require(section, "loss", "training"),
                ("info_nce", "cross_corr", "simple"),
                "training.loss",
            ),
            steps=_as_int(_require(section, "steps", "training"), "training.steps", 0),
            batch_size=_as_int(
                _require(section, "batch_size", "training"), "training.batch_size", 2
            ),
            learning_rate=_as_float(
                _require(section, "learning_rate", "training"), "training.learning_rate"
            ),
            seed=_as_int(_require(section, "seed", "training"), "training.seed", 0),
            lam=_as_float(section.get("lam", 0.005), "training.lam"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"training section invalid: {exc}") from exc


def _parse_sweep(section) -> SweepSpec:
    if not isinstance(section, dict):
        raise ConfigError("sweep section must be an object")
    kind = _parse_choice(
        _require(section, "kind", "sweep"), ("richness", "strength", "pairs"), "sweep.kind"
    )
    levels = _require(section, "levels", "sweep")
    if not isinstance(levels, list) or not levels:
        raise ConfigError("sweep.levels must be a non-empty list")
    if kind == "richness":
        parsed = []
        for i, spec in enumerate(levels):
            aug = _parse_augmentation(spec)
            parsed.append(aug)
            if i > 0:
                _check_nested(parsed[i - 1], aug, i)
        return SweepSpec(kind=kind, levels=tuple(parsed))
    if kind == "strength":
        values = tuple(_as_float(v, "sweep.levels[*]") for v in levels)
        if any(v <= 0 for v in values):
            raise ConfigError("sweep.levels strength factors must be positive")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigError("sweep.levels strength factors must be strictly increasing")
        return SweepSpec(kind=kind, levels=values)
    # pairs: a catalog of at least two non-identity transforms
    transforms = []
    for spec in levels:
        try:
            t = transform_from_spec(spec)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"sweep.levels transform invalid: {exc}") from exc
        if t.rule == "identity":
            raise ConfigError("sweep.levels catalog must not contain identity")
        transforms.append(t)
    if len(transforms) < 2:
        raise ConfigError("pairs sweep needs a catalog of at least two transforms")
    return SweepSpec(kind=kind, levels=tuple(transforms))


def _check_nested(smaller: AugmentationSet, larger: AugmentationSet, index: int) -> None:
    if smaller.grid_resolution != larger.grid_resolution:
        raise ConfigError("richness levels must share one grid_resolution")
    small_specs = [transform_to_spec(t) for t in smaller.transforms]
    large_specs = [transform_to_spec(t) for t in larger.transforms]
    if len(small_specs) >= len(large_specs):
        raise ConfigError(f"richness level {index} must add transforms over level {index - 1}")
    for spec in small_specs:
        if spec not in large_specs:
            raise ConfigError(
                f"richness level {index} must contain every transform of level {index - 1}"
            )


def config_from_dict(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    analysis = _require(raw, "analysis", "config")
    if not isinstance(analysis, dict):
        raise ConfigError("analysis section must be an object")
    deltas = _require(analysis, "delta_grid", "analysis")
    epsilons = _require(analysis, "epsilon_grid", "analysis")
    if not isinstance(deltas, list) or not isinstance(epsilons, list):
        raise ConfigError("analysis grids must be lists")
    mode = _parse_choice(
        analysis.get("clique_mode", "exact"), ("exact", "dual_approx"), "analysis.clique_mode"
    )
    return ExperimentConfig(
        dataset=_parse_dataset(_require(raw, "dataset", "config"), base_dir),
        augmentation=_parse_augmentation(_require(raw, "augmentation", "config")),
        encoder=_parse_encoder(_require(raw, "encoder", "config")),
        training=_parse_training(_require(raw, "training", "config")),
        delta_grid=tuple(_as_float(d, "analysis.delta_grid[*]") for d in deltas),
        epsilon_grid=tuple(_as_float(e, "analysis.epsilon_grid[*]") for e in epsilons),
        clique_mode=mode,
        sweep=_parse_sweep(raw["sweep"]) if "sweep" in raw else None,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def config_to_dict(config: ExperimentConfig) -> dict:
    """Round-trippable plain-dict form (written next to the artifacts)."""
    if isinstance(config.dataset, str):
        dataset: dict = {"path": config.dataset}
    else:
        dataset = {
            "num_classes": config.dataset.num_classes,
            "samples_per_class": config.dataset.samples_per_class,
            "cluster_centers": [list(row) for row in config.dataset.cluster_centers],
            "cluster_spread": config.dataset.cluster_spread,
            "manifold": config.dataset.manifold,
            "seed": config.dataset.seed,
            "disjoint_classes": config.dataset.disjoint_classes,
        }
    out = {
        "dataset": dataset,
        "augmentation": augmentation_to_spec(config.augmentation),
        "encoder": {
            "hidden_dims": list(config.encoder.hidden_dims),
            "output_dim": config.encoder.output_dim,
            "norm_mode": config.encoder.norm_mode,
            "radius": config.encoder.radius,
            "seed": config.encoder.seed,
        },
        "training": {
            "loss": config.training.loss,
            "steps": config.training.steps,
            "batch_size": config.training.batch_size,
            "learning_rate": config.training.learning_rate,
            "lam": config.training.lam,
            "seed": config.training.seed,
        },
        "analysis": {
            "delta_grid": list(config.delta_grid),
            "epsilon_grid": list(config.epsilon_grid),
            "clique_mode": config.clique_mode,
        },
    }
    if config.sweep is not None:
        if config.sweep.kind == "richness":
            levels: list = [augmentation_to_spec(a) for a in config.sweep.levels]
        elif config.sweep.kind == "strength":
            levels = list(config.sweep.levels)
        else:
            levels = [transform_to_spec(t) for t in config.sweep.levels]
        out["sweep"] = {"kind": config.sweep.kind, "levels": levels}
    return out


def with_seed_override(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Re-seed the whole pipeline from one master seed: the dataset (when
    generated rather than loaded) gets ``seed``, the encoder init
    ``seed + 1``, the training stream ``seed + 2``."""
    dataset = config.dataset
    if isinstance(dataset, GeneratorConfig):
        dataset = replace(dataset, seed=seed)
    return replace(
        config,
        dataset=dataset,
        encoder=replace(config.encoder, seed=seed + 1),
        training=replace(config.training, seed=seed + 2),
    )


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalBundle:
    """Everything the guarantee report consumes from the trained encoder."""

    frozen: FrozenEncoder
    stats: ClassStats
    err: float
    alignment: tuple[AlignmentStats, ...]
    first_moments: tuple[float, ...]
    second_moments: tuple[float, ...]
    lipschitz: float
    loss: LossBreakdown
    premise_fractions: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    out_dir: str
    dataset: Dataset
    model: EncoderModel
    curve: tuple[ConcentrationEstimate, ...]
    bundle: EvalBundle
    reports: dict[tuple[int, int], BoundReport]

    @property
    def canonical_report(self) -> BoundReport:
        """Report at the largest delta and the first epsilon of the grids."""
        return self.reports[(len(self.config.delta_grid) - 1, 0)]


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_kv_csv(path: str, rows: list[tuple[str, object]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for key, value in rows:
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = _fmt(value)
            writer.writerow([key, value])


def stage_dataset(config: ExperimentConfig, out_dir: str) -> Dataset:
    try:
        if isinstance(config.dataset, str):
            dataset = load_dataset(config.dataset, format="csv")
        else:
            dataset = generate_dataset(config.dataset)
        save_dataset(dataset, os.path.join(out_dir, "dataset.csv"))
        return dataset
    except Exception as exc:
        raise StageError("dataset", str(exc)) from exc


def stage_train(
    config: ExperimentConfig, dataset: Dataset, out_dir: str
) -> tuple[EncoderModel, np.ndarray]:
    try:
        model = init_encoder(
            input_dim=dataset.input_dim,
            hidden_dims=config.encoder.hidden_dims,
            output_dim=config.encoder.output_dim,
            norm_mode=config.encoder.norm_mode,
            radius=config.encoder.radius,
            seed=config.encoder.seed,
        )
        trained, trace = train(model, dataset, config.augmentation, config.training)
        save_model(trained, os.path.join(out_dir, "model.bin"), seed=config.encoder.seed)
        save_trace(trace, os.path.join(out_dir, "trace.csv"))
        return trained, trace
    except StageError:
        raise
    except Exception as exc:
        raise StageError("train", str(exc)) from exc


def stage_concentration(
    config: ExperimentConfig, dataset: Dataset, out_dir: str
) -> tuple[ConcentrationEstimate, ...]:
    try:
        curve = sigma_delta_curve(
            dataset, config.augmentation, config.delta_grid, config.clique_mode
        )
        fingerprint = config.augmentation.fingerprint()
        rows = []
        for i, estimate in enumerate(curve):
            save_concentration(
                estimate,
                os.path.join(out_dir, f"concentration_{i:02d}.txt"),
                fingerprint,
            )
            for k, sigma_k in enumerate(estimate.per_class_sigma):
                rows.append(
                    (
                        _fmt(estimate.delta),
                        str(k),
                        str(len(dataset.class_indices(k))),
                        str(len(estimate.main_parts[k])),
                        _fmt(sigma_k),
                        _fmt(estimate.sigma),
                        estimate.mode,
                    )
                )
        with open(os.path.join(out_dir, "concentration.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["delta", "class_id", "class_size", "main_part_size", "sigma_class", "sigma", "mode"]
            )
            writer.writerows(rows)
        return curve
    except Exception as exc:
        raise StageError("concentration", str(exc)) from exc


def stage_evaluate(
    config: ExperimentConfig,
    dataset: Dataset,
    model: EncoderModel,
    curve: tuple[ConcentrationEstimate, ...],
    out_dir: str,
) -> EvalBundle:
    try:
        aug = config.augmentation
        frozen = freeze_encoder(model, dataset, aug)
        probe = view_tensor(dataset.features, aug).reshape(-1, dataset.input_dim)
        lipschitz = frozen.lipschitz(probe)
        stats = class_centers(frozen, dataset, aug)
        err = error_rate(frozen, dataset, stats)
        alignment = tuple(
            empirical_r_eps(frozen, dataset, aug, eps) for eps in config.epsilon_grid
        )
        first, second = class_moments(frozen, dataset, aug, stats)
        loss = population_loss(frozen, dataset, aug, config.training.loss, config.training.lam)
        preds = classify_batch(stats, frozen.embed(dataset.features))
        correct = preds == dataset.labels
        premise = []
        for estimate in curve:
            members = np.concatenate([np.asarray(part, dtype=int) for part in estimate.main_parts])
            premise.append(float(np.mean(correct[members])))
        bundle = EvalBundle(
            frozen=frozen,
            stats=stats,
            err=err,
            alignment=alignment,
            first_moments=tuple(float(v) for v in first),
            second_moments=tuple(float(v) for v in second),
            lipschitz=float(lipschitz),
            loss=loss,
            premise_fractions=tuple(premise),
        )
        rows: list[tuple[str, object]] = [
            ("err", bundle.err),
            ("lipschitz", bundle.lipschitz),
            ("delta_mu", stats.delta_mu),
            ("radius", frozen.radius),
            ("l_pos", alignment[0].l_pos),
            ("loss.kind", loss.kind),
            ("loss.total", loss.total),
            ("loss.l1", loss.l1),
            ("loss.l2", loss.l2),
        ]
        for stat in alignment:
            rows.append((f"r_eps.{_fmt(stat.epsilon)}", stat.r_eps))
        for k in range(dataset.num_classes):
            rows.append((f"moment.first.class_{k}", bundle.first_moments[k]))
            rows.append((f"moment.second.class_{k}", bundle.second_moments[k]))
            rows.append((f"center_norm.class_{k}", float(np.linalg.norm(stats.centers[k]))))
        products = stats.centers @ stats.centers.T
        for k in range(dataset.num_classes):
            for l in range(k + 1, dataset.num_classes):
                rows.append((f"mu_product.{k}_{l}", float(products[k, l])))
        for i, estimate in enumerate(curve):
            rows.append((f"premise_fraction.delta_{i}", bundle.premise_fractions[i]))
        _write_kv_csv(os.path.join(out_dir, "evaluation.csv"), rows)
        return bundle
    except StageError:
        raise
    except Exception as exc:
        raise StageError("evaluate", str(exc)) from exc


def stage_bounds(
    config: ExperimentConfig,
    dataset: Dataset,
    curve: tuple[ConcentrationEstimate, ...],
    bundle: EvalBundle,
    out_dir: str,
) -> dict[tuple[int, int], BoundReport]:
    try:
        aug = config.augmentation
        reports: dict[tuple[int, int], BoundReport] = {}
        long_rows: list[tuple[str, str, str, str]] = []
        for i, estimate in enumerate(curve):
            empirical = EmpiricalMeasurements(
                err=bundle.err,
                class_first_moments=bundle.first_moments,
                class_second_moments=bundle.second_moments,
                premise_fraction=bundle.premise_fractions[i],
            )
            for j, stat in enumerate(bundle.alignment):
                inputs = BoundInputs(
                    sigma=estimate.sigma,
                    delta=estimate.delta,
                    epsilon=stat.epsilon,
                    r_eps=stat.r_eps,
                    l_pos=stat.l_pos,
                    lipschitz=bundle.lipschitz,
                    radius=bundle.frozen.radius,
                    dim=bundle.frozen.output_dim,
                    num_discrete=aug.num_discrete,
                    num_continuous=aug.num_continuous_params,
                    transform_lipschitz=aug.effective_lipschitz,
                    num_classes=dataset.num_classes,
                    priors=bundle.stats.priors,
                    loss_kind=config.training.loss,
                    l1=bundle.loss.l1,
                    l2=bundle.loss.l2,
                    lam=bundle.loss.lam,
                    centers=bundle.stats.centers,
                    delta_mu=bundle.stats.delta_mu,
                )
                report = full_report(inputs, empirical)
                reports[(i, j)] = report
                for key, value in report.to_flat_dict().items():
                    if isinstance(value, bool):
                        text = "true" if value else "false"
                    elif isinstance(value, float):
                        text = _fmt(value)
                    else:
                        text = str(value)
                    long_rows.append((_fmt(estimate.delta), _fmt(stat.epsilon), key, text))
        with open(os.path.join(out_dir, "bounds.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["delta", "epsilon", "key", "value"])
            writer.writerows(long_rows)
        canonical = reports[(len(curve) - 1, 0)]
        save_bound_report(
            canonical,
            os.path.join(out_dir, "report.csv"),
            os.path.join(out_dir, "report.json"),
        )
        return reports
    except StageError:
        raise
    except Exception as exc:
        raise StageError("bounds", str(exc)) from exc


def run_experiment(config: ExperimentConfig, out_dir: str) -> ExperimentResult:
    """Run the full pipeline, persist every artifact, return the results.

    Stage order: dataset, train, concentration, evaluate, bounds. A stage
    failure raises StageError with that stage's name; artifacts written by
    earlier stages stay on disk for inspection.
    """
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(config_to_dict(config), fh, sort_keys=True, indent=2)
        fh.write("\n")
    dataset = stage_dataset(config, out_dir)
    model, _ = stage_train(config, dataset, out_dir)
    curve = stage_concentration(config, dataset, out_dir)
    bundle = stage_evaluate(config, dataset, model, curve, out_dir)
    reports = stage_bounds(config, dataset, curve, bundle, out_dir)
    return ExperimentResult(
        config=config,
        out_dir=out_dir,
        dataset=dataset,
        model=model,
        curve=curve,
        bundle=bundle,
        reports=reports,
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def scale_transform_strength(transform, factor: float):
    """Scale a transform's departure from the identity by ``factor``.

    Shifts scale their direction, rotations their maximum angle, scalings
    their span around 1; discrete transforms are returned unchanged.
    """
    if factor <= 0:
        raise ValueError("strength factor must be positive")
    spec = transform_to_spec(transform)
    rule = spec["rule"]
    if rule == "additive_shift":
        spec["direction"] = [v * factor for v in spec["direction"]]
    elif rule == "rotation_2d_subspace":
        spec["max_angle"] = spec["max_angle"] * factor
    elif rule == "scale":
        low, high = spec["scale_span"]
        spec["scale_span"] = [1.0 - factor * (1.0 - low), 1.0 + factor * (high - 1.0)]
    return transform_from_spec(spec)


def _sweep_levels(config: ExperimentConfig, sweep: SweepSpec) -> list[tuple[str, AugmentationSet]]:
    """Expand a sweep into (level label, augmentation set) pairs."""
    if sweep.kind == "richness":
        return [(str(len(aug.transforms)), aug) for aug in sweep.levels]
    if sweep.kind == "strength":
        out = []
        for factor in sweep.levels:
            transforms = tuple(
                scale_transform_strength(t, factor) for t in config.augmentation.transforms
            )
            out.append(
                (
                    _fmt(factor),
                    AugmentationSet(
                        transforms=transforms,
                        grid_resolution=config.augmentation.grid_resolution,
                    ),
                )
            )
        return out
    catalog = sweep.levels
    out = []
    for a in range(len(catalog)):
        for b in range(a + 1, len(catalog)):
            aug = AugmentationSet(
                transforms=(identity(), catalog[a], catalog[b]),
                grid_resolution=config.augmentation.grid_resolution,
            )
            out.append((f"{a}_{b}", aug))
    return out


@dataclass(frozen=True)
class SweepResult:
    out_dir: str
    levels: tuple[str, ...]
    results: dict[str, ExperimentResult]
    failures: tuple[tuple[str, str, str], ...]


def run_sweep(config: ExperimentConfig, out_dir: str) -> SweepResult:
    """One full experiment per sweep level, fresh encoder each time.

    Writes per-level artifacts under level subdirectories, a summary CSV
    (columns level, sigma, one_minus_sigma, err, thm1_bound, valid — sigma
    taken at the last delta of the grid, the bound at the first epsilon),
    a failures CSV, and for pairs sweeps a correlation CSV with the
    Spearman rank correlation between (1 - sigma) and err at every delta.
    """
    if config.sweep is None:
        raise ConfigError("config has no sweep section")
    os.makedirs(out_dir, exist_ok=True)
    levels = _sweep_levels(config, config.sweep)
    results: dict[str, ExperimentResult] = {}
    failures: list[tuple[str, str, str]] = []
    labels: list[str] = []
    for index, (label, aug) in enumerate(levels):
        labels.append(label)
        level_cfg = replace(config, augmentation=aug, sweep=None)
        level_dir = os.path.join(out_dir, f"level_{index:02d}")
        try:
            results[label] = run_experiment(level_cfg, level_dir)
        except StageError as exc:
            failures.append((label, exc.stage, str(exc)))
        except ConfigError as exc:
            failures.append((label, "config", str(exc)))

    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "sigma", "one_minus_sigma", "err", "thm1_bound", "valid"])
        for label in labels:
            if label not in results:
                continue
            result = results[label]
            report = result.canonical_report
            sigma = result.curve[-1].sigma
            writer.writerow(
                [
                    label,
                    _fmt(sigma),
                    _fmt(1.0 - sigma),
                    _fmt(result.bundle.err),
                    _fmt(report.thm1_bound),
                    "true" if report.thm1_valid else "false",
                ]
            )

    with open(os.path.join(out_dir, "failures.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "stage", "message"])
        writer.writerows(failures)

    if config.sweep.kind == "pairs":
        _write_pairs_correlation(config, results, labels, out_dir)

    return SweepResult(
        out_dir=out_dir,
        levels=tuple(labels),
        results=results,
        failures=tuple(failures),
    )


def _write_pairs_correlation(
    config: ExperimentConfig,
    results: dict[str, ExperimentResult],
    labels: list[str],
    out_dir: str,
) -> None:
    ok = [label for label in labels if label in results]
    errs = [results[label].bundle.err for label in ok]
    with open(os.path.join(out_dir, "correlation.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "spearman"])
        for i, delta in enumerate(config.delta_grid):
            one_minus_sigma = [1.0 - results[label].curve[i].sigma for label in ok]
            degenerate = (
                len(ok) < 2
                or len(set(one_minus_sigma)) < 2
                or len(set(errs)) < 2
            )
            if degenerate:
                value = float("nan")
            else:
                value = float(spearmanr(one_minus_sigma, errs).statistic)
            writer.writerow([_fmt(delta), _fmt(value)])
