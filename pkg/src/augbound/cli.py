"""Command-line experiment runner.

Subcommands cover the pipeline stages individually (``gen-data``,
``train``, ``concentration``, ``evaluate``, ``bounds``) plus ``sweep``.
Because every stage is deterministic given the config, a later-stage
subcommand simply reruns the stages before it; the artifacts it persists
are byte-identical across reruns with the same config and seed.

Exit codes: 0 success, 2 config error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiments import (
    ConfigError,
    ExperimentConfig,
    StageError,
    load_config,
    run_experiment,
    run_sweep,
    stage_concentration,
    stage_dataset,
    stage_evaluate,
    stage_train,
    with_seed_override,
)

__all__ = ["main"]

_MODE_MAP = {"exact": "exact", "approx": "dual_approx"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augbound",
        description="Measure augmentation concentration and verify encoder error guarantees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": "Generate (or load) the dataset and persist it as CSV.",
        "train": "Train the encoder; also writes the dataset artifact.",
        "concentration": "Estimate sigma over the delta grid from raw augmented distances.",
        "evaluate": "Measure error rate, alignment, and moments of the trained encoder.",
        "bounds": "Run the full pipeline and write every guarantee report.",
        "sweep": "Run the configured sweep: one full experiment per level.",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--out", required=True, help="output directory for artifacts")
        p.add_argument(
            "--seed",
            type=int,
            default=None,
            help="master seed override: dataset seed, encoder seed+1, training seed+2",
        )
        p.add_argument(
            "--mode",
            choices=sorted(_MODE_MAP),
            default=None,
            help="main-part search mode override (exact clique or its dual approximation)",
        )
    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = with_seed_override(config, args.seed)
    if args.mode is not None:
        config = replace(config, clique_mode=_MODE_MAP[args.mode])
    return config


def _run(args: argparse.Namespace) -> None:
    import os

    config = _resolve_config(args)
    out_dir = args.out
    if args.command == "sweep":
        result = run_sweep(config, out_dir)
        print(
            f"sweep complete: {len(result.results)} of {len(result.levels)} levels "
            f"succeeded, summary at {os.path.join(out_dir, 'summary.csv')}"
        )
        return
    if args.command == "bounds":
        result = run_experiment(config, out_dir)
        report = result.canonical_report
        print(
            f"bounds written to {os.path.join(out_dir, 'report.csv')} "
            f"(err={result.bundle.err:.4f}, thm1_bound={report.thm1_bound:.4f}, "
            f"valid={str(report.thm1_valid).lower()})"
        )
        return

    os.makedirs(out_dir, exist_ok=True)
    dataset = stage_dataset(config, out_dir)
    if args.command == "gen-data":
        print(
            f"dataset written to {os.path.join(out_dir, 'dataset.csv')} "
            f"({dataset.num_samples} samples, {dataset.num_classes} classes)"
        )
        return
    if args.command == "train":
        model, trace = stage_train(config, dataset, out_dir)
        final = trace[-1, 1] if trace.size else float("nan")
        print(
            f"model written to {os.path.join(out_dir, 'model.bin')} "
            f"({trace.shape[0]} steps, final loss {final:.6f})"
        )
        return
    if args.command == "concentration":
        curve = stage_concentration(config, dataset, out_dir)
        print(
            f"concentration written to {os.path.join(out_dir, 'concentration.csv')} "
            f"(sigma at largest delta: {curve[-1].sigma:.4f})"
        )
        return
    # evaluate
    model, _ = stage_train(config, dataset, out_dir)
    curve = stage_concentration(config, dataset, out_dir)
    bundle = stage_evaluate(config, dataset, model, curve, out_dir)
    print(
        f"evaluation written to {os.path.join(out_dir, 'evaluation.csv')} "
        f"(err={bundle.err:.4f}, l_pos={bundle.alignment[0].l_pos:.6f})"
    )


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(exc, file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
