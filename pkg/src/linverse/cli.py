"""Command-line entry point: one subcommand per experiment.

Configuration precedence is defaults < config file (--config, JSON) < flags.
Exit codes: 0 when the experiment's assertions all pass, 1 on an assertion or
solver failure, 2 on configuration or parse errors.
"""

from __future__ import annotations

import argparse
import sys

from .errors import DegenerateSample, ParseError
from .experiments import EXPERIMENTS, ExperimentConfig, config_from_file, run_experiment

_FLOAT_FIELDS = ("objective_tolerance", "lam", "c", "search_radius")
_INT_FIELDS = ("seed", "trials", "max_iterations", "stall_window")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linverse",
        description="Penalized estimation experiments for noisy linear systems",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--penalty", choices=["l1", "l2", "alternate"])
        p.add_argument("--deltas", help="comma-separated confidence levels")
        p.add_argument("--sizes", help="comma-separated sample sizes")
        p.add_argument("--model", dest="model_path", help="model or input document path")
        p.add_argument("--output", dest="output_path", help="CSV report path")
        p.add_argument("--tolerance", dest="objective_tolerance", type=float)
        p.add_argument("--max-iterations", dest="max_iterations", type=int)
        p.add_argument("--stall-window", dest="stall_window", type=int)
        p.add_argument("--estimator", choices=["unsquared", "squared-grid"])
        p.add_argument("--lam", type=float, help="penalty weight for solve-one")
        p.add_argument("--c", type=float, help="grid offset for the squared-grid estimator")
        p.add_argument("--search-radius", dest="search_radius", type=float)
    return parser


def _merge_config(args: argparse.Namespace) -> ExperimentConfig:
    doc: dict = {}
    if args.config:
        doc = config_from_file(args.config)
    doc["experiment"] = args.experiment
    for key in ("penalty", "model_path", "output_path", "estimator"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    for key in _INT_FIELDS + _FLOAT_FIELDS:
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    if args.deltas is not None:
        doc["deltas"] = [float(tok) for tok in str(args.deltas).split(",") if tok]
    if args.sizes is not None:
        doc["sizes"] = [int(tok) for tok in str(args.sizes).split(",") if tok]
    if "deltas" in doc:
        doc["deltas"] = tuple(doc["deltas"])
    if "sizes" in doc:
        doc["sizes"] = tuple(doc["sizes"])
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ParseError(f"unknown config fields: {sorted(unknown)}")
    try:
        return ExperimentConfig(**doc)
    except TypeError as exc:
        raise ParseError(str(exc)) from exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        return run_experiment(cfg)
    except (ParseError, DegenerateSample, ValueError, OSError) as exc:
        print(f"linverse: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
