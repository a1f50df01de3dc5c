"""Command-line front end.

    python -m smoothgnn metrics --config run.ini
    python -m smoothgnn train --config run.ini --model csgnn --seed 1
    python -m smoothgnn train --config run.ini --all-models --workers 4
    python -m smoothgnn sweep-broadcast --config run.ini --out results/
    python -m smoothgnn sweep-edgedrop --config run.ini
    python -m smoothgnn verify --config run.ini
    python -m smoothgnn gen-sbm --config run.ini --out data/
    python -m smoothgnn report --csv results/results.csv

Exit codes: 0 ok, 2 load failure, 3 validation or configuration error,
4 training divergence, 5 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from smoothgnn.config import apply_overrides, load_config
from smoothgnn.errors import (
    CheckpointError,
    ConfigError,
    DatasetLoadError,
    DatasetValidationError,
    GradientError,
    ResultsSchemaError,
    ShapeError,
    TrainingDivergenceError,
)
from smoothgnn.experiments import (
    cmd_gen_sbm,
    cmd_metrics,
    cmd_report,
    cmd_sweep_broadcast,
    cmd_sweep_edgedrop,
    cmd_train,
    cmd_verify,
)
from smoothgnn.models import ALL_FAMILIES

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_LOAD = 2
EXIT_VALIDATION = 3
EXIT_DIVERGENCE = 4
EXIT_VERIFY = 5

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

COMMANDS = {
    "metrics": "Print smoothness metrics, KL information gain and aggregator noise powers",
    "train": "Train one model family (or the whole suite with --all-models)",
    "sweep-broadcast": "Smooth features by broadcasting and retrain at each round count",
    "sweep-edgedrop": "Drop cross-label edges and retrain at each fraction",
    "verify": "Run the aggregator noise and smoothness/KL correlation checks",
    "gen-sbm": "Write a synthetic stochastic block model dataset to text files",
    "report": "Summarise a results CSV per model and per method group",
}


def configure_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration (default: synthetic SBM with built-in settings)")
    common.add_argument("--model", choices=ALL_FAMILIES, help="Model family, overrides [model] family")
    common.add_argument("--seed", type=int, help="Training seed, overrides [train] seed")
    common.add_argument("--out", help="Output directory, overrides [output] dir")
    common.add_argument("--all-models", action="store_true", help="Train the eight core families in sequence")
    common.add_argument("--workers", type=int, help="Concurrent seed replicates (results keep their order)")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    common.add_argument("--log-file", help="Also write the log to this file")

    parser = argparse.ArgumentParser(
        prog="smoothgnn",
        description="Graph smoothness metrics and context-surrounding GNN experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "report":
            p.add_argument("--csv", help="Results CSV (default: [output] csv of the configuration)")
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_config(args.config, kind=args.command), vars(args))
    command = args.command
    if command == "metrics":
        cmd_metrics(cfg)
    elif command == "train":
        cmd_train(cfg)
    elif command == "sweep-broadcast":
        cmd_sweep_broadcast(cfg)
    elif command == "sweep-edgedrop":
        cmd_sweep_edgedrop(cfg)
    elif command == "verify":
        if not cmd_verify(cfg).passed:
            return EXIT_VERIFY
    elif command == "gen-sbm":
        cmd_gen_sbm(cfg)
    elif command == "report":
        cmd_report(args.csv or cfg.output.csv_path)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.log_file)
    try:
        return run(args)
    except (DatasetLoadError, CheckpointError) as e:
        logger.error(f"Chargement impossible : {e}")
        return EXIT_LOAD
    except (DatasetValidationError, ConfigError, ShapeError, ResultsSchemaError) as e:
        logger.error(f"Données ou configuration invalides : {e}")
        return EXIT_VALIDATION
    except (TrainingDivergenceError, GradientError) as e:
        logger.error(f"Divergence de l'entraînement : {e}")
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
