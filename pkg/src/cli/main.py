"""Command-line entry point of the prompt optimization pipeline."""
import argparse
import json
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

from loguru import logger

from src.cli import commands
from src.cli.run_config import RunConfig
from src.model.core.errors import ConfigError, DependencyError, PoacError

EXIT_ERROR: int = 2
EXIT_CONFIG_ERROR: int = 3
EXIT_DEPENDENCY_ERROR: int = 4

Command = Callable[[RunConfig, argparse.Namespace], int]

COMMANDS: dict[str, Command] = {
    "build-data": commands.build_data,
    "train-plm": commands.train_plm,
    "pretrain-diffusion": commands.pretrain_diffusion,
    "refl-finetune": commands.refl_finetune_command,
    "optimize-prompt": commands.optimize_prompt,
    "generate": commands.generate,
    "evaluate": commands.evaluate_command,
}


def build_parser() -> argparse.ArgumentParser:
    """
    Declare the global options and every subcommand.

    :return: Argument parser
    """
    parser = argparse.ArgumentParser(prog="poac", description="Abstract-concept prompt optimization pipeline.")
    parser.add_argument("--config", type=Path, default=None, help="JSON run config")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="BLOCK.KEY=VALUE",
        help="Override one config value (repeatable)",
    )
    parser.add_argument("--seed", type=int, default=None, help="Master seed (overrides config and POAC_SEED)")
    parser.add_argument("--run-dir", default=None, help="Directory for every artifact of the run")
    parser.add_argument("--workers", type=int, default=None, help="Concepts rewritten concurrently")
    parser.add_argument("--log-level", default="INFO", help="Console log level")
    parser.add_argument("--log-file", default=None, help="Also log at DEBUG level to this file")
    parser.add_argument("--progress", action="store_true", help="Show progress bars")
    parser.add_argument("--force", action="store_true", help="Load checkpoints written under another config")

    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("build-data", help="Build the world and the prompt pair corpus")
    train = subparsers.add_parser("train-plm", help="Fine-tune the prompt language model")
    train.add_argument("--init-from", default=None, help="Start from the weights of an external PLM checkpoint")
    subparsers.add_parser("pretrain-diffusion", help="Pretrain the diffusion model")
    subparsers.add_parser("refl-finetune", help="Fine-tune the diffusion model on reward feedback")
    optimize = subparsers.add_parser("optimize-prompt", help="Rewrite a prompt with concrete objects")
    optimize.add_argument("--in", dest="text", required=True, help="Prompt to rewrite")
    optimize.add_argument("--top-k", type=int, default=None, help="Sample among the k most likely tokens")
    gen = subparsers.add_parser("generate", help="Sample images for a prompt")
    gen.add_argument("--prompt", required=True, help="Conditioning prompt")
    gen.add_argument("--n", type=int, default=4, help="Number of images")
    gen.add_argument("--refl", action="store_true", help="Use the reward fine-tuned model")
    gen.add_argument("--out", default=None, help="Write images and scores to this JSON file")
    subparsers.add_parser("evaluate", help="Compare BASE, POAC and POAC_REFL")
    return parser


def configure_logging(level: str, log_file: str | None) -> None:
    """
    Route loguru to stderr at the given level and optionally to a file.

    :param level: Console log level
    :param log_file: File receiving every DEBUG record
    """
    logger.remove()
    logger.add(sys.stderr, level=level.upper())
    if log_file is not None:
        logger.add(log_file, level="DEBUG")


def main(argv: Sequence[str] | None = None) -> int:
    """
    Parse arguments, load the run config and run one command.

    :param argv: Arguments (sys.argv[1:] when omitted)
    :return: Exit code: 0 on success, 1 on a failed verdict, 2+ on errors
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    overrides = list(args.overrides)
    if args.run_dir is not None:
        overrides.append(f"paths.run_dir={json.dumps(args.run_dir)}")
    if args.workers is not None:
        overrides.append(f"remote.workers={args.workers}")
    try:
        config = RunConfig.load(args.config, overrides, args.seed)
        logger.debug(f"Running {args.command} with seed {config.seed} in {config.paths.root}")
        return COMMANDS[args.command](config, args)
    except ConfigError as err:
        logger.error(f"Config error: {err}")
        return EXIT_CONFIG_ERROR
    except DependencyError as err:
        logger.error(str(err))
        return EXIT_DEPENDENCY_ERROR
    except PoacError as err:
        logger.error(f"{type(err).__name__}: {err}")
        return EXIT_ERROR
