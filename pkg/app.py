#!/usr/bin/env python3
"""
sedlab - Noisy-Label Learning Laboratory - Command-Line Entry Point

    python app.py gen    --config C --out D
    python app.py train  --config C --out D [--seed S]
    python app.py ablate --config C --grid G --out D [--seeds R]
    python app.py report --run D

Exit codes: 0 success, 1 validation error, 2 runtime error.
SEDLAB_THREADS caps ablation workers, SEDLAB_LOG_LEVEL sets the log level;
both may come from a .env file.
"""

import argparse
import logging
import sys
from typing import List, Optional

from modules import ablation, metrics, trainer
from modules.config import EnvSettings, load_environment, merge_overrides, parse_config
from modules.errors import ConfigError, DataFormatError, ParameterError
from modules.progress_tracker import ProgressTracker
from modules.run_store import RunStore
from modules.synthdata import build_datasets

logger = logging.getLogger("sedlab")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

VALIDATION_ERRORS = (ConfigError, ParameterError, DataFormatError)


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's exit 2"""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="sedlab", description="Noisy-label learning laboratory")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    gen = sub.add_parser("gen", help="Generate the train/test datasets of a config as CSV")
    gen.add_argument("--config", required=True, help="Run configuration (JSON)")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.add_argument("--seed", type=int, default=None, help="Override the config seed")

    train = sub.add_parser("train", help="Run one configuration")
    train.add_argument("--config", required=True, help="Run configuration (JSON)")
    train.add_argument("--out", required=True, help="Run directory")
    train.add_argument("--seed", type=int, default=None, help="Override the config seed")

    ablate = sub.add_parser("ablate", help="Run a built-in ablation grid over several seeds")
    ablate.add_argument("--config", required=True, help="Base run configuration (JSON)")
    ablate.add_argument("--grid", required=True,
                        help=f"Grid name or name:variant,... ({', '.join(sorted(ablation.GRIDS))})")
    ablate.add_argument("--out", required=True, help="Output directory")
    ablate.add_argument("--seeds", type=int, default=3, help="Number of seeds per variant (default 3)")
    ablate.add_argument("--seed", type=int, default=None, help="Override the first seed")

    report = sub.add_parser("report", help="Re-emit summary.json and curves.svg from epochs.csv")
    report.add_argument("--run", required=True, help="Run directory")
    return parser


def configure_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    # Reduce verbosity of external libraries
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('PIL').setLevel(logging.WARNING)


def _load_config(args):
    config = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        config = merge_overrides(config, {"seed": args.seed})
    return config


def _progress_logger(step: float = 10.0):
    """Progress callback that logs each time overall progress crosses another `step` percent"""
    last = {"mark": -step}

    def callback(status):
        progress = status["overall_progress"]
        if progress - last["mark"] >= step:
            last["mark"] = progress
            logger.info(f"{progress:.0f}% - {status['current_stage']['name']} "
                        f"(elapsed {status['timing']['elapsed_time_formatted']}, "
                        f"remaining {status['timing']['estimated_remaining']})")
    return callback


def cmd_gen(args, env: EnvSettings) -> int:
    config = _load_config(args)
    train, test = build_datasets(config.data, config.noise, config.seed)
    RunStore(args.out).save_datasets(train, test)
    return EXIT_OK


def cmd_train(args, env: EnvSettings) -> int:
    config = _load_config(args)
    store = RunStore(args.out)
    progress = ProgressTracker(str(args.out), config.warmup_epochs, config.total_epochs - config.warmup_epochs)
    progress.add_progress_callback(_progress_logger())
    progress.add_log_entry("info", f"Training seed {config.seed} for {config.total_epochs} epochs "
                                   f"({config.warmup_epochs} warm-up)")
    report = trainer.run(config, progress=progress, checkpoint_dir=store.checkpoint_dir())
    progress.start_stage("report")
    store.save_run(report)
    progress.complete_stage("report")
    progress.add_log_entry("info", f"Final accuracy: robust {report.final_acc_A:.4f}, "
                                   f"baseline {report.final_acc_B:.4f}" if report.epochs else "No epochs run")
    return EXIT_OK


def cmd_ablate(args, env: EnvSettings) -> int:
    config = _load_config(args)
    result = ablation.ablate(config, args.grid, args.out, seeds=args.seeds, workers=env.threads)
    logger.info(f"Ablation table: {result.table_path}")
    runs = RunStore(args.out).list_runs(sort_by="final_acc_A")
    if runs and runs[0]["final"].get("test_acc_A") is not None:
        logger.info(f"Best run: {runs[0]['name']} (robust accuracy {runs[0]['final']['test_acc_A']:.4f})")
    return EXIT_OK


def cmd_report(args, env: EnvSettings) -> int:
    paths = metrics.regenerate_report(args.run)
    logger.info(f"Regenerated {', '.join(str(p) for p in paths.values())}")
    summary = RunStore(args.run).load_summary()
    if summary and summary["final"]["test_acc_A"] is not None:
        logger.info(f"{summary['num_epochs']} epochs, final accuracy: robust {summary['final']['test_acc_A']:.4f}, "
                    f"baseline {summary['final']['test_acc_B']:.4f}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        env = load_environment()
    except ConfigError as e:
        configure_logging("INFO")
        logger.error(str(e))
        return EXIT_VALIDATION

    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        configure_logging(env.log_level)
        logger.error(str(e))
        return EXIT_VALIDATION

    configure_logging("DEBUG" if args.verbose else env.log_level)
    try:
        return COMMANDS[args.command](args, env)
    except VALIDATION_ERRORS as e:
        logger.error(f"Validation error: {str(e)}")
        return EXIT_VALIDATION
    except Exception as e:
        logger.error(f"Error running {args.command}: {str(e)}", exc_info=args.verbose)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
