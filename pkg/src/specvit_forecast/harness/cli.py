"""`specvit` command line: gen, render, train, eval, report, plot and run."""

import argparse
import asyncio
import logging
import sys
from typing import Sequence

from .. import config
from ..exceptions import (
    CheckpointError,
    ConfigError,
    DataError,
    SpecVitError,
    TrainingDivergenceError,
)
from ..utils import format_error_body
from .lifespan import run_lifespan
from .pipeline import evaluate, generate, plot_predictions, render_samples, train_all
from .report import read_report, write_reports
from .settings import ExperimentConfig, load_config

logger = logging.getLogger(__name__)

COMMANDS = {
    "gen": "Generate or ingest datasets and cache synthetic series as CSV.",
    "render": "Write sample PNG rasters and panel figures for inspection.",
    "train": "Train every configured ViT variant and write checkpoints.",
    "eval": "Score every configured method on the test split.",
    "report": "Re-render report.csv and report.md from report.json.",
    "plot": "Write forecast overlay figures for a few test tasks.",
    "run": "gen, train, eval and report in one invocation.",
}

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, (DataError, CheckpointError)):
        return EXIT_DATA
    if isinstance(error, TrainingDivergenceError):
        return EXIT_DIVERGENCE
    return EXIT_FAILURE


def _method_list(text: str) -> list[str]:
    return [m.strip() for m in text.split(",") if m.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specvit", description="Spectrogram ViT forecasting benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text, description=help_text)
        cmd.add_argument("--config", default=config.DEFAULT_CONFIG_PATH, help="Experiment TOML file.")
        cmd.add_argument("--seed", type=int, default=None, help="Override the experiment seed.")
        cmd.add_argument("--out", default=None, help="Override the output directory.")
        cmd.add_argument("--methods", type=_method_list, default=None, help="Comma-separated method subset.")
        cmd.add_argument("--workers", type=int, default=None, help="Worker pool size (default SPECVIT_WORKERS).")
        cmd.add_argument("--error-format", choices=("text", "json"), default="text")
        if name == "render":
            cmd.add_argument("--count", type=int, default=config.RENDER_SAMPLES, help="Tasks rendered per dataset.")
        if name == "plot":
            cmd.add_argument("--count", type=int, default=config.PLOT_TASKS, help="Tasks plotted per dataset.")
    return parser


class _Progress:
    """Name of the stage currently running, for error messages."""

    def __init__(self, stage: str):
        self.stage = stage


async def _dispatch(args: argparse.Namespace, cfg: ExperimentConfig, progress: _Progress) -> None:
    command = args.command
    async with run_lifespan(cfg, args.workers) as ctx:
        if command in ("gen", "run"):
            progress.stage = "gen"
            await generate(ctx)
        if command == "render":
            await render_samples(ctx, args.count)
        if command in ("train", "run") and cfg.vit_methods:
            progress.stage = "train"
            await train_all(ctx)
        if command in ("eval", "run"):
            progress.stage = "eval"
            report = await evaluate(ctx)
            progress.stage = "report"
            write_reports(report, ctx.out_dir)
            print(report.to_markdown())
        if command == "report":
            report = read_report(ctx.out_dir)
            write_reports(report, ctx.out_dir)
            print(report.to_markdown())
        if command == "plot":
            await plot_predictions(ctx, args.count)


def main(argv: Sequence[str] | None = None) -> int:
    """Runs one command and returns its exit code.

    Exit codes: 0 success, 2 configuration error, 3 data or checkpoint error,
    4 training divergence, 1 anything else. Failures print one
    `ERROR: [<stage>] [<Type>] <message>` line to stderr.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=config.LOG_LEVEL,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    progress = _Progress(args.command)
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out, methods=args.methods)
        asyncio.run(_dispatch(args, cfg, progress))
    except SpecVitError as e:
        print(format_error_body(e, args.error_format, progress.stage), file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        logger.error("Unexpected failure in stage '%s': %s", progress.stage, e, exc_info=True)
        print(format_error_body(e, args.error_format, progress.stage), file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
