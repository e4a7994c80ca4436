from .lifespan import RunContext, run_lifespan
from .pipeline import evaluate, generate, plot_predictions, render_samples, run_experiment, train_all
from .report import EvalReport, MethodRecord, read_report, write_reports
from .settings import ExperimentConfig, architecture_hash, config_hash, load_config, parse_config

__all__ = [
    "EvalReport",
    "ExperimentConfig",
    "MethodRecord",
    "RunContext",
    "architecture_hash",
    "config_hash",
    "evaluate",
    "generate",
    "load_config",
    "parse_config",
    "plot_predictions",
    "read_report",
    "render_samples",
    "run_experiment",
    "run_lifespan",
    "train_all",
    "write_reports",
]
