"""Pipeline stages: generate, render, train, evaluate, plot.

Each stage is a coroutine over a RunContext. CPU-bound per-task work goes to
the context's worker pool in task order; training runs in one worker thread,
one variant at a time. Test tasks are only read by `evaluate` and `plot`.
"""

import asyncio
import functools
import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..baselines import arima_auto, ema_forecast, naive_forecast, tune_ema_alpha
from ..core import ForecastTask, TimeSeries
from ..datagen import DatasetSpec, TaskSplits, ingest_csv, load_series, make_tasks, write_series_csv
from ..exceptions import CheckpointError, CheckpointMismatchError, DataError, EmptyDatasetError
from ..imaging import raster_filename, render_lineplot, render_multimodal, render_strip, write_png
from ..metrics import MetricInput, SignConfig, aggregate, per_task_scores, sign_accuracy
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..utils import safe_file_stem
from ..vit import VARIANTS, TrainingLog, VitForecaster, predict_batch, render_context, train
from .lifespan import RunContext, run_lifespan
from .plots import plot_forecasts, plot_panels
from .report import EvalReport, MethodRecord, write_reports
from .settings import ExperimentConfig, architecture_hash, dataset_hash

logger = logging.getLogger(__name__)


# --- Paths ---

def synthetic_cache_path(ctx: RunContext, spec: DatasetSpec) -> Path:
    return ctx.data_dir / f"{safe_file_stem(spec.name)}.csv"


def synthetic_manifest_path(ctx: RunContext, spec: DatasetSpec) -> Path:
    return ctx.data_dir / f"{safe_file_stem(spec.name)}.json"


def checkpoint_path(ctx: RunContext, spec: DatasetSpec, variant: str) -> Path:
    return ctx.checkpoints_dir / f"{safe_file_stem(spec.name)}_{variant}.ckpt"


def training_log_path(ctx: RunContext, spec: DatasetSpec, variant: str) -> Path:
    return ctx.logs_dir / f"{safe_file_stem(spec.name)}_{variant}_train.csv"


# --- Data ---

async def generate(ctx: RunContext) -> dict[str, list[TimeSeries]]:
    """Materializes every dataset; synthetic series are cached as CSV under data/."""
    out = {}
    for spec in ctx.config.datasets:
        series = await asyncio.to_thread(load_series, spec)
        if spec.source == "synthetic":
            path = synthetic_cache_path(ctx, spec)
            await asyncio.to_thread(write_series_csv, series, path)
            manifest = {"dataset_hash": dataset_hash(spec), "seed": spec.seed, "config_hash": ctx.config_hash}
            synthetic_manifest_path(ctx, spec).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
            logger.info("Cached %d synthetic series for '%s' at %s", len(series), spec.name, path)
        else:
            logger.info("Validated %d series for '%s' from %s", len(series), spec.name, spec.path)
        out[spec.name] = series
    return out


def _require_fresh_cache(ctx: RunContext, spec: DatasetSpec) -> None:
    path = synthetic_manifest_path(ctx, spec)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise DataError(f"Unreadable cache manifest for '{spec.name}' at {path}; run `gen` again.", e)
    if manifest.get("dataset_hash") != dataset_hash(spec):
        raise DataError(
            f"Cached series for '{spec.name}' were generated with seed {manifest.get('seed')} "
            f"and a different dataset configuration; run `gen` again."
        )


def load_dataset_series(ctx: RunContext, spec: DatasetSpec) -> list[TimeSeries]:
    """Series of one dataset; synthetic series must come from a `gen` with the same settings.

    Raises:
        DataError: If the synthetic cache is missing or was generated for another seed or spec.
    """
    if spec.source == "synthetic":
        path = synthetic_cache_path(ctx, spec)
        if not path.exists():
            raise DataError(f"No cached series for '{spec.name}' at {path}; run `gen` first.")
        _require_fresh_cache(ctx, spec)
        return ingest_csv(path)
    return ingest_csv(spec.path, spec.schema)


async def dataset_splits(ctx: RunContext, spec: DatasetSpec) -> TaskSplits:
    """Train/val/test tasks of one dataset, computed once per run."""
    if spec.name not in ctx.splits:
        series = await asyncio.to_thread(load_dataset_series, ctx, spec)
        ctx.splits[spec.name] = make_tasks(series, spec, ctx.config.seed)
    return ctx.splits[spec.name]


async def render_images(ctx: RunContext, tasks: list[ForecastTask], variant: str) -> np.ndarray:
    render = functools.partial(render_context, variant=variant, morlet_cfg=ctx.config.morlet)
    images = await ctx.map(render, [t.scaled_context for t in tasks])
    return np.stack(images) if images else np.zeros((0, 0, 0), dtype=np.uint8)


# --- Render ---

def _write_sample(ctx: RunContext, out_dir: Path, task: ForecastTask) -> list[Path]:
    stem = f"{task.series_id}_{task.start}"
    scaled = task.scaled_context
    image = render_multimodal(scaled, ctx.config.morlet)
    rasters = {
        "strip": render_strip(scaled),
        "spectrogram": image.spectrogram_region,
        "composed": image.pixels,
        "lineplot": render_lineplot(scaled),
    }
    paths = []
    for kind, raster in rasters.items():
        path = out_dir / raster_filename(stem, kind)
        write_png(path, raster)
        paths.append(path)
    panels = out_dir / raster_filename(stem, "panels")
    plot_panels(panels, scaled, image.spectrogram_region, title=stem)
    paths.append(panels)
    return paths


async def render_samples(ctx: RunContext, count: int) -> list[Path]:
    """Writes strip, spectrogram, composed and lineplot PNGs plus a panel figure for training tasks."""
    written = []
    for spec in ctx.config.datasets:
        splits = await dataset_splits(ctx, spec)
        out_dir = ctx.plots_dir / "render" / safe_file_stem(spec.name)
        out_dir.mkdir(parents=True, exist_ok=True)
        for task in splits.train[:count]:
            # matplotlib figures are built one at a time
            written.extend(await asyncio.to_thread(_write_sample, ctx, out_dir, task))
    logger.info("Rendered %d sample files.", len(written))
    return written


# --- Train ---

async def train_variant(ctx: RunContext, spec: DatasetSpec, splits: TaskSplits, variant: str) -> TrainingLog:
    """Trains one ViT variant, then writes its checkpoint and training log."""
    if not splits.train:
        raise EmptyDatasetError(f"Dataset '{spec.name}' has no training tasks.")
    cfg = ctx.config
    vit_cfg = cfg.vit_config_for(spec, variant)
    schedule = cfg.schedule_for(spec)
    train_images = await render_images(ctx, splits.train, variant)
    val_images = await render_images(ctx, splits.val, variant)
    model = VitForecaster(vit_cfg, seed=cfg.seed)
    log = await asyncio.to_thread(
        train,
        model,
        splits.train,
        splits.val,
        schedule,
        variant,
        seed=cfg.seed,
        weight_decay=cfg.weight_decay,
        train_images=train_images,
        val_images=val_images if splits.val else None,
    )
    header = {
        "config_hash": ctx.config_hash,
        "architecture_hash": architecture_hash(vit_cfg),
        "dataset_hash": dataset_hash(spec),
        "seed": cfg.seed,
        "dataset": spec.name,
        "variant": variant,
        "epoch": log.best_epoch,
        "schedule": asdict(schedule),
        "vit": asdict(vit_cfg),
    }
    save_checkpoint(checkpoint_path(ctx, spec, variant), model.state_dict(), header, log.optimizer)
    training_log_path(ctx, spec, variant).write_text(log.to_csv(), encoding="utf-8", newline="")
    return log


async def train_all(ctx: RunContext) -> dict[tuple[str, str], TrainingLog]:
    logs = {}
    for spec in ctx.config.datasets:
        splits = await dataset_splits(ctx, spec)
        for variant in ctx.config.vit_methods:
            logs[(spec.name, variant)] = await train_variant(ctx, spec, splits, variant)
    return logs


# --- Forecast and evaluate ---

def load_trained_model(ctx: RunContext, spec: DatasetSpec, variant: str) -> VitForecaster:
    """Rebuilds a trained variant, refusing checkpoints built for another architecture.

    Raises:
        CheckpointError: If the checkpoint is missing.
        CheckpointMismatchError: If its architecture or dataset hash differs from the configuration's.
    """
    path = checkpoint_path(ctx, spec, variant)
    if not path.exists():
        raise CheckpointError(f"No checkpoint for ViT-{variant} on '{spec.name}' at {path}; run `train` first.")
    vit_cfg = ctx.config.vit_config_for(spec, variant)
    checkpoint = load_checkpoint(path)
    checkpoint.require_architecture(architecture_hash(vit_cfg))
    trained_on = checkpoint.header.get("dataset_hash")
    if trained_on != dataset_hash(spec):
        raise CheckpointMismatchError(
            f"Checkpoint {path} was trained with seed {checkpoint.header.get('seed')} "
            f"on a different '{spec.name}' configuration; run `train` again."
        )
    model = VitForecaster(vit_cfg, seed=ctx.config.seed)
    model.load_state_dict(checkpoint.parameters)
    return model


async def forecast_method(
    ctx: RunContext, spec: DatasetSpec, splits: TaskSplits, method: str, tasks: list[ForecastTask]
) -> tuple[list[np.ndarray], dict]:
    """Forecasts `tasks` with one method; returns forecasts in task order plus method details."""
    if method in VARIANTS:
        model = load_trained_model(ctx, spec, method)
        images = await render_images(ctx, tasks, method)
        batch_size = ctx.config.schedule.batch_size
        forecasts = await asyncio.to_thread(predict_batch, model, tasks, method, images, batch_size)
        return forecasts, {}
    if method == "naive":
        return await ctx.map(lambda t: naive_forecast(t.context, t.horizon), tasks), {}
    if method == "ema":
        ema_cfg = await asyncio.to_thread(tune_ema_alpha, splits.val, ctx.config.ema_grid)
        return await ctx.map(lambda t: ema_forecast(t.context, t.horizon, ema_cfg), tasks), {"alpha": ema_cfg.alpha}
    if method == "arima":
        results = await ctx.map(lambda t: arima_auto(t.context, t.horizon), tasks)
        fallbacks = sum(r.fell_back for r in results)
        if fallbacks:
            logger.warning("ARIMA fell back to naive on %d of %d tasks for '%s'.", fallbacks, len(tasks), spec.name)
        return [r.forecast for r in results], {"naive_fallbacks": fallbacks}
    raise DataError(f"Unknown method '{method}'.")


def score_method(
    dataset: str, method: str, tasks: list[ForecastTask], forecasts: list[np.ndarray], sign_cfg: SignConfig
) -> MethodRecord:
    inputs = [MetricInput(t.context, t.target, f) for t, f in zip(tasks, forecasts)]
    smapes, mases = per_task_scores(inputs)
    return MethodRecord(
        dataset=dataset,
        method=method,
        n_tasks=len(inputs),
        smape=aggregate(smapes),
        mase=aggregate(mases),
        sign_strict=sign_accuracy(inputs, SignConfig(0.0)),
        sign_thresholded=sign_accuracy(inputs, sign_cfg),
        threshold_fraction=sign_cfg.threshold_fraction,
    )


async def evaluate(ctx: RunContext) -> EvalReport:
    """Scores every configured method on every dataset's test tasks.

    A method that fails is recorded as failed and the others proceed; a
    checkpoint whose architecture does not match the configuration aborts.
    """
    cfg = ctx.config
    report = EvalReport(ctx.config_hash, tuple(d.name for d in cfg.datasets), cfg.methods)
    for spec in cfg.datasets:
        splits = await dataset_splits(ctx, spec)
        if not splits.test:
            raise EmptyDatasetError(f"Dataset '{spec.name}' has no test tasks.")
        for method in cfg.methods:
            started = time.perf_counter()
            try:
                forecasts, details = await forecast_method(ctx, spec, splits, method, splits.test)
                record = score_method(spec.name, method, splits.test, forecasts, cfg.sign_for(spec))
                record.details = details
            except CheckpointMismatchError:
                raise
            except Exception as e:
                logger.error("Method '%s' failed on dataset '%s': %s", method, spec.name, e, exc_info=True)
                record = MethodRecord(
                    spec.name, method, status="failed", n_tasks=len(splits.test), error=f"[{type(e).__name__}] {e}"
                )
            record.seconds = time.perf_counter() - started
            report.add(record)
            logger.info("Evaluated %s on '%s' in %.1fs.", method, spec.name, record.seconds)
    return report


# --- Plot ---

async def plot_predictions(ctx: RunContext, count: int) -> list[Path]:
    """Overlays every method's forecast on the first `count` test tasks of each dataset."""
    written = []
    for spec in ctx.config.datasets:
        splits = await dataset_splits(ctx, spec)
        tasks = splits.test[:count]
        per_method = {}
        for method in ctx.config.methods:
            try:
                per_method[method], _ = await forecast_method(ctx, spec, splits, method, tasks)
            except CheckpointMismatchError:
                raise
            except Exception as e:
                logger.warning("Skipping %s in plots for '%s': %s", method, spec.name, e)
        for index, task in enumerate(tasks):
            forecasts = {m: values[index] for m, values in per_method.items()}
            path = ctx.plots_dir / f"{safe_file_stem(spec.name)}_{safe_file_stem(task.series_id)}_{task.start}_forecast.png"
            await asyncio.to_thread(plot_forecasts, path, task, forecasts, f"{spec.name}: {task.key}")
            written.append(path)
    logger.info("Wrote %d forecast plots.", len(written))
    return written


# --- End to end ---

async def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> EvalReport:
    """gen, train, eval and report in one lifespan; returns the report."""
    async with run_lifespan(cfg, workers) as ctx:
        await generate(ctx)
        if cfg.vit_methods:
            await train_all(ctx)
        report = await evaluate(ctx)
        write_reports(report, ctx.out_dir)
        return report
