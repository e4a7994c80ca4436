import json

import numpy as np
import pytest

from specvit_forecast import config as app_config
from specvit_forecast.exceptions import CheckpointMismatchError, DataError, EmptyDatasetError
from specvit_forecast.harness import (
    evaluate,
    generate,
    load_config,
    plot_predictions,
    render_samples,
    run_experiment,
    run_lifespan,
    train_all,
)
from specvit_forecast.harness.pipeline import checkpoint_path, dataset_splits, training_log_path
from specvit_forecast.imaging import read_png
from specvit_forecast.nn import load_checkpoint

# Mark all tests in this file as asyncio
pytestmark = pytest.mark.asyncio

BASELINES_ONLY = ("naive", "ema", "arima")


# --- Lifespan --- #

async def test_lifespan_creates_output_tree(tiny_config_file):
    path, out_dir = tiny_config_file()
    cfg = load_config(path)
    async with run_lifespan(cfg, workers=2) as ctx:
        for sub in ("checkpoints", "plots", "logs", "data"):
            assert (out_dir / sub).is_dir()
        assert await ctx.map(lambda x: x * x, [3, 1, 2]) == [9, 1, 4]
        executor = ctx.executor
    with pytest.raises(RuntimeError):
        executor.submit(abs, -1)


async def test_lifespan_uses_configured_worker_count(tiny_config_file, mocker):
    mocker.patch.object(app_config, "WORKERS", 3)
    pool = mocker.patch("specvit_forecast.harness.lifespan.ThreadPoolExecutor")
    path, _ = tiny_config_file()
    async with run_lifespan(load_config(path)):
        pass
    pool.assert_called_once_with(max_workers=3, thread_name_prefix="specvit")
    pool.return_value.shutdown.assert_called_once_with(wait=True)


async def test_lifespan_shuts_pool_down_on_error(tiny_config_file):
    path, _ = tiny_config_file()
    with pytest.raises(ValueError):
        async with run_lifespan(load_config(path)) as ctx:
            executor = ctx.executor
            raise ValueError("stage failed")
    with pytest.raises(RuntimeError):
        executor.submit(abs, -1)


# --- Stages --- #

async def test_generate_caches_synthetic_series(tiny_config_file):
    path, out_dir = tiny_config_file(methods=BASELINES_ONLY)
    async with run_lifespan(load_config(path)) as ctx:
        series = await generate(ctx)
        splits = await dataset_splits(ctx, ctx.config.datasets[0])
    assert len(series["synthetic"]) == 16
    assert (out_dir / "data" / "synthetic.csv").exists()
    assert splits.sizes() == {"train": 8, "val": 4, "test": 4}


async def test_evaluate_without_generated_data_fails(tiny_config_file):
    path, _ = tiny_config_file(methods=BASELINES_ONLY)
    async with run_lifespan(load_config(path)) as ctx:
        with pytest.raises(DataError, match="run `gen` first"):
            await evaluate(ctx)


async def test_render_samples_writes_rasters(tiny_config_file):
    path, out_dir = tiny_config_file(methods=BASELINES_ONLY)
    async with run_lifespan(load_config(path)) as ctx:
        await generate(ctx)
        written = await render_samples(ctx, 2)
    assert len(written) == 2 * 5
    composed = [p for p in written if p.name.endswith("_composed.png")]
    assert len(composed) == 2
    assert read_png(composed[0]).shape == (128, 128)
    strip = [p for p in written if p.name.endswith("_strip.png")][0]
    assert read_png(strip).shape == (16, 128)
    assert all(p.parent == out_dir / "plots" / "render" / "synthetic" for p in written)


async def test_train_writes_checkpoints_and_logs(tiny_config_file):
    path, _ = tiny_config_file(methods=("num", "naive"))
    async with run_lifespan(load_config(path)) as ctx:
        await generate(ctx)
        logs = await train_all(ctx)
        spec = ctx.config.datasets[0]
        ckpt = load_checkpoint(checkpoint_path(ctx, spec, "num"))
        log_text = training_log_path(ctx, spec, "num").read_text()
    assert list(logs) == [("synthetic", "num")]
    assert ckpt.header["variant"] == "num"
    assert ckpt.header["config_hash"] == ctx.config_hash
    assert ckpt.optimizer is not None and ckpt.optimizer.step_count > 0
    assert log_text.startswith("epoch,train_loss,val_loss,lr")


async def test_evaluate_records_missing_checkpoint_as_failure(tiny_config_file):
    path, _ = tiny_config_file(methods=("num", "naive"))
    async with run_lifespan(load_config(path)) as ctx:
        await generate(ctx)
        report = await evaluate(ctx)
    failed = report.find("synthetic", "num")
    assert failed.failed and "CheckpointError" in failed.error
    assert not report.find("synthetic", "naive").failed


async def test_evaluate_aborts_on_architecture_mismatch(tiny_config_file):
    path, _ = tiny_config_file(methods=("num",))
    async with run_lifespan(load_config(path)) as ctx:
        await generate(ctx)
        await train_all(ctx)
    wider, _ = tiny_config_file(methods=("num",), embed_dim=16, name="wider.toml")
    async with run_lifespan(load_config(wider)) as ctx:
        with pytest.raises(CheckpointMismatchError):
            await evaluate(ctx)


async def test_evaluate_rejects_series_generated_with_another_seed(tiny_config_file):
    path, out_dir = tiny_config_file(methods=BASELINES_ONLY)
    async with run_lifespan(load_config(path, seed=1)) as ctx:
        await generate(ctx)
    manifest = json.loads((out_dir / "data" / "synthetic.json").read_text())
    assert manifest["seed"] == 1 and manifest["config_hash"] == ctx.config_hash
    async with run_lifespan(load_config(path, seed=2)) as ctx:
        with pytest.raises(DataError, match="seed 1"):
            await evaluate(ctx)
        await generate(ctx)
        report = await evaluate(ctx)
    assert all(r.status == "ok" for r in report.records)


async def test_evaluate_rejects_checkpoint_trained_with_another_seed(tiny_config_file):
    path, _ = tiny_config_file(methods=("num",))
    async with run_lifespan(load_config(path, seed=1)) as ctx:
        await generate(ctx)
        await train_all(ctx)
        assert load_checkpoint(checkpoint_path(ctx, ctx.config.datasets[0], "num")).header["seed"] == 1
    async with run_lifespan(load_config(path, seed=2)) as ctx:
        await generate(ctx)
        with pytest.raises(CheckpointMismatchError, match="seed 1"):
            await evaluate(ctx)


async def test_evaluate_rejects_cache_without_manifest(tiny_config_file):
    path, out_dir = tiny_config_file(methods=BASELINES_ONLY)
    async with run_lifespan(load_config(path)) as ctx:
        await generate(ctx)
    (out_dir / "data" / "synthetic.json").unlink()
    async with run_lifespan(load_config(path)) as ctx:
        with pytest.raises(DataError, match="manifest"):
            await evaluate(ctx)


async def test_evaluate_rejects_empty_test_split(tiny_config_file):
    path, _ = tiny_config_file(methods=BASELINES_ONLY)
    async with run_lifespan(load_config(path)) as ctx:
        await generate(ctx)
        splits = await dataset_splits(ctx, ctx.config.datasets[0])
        splits.test.clear()
        with pytest.raises(EmptyDatasetError):
            await evaluate(ctx)


async def test_baseline_evaluation_scores_every_task(tiny_config_file):
    path, _ = tiny_config_file(methods=BASELINES_ONLY)
    async with run_lifespan(load_config(path)) as ctx:
        await generate(ctx)
        report = await evaluate(ctx)
    assert [r.method for r in report.ordered()] == list(BASELINES_ONLY)
    for record in report.records:
        assert record.status == "ok" and record.n_tasks == 4
        assert 0.0 <= record.smape.mean <= 2.0
        assert 0.0 <= record.sign_strict <= 1.0
    assert report.find("synthetic", "ema").details["alpha"] in ctx.config.ema_grid
    assert "naive_fallbacks" in report.find("synthetic", "arima").details


async def test_plot_predictions_writes_one_figure_per_task(tiny_config_file):
    path, out_dir = tiny_config_file(methods=BASELINES_ONLY)
    async with run_lifespan(load_config(path)) as ctx:
        await generate(ctx)
        written = await plot_predictions(ctx, 3)
        tasks = (await dataset_splits(ctx, ctx.config.datasets[0])).test[:3]
    assert [p.name for p in written] == [f"synthetic_{t.series_id}_{t.start}_forecast.png" for t in tasks]
    assert all(p.stat().st_size > 0 for p in written)


# --- End to end --- #

async def test_run_experiment_is_reproducible(tiny_config_file):
    first_path, first_out = tiny_config_file(out_name="first")
    second_path, second_out = tiny_config_file(name="again.toml", out_name="second")
    first = await run_experiment(load_config(first_path), workers=2)
    await run_experiment(load_config(second_path), workers=3)

    assert [r.method for r in first.ordered()] == ["num-spec", "lineplot", "num", "naive", "ema", "arima"]
    assert all(not r.failed for r in first.records)
    assert (first_out / "report.csv").read_bytes() == (second_out / "report.csv").read_bytes()
    for name in ("report.json", "report.md"):
        assert (first_out / name).exists()
    smape = np.array([r.smape.mean for r in first.records])
    assert np.all(np.isfinite(smape))
