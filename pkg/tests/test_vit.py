import numpy as np
import pytest

from specvit_forecast.core import ForecastTask
from specvit_forecast.exceptions import BadShapeError, ConfigError, EmptyDatasetError, NonFiniteLossError
from specvit_forecast.nn import TrainSchedule, lr_at, mse_loss
from specvit_forecast.vit import (
    VitConfig,
    VitForecaster,
    patchify,
    predict,
    predict_batch,
    render_batch,
    render_context,
    train,
)
from specvit_forecast.vit.training import scaled_targets

TINY = VitConfig(embed_dim=16, depth=1, heads=2, mlp_ratio=2.0, horizon=20)


def _tasks(count, input_len=80, horizon=20, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(input_len + horizon)
    tasks = []
    for i in range(count):
        values = np.sin(2 * np.pi * t / rng.uniform(8, 40) + rng.uniform(0, 6)) + rng.normal(scale=0.05, size=t.size)
        tasks.append(ForecastTask.from_window(values[:input_len], values[input_len:], series_id=f"s{i}"))
    return tasks


# --- Patches and shapes --- #

def test_full_image_gives_64_tokens():
    assert patchify(np.zeros((2, 128, 128), dtype=np.uint8), 16).shape == (2, 64, 256)


def test_strip_image_gives_8_tokens():
    assert patchify(np.zeros((16, 128), dtype=np.uint8), 16).shape == (1, 8, 256)


def test_patchify_scales_to_unit_interval():
    tokens = patchify(np.full((1, 16, 16), 255, dtype=np.uint8), 16)
    assert tokens.dtype == np.float32
    assert np.all(tokens == 1.0)


def test_patchify_rejects_indivisible_images():
    with pytest.raises(BadShapeError):
        patchify(np.zeros((1, 20, 128)), 16)


def test_patch_locality():
    model = VitForecaster(TINY, seed=0)
    base = np.random.default_rng(0).integers(0, 256, size=(1, 128, 128)).astype(np.uint8)
    changed = base.copy()
    changed[0, 3 * 16:4 * 16, 5 * 16:6 * 16] = 255 - changed[0, 3 * 16:4 * 16, 5 * 16:6 * 16]
    diff = np.abs(model.patch_tokens(base).data - model.patch_tokens(changed).data).sum(axis=-1)[0]
    assert np.flatnonzero(diff).tolist() == [3 * 8 + 5]


def test_forward_output_lengths():
    images = np.zeros((3, 128, 128), dtype=np.uint8)
    assert VitForecaster(TINY).predict_scaled(images).shape == (3, 20)
    temperature = VitConfig(embed_dim=16, depth=1, heads=2, horizon=10)
    assert VitForecaster(temperature).predict_scaled(images).shape == (3, 10)


def test_strip_variant_changes_only_token_count():
    full = VitForecaster(TINY)
    strip = VitForecaster(TINY.for_variant("num"))
    assert strip.cfg.num_patches == 8 and full.cfg.num_patches == 64
    assert full.num_parameters() - strip.num_parameters() == (64 - 8) * TINY.embed_dim
    assert strip.predict_scaled(np.zeros((2, 16, 128), dtype=np.uint8)).shape == (2, 20)


def test_image_variants_share_one_architecture():
    spec = VitForecaster(TINY.for_variant("num-spec"), seed=3)
    lineplot = VitForecaster(TINY.for_variant("lineplot"), seed=3)
    assert spec.num_parameters() == lineplot.num_parameters()
    spec_shapes = {name: p.data.shape for name, p in spec.parameters().items()}
    assert spec_shapes == {name: p.data.shape for name, p in lineplot.parameters().items()}


def test_forward_rejects_wrong_shape():
    with pytest.raises(BadShapeError):
        VitForecaster(TINY)(np.zeros((1, 16, 128), dtype=np.uint8))


def test_forward_is_deterministic():
    images = np.random.default_rng(1).integers(0, 256, size=(2, 128, 128)).astype(np.uint8)
    model = VitForecaster(TINY, seed=5)
    np.testing.assert_array_equal(model.predict_scaled(images), model.predict_scaled(images))
    np.testing.assert_array_equal(model.predict_scaled(images), VitForecaster(TINY, seed=5).predict_scaled(images))


def test_config_rejects_bad_geometry():
    with pytest.raises(ConfigError):
        VitConfig(patch=12)
    with pytest.raises(ConfigError):
        VitConfig(embed_dim=30, heads=4)


def test_zero_head_initial_loss_is_mean_square_target():
    model = VitForecaster(VitConfig(embed_dim=16, depth=1, heads=2, horizon=20, zero_init_head=True))
    tasks = _tasks(4)
    images = render_batch(tasks, "num-spec")
    targets = scaled_targets(tasks, model.dtype)
    assert not model.predict_scaled(images).any()
    loss = mse_loss(model(images), targets).item()
    assert loss == pytest.approx(float(np.mean(targets.astype(np.float64) ** 2)), rel=1e-5)


def test_gradient_reaches_every_parameter():
    model = VitForecaster(VitConfig(embed_dim=16, depth=2, heads=2, mlp_ratio=2.0, horizon=5), seed=3)
    rng = np.random.default_rng(2)
    images = rng.integers(0, 256, size=(4, 128, 128)).astype(np.uint8)
    mse_loss(model(images), rng.uniform(size=(4, 5)).astype(np.float32)).backward()
    for name, p in model.parameters().items():
        assert p.grad is not None, name
        assert np.linalg.norm(p.grad.astype(np.float64)) > 1e-12, name


# --- Rendering per variant --- #

@pytest.mark.parametrize("variant, shape", [("num-spec", (128, 128)), ("lineplot", (128, 128)), ("num", (16, 128))])
def test_render_context_shapes(variant, shape):
    raster = render_context(np.linspace(0, 1, 80), variant)
    assert raster.shape == shape and raster.dtype == np.uint8


def test_render_context_unknown_variant():
    with pytest.raises(ConfigError):
        render_context(np.linspace(0, 1, 80), "spectrogram-only")


def test_render_batch_keeps_order():
    tasks = _tasks(3)
    batch = render_batch(tasks, "num")
    for image, task in zip(batch, tasks):
        np.testing.assert_array_equal(image, render_context(task.scaled_context, "num"))


# --- Training --- #

def test_train_records_each_epoch_and_restores_best():
    tasks = _tasks(12)
    cfg = VitConfig(embed_dim=16, depth=1, heads=2, mlp_ratio=2.0, horizon=20).for_variant("num")
    model = VitForecaster(cfg, seed=0)
    seen = []
    schedule = TrainSchedule(base_lr=1e-3, warmup_epochs=1, max_epochs=4, patience=5, batch_size=4)
    log = train(model, tasks[:8], tasks[8:], schedule, "num", on_epoch=seen.append)

    assert [e.epoch for e in log.entries] == [0, 1, 2, 3]
    assert seen == log.entries
    assert log.entries[0].lr == pytest.approx(1e-3)
    assert log.entries[-1].lr == pytest.approx(lr_at(4, schedule))
    assert 0 <= log.best_epoch < 4
    assert log.optimizer.step_count == 4 * 2
    images = render_batch(tasks[8:], "num")
    val = mse_loss(model(images), scaled_targets(tasks[8:], model.dtype)).item()
    assert val == pytest.approx(log.best_val_loss, rel=1e-4)
    assert log.to_csv().splitlines()[0] == "epoch,train_loss,val_loss,lr"


def test_training_loss_decreases():
    tasks = _tasks(8, seed=4)
    schedule = TrainSchedule(base_lr=5e-3, warmup_epochs=0, max_epochs=30, patience=30, batch_size=4)
    log = train(VitForecaster(TINY.for_variant("num"), seed=0), tasks, [], schedule, "num")
    losses = [e.train_loss for e in log.entries]
    assert len(losses) == 30
    assert min(losses[-3:]) < 0.7 * losses[0]


def test_train_is_reproducible():
    tasks = _tasks(8)
    cfg = TINY.for_variant("num")
    schedule = TrainSchedule(warmup_epochs=1, max_epochs=2, batch_size=3)
    first = VitForecaster(cfg, seed=1)
    second = VitForecaster(cfg, seed=1)
    train(first, tasks[:6], tasks[6:], schedule, "num", seed=7)
    train(second, tasks[:6], tasks[6:], schedule, "num", seed=7)
    for name, p in first.parameters().items():
        np.testing.assert_array_equal(p.data, second.parameters()[name].data)


def test_train_stops_early_on_plateau(mocker):
    tasks = _tasks(6)
    cfg = TINY.for_variant("num")
    mocker.patch("specvit_forecast.vit.training.evaluate_loss", return_value=1.0)
    schedule = TrainSchedule(warmup_epochs=0, max_epochs=50, patience=2, batch_size=8)
    log = train(VitForecaster(cfg), tasks[:4], tasks[4:], schedule, "num")
    assert log.stopped_early
    assert len(log.entries) == 3
    assert log.best_epoch == 0


def test_train_without_validation_uses_training_loss():
    tasks = _tasks(4)
    schedule = TrainSchedule(warmup_epochs=0, max_epochs=2, batch_size=4)
    log = train(VitForecaster(TINY.for_variant("num")), tasks, [], schedule, "num")
    assert all(e.val_loss == e.train_loss for e in log.entries)


def test_train_raises_on_non_finite_loss():
    tasks = _tasks(4)
    broken = ForecastTask.from_window(tasks[0].context, np.full(20, np.nan), series_id="nan")
    schedule = TrainSchedule(warmup_epochs=0, max_epochs=2, batch_size=8)
    with pytest.raises(NonFiniteLossError) as excinfo:
        train(VitForecaster(TINY.for_variant("num")), tasks + [broken], [], schedule, "num")
    assert excinfo.value.epoch == 0 and excinfo.value.batch_index == 0


def test_train_requires_tasks():
    with pytest.raises(EmptyDatasetError):
        train(VitForecaster(TINY), [], [], TrainSchedule(), "num-spec")


# --- Prediction --- #

def test_predict_restores_original_units(mocker):
    task = ForecastTask.from_window(np.linspace(10.0, 30.0, 80), np.zeros(2))
    model = VitForecaster(VitConfig(embed_dim=16, depth=1, heads=2, horizon=2))
    mocker.patch.object(model, "predict_scaled", return_value=np.array([[0.0, 1.0]]))
    np.testing.assert_allclose(predict(model, task, "lineplot"), [10.0, 30.0])


def test_predict_batch_matches_single_predictions():
    tasks = _tasks(5)
    model = VitForecaster(TINY.for_variant("num"), seed=2)
    batched = predict_batch(model, tasks, "num", batch_size=2)
    for forecast, task in zip(batched, tasks):
        np.testing.assert_allclose(forecast, predict(model, task, "num"), rtol=1e-5, atol=1e-6)
    assert predict_batch(model, [], "num") == []


@pytest.mark.slow
def test_model_memorizes_small_training_set():
    tasks = _tasks(32, seed=3)
    model = VitForecaster(VitConfig(horizon=20), seed=42)
    schedule = TrainSchedule(
        base_lr=1e-3, warmup_epochs=5, max_epochs=300, batch_size=8, early_stopping=False
    )
    log = train(model, tasks, [], schedule, "num-spec", weight_decay=0.0)
    assert min(e.train_loss for e in log.entries) < 1e-3
