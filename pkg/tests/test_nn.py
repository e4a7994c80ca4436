import math

import numpy as np
import pytest

from specvit_forecast.exceptions import (
    CheckpointFormatError,
    CheckpointMismatchError,
    ConfigError,
    NotScalarError,
    ShapeMismatchError,
)
from specvit_forecast.nn import (
    AdamWState,
    EarlyStopper,
    EncoderBlock,
    LayerNorm,
    Linear,
    Mlp,
    MultiHeadSelfAttention,
    Tensor,
    TrainSchedule,
    adamw_step,
    evaluate_early_stop,
    gelu,
    layer_norm,
    load_checkpoint,
    lr_at,
    mse_loss,
    no_grad,
    save_checkpoint,
    softmax,
)
from specvit_forecast.nn.tensor import concat, getitem
from specvit_forecast.vit import VitConfig, VitForecaster

GRAD_RTOL = 1e-5
# Finite differences carry roughly 1e-10 of rounding noise at this step size
GRAD_ATOL = 1e-7


def _relative_error(numeric: np.ndarray, analytic: np.ndarray) -> float:
    scale = max(np.linalg.norm(numeric) + np.linalg.norm(analytic), 1e-12)
    return float(np.linalg.norm(numeric - analytic) / scale)


def _check_gradients(loss_fn, tensors, step=1e-6, samples=12, seed=0):
    """Compares backward() with central differences on a sample of entries."""
    for t in tensors:
        t.grad = None
    loss_fn().backward()
    rng = np.random.default_rng(seed)
    for t in tensors:
        analytic = t.grad.reshape(-1)
        flat = t.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        numeric = np.empty(picks.size)
        for i, index in enumerate(picks):
            original = flat[index]
            flat[index] = original + step
            with no_grad():
                upper = loss_fn().item()
            flat[index] = original - step
            with no_grad():
                lower = loss_fn().item()
            flat[index] = original
            numeric[i] = (upper - lower) / (2 * step)
        close = np.linalg.norm(numeric - analytic[picks]) < GRAD_ATOL
        assert close or _relative_error(numeric, analytic[picks]) < GRAD_RTOL


def _leaf(rng, shape):
    return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)


# --- Tensor kernel --- #

def test_sum_of_squares_gradient_is_exact():
    x = Tensor(np.array([1.0, -2.0, 3.5]), requires_grad=True, dtype=np.float64)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, 2 * x.data)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(NotScalarError):
        (x * 2.0).backward()


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeMismatchError, match=r"\(2, 3\).*\(4, 5\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 5)))


def test_softmax_rows_sum_to_one():
    x = Tensor(np.random.default_rng(0).normal(scale=10, size=(6, 9)))
    np.testing.assert_allclose(softmax(x).data.sum(axis=-1), 1.0, atol=1e-6)


def test_no_grad_records_no_graph():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = x * 3.0
    assert not y.requires_grad


def test_broadcast_gradients_are_reduced():
    rng = np.random.default_rng(1)
    a = _leaf(rng, (4, 3))
    b = _leaf(rng, (3,))
    _check_gradients(lambda: ((a + b) * (a - b)).mean(), [a, b])


def test_elementwise_and_division_gradients():
    rng = np.random.default_rng(2)
    a = _leaf(rng, (3, 4))
    b = Tensor(rng.uniform(1.0, 2.0, size=(3, 4)), requires_grad=True, dtype=np.float64)
    _check_gradients(lambda: (gelu(a) / b + a ** 2.0).sum(), [a, b])


def test_matmul_and_shape_op_gradients():
    rng = np.random.default_rng(3)
    a = _leaf(rng, (2, 3, 4))
    b = _leaf(rng, (4, 6))
    def loss():
        y = (a @ b).reshape((2, 3, 2, 3)).transpose((0, 2, 1, 3))
        return (y[:, 1] * y[:, 0]).sum()
    _check_gradients(loss, [a, b])


def test_concat_and_fancy_index_gradients():
    rng = np.random.default_rng(4)
    a = _leaf(rng, (2, 3))
    b = _leaf(rng, (2, 2))
    def loss():
        joined = concat([a, b], axis=1)
        return (getitem(joined, (slice(None), [0, 4, 4])) ** 2.0).sum()
    _check_gradients(loss, [a, b])


def test_softmax_and_layer_norm_gradients():
    rng = np.random.default_rng(5)
    x = _leaf(rng, (3, 5))
    gain = _leaf(rng, (5,))
    bias = _leaf(rng, (5,))
    weights = rng.normal(size=(3, 5))
    _check_gradients(lambda: (softmax(layer_norm(x, gain, bias)) * weights).sum(), [x, gain, bias])


def test_mse_loss_value():
    loss = mse_loss(Tensor(np.array([1.0, 3.0])), np.array([0.0, 1.0]))
    assert loss.item() == pytest.approx(2.5)


# --- Layers --- #

def _as_float64(module):
    return module.astype(np.float64)


def test_linear_and_mlp_gradients():
    rng = np.random.default_rng(6)
    mlp = _as_float64(Mlp(5, 7, rng, out_dim=3))
    x = _leaf(rng, (4, 5))
    target = rng.normal(size=(4, 3))
    _check_gradients(lambda: mse_loss(mlp(x), target), [x, *mlp.parameters().values()])


def test_layer_norm_module_gradients():
    rng = np.random.default_rng(7)
    norm = _as_float64(LayerNorm(6))
    norm.gain.data = rng.normal(size=6)
    x = _leaf(rng, (2, 3, 6))
    weights = rng.normal(size=(2, 3, 6))
    _check_gradients(lambda: (norm(x) * weights).sum(), [x, norm.gain, norm.bias])


def test_attention_gradients():
    rng = np.random.default_rng(8)
    attn = _as_float64(MultiHeadSelfAttention(8, 2, rng))
    for p in attn.parameters().values():
        p.data = rng.normal(scale=0.5, size=p.shape)
    x = _leaf(rng, (2, 5, 8))
    weights = rng.normal(size=(2, 5, 8))
    _check_gradients(lambda: (attn(x) * weights).sum(), [x, *attn.parameters().values()])


def test_encoder_block_gradients():
    rng = np.random.default_rng(9)
    block = _as_float64(EncoderBlock(8, 2, 2.0, rng))
    for name, p in block.parameters().items():
        if not name.startswith("norm"):
            p.data = rng.normal(scale=0.3, size=p.shape)
    x = _leaf(rng, (2, 4, 8))
    weights = rng.normal(size=(2, 4, 8))
    _check_gradients(lambda: (block(x) * weights).sum(), [x, *block.parameters().values()])


def test_full_model_gradients():
    cfg = VitConfig(image_h=32, image_w=32, patch=16, embed_dim=32, depth=2, heads=2, mlp_ratio=2.0, horizon=3)
    model = _as_float64(VitForecaster(cfg, seed=1))
    rng = np.random.default_rng(10)
    for p in model.parameters().values():
        p.data = p.data + rng.normal(scale=0.1, size=p.shape)
    images = rng.integers(0, 256, size=(2, 32, 32)).astype(np.uint8)
    target = rng.normal(size=(2, 3))
    _check_gradients(lambda: mse_loss(model(images), target), list(model.parameters().values()), samples=4)


def test_encoder_block_is_permutation_equivariant():
    rng = np.random.default_rng(11)
    block = _as_float64(EncoderBlock(8, 2, 4.0, rng))
    x = rng.normal(size=(1, 6, 8))
    perm = rng.permutation(6)
    with no_grad():
        out = block(Tensor(x)).data
        permuted = block(Tensor(x[:, perm])).data
    np.testing.assert_allclose(permuted, out[:, perm], atol=1e-12)


def test_attention_rejects_indivisible_heads():
    with pytest.raises(ConfigError):
        MultiHeadSelfAttention(10, 3, np.random.default_rng(0))


def test_state_dict_round_trip_and_mismatch():
    rng = np.random.default_rng(12)
    source = Linear(3, 2, rng)
    target = Linear(3, 2, rng)
    target.load_state_dict(source.state_dict())
    np.testing.assert_array_equal(target.weight.data, source.weight.data)
    with pytest.raises(ShapeMismatchError):
        target.load_state_dict({"weight": np.zeros((2, 3)), "bias": np.zeros(2)})
    with pytest.raises(ShapeMismatchError):
        target.load_state_dict({"weight": source.weight.data})


def test_named_parameters_use_dotted_paths():
    block = EncoderBlock(8, 2, 2.0, np.random.default_rng(0))
    names = list(block.parameters())
    assert names[0] == "norm1.gain"
    assert "attn.qkv.weight" in names
    assert "mlp.fc2.bias" in names


# --- AdamW --- #

def test_adamw_single_step_example():
    theta = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
    theta.grad = np.array([1.0])
    adamw_step({"theta": theta}, AdamWState(lr=0.1, weight_decay=0.05))
    assert theta.data[0] == pytest.approx(0.895, abs=1e-8)


def test_adamw_without_gradient_or_decay_keeps_value():
    theta = Tensor(np.array([1.0, -2.0]), requires_grad=True, dtype=np.float64)
    adamw_step({"theta": theta}, AdamWState(lr=0.1, weight_decay=0.0), grads={"theta": np.zeros(2)})
    np.testing.assert_array_equal(theta.data, [1.0, -2.0])


def test_adamw_matches_adam_when_decay_is_zero():
    rng = np.random.default_rng(13)
    theta = Tensor(rng.normal(size=4), requires_grad=True, dtype=np.float64)
    reference = theta.data.copy()
    state = AdamWState(lr=0.01, weight_decay=0.0)
    m = np.zeros(4)
    v = np.zeros(4)
    for t in range(1, 6):
        grad = rng.normal(size=4)
        adamw_step({"theta": theta}, state, grads={"theta": grad})
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad ** 2
        reference = reference - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(theta.data, reference, rtol=1e-12)
    assert state.step_count == 5


def test_adamw_without_decay_follows_adam_down_a_quadratic_bowl():
    curvature = np.array([0.5, 1.0, 4.0, 10.0])
    theta = Tensor(np.array([3.0, -2.0, 1.5, -0.5]), requires_grad=True, dtype=np.float64)
    reference = theta.data.copy()
    state = AdamWState(lr=0.05, weight_decay=0.0)
    m = np.zeros(4)
    v = np.zeros(4)
    for t in range(1, 101):
        adamw_step({"theta": theta}, state, grads={"theta": curvature * theta.data})
        grad = curvature * reference
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad ** 2
        reference = reference - 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(theta.data, reference, rtol=1e-9, atol=1e-10)
    assert state.step_count == 100
    assert np.sum(curvature * theta.data ** 2) < 0.5 * np.sum(curvature * np.array([3.0, -2.0, 1.5, -0.5]) ** 2)


def test_adamw_skips_parameters_without_gradient():
    frozen = Tensor(np.array([3.0]), requires_grad=True, dtype=np.float64)
    adamw_step({"frozen": frozen}, AdamWState(lr=0.1))
    assert frozen.data[0] == 3.0


# --- Schedule and early stopping --- #

def test_lr_warmup_endpoints():
    schedule = TrainSchedule(base_lr=1e-3, warmup_epochs=5, max_epochs=50)
    assert lr_at(0, schedule) == 0.0
    assert lr_at(5, schedule) == 1e-3
    assert lr_at(2, schedule) == pytest.approx(4e-4)


def test_lr_cosine_decays_to_floor():
    schedule = TrainSchedule(base_lr=1e-3, warmup_epochs=5, max_epochs=50, min_lr_ratio=0.01)
    rates = [lr_at(e, schedule) for e in range(5, 51)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert lr_at(50, schedule) == pytest.approx(1e-5)
    assert lr_at(500, schedule) == pytest.approx(1e-5)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        TrainSchedule(warmup_epochs=10, max_epochs=10)
    with pytest.raises(ConfigError):
        TrainSchedule(patience=0)


def test_early_stop_after_plateau():
    decision = evaluate_early_stop([3, 2, 1, 1, 1, 1, 1], patience=2)
    assert decision.stop and decision.stop_epoch == 4 and decision.best_epoch == 2


def test_early_stop_never_fires_on_improvement():
    decision = evaluate_early_stop([1.0 / (e + 1) for e in range(100)], patience=3)
    assert not decision.stop and decision.best_epoch == 99


def test_early_stop_waits_for_full_patience():
    decision = evaluate_early_stop([1, 2, 3], patience=3)
    assert not decision.stop and decision.best_epoch == 0


def test_early_stopper_tracks_improvement_flag():
    stopper = EarlyStopper(2)
    assert stopper.update(1.0) is False and stopper.improved
    assert stopper.update(1.0) is False and not stopper.improved
    assert stopper.update(0.5) is False and stopper.best_epoch == 2


# --- Checkpoints --- #

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    params = {"a.weight": rng.normal(size=(3, 2)).astype(np.float32), "a.bias": np.zeros(2, dtype=np.float32)}
    state = AdamWState(lr=0.01, step_count=7)
    state.first_moment = {"a.weight": np.ones((3, 2), dtype=np.float32)}
    state.second_moment = {"a.weight": np.full((3, 2), 2.0, dtype=np.float32)}
    path = tmp_path / "ckpt" / "model.ckpt"
    save_checkpoint(path, params, {"architecture_hash": "abc", "epoch": 3}, state)

    loaded = load_checkpoint(path)
    assert set(loaded.parameters) == set(params)
    for name, values in params.items():
        np.testing.assert_array_equal(loaded.parameters[name], values)
    assert loaded.header["epoch"] == 3
    assert loaded.optimizer.step_count == 7
    np.testing.assert_array_equal(loaded.optimizer.second_moment["a.weight"], state.second_moment["a.weight"])
    loaded.require_architecture("abc")


def test_checkpoint_architecture_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"w": np.zeros(1, dtype=np.float32)}, {"architecture_hash": "abc"})
    with pytest.raises(CheckpointMismatchError):
        load_checkpoint(path).require_architecture("def")


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"w": np.zeros((4, 4), dtype=np.float32)})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_model_state_survives_checkpoint(tmp_path):
    cfg = VitConfig(image_h=16, image_w=32, patch=16, embed_dim=8, depth=1, heads=2, horizon=2)
    model = VitForecaster(cfg, seed=3)
    path = tmp_path / "vit.ckpt"
    save_checkpoint(path, model.state_dict())
    restored = VitForecaster(cfg, seed=99)
    restored.load_state_dict(load_checkpoint(path).parameters)
    image = np.random.default_rng(0).integers(0, 256, size=(1, 16, 32))
    np.testing.assert_array_equal(model.predict_scaled(image), restored.predict_scaled(image))
    assert not math.isnan(restored.predict_scaled(image)[0, 0])
