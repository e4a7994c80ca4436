import pytest

TINY_TOML = """
[experiment]
name = "tiny"
seed = 42
out_dir = "{out_dir}"
methods = [{methods}]

[vit]
embed_dim = {embed_dim}
depth = 1
heads = 2
mlp_ratio = 2.0

[train]
base_lr = 1e-3
warmup_epochs = 0
max_epochs = 2
patience = 2
batch_size = 8

[[datasets]]
name = "synthetic"
source = "synthetic"
input_len = 80
horizon = 20
train = 8
val = 4
test = 4
"""

ALL_METHODS = ("num-spec", "lineplot", "num", "naive", "ema", "arima")


def tiny_toml(out_dir, methods=ALL_METHODS, embed_dim=8) -> str:
    quoted = ", ".join(f'"{m}"' for m in methods)
    return TINY_TOML.format(out_dir=str(out_dir).replace("\\", "/"), methods=quoted, embed_dim=embed_dim)


@pytest.fixture
def tiny_config_file(tmp_path):
    """Writes a seconds-long experiment file and returns (path, out_dir)."""
    def write(methods=ALL_METHODS, embed_dim=8, name="tiny.toml", out_name="run"):
        out_dir = tmp_path / out_name
        path = tmp_path / name
        path.write_text(tiny_toml(out_dir, methods, embed_dim), encoding="utf-8")
        return path, out_dir
    return write
