"""Vision-transformer forecaster: patches in, H scaled forecasts out."""

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..exceptions import BadShapeError, ConfigError
from ..nn.layers import EncoderBlock, LayerNorm, Linear, Mlp, Module, parameter, trunc_normal
from ..nn.tensor import Tensor, broadcast_to, concat, no_grad
from ..utils import derive_rng

logger = logging.getLogger(__name__)

STRIP_VARIANT = "num"


@dataclass(frozen=True)
class VitConfig:
    """Architecture of the forecaster.

    `zero_init_head` zeroes the last head projection so the untrained model
    predicts exactly 0; gradients then only reach the head's output layer on
    the first step, so it is off by default.
    """
    image_h: int = 128
    image_w: int = 128
    patch: int = 16
    embed_dim: int = 128
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    horizon: int = 20
    zero_init_head: bool = False

    def __post_init__(self):
        if self.patch < 1 or self.image_h % self.patch or self.image_w % self.patch:
            raise ConfigError(
                f"Image {self.image_h}x{self.image_w} is not divisible into {self.patch}x{self.patch} patches."
            )
        if self.embed_dim < 1 or self.heads < 1 or self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}.")
        if self.depth < 0 or self.horizon < 1 or self.mlp_ratio <= 0:
            raise ConfigError(
                f"Require depth >= 0, horizon >= 1 and mlp_ratio > 0 (got {self.depth}, {self.horizon}, {self.mlp_ratio})."
            )

    @property
    def grid(self) -> tuple[int, int]:
        return self.image_h // self.patch, self.image_w // self.patch

    @property
    def num_patches(self) -> int:
        rows, cols = self.grid
        return rows * cols

    def for_variant(self, variant: str) -> "VitConfig":
        """The strip-only variant reads a 16-row raster; others a square image."""
        if variant == STRIP_VARIANT:
            return replace(self, image_h=self.patch)
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """Splits (B, H, W) rasters into row-major flattened patches scaled by 1/255.

    Returns:
        float32 array of shape (B, (H/patch)*(W/patch), patch*patch).

    Raises:
        BadShapeError: If the input is not 2-D/3-D or not divisible into patches.
    """
    arr = np.asarray(images)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] % patch or arr.shape[2] % patch:
        raise BadShapeError(f"Cannot cut images of shape {np.shape(images)} into {patch}x{patch} patches.")
    batch, height, width = arr.shape
    rows, cols = height // patch, width // patch
    patches = arr.reshape(batch, rows, patch, cols, patch).transpose(0, 1, 3, 2, 4)
    return patches.reshape(batch, rows * cols, patch * patch).astype(np.float32) / np.float32(255.0)


class VitForecaster(Module):
    """Patch embedding, learned readout token, pre-norm encoder and MLP head.

    The readout token sits at position 0; the head reads its final embedding.
    """

    def __init__(self, cfg: VitConfig, seed: int = 42):
        rng = derive_rng(seed, 0)
        dim = cfg.embed_dim
        self.cfg = cfg
        self.patch_projection = Linear(cfg.patch * cfg.patch, dim, rng)
        self.readout_token = parameter(trunc_normal(rng, (1, 1, dim)))
        self.position_embeddings = parameter(trunc_normal(rng, (1, cfg.num_patches + 1, dim)))
        self.blocks = [EncoderBlock(dim, cfg.heads, cfg.mlp_ratio, rng) for _ in range(cfg.depth)]
        self.norm = LayerNorm(dim)
        self.head = Mlp(dim, dim, rng, out_dim=cfg.horizon)
        if cfg.zero_init_head:
            self.head.fc2.weight.data = np.zeros_like(self.head.fc2.weight.data)
        logger.debug("Built ViT with %d parameters for %dx%d inputs.", self.num_parameters(), cfg.image_h, cfg.image_w)

    @property
    def dtype(self):
        return self.patch_projection.weight.dtype

    def _check_images(self, images) -> np.ndarray:
        arr = np.asarray(images)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[1:] != (self.cfg.image_h, self.cfg.image_w):
            raise BadShapeError(
                f"Expected images of shape (B, {self.cfg.image_h}, {self.cfg.image_w}), got {np.shape(images)}."
            )
        return arr

    def patch_tokens(self, images) -> Tensor:
        """Projected patches plus their position embeddings, shape (B, N, D)."""
        arr = self._check_images(images)
        patches = Tensor(patchify(arr, self.cfg.patch).astype(self.dtype, copy=False))
        return self.patch_projection(patches) + self.position_embeddings[:, 1:, :]

    def forward(self, images) -> Tensor:
        tokens = self.patch_tokens(images)
        batch = tokens.shape[0]
        readout = broadcast_to(self.readout_token + self.position_embeddings[:, :1, :], (batch, 1, self.cfg.embed_dim))
        x = concat([readout, tokens], axis=1)
        for block in self.blocks:
            x = block(x)
        return self.head(self.norm(x)[:, 0, :])

    def predict_scaled(self, images) -> np.ndarray:
        """Forward pass without graph recording; returns (B, H) float64 forecasts."""
        with no_grad():
            return np.asarray(self.forward(images).data, dtype=np.float64)
