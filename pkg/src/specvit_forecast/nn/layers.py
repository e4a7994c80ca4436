"""Layers of a pre-norm transformer encoder."""

import logging
from typing import Iterator

import numpy as np
from scipy import stats

from ..exceptions import ConfigError, ShapeMismatchError
from .tensor import DEFAULT_DTYPE, Tensor, gelu, layer_norm, softmax

logger = logging.getLogger(__name__)

INIT_STD = 0.02


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Normal(0, std) truncated at two standard deviations."""
    values = stats.truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng)
    return np.asarray(values, dtype=dtype)


def parameter(values: np.ndarray) -> Tensor:
    return Tensor(values, requires_grad=True)


class Module:
    """Base class: parameters are Tensor attributes with requires_grad set.

    Sub-modules may be attributes or lists of modules; names are dotted paths
    such as `blocks.0.attn.qkv.weight`, in attribute definition order.
    """

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{index}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Copies arrays into the parameters, keeping each parameter's dtype.

        Raises:
            ShapeMismatchError: On a missing/unexpected name or a shape difference.
        """
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ShapeMismatchError(f"State mismatch: missing={missing}, unexpected={unexpected}.")
        for name, p in params.items():
            values = np.asarray(state[name])
            if values.shape != p.shape:
                raise ShapeMismatchError(f"Parameter '{name}': expected {p.shape}, got {values.shape}.")
            p.data = values.astype(p.dtype, copy=True)

    def astype(self, dtype) -> "Module":
        """Casts every parameter in place (float64 for gradient checks)."""
        for p in self.parameters().values():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self


class Linear(Module):
    """y = x W + b with W of shape (in_features, out_features)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, std: float = INIT_STD):
        self.weight = parameter(trunc_normal(rng, (in_features, out_features), std))
        self.bias = parameter(np.zeros(out_features, dtype=DEFAULT_DTYPE))

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.gain = parameter(np.ones(dim, dtype=DEFAULT_DTYPE))
        self.bias = parameter(np.zeros(dim, dtype=DEFAULT_DTYPE))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, out_dim: int | None = None):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, out_dim or dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over (batch, tokens, dim) inputs."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ConfigError(f"Embedding dim {dim} is not divisible by {heads} heads.")
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        batch, tokens, dim = x.shape
        # (B, N, 3D) -> (3, B, heads, N, head_dim)
        qkv = self.qkv(x).reshape((batch, tokens, 3, self.heads, self.head_dim)).transpose((2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ k.transpose((0, 1, 3, 2))) * (self.head_dim ** -0.5)
        mixed = softmax(scores, axis=-1) @ v
        return self.proj(mixed.transpose((0, 2, 1, 3)).reshape((batch, tokens, dim)))


class EncoderBlock(Module):
    """x + MSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float, rng: np.random.Generator):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))
