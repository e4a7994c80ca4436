"""Dense tensors with reverse-mode gradients.

Only the operations a vision transformer needs are provided. Each op records
its parents and a closure that pushes the output gradient back to them;
`Tensor.backward()` replays those closures in reverse topological order.
"""

import contextlib
import threading
from typing import Iterator, Sequence

import numpy as np
from scipy import special

from ..exceptions import NotScalarError, ShapeMismatchError

DEFAULT_DTYPE = np.float32

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disables graph recording in the current thread."""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    """A numpy array plus an optional gradient of the same shape."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple["Tensor", ...] = ()
        self._backward = None
        self.op = ""

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op or 'leaf'})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # --- Gradient ---

    def backward(self) -> None:
        """Populates `.grad` on every reachable tensor that requires it.

        Raises:
            NotScalarError: If this tensor holds more than one element.
        """
        if self.data.size != 1:
            raise NotScalarError(f"backward() needs a scalar loss, got shape {self.shape}.")
        order = _topological_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # --- Operators ---

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis, keepdims)


# --- Graph helpers ---

def _topological_order(root: Tensor) -> list[Tensor]:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, a)
    b = _as_tensor(b)
    return _as_tensor(a, b), b


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    grad = _unbroadcast(grad, t.shape).astype(t.dtype, copy=False)
    t.grad = np.array(grad) if t.grad is None else t.grad + grad


def _broadcast_data(op: str, a: Tensor, b: Tensor, fn) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError as e:
        raise ShapeMismatchError(f"{op}: incompatible shapes {a.shape} and {b.shape}.", e)


# --- Elementwise ---

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = _broadcast_data("add", a, b, np.add)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _result(data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = _broadcast_data("sub", a, b, np.subtract)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _result(data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = _broadcast_data("mul", a, b, np.multiply)

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _result(data, (a, b), backward, "mul")


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    data = a.data ** exponent

    def backward(g):
        _accumulate(a, g * exponent * a.data ** (exponent - 1.0))

    return _result(data, (a,), backward, "pow")


def gelu(a: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    cdf = special.ndtr(a.data).astype(a.dtype, copy=False)
    data = a.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * a.data * a.data) / np.sqrt(2.0 * np.pi)
        _accumulate(a, g * (cdf + a.data * pdf.astype(a.dtype, copy=False)))

    return _result(data, (a,), backward, "gelu")


# --- Linear algebra and shape ---

def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul: incompatible shapes {a.shape} and {b.shape}.")
    data = _broadcast_data("matmul", a, b, np.matmul)

    def backward(g):
        _accumulate(a, g @ np.swapaxes(b.data, -1, -2))
        _accumulate(b, np.swapaxes(a.data, -1, -2) @ g)

    return _result(data, (a, b), backward, "matmul")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeMismatchError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}.", e)

    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _result(data, (a,), backward, "reshape")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeMismatchError(f"transpose: axes {axes} do not permute shape {a.shape}.")
    inverse = tuple(np.argsort(axes))
    data = a.data.transpose(axes)

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return _result(data, (a,), backward, "transpose")


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = np.broadcast_to(a.data, tuple(shape))
    except ValueError as e:
        raise ShapeMismatchError(f"broadcast_to: cannot broadcast {a.shape} to {tuple(shape)}.", e)

    def backward(g):
        _accumulate(a, g)

    return _result(data, (a,), backward, "broadcast_to")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeMismatchError(f"concat: incompatible shapes {shapes} along axis {axis}.", e)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _accumulate(t, piece)

    return _result(data, tuple(tensors), backward, "concat")


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(a: Tensor, index) -> Tensor:
    data = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        if _is_basic_index(index):
            full[index] += g
        else:
            np.add.at(full, index, g)
        _accumulate(a, full)

    return _result(np.array(data), (a,), backward, "getitem")


# --- Reductions ---

def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _result(data, (a,), backward, "sum")


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(tensor_sum(a, axis, keepdims), 1.0 / count)


# --- Fused normalization ops ---

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        _accumulate(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _result(y, (a,), backward, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalizes over the last axis, then applies gain and bias."""
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeMismatchError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last axis of {x.shape}."
        )
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    data = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        dx = (inv_std / n) * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        _accumulate(x, dx)
        _accumulate(gain, (g * xhat).reshape(-1, n).sum(axis=0))
        _accumulate(bias, g.reshape(-1, n).sum(axis=0))

    return _result(data, (x, gain, bias), backward, "layer_norm")


def mse_loss(prediction: Tensor, target) -> Tensor:
    """Mean squared error over every element."""
    diff = prediction - _as_tensor(target, prediction)
    return tensor_mean(diff * diff)
