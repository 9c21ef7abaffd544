"""Dense tensors with reverse-mode automatic differentiation.

Everything the transformer classifier needs and nothing more: broadcasting
arithmetic, batched matmul, embedding lookup, masked softmax, layer norm,
ReLU, dropout, masked mean pooling and cross-entropy. Each op computes its
forward pass with numpy and records a closure that maps the output gradient
to input gradients. ``backward`` orders the recorded nodes topologically and
replays them in reverse.

Training runs in float32. ``precision(np.float64)`` switches newly created
tensors to 64-bit, which is what ``gradcheck`` requires.
"""
import contextlib
import logging
import zlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from app.errors import (
    ConfigError,
    DimensionError,
    InputError,
    LabelIndexError,
    NumericError,
    UsageError,
)

logger = logging.getLogger(__name__)

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def default_dtype():
    """Float dtype used for tensors created without an explicit dtype."""
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the default float dtype (float64 = shadow mode)."""
    global _DEFAULT_DTYPE
    previous = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


@contextlib.contextmanager
def no_grad():
    """Run ops without recording backward closures (evaluation)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Node:
    """One recorded op: its kind, input tensors and backward closure."""
    __slots__ = ("op", "inputs", "backward_fn")

    def __init__(self, op: str, inputs: tuple, backward_fn: Callable):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tensor:
    """A row-major float array with an optional gradient buffer."""
    __slots__ = ("data", "grad", "requires_grad", "_node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=dtype or _DEFAULT_DTYPE))
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._node: Optional[Node] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = requires_grad
        out._node = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

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
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class Graph:
    """Topologically ordered view of the ops that produced a tensor."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: list[Tensor] = []
        visited: set[int] = set()
        # Iterative post-order DFS: inputs always precede their outputs
        stack = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                self.nodes.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor._node is not None:
                for parent in tensor._node.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

    def __len__(self):
        return len(self.nodes)

    def ops(self) -> list[str]:
        return [t._node.op for t in self.nodes if t._node is not None]

    def run_backward(self):
        root = self.root
        grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        for tensor in reversed(self.nodes):
            grad = grads.pop(id(tensor), None)
            if grad is None:
                continue
            node = tensor._node
            if node is None:
                if tensor.requires_grad:
                    tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
                continue
            input_grads = node.backward_fn(grad)
            for parent, parent_grad in zip(node.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad
        # Consume the graph: intermediate tensors drop their closures
        for tensor in self.nodes:
            tensor._node = None


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every requires_grad leaf reachable from ``loss``.

    Gradients accumulate additively; callers zero them between steps.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._node is None:
        raise UsageError("backward needs a loss produced by a recorded graph")
    Graph(loss).run_backward()


# --------- helpers --------- #

def _check_finite(data: np.ndarray, op: str):
    if not np.isfinite(data).all():
        raise NumericError(f"non-finite values produced by {op}")


def _result(data: np.ndarray, inputs: tuple, backward_fn: Callable, op: str) -> Tensor:
    _check_finite(data, op)
    requires = _GRAD_ENABLED and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires)
    if requires:
        out._node = Node(op, inputs, backward_fn)
    return out


def as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants; tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else _DEFAULT_DTYPE
    return Tensor._wrap(np.asarray(value, dtype=dtype), False)


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    b = as_tensor(b)
    return as_tensor(a, b), b


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from e


# --------- elementwise --------- #

def add(a, b) -> Tensor:
    a, b = _binary(a, b)
    _check_broadcast(a, b, "add")

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)
    return _result(a.data + b.data, (a, b), _backward, "add")


def sub(a, b) -> Tensor:
    a, b = _binary(a, b)
    _check_broadcast(a, b, "sub")

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)
    return _result(a.data - b.data, (a, b), _backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _binary(a, b)
    _check_broadcast(a, b, "mul")

    def _backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)
    return _result(a.data * b.data, (a, b), _backward, "mul")


def div(a, b) -> Tensor:
    a, b = _binary(a, b)
    _check_broadcast(a, b, "div")

    def _backward(g):
        return (unbroadcast(g / b.data, a.shape),
                unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return _result(a.data / b.data, (a, b), _backward, "div")


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0

    def _backward(g):
        return (g * positive,)
    return _result(np.where(positive, x.data, 0).astype(x.dtype), (x,), _backward, "relu")


# --------- shape ops --------- #

def reshape(x: Tensor, shape: tuple) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}") from e

    def _backward(g):
        return (g.reshape(x.shape),)
    return _result(out, (x,), _backward, "reshape")


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))

    def _backward(g):
        return (np.transpose(g, inverse),)
    return _result(np.ascontiguousarray(np.transpose(x.data, axes)), (x,), _backward, "transpose")


def _swap_last(arr: np.ndarray) -> np.ndarray:
    return np.swapaxes(arr, -1, -2)


# --------- reductions --------- #

def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)
    return _result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), _backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))

    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((np.broadcast_to(g, x.shape) / count).astype(x.dtype),)
    return _result(np.asarray(x.data.mean(axis=axis, keepdims=keepdims)), (x,), _backward, "mean")


# --------- linear algebra --------- #

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes (leading axes broadcast).

    Backward: dA = dC·Bᵀ, dB = Aᵀ·dC.
    """
    a, b = _binary(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def _backward(g):
        grad_a = unbroadcast(g @ _swap_last(b.data), a.shape)
        grad_b = unbroadcast(_swap_last(a.data) @ g, b.shape)
        return grad_a, grad_b
    return _result(np.matmul(a.data, b.data), (a, b), _backward, "matmul")


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``weight[ids]``; gradients scatter-add back into the table."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise LabelIndexError(f"embedding ids outside [0, {weight.shape[0]})")

    def _backward(g):
        grad = np.zeros_like(weight.data)
        np.add.at(grad, ids, g)
        return (grad,)
    return _result(weight.data[ids], (weight,), _backward, "embedding")


# --------- normalisation / probabilities --------- #

def _valid_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} invalid for shape {x.shape}")
    return axis % x.ndim


def softmax(x: Tensor, axis: int = -1, where: Optional[np.ndarray] = None) -> Tensor:
    """Exp-normalise along ``axis`` with max subtraction.

    ``where`` (boolean, broadcastable) marks the positions that take part;
    excluded positions get probability exactly 0.
    """
    axis = _valid_axis(x, axis)
    data = x.data
    if where is not None:
        where = np.broadcast_to(np.asarray(where, dtype=bool), data.shape)
        if not where.any(axis=axis).all():
            raise InputError("softmax slice with every position masked")
        shifted = data - np.max(np.where(where, data, -np.inf), axis=axis, keepdims=True)
        e = np.where(where, np.exp(np.where(where, shifted, 0)), 0).astype(data.dtype)
    else:
        e = np.exp(data - data.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)
    return _result(y, (x,), _backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis (biased variance), then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm expects gamma/beta of shape ({d},), got {gamma.shape}/{beta.shape}")
    if eps <= 0:
        raise ConfigError("layer_norm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def _backward(g):
        g_xhat = g * gamma.data
        grad_x = (inv_std / d) * (
            d * g_xhat
            - g_xhat.sum(axis=-1, keepdims=True)
            - xhat * (g_xhat * xhat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return grad_x, (g * xhat).sum(axis=lead), g.sum(axis=lead)
    return _result(out.astype(x.dtype), (x, gamma, beta), _backward, "layer_norm")


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean over the batch of ``-log softmax(logits)[target]``."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects [B, C] logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    batch, classes = logits.shape
    if targets.shape != (batch,):
        raise DimensionError(f"cross_entropy expects {batch} targets, got shape {targets.shape}")
    if batch and (targets.min() < 0 or targets.max() >= classes):
        raise LabelIndexError(f"target ids outside [0, {classes})")
    rows = np.arange(batch)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = np.asarray(-log_probs[rows, targets].mean(), dtype=logits.dtype)

    def _backward(g):
        probs = np.exp(log_probs)
        probs[rows, targets] -= 1.0
        return (probs * (g / batch),)
    return _result(loss, (logits,), _backward, "cross_entropy")


def dropout(x: Tensor, p: float, training: bool, rng: Optional["Rng"] = None) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout in training mode needs an Rng")
    scale = 1.0 / (1.0 - p)
    keep = (rng.random(x.shape) >= p).astype(x.dtype) * x.dtype.type(scale)

    def _backward(g):
        return (g * keep,)
    return _result(x.data * keep, (x,), _backward, "dropout")


def masked_mean(x: Tensor, valid: np.ndarray) -> Tensor:
    """Mean of ``x[b, t, :]`` over positions where ``valid[b, t]`` holds."""
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != x.shape[:2]:
        raise DimensionError(f"mask shape {valid.shape} does not match {x.shape[:2]}")
    counts = valid.sum(axis=1)
    if (counts == 0).any():
        raise InputError("cannot pool a row without any valid position")
    weights = (valid / counts[:, None]).astype(x.dtype)[..., None]

    def _backward(g):
        return (g[:, None, :] * weights,)
    return _result((x.data * weights).sum(axis=1), (x,), _backward, "masked_mean")


# --------- randomness --------- #

class Rng:
    """Seeded random stream (numpy PCG64) that splits into labelled children.

    A child is fully determined by the parent's seed and the chain of labels,
    so ``Rng(7).split("dropout")`` yields the same draws on every platform.
    """

    def __init__(self, seed: int, _key: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._key = tuple(_key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self._gen = np.random.Generator(np.random.PCG64(sequence))

    def split(self, label: str) -> "Rng":
        return Rng(self.seed, self._key + (zlib.crc32(label.encode("utf-8")),))

    def random(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return low + (high - low) * self._gen.random(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, seq: Sequence):
        return seq[int(self._gen.integers(0, len(seq)))]


# --------- gradient verification --------- #

def gradcheck(
    fn: Callable[[], Tensor],
    tensors: Iterable[Tensor],
    eps: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-9,
    raise_on_failure: bool = False,
) -> float:
    """Compare analytic gradients with central finite differences.

    ``fn`` must rebuild the scalar loss from ``tensors`` on every call. The
    step for element x is ``eps * max(1, |x|)``; the relative error uses the
    denominator ``max(|analytic|, |numeric|, 1e-8)`` and elements whose
    absolute error is below ``atol`` count as exact.

    Returns:
        The largest per-element relative error.
    """
    tensors = list(tensors)
    for t in tensors:
        if t.dtype != np.float64:
            raise UsageError("gradcheck runs in 64-bit shadow mode; cast tensors to float64")
        t.zero_grad()
    backward(fn())
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    worst = 0.0
    with no_grad():
        for t, grad in zip(tensors, analytic):
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                h = eps * max(1.0, abs(orig))
                flat[i] = orig + h
                f_plus = fn().item()
                flat[i] = orig - h
                f_minus = fn().item()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2 * h)
                a = grad.reshape(-1)[i]
                abs_err = abs(a - numeric)
                if abs_err <= atol:
                    continue
                worst = max(worst, abs_err / max(abs(a), abs(numeric), 1e-8))
    if raise_on_failure and worst >= rtol:
        raise NumericError(f"gradient check failed: max relative error {worst:.3e} >= {rtol:.1e}")
    return worst
