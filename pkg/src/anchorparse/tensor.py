"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable operation is a `Function` subclass with a numpy forward
and a backward rule. `Function.apply` records the operation on the output
tensor, and `Tensor.backward` walks the recorded graph in reverse topological
order, summing gradients across fan-out.
"""

from __future__ import annotations

import contextlib
import logging
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .errors import ContractError, ShapeError

logger = logging.getLogger(__name__)

_DEFAULT_DTYPE: type[np.floating] = np.float64
_GRAD_ENABLED = True


def set_default_dtype(dtype: Any) -> None:
    """Set the floating dtype used for new leaf tensors (float64 or float32)."""

    global _DEFAULT_DTYPE
    resolved = np.dtype(dtype).type
    if resolved not in (np.float64, np.float32):
        raise ContractError(f"unsupported tensor dtype {dtype!r}")
    _DEFAULT_DTYPE = resolved


def get_default_dtype() -> type[np.floating]:
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def default_dtype(dtype: Any = None) -> Iterator[None]:
    """Use `dtype` for new leaf tensors inside the block, then restore the previous one.

    With no argument the block may call `set_default_dtype` freely; the dtype
    in force on entry comes back on exit either way.
    """

    global _DEFAULT_DTYPE
    previous = _DEFAULT_DTYPE
    if dtype is not None:
        set_default_dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference)."""

    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out the axes numpy broadcasting added so `grad` matches `shape`."""

    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """Base class for a differentiable operation."""

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*tensors)
        out = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = _GRAD_ENABLED and any(t.requires_grad for t in tensors)
        return Tensor._from_op(out, func if requires_grad else None, requires_grad)


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation."""

    __array_priority__ = 100

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        *,
        dtype: Any = None,
        name: str | None = None,
    ):
        self.data = np.array(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.creator: Function | None = None
        self.name = name

    @classmethod
    def _from_op(
        cls, data: np.ndarray, creator: Function | None, requires_grad: bool
    ) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        out.creator = creator
        out.name = None
        return out

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._from_op(self.data, None, False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate `.grad` on every requires-grad tensor this scalar depends on."""

        if self.data.ndim != 0:
            raise ContractError(
                f"backward() needs a scalar loss, got shape {self.shape}"
            )
        if not self.requires_grad:
            raise ContractError("backward() on a tensor that does not require grad")

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.creator is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            node.grad = grad
            input_grads = node.creator.backward(grad)
            for parent, parent_grad in zip(node.creator.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

    # operator sugar
    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return self.__mul__(other)

    def __truediv__(self, other: float) -> "Tensor":
        return scale(self, 1.0 / other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return transpose(self, axes or None)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for parent in node.creator.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def as_tensor(value: Any) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, np.ndarray) and np.issubdtype(value.dtype, np.floating):
        return Tensor._from_op(value, None, False)
    return Tensor(value)


# === elementwise arithmetic ===

class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a - b

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a * b

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        a, b = self.inputs
        return unbroadcast(grad * b.data, a.shape), unbroadcast(grad * a.data, b.shape)


class Scale(Function):
    def forward(self, x: np.ndarray, factor: float = 1.0) -> np.ndarray:
        self.factor = factor
        return x * factor

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * self.factor,)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return Add.apply(a, b)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return Sub.apply(a, b)


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return Mul.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=float(factor))


# === linear algebra and shape ===

class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a @ b

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        a, b = self.inputs
        grad_a = grad @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ grad
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""

    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as exc:
        raise ShapeError(
            f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast"
        ) from exc
    return MatMul.apply(a, b)


class Sum(Function):
    def forward(
        self, x: np.ndarray, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
    ) -> np.ndarray:
        self.axis = axis
        self.keepdims = keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        (x,) = self.inputs
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, x.shape).copy(),)


def tensor_sum(
    x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
) -> Tensor:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.shape[axis]
    return scale(tensor_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: tuple[int, ...] = ()) -> np.ndarray:
        return x.reshape(shape)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad.reshape(self.inputs[0].shape),)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        np.empty(x.shape, dtype=np.bool_).reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from exc
    return Reshape.apply(x, shape=shape)


class Transpose(Function):
    def forward(self, x: np.ndarray, axes: tuple[int, ...] | None = None) -> np.ndarray:
        self.axes = axes if axes is not None else tuple(reversed(range(x.ndim)))
        return np.transpose(x, self.axes)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (np.transpose(grad, np.argsort(self.axes)),)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    return Transpose.apply(x, axes=tuple(axes) if axes is not None else None)


def swapaxes(x: Tensor, first: int, second: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[first], axes[second] = axes[second], axes[first]
    return transpose(x, axes)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("concat of an empty sequence")
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(first) or any(
            a != b for i, (a, b) in enumerate(zip(first, t.shape)) if i != axis % len(first)
        ):
            raise ShapeError(f"concat: shapes {first} and {t.shape} differ off axis {axis}")
    return Concat.apply(*tensors, axis=axis)


class Stack(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        self.axis = axis
        return np.stack(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return tuple(
            np.take(grad, i, axis=self.axis) for i in range(len(self.inputs))
        )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("stack of an empty sequence")
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError(f"stack: shapes {tensors[0].shape} and {t.shape} differ")
    return Stack.apply(*tensors, axis=axis)


class GetItem(Function):
    def forward(self, x: np.ndarray, index: Any = None) -> np.ndarray:
        self.index = index
        return np.asarray(x[index])

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        (x,) = self.inputs
        full = np.zeros_like(x.data)
        np.add.at(full, self.index, grad)
        return (full,)


def getitem(x: Tensor, index: Any) -> Tensor:
    return GetItem.apply(x, index=index)


class EmbeddingLookup(Function):
    def forward(self, weight: np.ndarray, ids: np.ndarray | None = None) -> np.ndarray:
        self.ids = ids
        return weight[ids]

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        (weight,) = self.inputs
        full = np.zeros_like(weight.data)
        np.add.at(full, self.ids, grad)
        return (full,)


def embedding_lookup(weight: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ContractError(f"embedding ids must be integers, got {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ContractError(
            f"embedding id out of range [0, {weight.shape[0]}): min {ids.min()}, max {ids.max()}"
        )
    return EmbeddingLookup.apply(weight, ids=ids)


# === nonlinearities and normalisation ===

class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        return x * self.mask

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * self.mask,)


_GELU_C = np.sqrt(2.0 / np.pi)


class GELU(Function):
    """Tanh approximation of GELU."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
        return 0.5 * x * (1.0 + self.t)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        x = self.inputs[0].data
        t = self.t
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        return (grad * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner),)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def gelu(x: Tensor) -> Tensor:
    return GELU.apply(x)


class LayerNorm(Function):
    def forward(
        self, x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5
    ) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = (x - mu) * self.inv_std
        return self.xhat * gamma + beta

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        x, gamma, beta = self.inputs
        n = x.shape[-1]
        gxhat = grad * gamma.data
        grad_x = (self.inv_std / n) * (
            n * gxhat
            - gxhat.sum(axis=-1, keepdims=True)
            - self.xhat * (gxhat * self.xhat).sum(axis=-1, keepdims=True)
        )
        grad_gamma = unbroadcast(grad * self.xhat, gamma.shape)
        grad_beta = unbroadcast(grad, beta.shape)
        return grad_x, grad_gamma, grad_beta


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(
            f"layer_norm: parameters {gamma.shape}/{beta.shape} do not match last axis of {x.shape}"
        )
    return LayerNorm.apply(x, gamma, beta, eps=eps)


class Dropout(Function):
    def forward(
        self, x: np.ndarray, p: float = 0.0, rng: np.random.Generator | None = None
    ) -> np.ndarray:
        keep = rng.random(x.shape) >= p
        self.mask = keep.astype(x.dtype) / (1.0 - p)
        return x * self.mask

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * self.mask,)


def dropout(
    x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None
) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""

    if not training or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ContractError("dropout in training mode needs a random generator")
    return Dropout.apply(x, p=p, rng=rng)


class MaskedFill(Function):
    def forward(self, x: np.ndarray, mask: np.ndarray | None = None, value: float = 0.0) -> np.ndarray:
        self.mask = np.broadcast_to(mask, x.shape)
        return np.where(self.mask, np.asarray(value, dtype=x.dtype), x)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (np.where(self.mask, 0.0, grad).astype(grad.dtype),)


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where `mask` is true; `mask` must broadcast to `x`."""

    mask = np.asarray(mask, dtype=bool)
    try:
        np.broadcast_to(mask, x.shape)
    except ValueError as exc:
        raise ShapeError(f"masked_fill: mask {mask.shape} does not broadcast to {x.shape}") from exc
    return MaskedFill.apply(x, mask=mask, value=value)


def _stable_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _stable_log_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


class Softmax(Function):
    def forward(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        self.axis = axis
        self.y = _stable_softmax(x, axis)
        return self.y

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        y = self.y
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class LogSoftmax(Function):
    def forward(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        self.axis = axis
        out = _stable_log_softmax(x, axis)
        self.probs = np.exp(out)
        return out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad - self.probs * grad.sum(axis=self.axis, keepdims=True),)


def _check_axis(x: Tensor, axis: int) -> None:
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise ContractError(f"axis {axis} out of range for shape {x.shape}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis)
    return Softmax.apply(x, axis=axis)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis)
    return LogSoftmax.apply(x, axis=axis)


# === loss ===

class CrossEntropy(Function):
    def forward(
        self,
        logits: np.ndarray,
        targets: np.ndarray | None = None,
        keep: np.ndarray | None = None,
    ) -> np.ndarray:
        self.targets = targets
        self.keep = keep.astype(logits.dtype)
        self.count = float(keep.sum())
        logp = _stable_log_softmax(logits, -1)
        self.probs = np.exp(logp)
        picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
        return np.asarray(-(picked * self.keep).sum() / self.count, dtype=logits.dtype)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        d = self.probs.copy()
        np.put_along_axis(
            d,
            self.targets[..., None],
            np.take_along_axis(d, self.targets[..., None], axis=-1) - 1.0,
            axis=-1,
        )
        return (d * (self.keep[..., None] * (grad / self.count)),)


def cross_entropy_from_logits(
    logits: Tensor, targets: np.ndarray, ignore: np.ndarray | None = None
) -> Tensor:
    """Mean negative log-likelihood over the positions `ignore` leaves in.

    `logits` is [..., L, V]; `targets` and `ignore` are [..., L]. When every
    position is ignored the loss is a constant zero and a warning is logged.
    """

    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(
            f"cross_entropy: targets {targets.shape} do not match logits {logits.shape}"
        )
    ignore = (
        np.zeros(targets.shape, dtype=bool) if ignore is None else np.asarray(ignore, dtype=bool)
    )
    if ignore.shape != targets.shape:
        raise ShapeError(f"cross_entropy: ignore mask {ignore.shape} != targets {targets.shape}")
    keep = ~ignore
    if targets[keep].size and (targets[keep].min() < 0 or targets[keep].max() >= logits.shape[-1]):
        raise ContractError(f"cross_entropy: target id outside [0, {logits.shape[-1]})")
    if not keep.any():
        logger.warning("cross-entropy batch has every position ignored; loss set to zero")
        return Tensor(0.0, dtype=logits.dtype)
    safe_targets = np.where(keep, targets, 0)
    return CrossEntropy.apply(logits, targets=safe_targets, keep=keep)


# === gradient checking ===

def numerical_gradient(
    fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5
) -> np.ndarray:
    """Central finite differences of scalar `fn()` with respect to `tensor.data`."""

    grad = np.zeros(tensor.shape, dtype=np.float64)
    data = tensor.data
    with no_grad():
        for idx in np.ndindex(*tensor.shape):
            original = data[idx]
            data[idx] = original + h
            plus = float(fn().data)
            data[idx] = original - h
            minus = float(fn().data)
            data[idx] = original
            grad[idx] = (plus - minus) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||), zero when both are zero."""

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale_ = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale_ == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale_)
