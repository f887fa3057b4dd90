"""Parameter containers and transformer building blocks."""

from __future__ import annotations

import math
from typing import Any, Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Parameter(Tensor):
    """A leaf tensor that always requires grad."""

    def __init__(self, data: Any, dtype: Any = None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Base class: discovers parameters and submodules through attributes."""

    def __init__(self) -> None:
        self.training = True

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            yield from _named(value, f"{prefix}{name}")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            for child in _children(value):
                yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _named(value: Any, path: str) -> Iterator[tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=f"{path}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _named(item, f"{path}.{i}")
    elif isinstance(value, dict):
        for key, item in value.items():
            yield from _named(item, f"{path}.{key}")


def _children(value: Any) -> Iterator[Module]:
    if isinstance(value, Module):
        yield value
    elif isinstance(value, (list, tuple)):
        for item in value:
            yield from _children(item)
    elif isinstance(value, dict):
        for item in value.values():
            yield from _children(item)


class Linear(Module):
    """x @ W + b with W stored as [in, out]."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        *,
        bias: bool = True,
        init_std: float = 0.02,
        dtype: Any = None,
    ):
        super().__init__()
        self.weight = Parameter(rng.normal(0.0, init_std, (in_features, out_features)), dtype)
        self.bias = Parameter(np.zeros(out_features), dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class Embedding(Module):
    def __init__(
        self, num_embeddings: int, dim: int, rng: np.random.Generator, *, init_std: float = 0.02, dtype: Any = None
    ):
        super().__init__()
        self.weight = Parameter(rng.normal(0.0, init_std, (num_embeddings, dim)), dtype)

    def forward(self, ids: np.ndarray) -> Tensor:
        return T.embedding_lookup(self.weight, ids)


class LayerNorm(Module):
    def __init__(self, dim: int, *, eps: float = 1e-5, dtype: Any = None):
        super().__init__()
        self.gamma = Parameter(np.ones(dim), dtype)
        self.beta = Parameter(np.zeros(dim), dtype)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        self.p = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.p, self.training, self.rng)


_NEG_INF = -1e9


class MultiHeadAttention(Module):
    """Scaled dot-product attention over `heads` subspaces.

    `blocked` is a boolean array broadcastable to [B, heads, Lq, Lk]; true
    entries are excluded from the softmax.
    """

    def __init__(
        self,
        d_model: int,
        heads: int,
        rng: np.random.Generator,
        dropout_rng: np.random.Generator,
        *,
        dropout: float = 0.0,
        init_std: float = 0.02,
        dtype: Any = None,
    ):
        super().__init__()
        self.heads = heads
        self.head_dim = d_model // heads
        self.query = Linear(d_model, d_model, rng, init_std=init_std, dtype=dtype)
        self.key = Linear(d_model, d_model, rng, init_std=init_std, dtype=dtype)
        self.value = Linear(d_model, d_model, rng, init_std=init_std, dtype=dtype)
        self.output = Linear(d_model, d_model, rng, init_std=init_std, dtype=dtype)
        self.attn_dropout = Dropout(dropout, dropout_rng)

    def _split(self, x: Tensor) -> Tensor:
        batch, length, _ = x.shape
        return T.transpose(
            T.reshape(x, (batch, length, self.heads, self.head_dim)), (0, 2, 1, 3)
        )

    def forward(self, x: Tensor, memory: Tensor, blocked: np.ndarray | None = None) -> Tensor:
        batch, length, d_model = x.shape
        q = self._split(self.query(x))
        k = self._split(self.key(memory))
        v = self._split(self.value(memory))
        scores = T.scale(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / math.sqrt(self.head_dim))
        if blocked is not None:
            scores = T.masked_fill(scores, blocked, _NEG_INF)
        weights = self.attn_dropout(T.softmax(scores, axis=-1))
        context = T.transpose(T.matmul(weights, v), (0, 2, 1, 3))
        return self.output(T.reshape(context, (batch, length, d_model)))


class FeedForward(Module):
    def __init__(
        self,
        d_model: int,
        d_ff: int,
        rng: np.random.Generator,
        *,
        activation: str = "gelu",
        init_std: float = 0.02,
        dtype: Any = None,
    ):
        super().__init__()
        self.inner = Linear(d_model, d_ff, rng, init_std=init_std, dtype=dtype)
        self.outer = Linear(d_ff, d_model, rng, init_std=init_std, dtype=dtype)
        self.activation = activation

    def forward(self, x: Tensor) -> Tensor:
        hidden = self.inner(x)
        hidden = T.gelu(hidden) if self.activation == "gelu" else T.relu(hidden)
        return self.outer(hidden)


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal position table of shape [length, dim]."""

    positions = np.arange(length)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2) / dim))
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: dim // 2])
    return table
