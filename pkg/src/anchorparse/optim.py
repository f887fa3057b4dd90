"""AdamW, global-norm gradient clipping, and the linear warm-up / decay schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .nn import Parameter


def clip_grad_norm(parameters: Sequence[Parameter], max_norm: float) -> float:
    """Scale every gradient so their joint L2 norm is at most `max_norm`; returns the norm before clipping."""

    grads = [p.grad for p in parameters if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in parameters:
            if p.grad is not None:
                p.grad = p.grad * factor
    return total


class AdamW:
    """Adam with decoupled weight decay; matrices decay, vectors and scalars do not."""

    def __init__(
        self,
        parameters: Sequence[Parameter],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.parameters: List[Parameter] = list(parameters)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.first: Dict[int, np.ndarray] = {}
        self.second: Dict[int, np.ndarray] = {}

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for p in self.parameters:
            if p.grad is None:
                continue
            key = id(p)
            m = self.first.get(key)
            v = self.second.get(key)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = self.beta1 * m + (1.0 - self.beta1) * p.grad
            v = self.beta2 * v + (1.0 - self.beta2) * np.square(p.grad)
            self.first[key], self.second[key] = m, v
            if self.weight_decay and p.data.ndim >= 2:
                p.data -= self.lr * self.weight_decay * p.data
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            p.data -= (self.lr * update).astype(p.data.dtype)


@dataclass
class LinearWarmupSchedule:
    """Linear rise to `peak_lr` at step ceil(warmup_proportion * total), then linear decay.

    The decay reaches 0 one step after `total_steps`, so every scheduled
    step, the last included, moves the parameters.
    """

    peak_lr: float
    total_steps: int
    warmup_proportion: float = 0.1

    @property
    def warmup_steps(self) -> int:
        return math.ceil(self.warmup_proportion * self.total_steps)

    def lr_at(self, step: int) -> float:
        """Learning rate for the 1-based optimizer step `step`."""

        warmup = self.warmup_steps
        if warmup and step <= warmup:
            return self.peak_lr * step / warmup
        end = self.total_steps + 1
        return self.peak_lr * max(0.0, (end - step) / (end - warmup))
