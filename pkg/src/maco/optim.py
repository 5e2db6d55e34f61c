"""Optimizers and the warmup/cosine learning-rate schedule."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .errors import ParameterError, TrainingError
from .tensor import Tensor


def lr_schedule(step: int, warmup_steps: int, total_steps: int, base_lr: float) -> float:
    """Linear ramp 0 -> base_lr over warmup, then cosine decay to 0 at total_steps."""
    if not 0 <= step <= total_steps:
        raise ParameterError(f"lr_schedule: step {step} outside [0, {total_steps}]")
    if warmup_steps >= total_steps:
        raise ParameterError(
            f"lr_schedule: warmup_steps {warmup_steps} must be < total_steps {total_steps}"
        )
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """AdamW with decoupled weight decay and bias-corrected moments.

    Parameters whose ``grad`` is ``None`` after backward (nothing in the loss
    touched them) are skipped entirely: no moment update and no decay.
    """

    def __init__(
        self,
        params: Iterable[tuple[str, Tensor]],
        lr: float = 4.5e-4,
        weight_decay: float = 0.05,
        beta1: float = 0.9,
        beta2: float = 0.95,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self, lr: float | None = None) -> None:
        if lr is None:
            lr = self.lr
        if lr < 0:
            raise ParameterError(f"AdamW: learning rate must be >= 0, got {lr}")
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient for parameter '{name}'")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= lr * (update + self.weight_decay * p.data)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat name->array view of the moments, for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for name, _ in self.params:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for name, p in self.params:
            for store, key in ((self.m, f"m.{name}"), (self.v, f"v.{name}")):
                arr = arrays[key]
                if arr.shape != p.data.shape:
                    raise TrainingError(f"optimizer state shape mismatch for '{name}'")
                store[name] = arr.astype(np.float64, copy=True)
        self.step_count = step_count


class SGDMomentum:
    """Plain SGD with momentum (used by the linear probe)."""

    def __init__(self, params: Iterable[tuple[str, Tensor]], lr: float = 0.1, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self, lr: float | None = None) -> None:
        if lr is None:
            lr = self.lr
        for name, p in self.params:
            if p.grad is None:
                continue
            if not np.isfinite(p.grad).all():
                raise TrainingError(f"non-finite gradient for parameter '{name}'")
            v = self.velocity[name]
            v *= self.momentum
            v += p.grad
            p.data -= lr * v

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()
