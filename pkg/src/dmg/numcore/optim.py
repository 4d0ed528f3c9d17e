"""Adaptive-moment (Adam) parameter updates with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class Moments:
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    moments: Moments,
    lr: float,
    step: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], Moments]:
    """Return updated parameters and moments; ``step`` counts from 1."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if step < 1:
        raise ValueError(f"step counts from 1, got {step}")
    new_params: dict[str, np.ndarray] = {}
    out = Moments()
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        m = moments.first.get(name)
        v = moments.second.get(name)
        m = (1.0 - beta1) * g if m is None else beta1 * m + (1.0 - beta1) * g
        v = (1.0 - beta2) * g * g if v is None else beta2 * v + (1.0 - beta2) * g * g
        new_params[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        out.first[name] = m
        out.second[name] = v
    return new_params, out


class Adam:
    """Stateful wrapper that updates named tensors in place."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3):
        self.params = dict(params)
        self.lr = lr
        self.moments = Moments()
        self.steps = 0

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.steps += 1
        current = {k: t.data for k, t in self.params.items()}
        updated, self.moments = adam_step(current, grads, self.moments, self.lr, self.steps)
        for k, t in self.params.items():
            t.data = updated[k]
