"""Adam with decoupled weight decay and the warmup/decay learning schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def lr_at(step: int, total_steps: int, peak_lr: float, warmup_fraction: float) -> float:
    """Piecewise-linear schedule: 0 to peak over the warmup steps, then peak
    back to 0 over the remainder.

    The warmup window is ceil(warmup_fraction * total_steps) steps; the peak
    is reached exactly at its boundary and the schedule hits 0 at
    ``total_steps``.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = math.ceil(warmup_fraction * total_steps)
    if warmup > 0 and step <= warmup:
        return peak_lr * (step / warmup)  # ratio first: exact peak at the boundary
    if total_steps == warmup:
        return peak_lr
    return peak_lr * ((total_steps - step) / (total_steps - warmup))


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, weight_decay: float,
              beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
              eps: float = ADAM_EPS) -> None:
    """One in-place update.

    Weight decay is decoupled: parameters shrink by lr * wd * theta before
    the bias-corrected moment update is applied.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if weight_decay != 0.0:
            p -= lr * weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
