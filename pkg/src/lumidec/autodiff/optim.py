"""Bias-corrected Adam over named parameter collections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NumericError
from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter first/second moment buffers plus the shared step counter."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, Tensor],
    state: AdamState,
) -> dict[str, Tensor]:
    """One Adam update. Returns fresh parameter tensors; moments and the step
    counter mutate in ``state``. Non-finite gradients abort before any
    parameter changes."""
    for name, g in grads.items():
        if name not in params:
            raise DimensionError(f"gradient for unknown parameter '{name}'")
        if g.shape != params[name].shape:
            raise DimensionError(
                f"gradient/parameter shape mismatch for '{name}': {g.shape} vs {params[name].shape}"
            )
        if not np.isfinite(g.data).all():
            raise NumericError(f"non-finite gradient for parameter '{name}'; step aborted")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    updated: dict[str, Tensor] = {}
    for name, p in params.items():
        g = grads[name].data
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        step = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        updated[name] = Tensor(p.data - step, requires_grad=p.requires_grad, dtype=p.data.dtype)
    return updated
