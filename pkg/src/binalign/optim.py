"""Adam with bias correction over dict-of-array parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
            0,
        )


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Return updated ``(params, state)``; inputs are not modified."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {k}")
    t = state.step + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        update = (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
        new_p[k] = np.asarray(p - update, dtype=p.dtype)
        new_m[k] = np.asarray(m, dtype=p.dtype)
        new_v[k] = np.asarray(v, dtype=p.dtype)
    return new_p, AdamState(new_m, new_v, t)
