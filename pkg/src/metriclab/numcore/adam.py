from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class AdamState:
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def init(cls, params, **hyper) -> "AdamState":
        zeros = [np.zeros_like(p, dtype=np.float64) for p in params]
        return cls(first_moment=zeros, second_moment=[z.copy() for z in zeros], **hyper)


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam with classic L2 weight decay folded into the gradient.

    Returns fresh ``(params, state)``; inputs are not modified.
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeMismatch("params, grads and moments must have equal length")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {g.shape} vs moment {m.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_params.append(p - state.lr * step)
        new_m.append(m)
        new_v.append(v)
    return new_params, replace(state, first_moment=new_m, second_moment=new_v, step_count=t)
