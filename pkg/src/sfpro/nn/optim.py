"""Adam with bias correction."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import ShapeError


class AdamState:
    """First/second moments keyed by parameter name, plus the step counter."""

    def __init__(self, named_params=()):
        self.m = OrderedDict((k, np.zeros_like(p.data)) for k, p in named_params)
        self.v = OrderedDict((k, np.zeros_like(a)) for k, a in self.m.items())
        self.step = 0


def adam_step(named_params, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps_opt=1e-8):
    """Apply one update in place. Parameters without a gradient see a zero gradient."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in named_params:
        m, v = state.m[name], state.v[name]
        if m.shape != p.data.shape:
            raise ShapeError(f"{name}: moment shape {m.shape} != parameter {p.data.shape}")
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter {p.data.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if lr != 0.0:
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps_opt)
    return state
