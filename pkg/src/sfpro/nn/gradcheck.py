"""Central-difference verification of tape gradients."""
from __future__ import annotations

import numpy as np

from .autograd import Tape, Tensor, no_grad


def _relative(a, n, floor):
    return abs(a - n) / max(abs(a), abs(n), floor)


def analytic_grads(f, inputs):
    for x in inputs:
        x.requires_grad = True
        x.grad = None
    with Tape() as tape:
        out = f(*inputs)
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    tape.backward(out)
    return [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]


def _evaluate(f, inputs):
    with no_grad():
        return float(f(*inputs).data)


def grad_check(f, inputs, eps=1e-5, max_elements=None, rng=None, floor=1e-12):
    """Largest relative error between tape gradients and central differences.

    ``f`` maps the ``inputs`` tensors to a scalar tensor. Every element is
    perturbed unless ``max_elements`` is given, in which case that many
    elements per input are drawn with ``rng``. Errors are normwise per input:
    ``max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)``,
    which keeps near-zero entries from amplifying finite-difference round-off.
    """
    inputs = list(inputs)
    grads = analytic_grads(f, inputs)
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for x, g in zip(inputs, grads):
        flat = x.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = rng.choice(flat.size, size=max_elements, replace=False)
        analytic = g.reshape(-1)[idx]
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            up = _evaluate(f, inputs)
            flat[i] = orig - eps
            down = _evaluate(f, inputs)
            flat[i] = orig
            numeric[j] = (up - down) / (2 * eps)
        scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
        worst = max(worst, float(np.abs(analytic - numeric).max(initial=0.0) / scale))
    return worst


def directional_check(f, inputs, eps=1e-5, directions=4, rng=None):
    """Relative error of directional derivatives along random unit directions.

    Suited to composed models with too many parameters for per-element checks.
    """
    inputs = list(inputs)
    grads = analytic_grads(f, inputs)
    rng = rng if rng is not None else np.random.default_rng(0)
    base = [x.data.copy() for x in inputs]
    worst = 0.0
    for _ in range(directions):
        dirs = [rng.standard_normal(x.data.shape) for x in inputs]
        norm = np.sqrt(sum(float((d * d).sum()) for d in dirs))
        dirs = [d / norm for d in dirs]
        analytic = sum(float((g * d).sum()) for g, d in zip(grads, dirs))
        for x, b0, d in zip(inputs, base, dirs):
            x.data = b0 + eps * d
        up = _evaluate(f, inputs)
        for x, b0, d in zip(inputs, base, dirs):
            x.data = b0 - eps * d
        down = _evaluate(f, inputs)
        for x, b0 in zip(inputs, base):
            x.data = b0.copy()
        worst = max(worst, _relative(analytic, (up - down) / (2 * eps), 1e-12))
    return worst


__all__ = ["grad_check", "directional_check", "analytic_grads", "Tensor"]
