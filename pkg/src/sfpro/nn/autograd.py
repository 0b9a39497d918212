"""Tape-based reverse-mode differentiation over numpy arrays.

Every differentiable op computes its forward result eagerly and, when a tape
is active and some input requires a gradient, appends one node holding a
backward closure. ``Tape.backward`` walks the nodes in exact reverse order.
"""
from __future__ import annotations

import threading

import numpy as np

_state = threading.local()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; all routed through recorded ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("op", "inputs", "outputs", "backward")

    def __init__(self, op, inputs, outputs, backward):
        self.op = op
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward


class Tape:
    """Ordered record of applied kernels for one forward/backward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    @property
    def ops(self) -> list[str]:
        return [n.op for n in self.nodes]

    def backward(self, loss: Tensor, grad=None):
        if grad is None:
            if loss.data.size != 1:
                raise ValueError("backward without an explicit gradient needs a scalar output")
            grad = np.ones_like(loss.data)
        loss.grad = np.asarray(grad, dtype=np.float64).reshape(loss.data.shape)
        for node in reversed(self.nodes):
            out_grads = [o.grad for o in node.outputs]
            if all(g is None for g in out_grads):
                continue
            out_grads = [np.zeros_like(o.data) if g is None else g
                         for o, g in zip(node.outputs, out_grads)]
            in_grads = node.backward(*out_grads)
            if not isinstance(in_grads, tuple):
                in_grads = (in_grads,)
            for inp, g in zip(node.inputs, in_grads):
                if g is None or not inp.requires_grad:
                    continue
                inp.grad = g if inp.grad is None else inp.grad + g


def active_tape() -> Tape | None:
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


def record(op: str, inputs, outputs, backward):
    """Attach ``outputs`` to the active tape if any input needs a gradient.

    ``backward`` maps one gradient per output to one gradient (or None) per input.
    Returns ``outputs`` unchanged (single tensor or tuple, as given).
    """
    outs = outputs if isinstance(outputs, tuple) else (outputs,)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        for o in outs:
            o.requires_grad = True
        tape.nodes.append(_Node(op, tuple(inputs), outs, backward))
    return outputs


class no_grad:
    """Suspend recording (the active tape is hidden)."""

    def __enter__(self):
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        self._saved = list(stack)
        stack.clear()
        return self

    def __exit__(self, *exc):
        _state.stack[:] = self._saved
        return False
