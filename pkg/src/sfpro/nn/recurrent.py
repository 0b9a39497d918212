"""GRU and LSTM: single-step cells built from primitives, and fused sequence scans.

Weights follow the common layout: ``w_ih[G*H, D]``, ``w_hh[G*H, H]`` and
biases ``[G*H]`` with gates stacked as ``r, z, n`` (GRU) or ``i, f, g, o`` (LSTM).
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ShapeError
from . import ops
from .autograd import Tensor, as_tensor, record
from .module import Module, Parameter, uniform_init


def _gate_split(t, h, count):
    return ops.split(t, [h] * count, axis=-1)


def gru_cell(x, h, w_ih, w_hh, b_ih, b_hh):
    """One GRU step; returns the new hidden state."""
    hidden = w_hh.shape[1]
    if h.shape[-1] != hidden or x.shape[-1] != w_ih.shape[1]:
        raise ShapeError("gru_cell: dimension mismatch between input, state and weights")
    gi_r, gi_z, gi_n = _gate_split(ops.linear(x, w_ih, b_ih), hidden, 3)
    gh_r, gh_z, gh_n = _gate_split(ops.linear(h, w_hh, b_hh), hidden, 3)
    r = ops.sigmoid(gi_r + gh_r)
    z = ops.sigmoid(gi_z + gh_z)
    n = ops.tanh(gi_n + r * gh_n)
    # (1 - z) * n + z * h  ==  n + z * (h - n)
    return n + z * (h - n)


def lstm_cell(x, state, w_ih, w_hh, b_ih, b_hh):
    """One LSTM step; ``state = (h, c)``, returns ``(h', c')``."""
    h, c = state
    hidden = w_hh.shape[1]
    if h.shape[-1] != hidden or c.shape != h.shape or x.shape[-1] != w_ih.shape[1]:
        raise ShapeError("lstm_cell: dimension mismatch between input, state and weights")
    a = ops.linear(x, w_ih, b_ih) + ops.linear(h, w_hh, b_hh)
    a_i, a_f, a_g, a_o = _gate_split(a, hidden, 4)
    i, f, o = ops.sigmoid(a_i), ops.sigmoid(a_f), ops.sigmoid(a_o)
    g = ops.tanh(a_g)
    c_new = f * c + i * g
    return o * ops.tanh(c_new), c_new


def rnn_cell_step(kind: str, x_t, state, weights):
    """Dispatch to :func:`gru_cell` or :func:`lstm_cell`; ``weights`` is (w_ih, w_hh, b_ih, b_hh)."""
    if kind.upper() == "GRU":
        return gru_cell(x_t, state, *weights)
    if kind.upper() == "LSTM":
        return lstm_cell(x_t, state, *weights)
    raise ValueError(f"unknown cell kind {kind!r}")


def gru_scan(gx, w_hh, b_hh):
    """Sequential GRU part given input projections ``gx[T, B, 3H]``; zero initial state."""
    gx, w_hh, b_hh = as_tensor(gx), as_tensor(w_hh), as_tensor(b_hh)
    t_len, b, g3 = gx.shape
    h = w_hh.shape[1]
    if g3 != 3 * h or w_hh.shape[0] != 3 * h:
        raise ShapeError(f"gru_scan: projections {gx.shape} vs recurrent weight {w_hh.shape}")
    h0 = np.zeros((b, h))
    wd = np.ascontiguousarray(w_hh.data)
    hs, r, z, n, ghn = kernels.gru_forward(np.ascontiguousarray(gx.data), wd, b_hh.data, h0)

    def backward(g):
        dgx, dw, db, _ = kernels.gru_backward(np.ascontiguousarray(g), wd, h0, hs, r, z, n, ghn)
        return dgx, dw, db

    return record("gru_scan", (gx, w_hh, b_hh), Tensor(hs), backward)


def lstm_scan(gx, w_hh, b_hh):
    """Sequential LSTM part given input projections ``gx[T, B, 4H]``; zero initial state."""
    gx, w_hh, b_hh = as_tensor(gx), as_tensor(w_hh), as_tensor(b_hh)
    t_len, b, g4 = gx.shape
    h = w_hh.shape[1]
    if g4 != 4 * h or w_hh.shape[0] != 4 * h:
        raise ShapeError(f"lstm_scan: projections {gx.shape} vs recurrent weight {w_hh.shape}")
    h0 = np.zeros((b, h))
    wd = np.ascontiguousarray(w_hh.data)
    hs, cs, gates = kernels.lstm_forward(np.ascontiguousarray(gx.data), wd, b_hh.data, h0, h0)

    def backward(g):
        dgx, dw, db, _, _ = kernels.lstm_backward(np.ascontiguousarray(g), wd, h0, h0, hs, cs, gates)
        return dgx, dw, db

    return record("lstm_scan", (gx, w_hh, b_hh), Tensor(hs), backward)


class RecurrentDirection(Module):
    """Parameters of one direction of a recurrent layer."""

    def __init__(self, kind, input_size, hidden_size, rng):
        super().__init__()
        gates = 3 if kind == "GRU" else 4
        self.w_ih = Parameter(uniform_init(rng, (gates * hidden_size, input_size), input_size))
        self.w_hh = Parameter(uniform_init(rng, (gates * hidden_size, hidden_size), hidden_size))
        self.b_ih = Parameter(np.zeros(gates * hidden_size))
        self.b_hh = Parameter(np.zeros(gates * hidden_size))


class BiRecurrent(Module):
    """Bidirectional GRU/LSTM layer over ``x[B, T, D]``.

    ``merge="concat"`` returns ``[B, T, 2H]``; ``merge="sum"`` returns ``[B, T, H]``.
    """

    def __init__(self, kind, input_size, hidden_size, rng, merge="concat"):
        super().__init__()
        kind = kind.upper()
        if kind not in ("GRU", "LSTM"):
            raise ValueError(f"unknown recurrent kind {kind!r}")
        self.kind = kind
        self.merge = merge
        self.hidden_size = hidden_size
        self.fwd = RecurrentDirection(kind, input_size, hidden_size, rng)
        self.bwd = RecurrentDirection(kind, input_size, hidden_size, rng)

    def _run(self, x_tbd, d: RecurrentDirection):
        gx = ops.linear(x_tbd, d.w_ih, d.b_ih)
        scan = gru_scan if self.kind == "GRU" else lstm_scan
        return scan(gx, d.w_hh, d.b_hh)

    def forward(self, x):
        x_tbd = ops.transpose(x, (1, 0, 2))
        out_f = self._run(x_tbd, self.fwd)
        out_b = ops.flip(self._run(ops.flip(x_tbd, 0), self.bwd), 0)
        merged = out_f + out_b if self.merge == "sum" else ops.concat([out_f, out_b], axis=2)
        return ops.transpose(merged, (1, 0, 2))
