"""Differentiable primitives. No general broadcasting: shapes must match unless stated."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .autograd import Tensor, as_tensor, record

LEAKY_SLOPE = 0.01


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ----------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")
    return record("add", (a, b), Tensor(a.data + b.data), lambda g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "sub")
    return record("sub", (a, b), Tensor(a.data - b.data), lambda g: (g, -g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return record("mul", (a, b), Tensor(ad * bd), lambda g: (g * bd, g * ad))


def scale(a, c: float):
    a = as_tensor(a)
    return record("scale", (a,), Tensor(a.data * c), lambda g: g * c)


def sigmoid(x):
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return record("sigmoid", (x,), Tensor(y), lambda g: g * y * (1.0 - y))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record("tanh", (x,), Tensor(y), lambda g: g * (1.0 - y * y))


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    x = as_tensor(x)
    factor = np.where(x.data > 0, 1.0, slope)
    return record("leaky_relu", (x,), Tensor(x.data * factor), lambda g: g * factor)


def square(x):
    x = as_tensor(x)
    xd = x.data
    return record("square", (x,), Tensor(xd * xd), lambda g: 2.0 * g * xd)


def complex_abs(re, im):
    """sqrt(re^2 + im^2); the gradient at the origin is taken as zero."""
    re, im = as_tensor(re), as_tensor(im)
    _check_same(re, im, "complex_abs")
    mag = np.sqrt(re.data ** 2 + im.data ** 2)
    safe = np.where(mag > 0, mag, 1.0)

    def backward(g):
        gs = np.where(mag > 0, g / safe, 0.0)
        return gs * re.data, gs * im.data

    return record("complex_abs", (re, im), Tensor(mag), backward)


# ----------------------------------------------------------------- reductions

def sum_all(x):
    x = as_tensor(x)
    shape = x.shape
    return record("sum", (x,), Tensor(x.data.sum()), lambda g: np.full(shape, float(g)))


def mean(x, axis: int):
    x = as_tensor(x)
    n = x.shape[axis]

    def backward(g):
        return np.repeat(np.expand_dims(g, axis), n, axis=axis) / n

    return record("mean", (x,), Tensor(x.data.mean(axis=axis)), backward)


# ----------------------------------------------------------------- shape ops

def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return record("reshape", (x,), Tensor(x.data.reshape(shape)), lambda g: g.reshape(old))


def transpose(x, axes):
    x = as_tensor(x)
    inv = np.argsort(axes)
    return record("transpose", (x,), Tensor(np.ascontiguousarray(x.data.transpose(axes))),
                  lambda g: g.transpose(inv))


def flip(x, axis: int):
    x = as_tensor(x)
    return record("flip", (x,), Tensor(np.flip(x.data, axis).copy()),
                  lambda g: np.flip(g, axis).copy())


def concat(tensors, axis: int):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", tuple(tensors), Tensor(np.concatenate([t.data for t in tensors], axis)),
                  backward)


def split(x, sizes, axis: int):
    """Inverse of :func:`concat`; returns a tuple of tensors."""
    x = as_tensor(x)
    bounds = np.cumsum(sizes)[:-1]
    parts = tuple(Tensor(p.copy()) for p in np.split(x.data, bounds, axis=axis))

    def backward(*gs):
        return np.concatenate(gs, axis=axis)

    return record("split", (x,), parts, backward)


def strided_slice(x, axis: int, start: int = 0, step: int = 1, stop=None):
    x = as_tensor(x)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop, step)
    idx = tuple(idx)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        out[idx] = g
        return out

    return record("slice", (x,), Tensor(x.data[idx].copy()), backward)


def expand(x, axes_sizes):
    """Insert new axes and repeat: ``axes_sizes`` maps output axis -> size."""
    x = as_tensor(x)
    y = x.data
    for ax in sorted(axes_sizes):
        y = np.expand_dims(y, ax)
    shape = list(y.shape)
    for ax, n in axes_sizes.items():
        shape[ax] = n
    out = np.broadcast_to(y, shape).copy()
    red = tuple(sorted(axes_sizes))
    return record("expand", (x,), Tensor(out), lambda g: g.sum(axis=red))


# ----------------------------------------------------------------- linear algebra

def linear(x, weight, bias=None):
    """``x[..., in] @ weight[out, in].T + bias[out]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input dim {x.shape[-1]} vs weight {weight.shape}")
    y = x.data @ weight.data.T
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data
        inputs = inputs + (bias,)
    xd, wd = x.data, weight.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd
        gw = g2.T @ xd.reshape(-1, xd.shape[-1])
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return record("linear", inputs, Tensor(y), backward)


def add_channel_bias(x, bias, axis: int = 1):
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.ndim != 1 or bias.shape[0] != x.shape[axis]:
        raise ShapeError(f"bias of shape {bias.shape} does not match axis {axis} of {x.shape}")
    shape = [1] * x.ndim
    shape[axis] = -1
    red = tuple(i for i in range(x.ndim) if i != axis)
    return record("add_bias", (x, bias), Tensor(x.data + bias.data.reshape(shape)),
                  lambda g: (g, g.sum(axis=red)))


# ----------------------------------------------------------------- convolutions

def _im2col1d(xp, k, stride, tout):
    """``xp[B, C, T]`` -> ``cols[B*tout, C*k]``."""
    b, c, _ = xp.shape
    span = stride * (tout - 1) + 1
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, :span:stride, :]
    return np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(b * tout, c * k)


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0):
    """Cross-correlation of ``x[B, Cin, T]`` with ``weight[Cout, Cin, k]`` (im2col + one GEMM)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with weight {weight.shape}")
    b, cin, t = x.shape
    cout, _, k = weight.shape
    tout = (t + 2 * padding - k) // stride + 1
    if tout < 1:
        raise ShapeError("conv1d: kernel larger than padded input")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    cols = _im2col1d(xp, k, stride, tout)
    w2 = weight.data.reshape(cout, cin * k)
    out = cols @ w2.T
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data
    out = np.ascontiguousarray(out.reshape(b, tout, cout).transpose(0, 2, 1))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.transpose(0, 2, 1).reshape(b * tout, cout)
        gw = (g2.T @ cols).reshape(cout, cin, k)
        if stride == 1 and padding <= k - 1:
            # input gradient = correlation of the padded output gradient with the flipped kernel
            edge = k - 1 - padding
            gp = np.pad(g, ((0, 0), (0, 0), (edge, edge)))
            wf = np.ascontiguousarray(weight.data[:, :, ::-1].transpose(1, 0, 2)).reshape(cin, cout * k)
            gx = (_im2col1d(gp, k, 1, t) @ wf.T).reshape(b, t, cin).transpose(0, 2, 1)
        else:
            span = stride * (tout - 1) + 1
            gcols = (g2 @ w2).reshape(b, tout, cin, k).transpose(0, 2, 1, 3)
            gxp = np.zeros_like(xp)
            for i in range(k):
                gxp[:, :, i:i + span:stride] += gcols[:, :, :, i]
            gx = gxp[:, :, padding:padding + t] if padding else gxp
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return record("conv1d", inputs, Tensor(out), backward)


def conv2d(x, weight, bias=None, stride=(1, 1), padding=(0, 0)):
    """Cross-correlation of ``x[B, Cin, H, W]`` with ``weight[Cout, Cin, kh, kw]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with weight {weight.shape}")
    b, _, h, w = x.shape
    cout, _, kh, kw = weight.shape
    sh, sw = stride
    ph, pw = padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d: kernel larger than padded input")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    wd = weight.data
    span_h, span_w = sh * (ho - 1) + 1, sw * (wo - 1) + 1
    out = np.zeros((cout, b, ho, wo))
    for i in range(kh):
        for j in range(kw):
            seg = xp[:, :, i:i + span_h:sh, j:j + span_w:sw]
            out += np.tensordot(wd[:, :, i, j], seg, axes=([1], [1]))
    out = out.transpose(1, 0, 2, 3)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(wd)
        gt = np.ascontiguousarray(g.transpose(1, 0, 2, 3))
        for i in range(kh):
            for j in range(kw):
                seg = xp[:, :, i:i + span_h:sh, j:j + span_w:sw]
                gw[:, :, i, j] = np.tensordot(g, seg, axes=([0, 2, 3], [0, 2, 3]))
                gxp[:, :, i:i + span_h:sh, j:j + span_w:sw] += np.tensordot(
                    wd[:, :, i, j], gt, axes=([0], [0])).transpose(1, 0, 2, 3)
        gx = gxp[:, :, ph:ph + h, pw:pw + w]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return record("conv2d", inputs, Tensor(np.ascontiguousarray(out)), backward)


def conv_transpose2d(x, weight, bias=None, stride=(1, 1), padding=(0, 0)):
    """Adjoint of :func:`conv2d`; ``weight[Cin, Cout, kh, kw]``.

    Output size per axis is ``(in - 1) * stride - 2 * padding + kernel``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"conv_transpose2d: input {x.shape} incompatible with weight {weight.shape}")
    b, _, h, w = x.shape
    _, cout, kh, kw = weight.shape
    sh, sw = stride
    ph, pw = padding
    full_h, full_w = (h - 1) * sh + kh, (w - 1) * sw + kw
    ho, wo = full_h - 2 * ph, full_w - 2 * pw
    if ho < 1 or wo < 1:
        raise ShapeError("conv_transpose2d: padding removes the whole output")
    span_h, span_w = sh * (h - 1) + 1, sw * (w - 1) + 1
    xd, wd = x.data, weight.data
    full = np.zeros((cout, b, full_h, full_w))
    for i in range(kh):
        for j in range(kw):
            full[:, :, i:i + span_h:sh, j:j + span_w:sw] += np.tensordot(
                wd[:, :, i, j], xd, axes=([0], [1]))
    out = full[:, :, ph:ph + ho, pw:pw + wo].transpose(1, 0, 2, 3)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gfull = np.zeros((b, cout, full_h, full_w))
        gfull[:, :, ph:ph + ho, pw:pw + wo] = g
        gx = np.zeros((x.shape[1], b, h, w))
        gw = np.empty_like(wd)
        for i in range(kh):
            for j in range(kw):
                seg = gfull[:, :, i:i + span_h:sh, j:j + span_w:sw]  # [B, Cout, h, w]
                gw[:, :, i, j] = np.tensordot(xd, seg, axes=([0, 2, 3], [0, 2, 3]))
                gx += np.tensordot(wd[:, :, i, j], seg, axes=([1], [1]))
        gx = gx.transpose(1, 0, 2, 3)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return record("conv_transpose2d", inputs, Tensor(np.ascontiguousarray(out)), backward)


def upsample_linear2(x):
    """Double the last axis: even outputs copy, odd outputs average neighbours.

    The final odd output repeats the last sample, so ``[1, 3] -> [1, 2, 3, 3]``.
    """
    x = as_tensor(x)
    xd = x.data
    t = xd.shape[-1]
    out = np.empty(xd.shape[:-1] + (2 * t,))
    out[..., 0::2] = xd
    out[..., 1:-1:2] = 0.5 * (xd[..., :-1] + xd[..., 1:])
    out[..., -1] = xd[..., -1]

    def backward(g):
        gx = g[..., 0::2].copy()
        mid = 0.5 * g[..., 1:-1:2]
        gx[..., :-1] += mid
        gx[..., 1:] += mid
        gx[..., -1] += g[..., -1]
        return gx

    return record("upsample", (x,), Tensor(out), backward)
