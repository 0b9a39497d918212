"""Gradient checks for every differentiable kernel and for the composed extractor.

Each kernel check builds a small random instance, reduces the op output to a
scalar with a fixed random weighting and returns the normwise relative error
between tape gradients and central differences.
"""
from __future__ import annotations

import numpy as np

from .deep_filter import deep_filter
from .dsp import StftConfig
from .gcrn import GcrnConfig, fuse_anchor
from .nn import ops, spectral
from .nn.autograd import Tensor
from .nn.gradcheck import directional_check, grad_check
from .nn.recurrent import gru_cell, gru_scan, lstm_cell, lstm_scan

KERNEL_TOLERANCE = 1e-5
COMPOSED_TOLERANCE = 1e-4


def _t(rng, *shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape))


def _weighted(out, w):
    return ops.sum_all(ops.mul(out, Tensor(w)))


def _check(rng, fn, inputs, out_shape, max_elements=None):
    w = rng.standard_normal(out_shape)
    return grad_check(lambda *xs: _weighted(fn(*xs), w), inputs, max_elements=max_elements, rng=rng)


def _multi(rng, fn, inputs, out_shapes):
    ws = [rng.standard_normal(s) for s in out_shapes]

    def f(*xs):
        outs = fn(*xs)
        total = _weighted(outs[0], ws[0])
        for o, w in zip(outs[1:], ws[1:]):
            total = total + _weighted(o, w)
        return total
    return grad_check(f, inputs, rng=rng)


def _d(rng, lo, hi):
    return int(rng.integers(lo, hi + 1))


def check_linear(rng):
    b, t, i, o = _d(rng, 1, 3), _d(rng, 1, 4), _d(rng, 1, 6), _d(rng, 1, 6)
    return _check(rng, ops.linear, [_t(rng, b, t, i), _t(rng, o, i), _t(rng, o)], (b, t, o))


def check_sigmoid(rng):
    shape = (_d(rng, 1, 4), _d(rng, 1, 6))
    return _check(rng, ops.sigmoid, [_t(rng, *shape, scale=2.0)], shape)


def check_tanh(rng):
    shape = (_d(rng, 1, 4), _d(rng, 1, 6))
    return _check(rng, ops.tanh, [_t(rng, *shape)], shape)


def check_leaky_relu(rng):
    shape = (_d(rng, 1, 4), _d(rng, 1, 6))
    x = rng.standard_normal(shape)
    x[np.abs(x) < 1e-2] += 0.1  # keep clear of the kink
    return _check(rng, ops.leaky_relu, [Tensor(x)], shape)


def check_complex_abs(rng):
    shape = (_d(rng, 1, 4), _d(rng, 1, 5))
    return _multi(rng, lambda a, b: (ops.complex_abs(a, b),), [_t(rng, *shape), _t(rng, *shape)],
                  [shape])


def check_conv1d(rng):
    b, cin, cout, k = _d(rng, 1, 2), _d(rng, 1, 3), _d(rng, 1, 4), 2 * _d(rng, 0, 3) + 1
    stride, t = _d(rng, 1, 2), _d(rng, k, 14)
    pad = k // 2
    tout = (t + 2 * pad - k) // stride + 1
    fn = lambda x, w, bias: ops.conv1d(x, w, bias, stride=stride, padding=pad)  # noqa: E731
    return _check(rng, fn, [_t(rng, b, cin, t), _t(rng, cout, cin, k), _t(rng, cout)], (b, cout, tout))


def check_conv2d(rng):
    b, cin, cout = _d(rng, 1, 2), _d(rng, 1, 3), _d(rng, 1, 3)
    n, f = _d(rng, 1, 5), 2 * _d(rng, 2, 5) + 1
    fn = lambda x, w, bias: ops.conv2d(x, w, bias, stride=(1, 2), padding=(1, 1))  # noqa: E731
    return _check(rng, fn, [_t(rng, b, cin, n, f), _t(rng, cout, cin, 3, 3), _t(rng, cout)],
                  (b, cout, n, (f - 1) // 2 + 1))


def check_conv_transpose2d(rng):
    b, cin, cout = _d(rng, 1, 2), _d(rng, 1, 3), _d(rng, 1, 3)
    n, f = _d(rng, 1, 5), _d(rng, 2, 6)
    fn = lambda x, w, bias: ops.conv_transpose2d(x, w, bias, stride=(1, 2), padding=(1, 1))  # noqa: E731
    return _check(rng, fn, [_t(rng, b, cin, n, f), _t(rng, cin, cout, 3, 3), _t(rng, cout)],
                  (b, cout, n, 2 * f - 1))


def check_upsample(rng):
    b, c, t = _d(rng, 1, 2), _d(rng, 1, 3), _d(rng, 1, 8)
    return _check(rng, ops.upsample_linear2, [_t(rng, b, c, t)], (b, c, 2 * t))


def check_gru_cell(rng):
    b, i, h = _d(rng, 1, 3), _d(rng, 1, 4), _d(rng, 1, 5)
    return _check(rng, gru_cell, [_t(rng, b, i), _t(rng, b, h), _t(rng, 3 * h, i), _t(rng, 3 * h, h),
                                  _t(rng, 3 * h), _t(rng, 3 * h)], (b, h))


def check_lstm_cell(rng):
    b, i, h = _d(rng, 1, 3), _d(rng, 1, 4), _d(rng, 1, 5)

    def fn(x, hh, c, wi, wh, bi, bh):
        return lstm_cell(x, (hh, c), wi, wh, bi, bh)
    return _multi(rng, fn, [_t(rng, b, i), _t(rng, b, h), _t(rng, b, h), _t(rng, 4 * h, i),
                            _t(rng, 4 * h, h), _t(rng, 4 * h), _t(rng, 4 * h)], [(b, h), (b, h)])


def check_gru_scan(rng):
    t, b, h = _d(rng, 1, 7), _d(rng, 1, 3), _d(rng, 1, 5)
    return _check(rng, gru_scan, [_t(rng, t, b, 3 * h), _t(rng, 3 * h, h, scale=0.5), _t(rng, 3 * h)],
                  (t, b, h))


def check_lstm_scan(rng):
    t, b, h = _d(rng, 1, 7), _d(rng, 1, 3), _d(rng, 1, 5)
    return _check(rng, lstm_scan, [_t(rng, t, b, 4 * h), _t(rng, 4 * h, h, scale=0.5), _t(rng, 4 * h)],
                  (t, b, h))


def check_deep_filter(rng):
    b, n, k = _d(rng, 1, 2), _d(rng, 1, 6), _d(rng, 1, 6)
    shape_h = (b, n, k, 5, 3)
    return _multi(rng, lambda hr, hi, xr, xi: deep_filter(hr, hi, xr, xi, 2, 1),
                  [_t(rng, *shape_h), _t(rng, *shape_h), _t(rng, b, n, k), _t(rng, b, n, k)],
                  [(b, n, k), (b, n, k)])


def check_stft(rng):
    cfg = StftConfig(fft_size=16, hop=8)
    b, frames = _d(rng, 1, 2), _d(rng, 1, 5)
    t = cfg.signal_length(frames) + _d(rng, 0, 7)
    return _multi(rng, lambda x: spectral.stft(x, cfg), [_t(rng, b, t)],
                  [(b, frames, 9), (b, frames, 9)])


def check_istft(rng):
    cfg = StftConfig(fft_size=16, hop=8)
    b, frames = _d(rng, 1, 2), _d(rng, 1, 5)
    t = cfg.signal_length(frames)
    return _check(rng, lambda r, i: spectral.istft(r, i, cfg, out_length=t),
                  [_t(rng, b, frames, 9), _t(rng, b, frames, 9)], (b, t))


def check_fuse_anchor(rng):
    b, c, n, f = _d(rng, 1, 2), _d(rng, 1, 3), _d(rng, 1, 4), _d(rng, 1, 5)
    return _check(rng, fuse_anchor, [_t(rng, b, c, n, f), _t(rng, b, 129), _t(rng, c, 129), _t(rng, c)],
                  (b, c, n, f))


def check_spectral_mse(rng):
    from .pipeline import spectral_mse

    shape = (_d(rng, 1, 3), _d(rng, 1, 4), _d(rng, 1, 5))
    cr, ci = rng.standard_normal(shape), rng.standard_normal(shape)
    return grad_check(lambda a, b: spectral_mse(a, b, cr, ci), [_t(rng, *shape), _t(rng, *shape)])


KERNEL_CHECKS = {
    "linear": check_linear,
    "sigmoid": check_sigmoid,
    "tanh": check_tanh,
    "leaky_relu": check_leaky_relu,
    "complex_abs": check_complex_abs,
    "conv1d": check_conv1d,
    "conv2d": check_conv2d,
    "conv_transpose2d": check_conv_transpose2d,
    "upsample_linear2": check_upsample,
    "gru_cell": check_gru_cell,
    "lstm_cell": check_lstm_cell,
    "gru_scan": check_gru_scan,
    "lstm_scan": check_lstm_scan,
    "deep_filter": check_deep_filter,
    "stft": check_stft,
    "istft": check_istft,
    "fuse_anchor": check_fuse_anchor,
    "spectral_mse": check_spectral_mse,
}


def run_kernel_checks(names=None, seed: int = 0) -> dict:
    """Relative error per kernel name, each from its own seeded generator."""
    names = list(KERNEL_CHECKS) if names is None else list(names)
    out = {}
    for i, name in enumerate(names):
        if name not in KERNEL_CHECKS:
            raise KeyError(f"unknown kernel {name!r}")
        out[name] = KERNEL_CHECKS[name](np.random.default_rng([seed, i]))
    return out


def desk_config(variant: str = "ri-waveunet", chunk: int = 1024):
    """Smallest configuration used for the composed-model gradient check."""
    from .pipeline import ModelConfig, TrainingConfig
    from .waveunet import WaveUNetConfig

    wu = WaveUNetConfig(num_layers=2, base_filters=4, filter_growth=4)
    gc = GcrnConfig(encoder_channels=(4, 8), lstm_layers=1, lstm_hidden=8)
    cfg = ModelConfig(waveunet_pre=wu, waveunet_post=wu, gcrn=gc,
                      training=TrainingConfig(batch_size=1, chunk_length=chunk, anchor_length=chunk))
    return cfg.with_variant(variant)


def check_composed(seed: int = 0, variant: str = "ri-waveunet", directions: int = 3) -> float:
    """Directional-derivative check of the training loss over all parameters and the input."""
    from .pipeline import TargetExtractor, model_loss

    cfg = desk_config(variant)
    rng = np.random.default_rng(seed)
    t = cfg.training.chunk_length
    model = TargetExtractor(cfg, seed=seed)
    mixture = Tensor(0.3 * rng.standard_normal((1, t)))
    target = 0.3 * rng.standard_normal((1, t))
    anchor = 0.3 * rng.standard_normal((1, t))
    params = [p for _, p in model.named_parameters()]

    def f(x, *_):
        return model_loss(model, x, target, anchor)
    return directional_check(f, [mixture, *params], eps=1e-6, directions=directions, rng=rng)


__all__ = ["KERNEL_CHECKS", "run_kernel_checks", "check_composed", "desk_config",
           "KERNEL_TOLERANCE", "COMPOSED_TOLERANCE"]
