"""Differentiable STFT / inverse STFT on real tensors (real and imaginary parts kept separate)."""
from __future__ import annotations

import numpy as np

from ..dsp import StftConfig, frame_signal, hann, overlap_add, synthesis_envelope
from ..errors import ShapeError
from .autograd import Tensor, as_tensor, record


def stft(x, cfg: StftConfig):
    """``x[B, T]`` -> ``(re, im)`` each ``[B, N, K]``."""
    x = as_tensor(x)
    t = x.shape[-1]
    if t < cfg.fft_size:
        raise ShapeError(f"signal of length {t} is shorter than one frame ({cfg.fft_size})")
    win = hann(cfg.fft_size)
    spec = np.fft.rfft(frame_signal(x.data, cfg) * win, axis=-1)
    # adjoint of the one-sided rfft: halve interior bins, then irfft * M
    half = np.ones(cfg.bins)
    half[1:-1] = 0.5

    def backward(g_re, g_im):
        z = (g_re + 1j * g_im) * half
        frames = np.fft.irfft(z, n=cfg.fft_size, axis=-1) * cfg.fft_size * win
        return overlap_add(frames, cfg, length=t)

    return record("stft", (x,), (Tensor(spec.real.copy()), Tensor(spec.imag.copy())), backward)


def istft(re, im, cfg: StftConfig, out_length: int | None = None):
    """Inverse of :func:`stft`: ``[B, N, K]`` pair -> ``[B, T]``."""
    re, im = as_tensor(re), as_tensor(im)
    if re.shape != im.shape or re.shape[-1] != cfg.bins:
        raise ShapeError(f"istft expects matching [.., N, {cfg.bins}] parts, got {re.shape}/{im.shape}")
    win = hann(cfg.fft_size)
    n_frames = re.shape[-2]
    env = synthesis_envelope(n_frames, cfg)
    frames = np.fft.irfft(re.data + 1j * im.data, n=cfg.fft_size, axis=-1) * win
    y = overlap_add(frames, cfg) / env
    total = y.shape[-1]
    length = total if out_length is None else out_length
    if length > total:
        y = np.concatenate([y, np.zeros(y.shape[:-1] + (length - total,))], axis=-1)
    y = y[..., :length]
    scale = np.full(cfg.bins, 2.0 / cfg.fft_size)
    scale[0] = scale[-1] = 1.0 / cfg.fft_size

    def backward(g):
        gfull = np.zeros(g.shape[:-1] + (total,))
        keep = min(length, total)
        gfull[..., :keep] = g[..., :keep]
        gfull /= env
        g_frames = frame_signal(gfull, cfg) * win
        spec = np.fft.rfft(g_frames, axis=-1) * scale
        g_im = spec.imag.copy()
        g_im[..., 0] = 0.0
        g_im[..., -1] = 0.0
        return spec.real.copy(), g_im

    return record("istft", (re, im), Tensor(y), backward)
