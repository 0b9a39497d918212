"""Per-bin complex FIR filtering of a spectrogram.

    Y(n, k) = sum_{i=-I..I} sum_{l=-L..L} conj(H[n, k, l+L, i+I]) * X(n-l, k-i)

with X taken as zero outside the spectrogram. Complex values are carried as
separate real and imaginary arrays/tensors.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError
from .nn.autograd import Tensor, as_tensor, record


def _check(h_shape, x_shape, half_t, half_f):
    want = tuple(x_shape) + (2 * half_t + 1, 2 * half_f + 1)
    if tuple(h_shape) != want:
        raise ShapeError(f"filter shape {tuple(h_shape)} does not match spectrogram; expected {want}")


def deep_filter(h_re, h_im, x_re, x_im, half_t: int = 2, half_f: int = 1):
    """Differentiable filter on ``[B, N, K]`` spectrogram parts and ``[B, N, K, 2L+1, 2I+1]`` taps."""
    h_re, h_im, x_re, x_im = (as_tensor(t) for t in (h_re, h_im, x_re, x_im))
    if x_re.shape != x_im.shape or h_re.shape != h_im.shape or x_re.ndim != 3:
        raise ShapeError("deep_filter: real/imaginary part shapes disagree")
    _check(h_re.shape, x_re.shape, half_t, half_f)
    hr, hi = np.ascontiguousarray(h_re.data), np.ascontiguousarray(h_im.data)
    xr, xi = np.ascontiguousarray(x_re.data), np.ascontiguousarray(x_im.data)
    yr, yi = kernels.deep_filter_forward(hr, hi, xr, xi, half_t, half_f)

    def backward(gyr, gyi):
        return kernels.deep_filter_backward(np.ascontiguousarray(gyr), np.ascontiguousarray(gyi),
                                            hr, hi, xr, xi, half_t, half_f)

    return record("deep_filter", (h_re, h_im, x_re, x_im), (Tensor(yr), Tensor(yi)), backward)


def apply_deep_filter(H, X, L: int = 2, I: int = 1):  # noqa: E741
    """Complex-array front end: ``H[N, K, 2L+1, 2I+1]`` (or batched) applied to ``X[N, K]``."""
    H = np.asarray(H, dtype=np.complex128)
    X = np.asarray(X, dtype=np.complex128)
    single = X.ndim == 2
    if single:
        H, X = H[None], X[None]
    _check(H.shape, X.shape, L, I)
    yr, yi = kernels.deep_filter_forward(
        np.ascontiguousarray(H.real), np.ascontiguousarray(H.imag),
        np.ascontiguousarray(X.real), np.ascontiguousarray(X.imag), L, I)
    Y = yr + 1j * yi
    return Y[0] if single else Y
