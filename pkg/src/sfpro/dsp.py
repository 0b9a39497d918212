"""STFT analysis/synthesis on plain numpy arrays.

Spectrograms are stored as complex arrays of shape ``(..., frames, bins)``.
Framing uses no centre padding, so ``frames = (len - fft_size) // hop + 1``.
"""
from __future__ import annotations

import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError

SPEC_MAGIC = b"SFSPEC1"
# synthesis envelope floor; interior envelope of Hann^2 at 50% overlap is >= 0.5
ENVELOPE_FLOOR = 1e-3


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 256
    hop: int = 128
    window: str = "hann"

    def __post_init__(self):
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if self.fft_size <= 0 or self.hop <= 0 or self.fft_size % self.hop:
            raise ValueError("hop must be a positive divisor of fft_size")

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    def num_frames(self, length: int) -> int:
        return (length - self.fft_size) // self.hop + 1

    def signal_length(self, frames: int) -> int:
        return (frames - 1) * self.hop + self.fft_size

    def to_dict(self):
        return asdict(self)


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (COLA at hop n/2)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """View ``x[..., T]`` as ``[..., N, fft_size]`` frames (read-only)."""
    windows = np.lib.stride_tricks.sliding_window_view(x, cfg.fft_size, axis=-1)
    return windows[..., :: cfg.hop, :]


def overlap_add(frames: np.ndarray, cfg: StftConfig, length: int | None = None) -> np.ndarray:
    """Sum ``[..., N, fft_size]`` frames back onto a time axis."""
    n = frames.shape[-2]
    total = cfg.signal_length(n)
    out = np.zeros(frames.shape[:-2] + (max(total, length or 0),), dtype=frames.dtype)
    # fft_size is a multiple of hop: add hop-sized pieces in fft_size/hop strided passes
    step = cfg.hop
    for j in range(cfg.fft_size // step):
        piece = frames[..., :, j * step:(j + 1) * step]
        seg = out[..., j * step: j * step + n * step]
        seg += piece.reshape(piece.shape[:-2] + (n * step,))
    if length is not None:
        out = out[..., :length]
    return out


def synthesis_envelope(frames: int, cfg: StftConfig) -> np.ndarray:
    w2 = hann(cfg.fft_size) ** 2
    env = overlap_add(np.broadcast_to(w2, (frames, cfg.fft_size)), cfg)
    return np.maximum(env, ENVELOPE_FLOOR)


def stft(x, cfg: StftConfig = StftConfig()) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < cfg.fft_size:
        raise ShapeError(
            f"signal of length {x.shape[-1]} is shorter than one frame ({cfg.fft_size})")
    return np.fft.rfft(frame_signal(x, cfg) * hann(cfg.fft_size), axis=-1)


def istft(spec, cfg: StftConfig = StftConfig(), out_length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`."""
    spec = np.asarray(spec)
    if spec.shape[-1] != cfg.bins:
        raise ShapeError(f"spectrogram has {spec.shape[-1]} bins, expected {cfg.bins}")
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=-1) * hann(cfg.fft_size)
    n = spec.shape[-2]
    y = overlap_add(frames, cfg) / synthesis_envelope(n, cfg)
    if out_length is not None:
        if out_length > y.shape[-1]:
            pad = [(0, 0)] * (y.ndim - 1) + [(0, out_length - y.shape[-1])]
            y = np.pad(y, pad)
        y = y[..., :out_length]
    return y


def magnitude(spec) -> np.ndarray:
    spec = np.asarray(spec)
    return np.sqrt(spec.real ** 2 + spec.imag ** 2)


def spectral_centroid(x, sample_rate: int, cfg: StftConfig = StftConfig()) -> float:
    """Magnitude-weighted mean frequency in Hz over the whole signal."""
    mag = magnitude(stft(x, cfg)).sum(axis=0)
    freqs = np.arange(cfg.bins) * sample_rate / cfg.fft_size
    return float((mag * freqs).sum() / mag.sum())


def write_spectrogram_dump(path, spec) -> None:
    spec = np.asarray(spec, dtype=np.complex128)
    if spec.ndim != 2:
        raise ShapeError("dump expects a single [frames, bins] spectrogram")
    n, k = spec.shape
    pairs = np.empty((n, k, 2), dtype="<f8")
    pairs[..., 0] = spec.real
    pairs[..., 1] = spec.imag
    with open(path, "wb") as fh:
        fh.write(SPEC_MAGIC)
        fh.write(struct.pack("<II", n, k))
        fh.write(pairs.tobytes())


def read_spectrogram_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(SPEC_MAGIC):
        raise ValueError("not an SFSPEC1 dump")
    off = len(SPEC_MAGIC)
    n, k = struct.unpack_from("<II", blob, off)
    pairs = np.frombuffer(blob, dtype="<f8", offset=off + 8, count=2 * n * k)
    pairs = pairs.reshape(n, k, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]
