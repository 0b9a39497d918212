"""Anchor encoder: bidirectional GRU over anchor magnitude frames, averaged over time."""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .nn import ops
from .nn.autograd import as_tensor, no_grad
from .nn.module import Module
from .nn.recurrent import BiRecurrent

ANCHOR_DIM = 129


class SpeakerEncoder(Module):
    """Maps ``[B, N, 129]`` anchor magnitudes to ``[B, 129]`` anchor vectors.

    Per frame, forward and backward hidden states are summed; the anchor
    vector is their mean over frames.
    """

    def __init__(self, rng, bins: int = ANCHOR_DIM):
        super().__init__()
        self.bins = bins
        self.bgru = BiRecurrent("GRU", bins, bins, rng, merge="sum")

    def frame_outputs(self, anchor_mag):
        anchor_mag = as_tensor(anchor_mag)
        if anchor_mag.ndim != 3 or anchor_mag.shape[-1] != self.bins:
            raise ShapeError(f"anchor magnitude must be [B, N, {self.bins}], got {anchor_mag.shape}")
        if anchor_mag.shape[1] < 1:
            raise ShapeError("anchor needs at least one frame")
        return self.bgru(anchor_mag)

    def forward(self, anchor_mag):
        return ops.mean(self.frame_outputs(anchor_mag), axis=1)


def encode_anchor(anchor_mag, encoder: SpeakerEncoder) -> np.ndarray:
    """Anchor vector (length 129) for one ``[N, 129]`` magnitude spectrogram."""
    mag = np.asarray(anchor_mag, dtype=np.float64)
    if mag.ndim != 2:
        raise ShapeError("encode_anchor expects a single [N, 129] spectrogram")
    with no_grad():
        return encoder(mag[None]).data[0]
