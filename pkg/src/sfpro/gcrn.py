"""Anchor-conditioned gated convolutional recurrent network emitting deep-filter taps."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError
from .nn import ops
from .nn.autograd import as_tensor, no_grad
from .nn.module import Module, ModuleList, Parameter, uniform_init
from .nn.recurrent import BiRecurrent
from .speaker import ANCHOR_DIM


@dataclass(frozen=True)
class GcrnConfig:
    encoder_channels: tuple = (8, 16, 32)
    kernel: tuple = (3, 3)
    freq_stride: int = 2
    lstm_layers: int = 2
    lstm_hidden: int = 64
    filter_taps: tuple = (5, 3)
    input_mode: str = "ri"

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(self.encoder_channels))
        object.__setattr__(self, "kernel", tuple(self.kernel))
        object.__setattr__(self, "filter_taps", tuple(self.filter_taps))
        if self.input_mode not in ("ri", "magnitude"):
            raise ValueError(f"input_mode must be 'ri' or 'magnitude', not {self.input_mode!r}")
        if any(t % 2 == 0 for t in self.filter_taps) or any(k % 2 == 0 for k in self.kernel):
            raise ValueError("filter taps and kernel sizes must be odd")
        if not self.encoder_channels:
            raise ValueError("need at least one encoder layer")

    @property
    def half_taps(self):
        return self.filter_taps[0] // 2, self.filter_taps[1] // 2

    @property
    def head_channels(self) -> int:
        return 2 * self.filter_taps[0] * self.filter_taps[1]

    @property
    def in_channels(self) -> int:
        # spectral channels + one broadcast anchor channel
        return (2 if self.input_mode == "ri" else 1) + 1

    def freq_sizes(self, bins: int):
        sizes = [bins]
        pad = self.kernel[1] // 2
        for _ in self.encoder_channels:
            sizes.append((sizes[-1] + 2 * pad - self.kernel[1]) // self.freq_stride + 1)
        return sizes

    def to_dict(self):
        d = asdict(self)
        for k in ("encoder_channels", "kernel", "filter_taps"):
            d[k] = list(d[k])
        return d


class AnchorFusion(Module):
    """Linear projection of the anchor to ``channels``, added at every time-frequency point."""

    def __init__(self, channels, rng, anchor_dim=ANCHOR_DIM):
        super().__init__()
        self.weight = Parameter(uniform_init(rng, (channels, anchor_dim), anchor_dim))
        self.bias = Parameter(np.zeros(channels))

    def forward(self, x, anchor):
        return fuse_anchor(x, anchor, self.weight, self.bias)


def fuse_anchor(layer_input, anchor, weight, bias=None):
    """``layer_input[B, C, N, F] + (anchor[B, 129] @ weight.T + bias)`` broadcast over N, F."""
    layer_input, anchor = as_tensor(layer_input), as_tensor(anchor)
    if anchor.ndim != 2 or anchor.shape[1] != weight.shape[1]:
        raise ShapeError(f"anchor of shape {anchor.shape} does not match projection {weight.shape}")
    if weight.shape[0] != layer_input.shape[1]:
        raise ShapeError(f"projection yields {weight.shape[0]} channels, layer has {layer_input.shape[1]}")
    proj = ops.linear(anchor, weight, bias)
    _, _, n, f = layer_input.shape
    return layer_input + ops.expand(proj, {2: n, 3: f})


class GatedConv(Module):
    """``leaky_relu(conv_a(x) * sigmoid(conv_b(x)))``; transposed variant for the decoder."""

    def __init__(self, cin, cout, kernel, stride, rng, transposed=False):
        super().__init__()
        kh, kw = kernel
        shape = (cin, cout, kh, kw) if transposed else (cout, cin, kh, kw)
        fan_in = cin * kh * kw
        self.transposed = transposed
        self.stride = stride
        self.padding = (kh // 2, kw // 2)
        self.weight_a = Parameter(uniform_init(rng, shape, fan_in))
        self.bias_a = Parameter(np.zeros(cout))
        self.weight_b = Parameter(uniform_init(rng, shape, fan_in))
        self.bias_b = Parameter(np.zeros(cout))

    def _conv(self, x, w, b):
        fn = ops.conv_transpose2d if self.transposed else ops.conv2d
        return fn(x, w, b, stride=self.stride, padding=self.padding)

    def forward(self, x):
        a = self._conv(x, self.weight_a, self.bias_a)
        g = ops.sigmoid(self._conv(x, self.weight_b, self.bias_b))
        return ops.leaky_relu(a * g)


class Gcrn(Module):
    def __init__(self, cfg: GcrnConfig, rng, bins: int = ANCHOR_DIM):
        super().__init__()
        self.cfg = cfg
        self.bins = bins
        chans = cfg.encoder_channels
        stride = (1, cfg.freq_stride)
        sizes = cfg.freq_sizes(bins)
        for a, b in zip(sizes[:-1], sizes[1:]):
            if (b - 1) * cfg.freq_stride - 2 * (cfg.kernel[1] // 2) + cfg.kernel[1] != a:
                raise ShapeError(f"{bins} bins cannot be mirrored by the decoder with {len(chans)} layers")
        self.freq_sizes = sizes
        self.encoder = ModuleList(
            GatedConv(cfg.in_channels if i == 0 else chans[i - 1], c, cfg.kernel, stride, rng)
            for i, c in enumerate(chans))
        self.enc_fuse = ModuleList(AnchorFusion(c, rng) for c in chans)

        flat = chans[-1] * sizes[-1]
        layers = []
        for i in range(cfg.lstm_layers):
            layers.append(BiRecurrent("LSTM", flat if i == 0 else 2 * cfg.lstm_hidden,
                                      cfg.lstm_hidden, rng, merge="concat"))
        self.lstm = ModuleList(layers)
        proj_in = 2 * cfg.lstm_hidden if cfg.lstm_layers else flat
        self.proj_w = Parameter(uniform_init(rng, (flat, proj_in), proj_in))
        self.proj_b = Parameter(np.zeros(flat))

        dec = []
        dec_fuse = []
        for i in range(len(chans) - 1, 0, -1):
            dec.append(GatedConv(2 * chans[i], chans[i - 1], cfg.kernel, stride, rng, transposed=True))
            dec_fuse.append(AnchorFusion(chans[i - 1], rng))
        self.decoder = ModuleList(dec)
        self.dec_fuse = ModuleList(dec_fuse)
        kh, kw = cfg.kernel
        self.head_w = Parameter(uniform_init(rng, (2 * chans[0], cfg.head_channels, kh, kw),
                                             2 * chans[0] * kh * kw))
        self.head_b = Parameter(np.zeros(cfg.head_channels))
        self.skip_shapes = None

    def forward(self, spec_in, anchor):
        """``spec_in[B, C, N, K]`` (C = 2 for RI, 1 for magnitude), ``anchor[B, 129]``.

        Returns ``(h_re, h_im)`` each ``[B, N, K, taps_t, taps_f]``.
        """
        spec_in, anchor = as_tensor(spec_in), as_tensor(anchor)
        spec_ch = self.cfg.in_channels - 1
        if spec_in.ndim != 4 or spec_in.shape[1] != spec_ch:
            raise ShapeError(f"gcrn input must be [B, {spec_ch}, N, K], got {spec_in.shape}")
        b, _, n, k = spec_in.shape
        if k != self.bins:
            raise ShapeError(f"gcrn expects {self.bins} bins, got {k}")
        if anchor.shape != (b, ANCHOR_DIM):
            raise ShapeError(f"anchor must be [{b}, {ANCHOR_DIM}], got {anchor.shape}")
        if self.bins != ANCHOR_DIM:
            raise ShapeError("the anchor channel needs the bin count to equal the anchor size")

        anchor_plane = ops.expand(anchor, {1: 1, 2: n})  # [B, 1, N, K]
        x = ops.concat([spec_in, anchor_plane], axis=1)

        skips = []
        for block, fuse in zip(self.encoder, self.enc_fuse):
            x = fuse(block(x), anchor)
            skips.append(x)

        _, c, _, f = x.shape
        seq = ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (b, n, c * f))
        for layer in self.lstm:
            seq = layer(seq)
        seq = ops.linear(seq, self.proj_w, self.proj_b)
        x = ops.transpose(ops.reshape(seq, (b, n, c, f)), (0, 2, 1, 3))

        shapes = []
        depth = len(self.cfg.encoder_channels)
        for j, (block, fuse) in enumerate(zip(self.decoder, self.dec_fuse)):
            skip = skips[depth - 1 - j]
            if skip.shape != x.shape:
                raise ShapeError(f"skip {skip.shape} does not match decoder input {x.shape}")
            shapes.append((depth - 1 - j, skip.shape))
            x = fuse(block(ops.concat([x, skip], axis=1)), anchor)
        if skips[0].shape != x.shape:
            raise ShapeError(f"skip {skips[0].shape} does not match head input {x.shape}")
        shapes.append((0, skips[0].shape))
        self.skip_shapes = shapes
        kh, kw = self.cfg.kernel
        out = ops.conv_transpose2d(ops.concat([x, skips[0]], axis=1), self.head_w, self.head_b,
                                   stride=(1, self.cfg.freq_stride), padding=(kh // 2, kw // 2))
        taps_t, taps_f = self.cfg.filter_taps
        out = ops.transpose(out, (0, 2, 3, 1))  # [B, N, K, 2 * taps]
        h_re, h_im = ops.split(out, [taps_t * taps_f] * 2, axis=3)
        shape = (b, n, k, taps_t, taps_f)
        return ops.reshape(h_re, shape), ops.reshape(h_im, shape)


def gcrn_forward(ri_spec, anchor, net: Gcrn):
    """Complex deep-filter taps ``[B, N, K, 5, 3]`` for a ``[B, 2, N, K]`` RI input (no grad)."""
    with no_grad():
        h_re, h_im = net(np.asarray(ri_spec, dtype=np.float64), np.asarray(anchor, dtype=np.float64))
    return h_re.data + 1j * h_im.data


