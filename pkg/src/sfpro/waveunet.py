"""Time-domain U-Net with decimating DS blocks and interpolating US blocks."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError
from .nn import ops
from .nn.autograd import as_tensor
from .nn.module import Module, ModuleList, Parameter, uniform_init


@dataclass(frozen=True)
class WaveUNetConfig:
    num_layers: int = 4
    base_filters: int = 16
    filter_growth: int = 16
    ds_kernel: int = 15
    us_kernel: int = 5
    decimation: int = 2

    def __post_init__(self):
        if self.decimation != 2:
            raise ValueError("only decimation by 2 is supported")
        if self.ds_kernel % 2 == 0 or self.us_kernel % 2 == 0:
            raise ValueError("kernel sizes must be odd for same-padding")

    def channels(self, level: int) -> int:
        return self.base_filters + self.filter_growth * level

    @property
    def factor(self) -> int:
        return self.decimation ** self.num_layers

    def to_dict(self):
        return asdict(self)


class Conv1d(Module):
    def __init__(self, cin, cout, kernel, rng):
        super().__init__()
        self.padding = kernel // 2
        self.weight = Parameter(uniform_init(rng, (cout, cin, kernel), cin * kernel))
        self.bias = Parameter(np.zeros(cout))

    def forward(self, x):
        return ops.conv1d(x, self.weight, self.bias, stride=1, padding=self.padding)


class DSBlock(Module):
    """Same-padded conv + leaky ReLU, then keep every second step."""

    def __init__(self, cin, cout, kernel, rng):
        super().__init__()
        self.conv = Conv1d(cin, cout, kernel, rng)

    def forward(self, x):
        if x.shape[-1] % 2:
            raise ShapeError(f"ds_block needs an even time length, got {x.shape[-1]}")
        features = ops.leaky_relu(self.conv(x))
        return features, ops.strided_slice(features, axis=2, start=0, step=2)


class USBlock(Module):
    """Linear 2x upsampling, concatenation with the skip, conv + leaky ReLU."""

    def __init__(self, cin_coarse, cin_skip, cout, kernel, rng):
        super().__init__()
        self.conv = Conv1d(cin_coarse + cin_skip, cout, kernel, rng)

    def forward(self, coarse, skip):
        if skip.shape[-1] != 2 * coarse.shape[-1]:
            raise ShapeError(
                f"us_block: skip time {skip.shape[-1]} != 2 x coarse time {coarse.shape[-1]}")
        up = ops.upsample_linear2(coarse)
        return ops.leaky_relu(self.conv(ops.concat([up, skip], axis=1)))


class WaveUNet(Module):
    def __init__(self, cfg: WaveUNetConfig, rng):
        super().__init__()
        self.cfg = cfg
        L = cfg.num_layers
        self.ds = ModuleList(
            DSBlock(1 if i == 0 else cfg.channels(i - 1), cfg.channels(i), cfg.ds_kernel, rng)
            for i in range(L))
        self.bottleneck = Conv1d(cfg.channels(L - 1), cfg.channels(L), cfg.ds_kernel, rng)
        # us[j] handles level L-1-j
        self.us = ModuleList(
            USBlock(cfg.channels(L) if j == 0 else cfg.channels(L - j),
                    cfg.channels(L - 1 - j), cfg.channels(L - 1 - j), cfg.us_kernel, rng)
            for j in range(L))
        self.out = Conv1d(cfg.channels(0), 1, 1, rng)
        self.trace = None

    def forward(self, w):
        """``w[B, 1, T]`` -> ``[B, 1, T]``; ``T`` must be divisible by ``2**num_layers``."""
        if w.ndim != 3 or w.shape[1] != 1:
            raise ShapeError(f"waveunet expects [B, 1, T], got {w.shape}")
        t = w.shape[-1]
        if t % self.cfg.factor:
            raise ShapeError(f"length {t} not divisible by {self.cfg.factor}")
        trace = []
        skips = []
        x = w
        for i, block in enumerate(self.ds):
            features, x = block(x)
            skips.append(features)
            trace.append(("ds", i, features.shape, x.shape))
        x = ops.leaky_relu(self.bottleneck(x))
        trace.append(("bottleneck", self.cfg.num_layers, x.shape, x.shape))
        for j, block in enumerate(self.us):
            level = self.cfg.num_layers - 1 - j
            skip = skips[level]
            x = block(x, skip)
            trace.append(("us", level, skip.shape, x.shape))
        self.trace = trace
        return self.out(x)


def waveunet_forward(w, net: WaveUNet):
    return net(as_tensor(w))
