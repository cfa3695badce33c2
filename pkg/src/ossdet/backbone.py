"""Tiny residual feature extractor producing a 5-level pyramid.

Stem: 3x3 stride-2 conv, then four stages of a stride-2 entry conv plus two
residual blocks, all at a uniform trunk width; 1x1 lateral projections give
the pyramid levels at strides 2, 4, 8, 16, 32. Changing the input band
count only changes the stem kernel shape.
"""

from __future__ import annotations

from . import autodiff as ad
from .autodiff import ParamStore, ShapeError, Tensor
from .layers import Conv

PYRAMID_STRIDES = (2, 4, 8, 16, 32)


class _ResBlock:
    def __init__(self, store: ParamStore, name: str, channels: int):
        self.conv1 = Conv(store, f"{name}/conv1", channels, channels, 3)
        # Zero-init the closing conv: blocks start as identity, which keeps
        # feature magnitudes flat through the unnormalized trunk.
        self.conv2 = Conv(store, f"{name}/conv2", channels, channels, 3, zero_init=True)

    def __call__(self, x: Tensor) -> Tensor:
        y = self.conv2(ad.relu(self.conv1(x)))
        return ad.relu(ad.add(x, y))


class Backbone:
    def __init__(self, store: ParamStore, bands: int, channels: int = 32,
                 name: str = "backbone"):
        self.bands = bands
        self.channels = channels
        self.stem = Conv(store, f"{name}/stem", bands, channels, 3, stride=2)
        self.stages = []
        for i in range(4):
            entry = Conv(store, f"{name}/stage{i + 1}/entry", channels, channels, 3, stride=2)
            blocks = [_ResBlock(store, f"{name}/stage{i + 1}/block{j}", channels)
                      for j in range(2)]
            self.stages.append((entry, blocks))
        self.laterals = [Conv(store, f"{name}/lateral{i + 1}", channels, channels, 1, gain=1.0)
                         for i in range(5)]

    def __call__(self, x: Tensor) -> list[Tensor]:
        n, c, h, w = x.shape
        if c != self.bands:
            raise ShapeError(f"backbone expects {self.bands} bands, got {c}")
        if h % 32 or w % 32:
            raise ShapeError(f"spatial dims must be divisible by 32, got {h}x{w}")
        feats = []
        cur = ad.relu(self.stem(x))
        feats.append(cur)
        for entry, blocks in self.stages:
            cur = ad.relu(entry(cur))
            for block in blocks:
                cur = block(cur)
            feats.append(cur)
        return [lat(f) for lat, f in zip(self.laterals, feats)]
