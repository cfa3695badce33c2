"""Thin parameterized layer wrappers over the autodiff op set."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor


class Conv:
    """2-D convolution layer with optional bias and activation."""

    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, k: int,
                 stride: int = 1, pad: int | None = None, gain: float = 2.0,
                 zero_init: bool = False, bias_init: float = 0.0):
        if zero_init:
            self.w = store.zeros(f"{name}/w", (cout, cin, k, k))
        else:
            self.w = store.conv_init(f"{name}/w", cout, cin, k, gain=gain)
        self.b = store.create(f"{name}/b", np.full((1, cout, 1, 1), bias_init))
        self.stride = stride
        self.pad = pad if pad is not None else (k - 1) // 2

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w.tensor, self.b.tensor, self.stride, self.pad)


class FC:
    """Per-channel fully connected map for (n, c, 1, 1) tensors."""

    def __init__(self, store: ParamStore, name: str, cin: int, cout: int,
                 gain: float = 1.0):
        self.w = store.conv_init(f"{name}/w", cout, cin, 1, gain=gain)
        self.b = store.zeros(f"{name}/b", (1, cout, 1, 1))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.fc(x, self.w.tensor, self.b.tensor)
