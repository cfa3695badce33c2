"""Cascaded spectral-spatial joint perception on the top pyramid level.

A per-channel gate from global average pooling and a per-pixel gate from
the spectral mean each modulate the input; the two gated features are then
cross-modulated through normalized tanh correlation matrices and fused back
to the input shape. Cost is O(C * (HW)^2) per item, so the spatial extent
is capped at HW <= 4096.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, ShapeError, Tensor
from .layers import Conv

MAX_HW = 4096


class CSSP:
    def __init__(self, store: ParamStore, channels: int, grid_h: int, grid_w: int,
                 fusion: str = "conv", eps: float = 1e-8, name: str = "cssp"):
        if fusion not in ("conv", "sum"):
            raise ValueError(f"fusion must be 'conv' or 'sum', got {fusion!r}")
        self.channels = channels
        self.grid_h = grid_h
        self.grid_w = grid_w
        self.fusion = fusion
        self.eps = eps
        self.w_e = store.create(f"{name}/w_e", np.ones((1, channels, 1, 1)))
        self.b_e = store.zeros(f"{name}/b_e", (1, channels, 1, 1))
        self.w_a = store.create(f"{name}/w_a", np.ones((1, 1, grid_h, grid_w)))
        self.b_a = store.zeros(f"{name}/b_a", (1, 1, grid_h, grid_w))
        if fusion == "conv":
            self.fuse = Conv(store, f"{name}/fuse", 2 * channels, channels, 1, gain=1.0)

    def spectral_attention(self, f5: Tensor) -> Tensor:
        pooled = ad.pool(f5, "gap")
        gate = ad.sigmoid(ad.add(ad.mul(self.w_e.tensor, pooled), self.b_e.tensor))
        return ad.mul(gate, f5)

    def spatial_attention(self, f5: Tensor) -> Tensor:
        mean = ad.pool(f5, "channel_mean")
        gate = ad.sigmoid(ad.add(ad.mul(self.w_a.tensor, mean), self.b_a.tensor))
        return ad.mul(gate, f5)

    def _normalized_tanh(self, m: Tensor) -> Tensor:
        norm = ad.affine(ad.l2_norm(m, axes=(1, 2, 3)), 1.0, self.eps)
        return ad.tanh(ad.div(m, norm))

    def cross_modulate(self, f_e: Tensor, f_a: Tensor) -> Tensor:
        n, c, h, w = f_e.shape
        hw = h * w
        if hw > MAX_HW:
            raise ShapeError(f"cross_modulate limited to HW <= {MAX_HW}, got {hw}")
        e = ad.reshape(f_e, (n, 1, c, hw))
        a = ad.reshape(f_a, (n, 1, c, hw))
        m_ea = self._normalized_tanh(ad.matmul(ad.transpose_hw(e), a))
        a_hat = ad.add(ad.matmul(e, m_ea), a)
        m_ae = self._normalized_tanh(ad.matmul(ad.transpose_hw(a_hat), e))
        e_hat = ad.add(ad.matmul(a_hat, m_ae), e)
        a_map = ad.reshape(a_hat, (n, c, h, w))
        e_map = ad.reshape(e_hat, (n, c, h, w))
        if self.fusion == "sum":
            return ad.add(a_map, e_map)
        return self.fuse(ad.concat_channels([a_map, e_map]))

    def __call__(self, f5: Tensor) -> Tensor:
        if f5.shape[1] != self.channels:
            raise ShapeError(f"cssp expects {self.channels} channels, got {f5.shape[1]}")
        if (f5.shape[2], f5.shape[3]) != (self.grid_h, self.grid_w):
            raise ShapeError(
                f"cssp gate maps are fixed to {self.grid_h}x{self.grid_w}, "
                f"got {f5.shape[2]}x{f5.shape[3]}"
            )
        return self.cross_modulate(self.spectral_attention(f5), self.spatial_attention(f5))
