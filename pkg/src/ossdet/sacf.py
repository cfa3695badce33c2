"""Spectral-guided adaptive cross-layer fusion (top-down pathway).

Three parts: a parameter-free spectral aggregator that softmax-weights each
pixel's k x k neighborhood by spectral similarity; a detail enhancer that
splits the lower level into frequency components, amplifies the high band
and refuses them residually; and an adaptive fusion that blends the
upsampled high level with the enhanced low level through per-pixel sigmoid
gates.
"""

from __future__ import annotations

from . import autodiff as ad
from .autodiff import ParamStore, ShapeError, Tensor
from .layers import Conv

VALID_PATCH_SIZES = (3, 5, 7, 9)


def sfa_aggregate(x: Tensor, k: int) -> Tensor:
    """Similarity-softmax aggregation over the k x k neighborhood of every
    pixel (center included, borders clamped), plus the residual center.

    Weights are softmax(-euclidean distance) over exactly k^2 entries. The
    aggregation is computed in the centered form
    sum_d w_d * (p_d - p) + 2p, which is algebraically identical (weights
    sum to 1) and keeps constant regions exactly at twice their value.
    """
    if k % 2 == 0:
        raise ShapeError(f"patch size must be odd, got {k}")
    if k not in VALID_PATCH_SIZES:
        raise ShapeError(f"patch size must be one of {VALID_PATCH_SIZES}, got {k}")
    n, c, h, w = x.shape
    r = k // 2
    offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
    shifted = []
    dists = []
    for dy, dx in offsets:
        if (dy, dx) == (0, 0):
            shifted.append(x)
            # The self-distance is identically zero for any input.
            dists.append(Tensor.zeros((n, 1, h, w)))
            continue
        s = ad.shift2d(x, dy, dx)
        shifted.append(s)
        dists.append(ad.l2_norm(ad.sub(x, s), axes=(1,)))
    weights = ad.softmax(ad.affine(ad.concat_channels(dists), -1.0, 0.0), axis=1)
    acc = None
    for i, s in enumerate(shifted):
        term = ad.mul(ad.slice_channels(weights, i, i + 1), ad.sub(s, x))
        acc = term if acc is None else ad.add(acc, term)
    return ad.add(acc, ad.affine(x, 2.0, 0.0))


def sde_decompose(x: Tensor) -> tuple[Tensor, Tensor]:
    """Split into a half-resolution low band and a full-resolution residual;
    upsample2x(lf) + hf reconstructs the input."""
    lf = ad.pool(x, "avg3x3s2")
    hf = ad.sub(x, ad.upsample2x(lf))
    return lf, hf


class SDE:
    """Detail enhancer: gain the high band in (1, 2), refuse with low-band
    context, residual to the input (exact identity at zero init)."""

    def __init__(self, store: ParamStore, channels: int, name: str,
                 zero_init: bool = False):
        self.enhance_conv = Conv(store, f"{name}/enhance", channels, channels, 1,
                                 gain=1.0, zero_init=zero_init)
        self.lf_conv = Conv(store, f"{name}/lf", channels, channels, 3,
                            gain=1.0, zero_init=zero_init)
        self.fuse_conv = Conv(store, f"{name}/fuse", 2 * channels, channels, 1,
                              gain=1.0, zero_init=zero_init)

    def enhance(self, hf: Tensor) -> Tensor:
        gain = ad.affine(ad.sigmoid(self.enhance_conv(hf)), 1.0, 1.0)
        return ad.mul(gain, hf)

    def fuse(self, hf_enhanced: Tensor, lf: Tensor, x: Tensor) -> Tensor:
        lowpath = ad.upsample2x(self.lf_conv(lf))
        mixed = self.fuse_conv(ad.concat_channels([hf_enhanced, lowpath]))
        return ad.add(mixed, x)

    def __call__(self, x: Tensor) -> Tensor:
        lf, hf = sde_decompose(x)
        return self.fuse(self.enhance(hf), lf, x)


class SACF:
    """One top-down fusion unit: SFA on the high level, SDE on the low
    level, then gated summation at the low level's resolution."""

    def __init__(self, store: ParamStore, channels: int, k: int = 3,
                 name: str = "sacf", zero_init: bool = False):
        if k not in VALID_PATCH_SIZES:
            raise ShapeError(f"patch size must be one of {VALID_PATCH_SIZES}, got {k}")
        self.k = k
        self.sde = SDE(store, channels, f"{name}/sde", zero_init=zero_init)
        self.gate_conv = Conv(store, f"{name}/gate", 2, 2, 1, gain=1.0,
                              zero_init=zero_init)

    def adaptive_fuse(self, hi_up: Tensor, lo: Tensor) -> Tensor:
        if hi_up.shape != lo.shape:
            raise ShapeError(f"adaptive_fuse shapes disagree: {hi_up.shape} vs {lo.shape}")
        stats = ad.concat_channels([ad.pool(hi_up, "channel_mean"),
                                    ad.pool(lo, "channel_mean")])
        gates = ad.sigmoid(self.gate_conv(stats))
        w_hi = ad.slice_channels(gates, 0, 1)
        w_lo = ad.slice_channels(gates, 1, 2)
        return ad.add(ad.mul(hi_up, w_hi), ad.mul(lo, w_lo))

    def __call__(self, hi: Tensor, lo: Tensor) -> Tensor:
        if (lo.shape[2], lo.shape[3]) != (2 * hi.shape[2], 2 * hi.shape[3]):
            raise ShapeError(
                f"low level must be exactly 2x the high level: {hi.shape} vs {lo.shape}"
            )
        hi_agg = sfa_aggregate(hi, self.k)
        lo_enh = self.sde(lo)
        return self.adaptive_fuse(ad.upsample2x(hi_agg), lo_enh)
