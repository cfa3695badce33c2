"""Cross-spectral attention feature refinement (bottom-up pathway).

The lower level is aligned down by a stride-2 conv; pooled spectra from
both levels pass per-level fully connected maps to give channel vectors
whose outer product, row-softmaxed, mixes them into channel gates:

    A = rowsoftmax(v_hi v_lo^T),  w_hi = A^T v_hi,  w_lo = A v_lo
    out = w_hi * hi + w_lo * aligned(lo)

Column softmax is the mirrored variant kept for ablations.
"""

from __future__ import annotations

from . import autodiff as ad
from .autodiff import ParamStore, ShapeError, Tensor
from .layers import Conv, FC


class CAFR:
    def __init__(self, store: ParamStore, channels: int, name: str = "cafr",
                 softmax_axis: str = "row"):
        if softmax_axis not in ("row", "column"):
            raise ValueError(f"softmax_axis must be 'row' or 'column', got {softmax_axis!r}")
        self.channels = channels
        self.softmax_axis = softmax_axis
        self.align = Conv(store, f"{name}/align", channels, channels, 3, stride=2)
        self.fc_hi = FC(store, f"{name}/fc_hi", channels, channels)
        self.fc_lo = FC(store, f"{name}/fc_lo", channels, channels)

    def gates(self, v_hi: Tensor, v_lo: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        n, c, _, _ = v_hi.shape
        col_hi = ad.reshape(v_hi, (n, 1, c, 1))
        col_lo = ad.reshape(v_lo, (n, 1, c, 1))
        outer = ad.matmul(col_hi, ad.transpose_hw(col_lo))
        attn = ad.softmax(outer, axis=3 if self.softmax_axis == "row" else 2)
        w_hi = ad.reshape(ad.matmul(ad.transpose_hw(attn), col_hi), (n, c, 1, 1))
        w_lo = ad.reshape(ad.matmul(attn, col_lo), (n, c, 1, 1))
        return attn, w_hi, w_lo

    def __call__(self, hi: Tensor, lo: Tensor) -> Tensor:
        if (lo.shape[2], lo.shape[3]) != (2 * hi.shape[2], 2 * hi.shape[3]):
            raise ShapeError(
                f"cafr needs the lower level at exactly 2x resolution: "
                f"{hi.shape} vs {lo.shape}"
            )
        aligned = self.align(lo)
        v_hi = self.fc_hi(ad.pool(hi, "gap"))
        v_lo = self.fc_lo(ad.pool(aligned, "gap"))
        _, w_hi, w_lo = self.gates(v_hi, v_lo)
        return ad.add(ad.mul(w_hi, hi), ad.mul(w_lo, aligned))
